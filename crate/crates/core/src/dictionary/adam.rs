use serde::{Deserialize, Serialize};

use crate::error::{KoopmanError, Result};

/// Adam optimizer state over a list of flat parameter tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Fresh state for tensors of the given lengths, with the usual
    /// `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-8`.
    pub fn new(tensor_sizes: &[usize], learning_rate: f64) -> Self {
        Self::with_hyperparameters(tensor_sizes, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparameters(
        tensor_sizes: &[usize],
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            first_moment: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(KoopmanError::dims(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first_moment[k].len() || g.len() != p.len() {
                return Err(KoopmanError::dims(format!("tensor {k} has mismatched length")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut state = AdamState::new(&[3], 0.1);
        let mut p = vec![1.0, -2.0, 0.5];
        state.step(&mut [&mut p[..]], &[&[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t = 1: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
        let mut state = AdamState::new(&[1], 0.1);
        let mut p = vec![0.0];
        state.step(&mut [&mut p[..]], &[&[1.0]]).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn deterministic() {
        let mut a = AdamState::new(&[2], 0.01);
        let mut b = a.clone();
        let mut pa = vec![0.3, 0.4];
        let mut pb = pa.clone();
        a.step(&mut [&mut pa[..]], &[&[0.2, -1.0]]).unwrap();
        b.step(&mut [&mut pb[..]], &[&[0.2, -1.0]]).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch() {
        let mut state = AdamState::new(&[2], 0.01);
        let mut p = vec![0.0; 3];
        assert!(state.step(&mut [&mut p[..]], &[&[0.0; 3]]).is_err());
    }
}
