use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use super::{check_input, Dictionary};
use crate::error::{KoopmanError, Result};

/// The fixed dictionary families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixedKind {
    /// All monomials of total degree `<= max_degree`, graded then
    /// lexicographic (`1, x1, .., xd, x1^2, x1 x2, ..`).
    Monomial { max_degree: usize },
    /// Gaussians `exp(-|x - c|^2 / (2 h^2))`, one per center.
    Rbf { centers: Vec<Vec<f64>>, bandwidth: f64 },
    /// Hermite functions of `x2 / velocity_scale` (degrees
    /// `0..hermite_order`) crossed with the Fourier terms
    /// `1, cos(k x1), sin(k x1)` for `k = 1..=fourier_order`. Two-dimensional
    /// states only, angle first.
    FourierHermite {
        hermite_order: usize,
        fourier_order: usize,
        velocity_scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedDictionary {
    kind: FixedKind,
    d: usize,
    n_k: usize,
    #[serde(skip)]
    exponents: Vec<Vec<u32>>,
}

impl FixedDictionary {
    pub fn new(kind: FixedKind, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(KoopmanError::param("state dimension must be positive"));
        }
        let mut exponents = Vec::new();
        let n_k = match &kind {
            FixedKind::Monomial { max_degree } => {
                exponents = monomial_exponents(d, *max_degree);
                exponents.len()
            }
            FixedKind::Rbf { centers, bandwidth } => {
                if centers.is_empty() {
                    return Err(KoopmanError::param("rbf dictionary needs at least one center"));
                }
                if !(*bandwidth > 0.0) {
                    return Err(KoopmanError::param("rbf bandwidth must be positive"));
                }
                if centers.iter().any(|c| c.len() != d) {
                    return Err(KoopmanError::dims("rbf center dimension differs from state dimension"));
                }
                centers.len()
            }
            FixedKind::FourierHermite {
                hermite_order,
                fourier_order,
                velocity_scale,
            } => {
                if d != 2 {
                    return Err(KoopmanError::dims("fourier-hermite dictionary needs 2-d states"));
                }
                if *hermite_order == 0 || !(*velocity_scale > 0.0) {
                    return Err(KoopmanError::param(
                        "hermite_order and velocity_scale must be positive",
                    ));
                }
                hermite_order * (2 * fourier_order + 1)
            }
        };
        Ok(Self { kind, d, n_k, exponents })
    }

    pub fn monomial(d: usize, max_degree: usize) -> Result<Self> {
        Self::new(FixedKind::Monomial { max_degree }, d)
    }

    pub fn rbf(centers: Vec<Vec<f64>>, bandwidth: f64) -> Result<Self> {
        let d = centers.first().map_or(0, Vec::len);
        Self::new(FixedKind::Rbf { centers, bandwidth }, d)
    }

    /// Fourier-Hermite pendulum dictionary; the Hermite argument is scaled so
    /// the highest-degree function still reaches `|x2| = 15`.
    pub fn fourier_hermite(hermite_order: usize, fourier_order: usize) -> Result<Self> {
        let velocity_scale = crate::dynamics::PENDULUM_VELOCITY_BOUND / ((2 * hermite_order + 1) as f64).sqrt();
        Self::new(
            FixedKind::FourierHermite {
                hermite_order,
                fourier_order,
                velocity_scale,
            },
            2,
        )
    }

    pub fn kind(&self) -> &FixedKind {
        &self.kind
    }

    /// Rebuilds cached data after deserialization.
    pub fn rebuild(self) -> Result<Self> {
        Self::new(self.kind, self.d)
    }

    fn evaluate_row(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            FixedKind::Monomial { .. } => {
                for (slot, exps) in out.iter_mut().zip(&self.exponents) {
                    *slot = exps
                        .iter()
                        .zip(x)
                        .map(|(&e, &xi)| xi.powi(e as i32))
                        .product();
                }
            }
            FixedKind::Rbf { centers, bandwidth } => {
                let denom = 2.0 * bandwidth * bandwidth;
                for (slot, c) in out.iter_mut().zip(centers) {
                    let r2: f64 = c.iter().zip(x).map(|(ci, xi)| (xi - ci) * (xi - ci)).sum();
                    *slot = (-r2 / denom).exp();
                }
            }
            FixedKind::FourierHermite {
                hermite_order,
                fourier_order,
                velocity_scale,
            } => {
                let h = hermite_functions(x[1] / velocity_scale, *hermite_order);
                let mut fourier = Vec::with_capacity(2 * fourier_order + 1);
                fourier.push(1.0);
                for k in 1..=*fourier_order {
                    let (s, c) = (k as f64 * x[0]).sin_cos();
                    fourier.push(c);
                    fourier.push(s);
                }
                let mut idx = 0;
                for hn in &h {
                    for f in &fourier {
                        out[idx] = hn * f;
                        idx += 1;
                    }
                }
            }
        }
    }
}

impl Dictionary for FixedDictionary {
    fn dim(&self) -> usize {
        self.d
    }

    fn n_k(&self) -> usize {
        self.n_k
    }

    fn evaluate_batch(&self, states: MatRef<'_, f64>) -> Result<Mat<f64>> {
        check_input(self.d, states)?;
        let mut out = Mat::zeros(states.nrows(), self.n_k);
        let mut row = vec![0.0; self.n_k];
        let mut x = vec![0.0; self.d];
        for i in 0..states.nrows() {
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = states[(i, j)];
            }
            self.evaluate_row(&x, &mut row);
            for (j, v) in row.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        Ok(out)
    }
}

/// Exponent vectors of all monomials in `d` variables of degree
/// `<= max_degree`, in graded lexicographic order.
pub fn monomial_exponents(d: usize, max_degree: usize) -> Vec<Vec<u32>> {
    fn fill(var: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if var + 1 == current.len() {
            current[var] = remaining;
            out.push(current.clone());
            return;
        }
        for e in (0..=remaining).rev() {
            current[var] = e;
            fill(var + 1, remaining - e, current, out);
        }
        current[var] = 0;
    }
    let mut out = Vec::new();
    let mut current = vec![0; d];
    for degree in 0..=max_degree as u32 {
        fill(0, degree, &mut current, &mut out);
    }
    out
}

/// Normalized Hermite functions `h_0..h_{n-1}` at `x`.
fn hermite_functions(x: f64, n: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(n);
    let h0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    h.push(h0);
    if n > 1 {
        h.push(std::f64::consts::SQRT_2 * x * h0);
    }
    for k in 2..n {
        let kf = k as f64;
        let next = (2.0 / kf).sqrt() * x * h[k - 1] - ((kf - 1.0) / kf).sqrt() * h[k - 2];
        h.push(next);
    }
    h.truncate(n);
    h
}
