//! Residual-driven dictionary learning.
//!
//! Training alternates two steps. With the dictionary fixed, the Koopman
//! matrix `K = (G + sigma I)^{-1} A` and its `G`-normalized eigenvectors `V`
//! are recomputed in closed form. With `K` and `V` frozen, the network takes
//! an Adam step on
//!
//! ```text
//! J = |(Psi_Y - Psi_X K) V|_F^2 / m
//! ```
//!
//! which equals the summed squared spectral residual of all eigenpairs. No
//! gradient flows through `K` or `V`.

use faer::{c64, Mat, MatRef};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dictionary::{AdamState, Dictionary, NeuralDictionary, NeuralGradients};
use crate::dynamics::SnapshotPairs;
use crate::edmd::{self, KoopmanMatrix, Spectrum};
use crate::error::{Checkpoint, KoopmanError, Result};
use crate::gram::{compute_gram, compute_gram_fast, GramTriple};
use crate::linalg;
use crate::residual;

/// Eigenvector matrices with a larger condition number are treated as
/// defective.
pub const DEFECTIVE_CONDITION: f64 = 1e12;

/// Mini-batch size: a row count or the whole data set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BatchSize {
    #[default]
    Full,
    Rows(usize),
}

impl Serialize for BatchSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BatchSize::Full => s.serialize_str("full"),
            BatchSize::Rows(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Rows(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Rows(0) => Err(serde::de::Error::custom("batch_size must be positive")),
            Raw::Rows(n) => Ok(BatchSize::Rows(n)),
            Raw::Word(w) if w == "full" => Ok(BatchSize::Full),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "batch_size must be a positive integer or \"full\", got {w:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub sigma: f64,
    pub loss_threshold: f64,
    pub max_epochs: usize,
    pub batch_size: BatchSize,
    pub seed: u64,
    /// Epochs between refreshes of `K` and `V`.
    pub k_update_period: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            sigma: 1e-6,
            loss_threshold: 1e-10,
            max_epochs: 1000,
            batch_size: BatchSize::Full,
            seed: 0,
            k_update_period: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(KoopmanError::param("learning_rate must be positive"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(KoopmanError::param("sigma must be nonnegative"));
        }
        if !(self.loss_threshold > 0.0) {
            return Err(KoopmanError::param("loss_threshold must be positive"));
        }
        if self.k_update_period == 0 {
            return Err(KoopmanError::param("k_update_period must be positive"));
        }
        if self.batch_size == BatchSize::Rows(0) {
            return Err(KoopmanError::param("batch_size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// `(epoch, full-data J)`; epoch 0 is the initial dictionary.
    pub loss_history: Vec<(usize, f64)>,
    pub initial_j: f64,
    pub final_j: f64,
    pub epochs_run: usize,
    /// `final_j <= loss_threshold`; otherwise training stopped at
    /// `max_epochs`.
    pub converged: bool,
    /// Number of times a defective `K` was perturbed before decomposing.
    pub perturbed_refreshes: usize,
    /// Final pairs whose eigenfunction is numerically null on the data; their
    /// residual is left empty.
    #[serde(default)]
    pub null_pairs: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub dictionary: NeuralDictionary,
    pub koopman: KoopmanMatrix,
    /// Final spectrum on the full data, residuals filled.
    pub spectrum: Spectrum,
    pub gram: GramTriple,
    pub report: TrainReport,
}

/// Progress passed to a training observer after every epoch.
pub struct EpochInfo<'a> {
    pub epoch: usize,
    pub loss: f64,
    pub dictionary: &'a NeuralDictionary,
    pub history: &'a [(usize, f64)],
}

/// `J = |(Psi_Y - Psi_X K) V|_F^2 / m`.
pub fn loss_j(psi_x: MatRef<'_, f64>, psi_y: MatRef<'_, f64>, k: &KoopmanMatrix, v: MatRef<'_, c64>) -> Result<f64> {
    check_shapes(psi_x, psi_y, k, v)?;
    let m = psi_x.nrows();
    let e = psi_y - psi_x * &k.k;
    let r = linalg::real_times_complex(e.as_ref(), v);
    let sq = r.norm_l2();
    Ok(sq * sq / m as f64)
}

fn check_shapes(psi_x: MatRef<'_, f64>, psi_y: MatRef<'_, f64>, k: &KoopmanMatrix, v: MatRef<'_, c64>) -> Result<()> {
    let n = k.n_k();
    if psi_x.nrows() != psi_y.nrows() || psi_x.ncols() != n || psi_y.ncols() != n || v.nrows() != n {
        return Err(KoopmanError::dims(format!(
            "Psi_X {}x{}, Psi_Y {}x{}, K {n}x{n}, V {}x{}",
            psi_x.nrows(),
            psi_x.ncols(),
            psi_y.nrows(),
            psi_y.ncols(),
            v.nrows(),
            v.ncols()
        )));
    }
    if psi_x.nrows() == 0 {
        return Err(KoopmanError::param("empty batch"));
    }
    Ok(())
}

/// `J` together with `dJ/dPsi_X` and `dJ/dPsi_Y` for frozen `K` and `V`.
///
/// With `E = Psi_Y - Psi_X K` and `W = Re(V V^H) = V_re V_re^T + V_im V_im^T`
/// the loss is `tr(E W E^T) / m`, so `dJ/dPsi_Y = 2 E W / m` and
/// `dJ/dPsi_X = -2 E W K^T / m`.
pub fn loss_and_psi_gradients(
    psi_x: MatRef<'_, f64>,
    psi_y: MatRef<'_, f64>,
    k: &KoopmanMatrix,
    v: MatRef<'_, c64>,
) -> Result<(f64, Mat<f64>, Mat<f64>)> {
    check_shapes(psi_x, psi_y, k, v)?;
    let m = psi_x.nrows() as f64;
    let (vr, vi) = linalg::split_complex(v);
    let w = &vr * vr.transpose() + &vi * vi.transpose();
    let e = psi_y - psi_x * &k.k;
    let ew = &e * &w;
    let mut j = 0.0;
    for col in 0..e.ncols() {
        for row in 0..e.nrows() {
            j += e[(row, col)] * ew[(row, col)];
        }
    }
    let d_y = &ew * faer::Scale(2.0 / m);
    let d_x = &ew * k.k.transpose() * faer::Scale(-2.0 / m);
    Ok((j / m, d_x, d_y))
}

/// Gradient of `J` with respect to the network parameters on `batch`,
/// treating `K` and `V` as constants.
pub fn grad_loss(dict: &NeuralDictionary, batch: &SnapshotPairs, k: &KoopmanMatrix, v: MatRef<'_, c64>) -> Result<NeuralGradients> {
    Ok(loss_and_grad(dict, batch, k, v)?.1)
}

fn loss_and_grad(
    dict: &NeuralDictionary,
    batch: &SnapshotPairs,
    k: &KoopmanMatrix,
    v: MatRef<'_, c64>,
) -> Result<(f64, NeuralGradients)> {
    let m = batch.m();
    let d = batch.d();
    // one pass over [X; Y]
    let stacked = Mat::from_fn(2 * m, d, |i, j| if i < m { batch.x()[(i, j)] } else { batch.y()[(i - m, j)] });
    let (psi, cache) = dict.forward_with_cache(stacked.as_ref())?;
    let (j, d_x, d_y) = loss_and_psi_gradients(psi.subrows(0, m), psi.subrows(m, m), k, v)?;
    let n_k = psi.ncols();
    let upstream = Mat::from_fn(2 * m, n_k, |i, c| if i < m { d_x[(i, c)] } else { d_y[(i - m, c)] });
    Ok((j, dict.backward(&cache, upstream.as_ref())?))
}

/// Closed-form Koopman state of a fixed dictionary on a data set.
#[derive(Debug, Clone)]
pub struct KoopmanState {
    pub psi_x: Mat<f64>,
    pub psi_y: Mat<f64>,
    pub gram: GramTriple,
    pub koopman: KoopmanMatrix,
    pub spectrum: Spectrum,
    pub perturbed: bool,
}

impl KoopmanState {
    pub fn vectors(&self) -> Mat<c64> {
        self.spectrum.vector_matrix()
    }

    pub fn loss(&self) -> Result<f64> {
        loss_j(self.psi_x.as_ref(), self.psi_y.as_ref(), &self.koopman, self.vectors().as_ref())
    }
}

/// Evaluates `dict` on `data`, solves for `K` and decomposes it. A defective
/// `K` (eigenvector condition above [`DEFECTIVE_CONDITION`]) is perturbed
/// once by noise of relative size `1e-10` before decomposing again.
pub fn koopman_state(dict: &dyn Dictionary, data: &SnapshotPairs, sigma: f64, rng: &mut ChaCha8Rng) -> Result<KoopmanState> {
    state_with(dict, data, sigma, rng, true)
}

fn state_with(
    dict: &dyn Dictionary,
    data: &SnapshotPairs,
    sigma: f64,
    rng: &mut ChaCha8Rng,
    compensated: bool,
) -> Result<KoopmanState> {
    let psi_x = dict.evaluate_batch(data.x())?;
    let psi_y = dict.evaluate_batch(data.y())?;
    let gram = if compensated {
        compute_gram(psi_x.as_ref(), psi_y.as_ref())?
    } else {
        compute_gram_fast(psi_x.as_ref(), psi_y.as_ref())?
    };
    let mut koopman = edmd::solve_koopman(&gram, sigma)?;
    let mut spectrum = edmd::eig(&koopman, &gram)?;
    let mut perturbed = false;
    if edmd::eigenvector_condition(&spectrum)? > DEFECTIVE_CONDITION {
        let n = koopman.n_k();
        let scale = 1e-10 * koopman.k.norm_l2();
        let noise: Mat<f64> = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        koopman.k = &koopman.k + &noise * faer::Scale(scale / noise.norm_l2().max(f64::MIN_POSITIVE));
        spectrum = edmd::eig(&koopman, &gram)?;
        perturbed = true;
    }
    Ok(KoopmanState {
        psi_x,
        psi_y,
        gram,
        koopman,
        spectrum,
        perturbed,
    })
}

pub fn train(data: &SnapshotPairs, dict: NeuralDictionary, config: &TrainConfig) -> Result<TrainedModel> {
    train_with_observer(data, dict, config, |_| {})
}

/// [`train`] with a callback after every epoch (used for checkpoints and
/// progress output).
pub fn train_with_observer(
    data: &SnapshotPairs,
    mut dict: NeuralDictionary,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochInfo<'_>),
) -> Result<TrainedModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(KoopmanError::param("training data is empty"));
    }
    if dict.dim() != data.d() {
        return Err(KoopmanError::dims(format!(
            "dictionary takes {}-d states but data is {}-d",
            dict.dim(),
            data.d()
        )));
    }
    if dict.n_train() == 0 {
        return Err(KoopmanError::param("dictionary has no trainable outputs"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(&dict.tensor_sizes(), config.learning_rate);
    let mut state = koopman_state(&dict, data, config.sigma, &mut rng)?;
    let mut perturbed_refreshes = usize::from(state.perturbed);
    let mut vectors = state.vectors();
    let mut j = state.loss()?;
    let initial_j = j;
    let mut history = vec![(0, j)];
    if !j.is_finite() {
        return Err(non_finite(0, &dict, &history, initial_j, perturbed_refreshes));
    }

    let m = data.m();
    let mut order: Vec<usize> = (0..m).collect();
    let mut epochs_run = 0;
    for epoch in 1..=config.max_epochs {
        if j <= config.loss_threshold {
            break;
        }
        let last_good = dict.clone();
        let batches: Vec<SnapshotPairs> = match config.batch_size {
            BatchSize::Full => vec![data.clone()],
            BatchSize::Rows(n) if n >= m => vec![data.clone()],
            BatchSize::Rows(n) => {
                order.shuffle(&mut rng);
                order.chunks(n).map(|idx| data.select(idx)).collect()
            }
        };
        for batch in &batches {
            let (_, grads) = loss_and_grad(&dict, batch, &state.koopman, vectors.as_ref())?;
            let grad_tensors = grads.tensors();
            adam.step(&mut dict.tensors_mut(), &grad_tensors)?;
        }
        epochs_run = epoch;

        let refreshed = if epoch % config.k_update_period == 0 {
            state_with(&dict, data, config.sigma, &mut rng, false)
        } else {
            let psi_x = dict.evaluate_batch(data.x())?;
            let psi_y = dict.evaluate_batch(data.y())?;
            Ok(KoopmanState { psi_x, psi_y, ..state.clone() })
        };
        let next = match refreshed {
            Ok(s) => s,
            Err(KoopmanError::Cholesky(_) | KoopmanError::Eigensolver(_)) => {
                return Err(non_finite(epoch, &last_good, &history, initial_j, perturbed_refreshes));
            }
            Err(e) => return Err(e),
        };
        let loss = if linalg::all_finite(next.psi_x.as_ref()) { next.loss()? } else { f64::NAN };
        if !loss.is_finite() {
            return Err(non_finite(epoch, &last_good, &history, initial_j, perturbed_refreshes));
        }
        if next.perturbed && epoch % config.k_update_period == 0 {
            perturbed_refreshes += 1;
        }
        state = next;
        vectors = state.vectors();
        j = loss;
        history.push((epoch, j));
        observer(&EpochInfo {
            epoch,
            loss: j,
            dictionary: &dict,
            history: &history,
        });
    }

    // final decomposition on the trained dictionary
    let final_state = koopman_state(&dict, data, config.sigma, &mut rng)?;
    perturbed_refreshes += usize::from(final_state.perturbed && epochs_run % config.k_update_period != 0);
    let final_j = final_state.loss()?;
    let (spectrum, null_pairs) = residual::residuals_where_defined(&final_state.spectrum, &final_state.gram)?;
    let report = TrainReport {
        loss_history: history,
        initial_j,
        final_j,
        epochs_run,
        converged: final_j <= config.loss_threshold,
        perturbed_refreshes,
        null_pairs,
    };
    Ok(TrainedModel {
        dictionary: dict,
        koopman: final_state.koopman,
        spectrum,
        gram: final_state.gram,
        report,
    })
}

fn non_finite(
    epoch: usize,
    last_good: &NeuralDictionary,
    history: &[(usize, f64)],
    initial_j: f64,
    perturbed_refreshes: usize,
) -> KoopmanError {
    let final_j = history.last().map_or(f64::NAN, |h| h.1);
    KoopmanError::NonFiniteLoss {
        epoch,
        last_good: Box::new(Checkpoint {
            dictionary: last_good.clone(),
            report: TrainReport {
                loss_history: history.to_vec(),
                initial_j,
                final_j,
                epochs_run: epoch.saturating_sub(1),
                converged: false,
                perturbed_refreshes,
                null_pairs: 0,
            },
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::FixedDictionary;
    use crate::dynamics::simulate_linear;
    use crate::linalg::from_row_major;

    fn oracle_data() -> SnapshotPairs {
        let m = from_row_major(&[0.9, 0.0, 0.0, 0.5], 2, 2);
        simulate_linear(m.as_ref(), 20, 10, 3).unwrap()
    }

    fn random_batch(seed: u64) -> SnapshotPairs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Mat::from_fn(12, 2, |_, _| rng.random_range(-1.0..1.0));
        let y = Mat::from_fn(12, 2, |i, j| 0.8 * x[(i, j)] + 0.3 * f64::sin(x[(i, 1 - j)]));
        SnapshotPairs::new(x, y).unwrap()
    }

    #[test]
    fn oracle_training_keeps_invariant_subspace() {
        let data = oracle_data();
        let dict = NeuralDictionary::new(2, &[16], 2, 0).unwrap();
        let config = TrainConfig {
            max_epochs: 200,
            ..TrainConfig::default()
        };
        let model = train(&data, dict, &config).unwrap();
        let mut subspace_j = 0.0;
        for target in [1.0, 0.9, 0.5] {
            let pair = model
                .spectrum
                .pairs
                .iter()
                .min_by(|a, b| {
                    let da = (a.lambda - c64::new(target, 0.0)).norm();
                    let db = (b.lambda - c64::new(target, 0.0)).norm();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert!((pair.lambda - c64::new(target, 0.0)).norm() < 1e-3, "closest to {target}: {}", pair.lambda);
            subspace_j += pair.residual.unwrap().powi(2);
        }
        assert!(subspace_j < 1e-6, "invariant-subspace J {subspace_j:e}");
    }

    #[test]
    fn exact_oracle_has_zero_loss() {
        let data = oracle_data();
        let dict = FixedDictionary::monomial(2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let state = koopman_state(&dict, &data, 0.0, &mut rng).unwrap();
        assert!(state.loss().unwrap() < 1e-16);
    }

    #[test]
    fn loss_matches_residual_sum() {
        let data = random_batch(4);
        let dict = FixedDictionary::monomial(2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let state = koopman_state(&dict, &data, 0.0, &mut rng).unwrap();
        let spec = residual::residuals_for_spectrum(&state.spectrum, &state.gram).unwrap();
        let sum: f64 = spec.pairs.iter().map(|p| p.residual.unwrap().powi(2)).sum();
        let j = state.loss().unwrap();
        assert!((j - sum).abs() <= 1e-10 * sum, "{j} vs {sum}");
    }

    #[test]
    fn loss_scales_quadratically() {
        let data = random_batch(5);
        let dict = FixedDictionary::monomial(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let state = koopman_state(&dict, &data, 0.0, &mut rng).unwrap();
        let v = state.vectors();
        let j = state.loss().unwrap();
        let c = 3.0;
        let sx = &state.psi_x * faer::Scale(c);
        let sy = &state.psi_y * faer::Scale(c);
        let j2 = loss_j(sx.as_ref(), sy.as_ref(), &state.koopman, v.as_ref()).unwrap();
        assert!((j2 - c * c * j).abs() <= 1e-12 * j2);
    }

    #[test]
    fn psi_gradients_match_finite_differences() {
        let data = random_batch(6);
        let dict = FixedDictionary::monomial(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let state = koopman_state(&dict, &data, 0.0, &mut rng).unwrap();
        let v = state.vectors();
        let (_, dx, dy) = loss_and_psi_gradients(state.psi_x.as_ref(), state.psi_y.as_ref(), &state.koopman, v.as_ref()).unwrap();
        let h = 1e-6;
        for (which, grad) in [(0, &dx), (1, &dy)] {
            for i in 0..3 {
                for c in 0..state.psi_x.ncols() {
                    let eval = |delta: f64| {
                        let mut px = state.psi_x.clone();
                        let mut py = state.psi_y.clone();
                        if which == 0 {
                            px[(i, c)] += delta;
                        } else {
                            py[(i, c)] += delta;
                        }
                        loss_j(px.as_ref(), py.as_ref(), &state.koopman, v.as_ref()).unwrap()
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    assert!((fd - grad[(i, c)]).abs() < 1e-6 * fd.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn doubling_vectors_quadruples_loss_and_gradient() {
        let data = random_batch(7);
        let dict = NeuralDictionary::new(2, &[4, 4, 4], 3, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let state = koopman_state(&dict, &data, 1e-8, &mut rng).unwrap();
        let v = state.vectors();
        let v2 = &v * faer::Scale(c64::new(2.0, 0.0));
        let g1 = grad_loss(&dict, &data, &state.koopman, v.as_ref()).unwrap();
        let g2 = grad_loss(&dict, &data, &state.koopman, v2.as_ref()).unwrap();
        let j1 = loss_j(state.psi_x.as_ref(), state.psi_y.as_ref(), &state.koopman, v.as_ref()).unwrap();
        let j2 = loss_j(state.psi_x.as_ref(), state.psi_y.as_ref(), &state.koopman, v2.as_ref()).unwrap();
        assert!((j2 - 4.0 * j1).abs() <= 1e-12 * j2);
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((4.0 * x - y).abs() <= 1e-10 * y.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn zero_loss_gives_zero_gradient() {
        // zero network on exact linear data: the trainable outputs are
        // identically zero, so K maps them to zero as well
        let data = oracle_data();
        let dict = NeuralDictionary::zeros(2, &[3, 3, 3], 2).unwrap();
        let psi_x = dict.evaluate_batch(data.x()).unwrap();
        let psi_y = dict.evaluate_batch(data.y()).unwrap();
        let mut k = Mat::<f64>::zeros(5, 5);
        k[(0, 0)] = 1.0;
        k[(1, 1)] = 0.9;
        k[(2, 2)] = 0.5;
        let k = KoopmanMatrix { k, sigma: 0.0 };
        let v = crate::linalg::to_complex(Mat::<f64>::identity(5, 5).as_ref());
        let j = loss_j(psi_x.as_ref(), psi_y.as_ref(), &k, v.as_ref()).unwrap();
        assert!(j < 1e-16);
        let g = grad_loss(&dict, &data, &k, v.as_ref()).unwrap();
        assert!(g.norm() < 1e-10);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let data = oracle_data();
        let dict = NeuralDictionary::new(2, &[4, 4, 4], 2, 9).unwrap();
        let config = TrainConfig { max_epochs: 0, ..TrainConfig::default() };
        let model = train(&data, dict.clone(), &config).unwrap();
        assert_eq!(model.dictionary, dict);
        assert_eq!(model.report.epochs_run, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let edmd = koopman_state(&dict, &data, config.sigma, &mut rng).unwrap();
        assert_eq!(model.spectrum.eigenvalues(), edmd.spectrum.eigenvalues());
    }

    #[test]
    fn training_is_deterministic() {
        let data = random_batch(8);
        let config = TrainConfig { max_epochs: 15, batch_size: BatchSize::Rows(5), seed: 3, ..TrainConfig::default() };
        let a = train(&data, NeuralDictionary::new(2, &[4, 4, 4], 2, 2).unwrap(), &config).unwrap();
        let b = train(&data, NeuralDictionary::new(2, &[4, 4, 4], 2, 2).unwrap(), &config).unwrap();
        assert_eq!(a.report.loss_history, b.report.loss_history);
        assert_eq!(a.report.loss_history.len(), 16);
        assert!(a.report.loss_history.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn config_parsing() {
        let c: TrainConfig = serde_json::from_str(r#"{"batch_size": "full", "max_epochs": 5}"#).unwrap();
        assert_eq!(c.batch_size, BatchSize::Full);
        assert_eq!(c.max_epochs, 5);
        let c: TrainConfig = serde_json::from_str(r#"{"batch_size": 64}"#).unwrap();
        assert_eq!(c.batch_size, BatchSize::Rows(64));
        assert!(serde_json::from_str::<TrainConfig>(r#"{"batch_size": 0}"#).is_err());
        assert!(serde_json::from_str::<TrainConfig>(r#"{"batch": 3}"#).is_err());
        assert!(TrainConfig { k_update_period: 0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn rejects_mismatched_dictionary() {
        let data = oracle_data();
        let dict = NeuralDictionary::new(3, &[4, 4, 4], 2, 9).unwrap();
        assert!(train(&data, dict, &TrainConfig::default()).is_err());
    }
}
