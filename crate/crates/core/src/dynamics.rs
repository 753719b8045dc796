//! Snapshot generators for the reference systems.

use std::f64::consts::PI;

use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KoopmanError, Result};

/// Internal RK4 substeps taken per recorded pendulum step.
pub const PENDULUM_SUBSTEPS: usize = 10;

/// Half-width of the angular-velocity interval used for initial conditions.
pub const PENDULUM_VELOCITY_BOUND: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePoint {
    coords: Vec<f64>,
}

impl StatePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(KoopmanError::param("state must have at least one coordinate"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(KoopmanError::param("state coordinates must be finite"));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    states: Vec<StatePoint>,
    dt: f64,
}

impl Trajectory {
    pub fn new(states: Vec<StatePoint>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(KoopmanError::param("trajectory dt must be positive"));
        }
        if states.len() < 2 {
            return Err(KoopmanError::param("trajectory needs at least two states"));
        }
        let dim = states[0].dim();
        if states.iter().any(|s| s.dim() != dim) {
            return Err(KoopmanError::dims("trajectory states differ in dimension"));
        }
        Ok(Self { states, dt })
    }

    /// Builds a trajectory from the rows of `m` (one state per row).
    pub fn from_matrix(m: MatRef<'_, f64>, dt: f64) -> Result<Self> {
        let states = (0..m.nrows())
            .map(|i| StatePoint::new((0..m.ncols()).map(|j| m[(i, j)]).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(states, dt)
    }

    pub fn states(&self) -> &[StatePoint] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// States as rows of a `len × dim` matrix.
    pub fn to_matrix(&self) -> Mat<f64> {
        Mat::from_fn(self.len(), self.dim(), |i, j| self.states[i].coords[j])
    }

    /// Consecutive-state pairs of this trajectory.
    pub fn snapshot_pairs(&self) -> SnapshotPairs {
        let n = self.len() - 1;
        let d = self.dim();
        SnapshotPairs {
            x: Mat::from_fn(n, d, |i, j| self.states[i].coords[j]),
            y: Mat::from_fn(n, d, |i, j| self.states[i + 1].coords[j]),
        }
    }
}

/// A trajectory tagged with the regime that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub label: usize,
    pub trajectory: Trajectory,
}

/// Paired state matrices with `y_i = F(x_i)` row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPairs {
    x: Mat<f64>,
    y: Mat<f64>,
}

impl SnapshotPairs {
    pub fn new(x: Mat<f64>, y: Mat<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
            return Err(KoopmanError::dims(format!(
                "X is {}x{} but Y is {}x{}",
                x.nrows(),
                x.ncols(),
                y.nrows(),
                y.ncols()
            )));
        }
        if !crate::linalg::all_finite(x.as_ref()) || !crate::linalg::all_finite(y.as_ref()) {
            return Err(KoopmanError::param("snapshot entries must be finite"));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> MatRef<'_, f64> {
        self.x.as_ref()
    }

    pub fn y(&self) -> MatRef<'_, f64> {
        self.y.as_ref()
    }

    /// Number of snapshot pairs.
    pub fn m(&self) -> usize {
        self.x.nrows()
    }

    /// State dimension.
    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.m() == 0
    }

    /// Rows `idx` of both matrices, in the given order.
    pub fn select(&self, idx: &[usize]) -> SnapshotPairs {
        let d = self.d();
        SnapshotPairs {
            x: Mat::from_fn(idx.len(), d, |i, j| self.x[(idx[i], j)]),
            y: Mat::from_fn(idx.len(), d, |i, j| self.y[(idx[i], j)]),
        }
    }

    /// Stacks several pair sets of equal dimension.
    pub fn concat(parts: &[SnapshotPairs]) -> Result<SnapshotPairs> {
        let Some(first) = parts.first() else {
            return Err(KoopmanError::param("nothing to concatenate"));
        };
        let d = first.d();
        if parts.iter().any(|p| p.d() != d) {
            return Err(KoopmanError::dims("snapshot sets differ in dimension"));
        }
        let m: usize = parts.iter().map(SnapshotPairs::m).sum();
        let mut x = Mat::zeros(m, d);
        let mut y = Mat::zeros(m, d);
        let mut row = 0;
        for p in parts {
            for i in 0..p.m() {
                for j in 0..d {
                    x[(row, j)] = p.x[(i, j)];
                    y[(row, j)] = p.y[(i, j)];
                }
                row += 1;
            }
        }
        Ok(SnapshotPairs { x, y })
    }
}

/// Wraps an angle into `[-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = theta - 2.0 * PI * (theta / (2.0 * PI)).round();
    wrapped.clamp(-PI, PI)
}

/// Right-hand side of the pendulum `theta'' = sin(theta)`.
fn pendulum_field(state: [f64; 2]) -> [f64; 2] {
    [state[1], state[0].sin()]
}

/// One classical RK4 step of the pendulum, without angle wrapping.
pub fn pendulum_rk4(state: [f64; 2], h: f64) -> [f64; 2] {
    let add = |a: [f64; 2], b: [f64; 2], s: f64| [a[0] + s * b[0], a[1] + s * b[1]];
    let k1 = pendulum_field(state);
    let k2 = pendulum_field(add(state, k1, 0.5 * h));
    let k3 = pendulum_field(add(state, k2, 0.5 * h));
    let k4 = pendulum_field(add(state, k3, h));
    [
        state[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        state[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Advances the pendulum by `dt` using `substeps` RK4 steps, wrapping the
/// angle after each one.
pub fn pendulum_advance(state: [f64; 2], dt: f64, substeps: usize) -> [f64; 2] {
    let h = dt / substeps as f64;
    let mut s = state;
    for _ in 0..substeps {
        s = pendulum_rk4(s, h);
        s[0] = wrap_angle(s[0]);
    }
    s
}

/// Conserved energy of the pendulum.
pub fn pendulum_energy(state: [f64; 2]) -> f64 {
    0.5 * state[1] * state[1] + state[0].cos()
}

/// Samples `n_init` initial conditions uniformly on `[-pi, pi] x [-15, 15]`
/// and records `n_steps` pairs from each trajectory.
pub fn simulate_pendulum(n_init: usize, n_steps: usize, dt: f64, seed: u64) -> Result<SnapshotPairs> {
    if n_init == 0 || n_steps == 0 {
        return Err(KoopmanError::param("n_init and n_steps must be positive"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(KoopmanError::param("dt must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial: Vec<[f64; 2]> = (0..n_init)
        .map(|_| {
            let theta = rng.random_range(-PI..=PI);
            let omega = rng.random_range(-PENDULUM_VELOCITY_BOUND..=PENDULUM_VELOCITY_BOUND);
            [theta, omega]
        })
        .collect();
    Ok(pendulum_from_initial(&initial, n_steps, dt))
}

/// Pendulum pairs from explicit initial conditions `(theta, theta_dot)`.
pub fn pendulum_from_initial(initial: &[[f64; 2]], n_steps: usize, dt: f64) -> SnapshotPairs {
    let paths: Vec<Vec<[f64; 2]>> = initial
        .par_iter()
        .map(|&x0| {
            let mut path = Vec::with_capacity(n_steps + 1);
            let mut s = [wrap_angle(x0[0]), x0[1]];
            path.push(s);
            for _ in 0..n_steps {
                s = pendulum_advance(s, dt, PENDULUM_SUBSTEPS);
                path.push(s);
            }
            path
        })
        .collect();
    let m = initial.len() * n_steps;
    let mut x = Mat::zeros(m, 2);
    let mut y = Mat::zeros(m, 2);
    for (t, path) in paths.iter().enumerate() {
        for k in 0..n_steps {
            let row = t * n_steps + k;
            for j in 0..2 {
                x[(row, j)] = path[k][j];
                y[(row, j)] = path[k + 1][j];
            }
        }
    }
    SnapshotPairs { x, y }
}

fn check_square(m: MatRef<'_, f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(KoopmanError::dims("system matrix must be square and nonempty"));
    }
    if !crate::linalg::all_finite(m) {
        return Err(KoopmanError::param("system matrix entries must be finite"));
    }
    Ok(())
}

fn apply(m: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum())
        .collect()
}

/// Linear system `x_{k+1} = M x_k` from `n_init` initial states drawn
/// uniformly on `[-1, 1]^d`.
pub fn simulate_linear(m: MatRef<'_, f64>, n_init: usize, n_steps: usize, seed: u64) -> Result<SnapshotPairs> {
    check_square(m)?;
    let d = m.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = Mat::from_fn(n_init, d, |_, _| rng.random_range(-1.0..=1.0));
    simulate_linear_from(m, initial.as_ref(), n_steps)
}

/// Linear system pairs from explicit initial states (one per row).
pub fn simulate_linear_from(m: MatRef<'_, f64>, initial: MatRef<'_, f64>, n_steps: usize) -> Result<SnapshotPairs> {
    check_square(m)?;
    let d = m.nrows();
    if initial.ncols() != d {
        return Err(KoopmanError::dims("initial states do not match system dimension"));
    }
    if initial.nrows() == 0 || n_steps == 0 {
        return Err(KoopmanError::param("n_init and n_steps must be positive"));
    }
    let rows = initial.nrows() * n_steps;
    let mut x = Mat::zeros(rows, d);
    let mut y = Mat::zeros(rows, d);
    for t in 0..initial.nrows() {
        let mut s: Vec<f64> = (0..d).map(|j| initial[(t, j)]).collect();
        for k in 0..n_steps {
            let next = apply(m, &s);
            let row = t * n_steps + k;
            for j in 0..d {
                x[(row, j)] = s[j];
                y[(row, j)] = next[j];
            }
            s = next;
        }
    }
    SnapshotPairs::new(x, y)
}

/// Spectral radius of a real square matrix.
pub fn spectral_radius(m: MatRef<'_, f64>) -> Result<f64> {
    let eigs = m
        .eigenvalues()
        .map_err(|e| KoopmanError::Eigensolver(format!("{e:?}")))?;
    Ok(eigs.iter().fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

/// Random stable linear regimes observed through additive Gaussian noise.
///
/// Every regime has its own system matrix (spectral radius drawn uniformly
/// from `[0.7, 0.98]`) and its own initial state; all trials of a regime start
/// from that state and differ only in the observation noise. Each trajectory
/// holds `n_steps + 1` observed states.
pub fn simulate_multiregime(
    n_regimes: usize,
    d: usize,
    n_trials: usize,
    n_steps: usize,
    noise: f64,
    seed: u64,
) -> Result<Vec<LabeledTrajectory>> {
    Ok(multiregime_with_systems(n_regimes, d, n_trials, n_steps, noise, seed)?.0)
}

/// Like [`simulate_multiregime`] but also returns the regime matrices.
pub fn multiregime_with_systems(
    n_regimes: usize,
    d: usize,
    n_trials: usize,
    n_steps: usize,
    noise: f64,
    seed: u64,
) -> Result<(Vec<LabeledTrajectory>, Vec<Mat<f64>>)> {
    if n_regimes < 2 {
        return Err(KoopmanError::param("need at least two regimes"));
    }
    if d == 0 || n_trials == 0 || n_steps == 0 {
        return Err(KoopmanError::param("d, n_trials and n_steps must be positive"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(KoopmanError::param("noise must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut systems = Vec::with_capacity(n_regimes);
    let mut out = Vec::with_capacity(n_regimes * n_trials);
    for label in 0..n_regimes {
        let raw = Mat::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let radius = spectral_radius(raw.as_ref())?;
        let target = rng.random_range(0.7..=0.98);
        let system = Mat::from_fn(d, d, |i, j| raw[(i, j)] * target / radius);
        let x0: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();

        let mut clean = Vec::with_capacity(n_steps + 1);
        clean.push(x0);
        for k in 0..n_steps {
            let next = apply(system.as_ref(), &clean[k]);
            clean.push(next);
        }
        for _ in 0..n_trials {
            let states = clean
                .iter()
                .map(|s| {
                    let observed = s
                        .iter()
                        .map(|&v| v + noise * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    StatePoint::new(observed)
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(LabeledTrajectory {
                label,
                trajectory: Trajectory::new(states, 1.0)?,
            });
        }
        systems.push(system);
    }
    Ok((out, systems))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_pair_count() {
        let pairs = simulate_pendulum(90, 1000, 0.5, 1).unwrap();
        assert_eq!(pairs.m(), 90_000);
        assert_eq!(pairs.d(), 2);
    }

    #[test]
    fn equilibrium_stays_fixed() {
        let pairs = pendulum_from_initial(&[[0.0, 0.0]], 20, 0.5);
        for i in 0..pairs.m() {
            assert_eq!(pairs.x()[(i, 0)], 0.0);
            assert_eq!(pairs.x()[(i, 1)], 0.0);
            assert_eq!(pairs.y()[(i, 0)], 0.0);
            assert_eq!(pairs.y()[(i, 1)], 0.0);
        }
    }

    #[test]
    fn energy_drift_over_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = [rng.random_range(-PI..PI), rng.random_range(-15.0..15.0)];
            let coarse = pendulum_rk4(s, 0.01);
            // oracle: the same step resolved with h = 1e-4
            let mut fine = s;
            for _ in 0..100 {
                fine = pendulum_rk4(fine, 1e-4);
            }
            let e0 = pendulum_energy(s);
            let scale = e0.abs().max(1.0);
            assert!((pendulum_energy(coarse) - e0).abs() / scale < 1e-6);
            assert!((pendulum_energy(fine) - e0).abs() / scale < 1e-6);
            assert!((coarse[0] - fine[0]).abs() < 1e-8 && (coarse[1] - fine[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn angle_is_wrapped_and_velocity_sampled_in_bounds() {
        let pairs = simulate_pendulum(20, 100, 0.5, 9).unwrap();
        for i in 0..pairs.m() {
            assert!(pairs.x()[(i, 0)].abs() <= PI);
            assert!(pairs.y()[(i, 0)].abs() <= PI);
        }
        for t in 0..20 {
            assert!(pairs.x()[(t * 100, 1)].abs() <= 15.0);
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        let a = simulate_pendulum(5, 30, 0.5, 42).unwrap();
        let b = simulate_pendulum(5, 30, 0.5, 42).unwrap();
        let c = simulate_pendulum(5, 30, 0.5, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn linear_single_step() {
        let m = crate::linalg::from_row_major(&[0.9, 0.0, 0.0, 0.5], 2, 2);
        let x0 = crate::linalg::from_row_major(&[1.0, 1.0], 1, 2);
        let pairs = simulate_linear_from(m.as_ref(), x0.as_ref(), 1).unwrap();
        assert_eq!(pairs.m(), 1);
        assert_eq!(pairs.x()[(0, 0)], 1.0);
        assert_eq!(pairs.y()[(0, 0)], 0.9);
        assert_eq!(pairs.y()[(0, 1)], 0.5);
    }

    #[test]
    fn linear_identity_and_rotation() {
        let id = Mat::<f64>::identity(3, 3);
        let pairs = simulate_linear(id.as_ref(), 4, 5, 0).unwrap();
        assert_eq!(pairs.x(), pairs.y());

        let (s, c) = 0.3_f64.sin_cos();
        let rot = crate::linalg::from_row_major(&[c, -s, s, c], 2, 2);
        let pairs = simulate_linear(rot.as_ref(), 3, 10, 1).unwrap();
        for i in 0..pairs.m() {
            let nx = pairs.x()[(i, 0)].hypot(pairs.x()[(i, 1)]);
            let ny = pairs.y()[(i, 0)].hypot(pairs.y()[(i, 1)]);
            assert!((nx - ny).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_pairs_follow_the_matrix() {
        let m = crate::linalg::from_row_major(&[0.5, 0.2, -0.1, 0.3, 0.8, 0.0, 0.1, -0.4, 0.6], 3, 3);
        let pairs = simulate_linear(m.as_ref(), 4, 6, 11).unwrap();
        let expected = pairs.x() * m.transpose();
        for i in 0..pairs.m() {
            for j in 0..3 {
                assert!((expected[(i, j)] - pairs.y()[(i, j)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn multiregime_shapes_and_radii() {
        let (trajs, systems) = multiregime_with_systems(6, 5, 10, 20, 0.05, 4).unwrap();
        assert_eq!(trajs.len(), 60);
        for label in 0..6 {
            assert_eq!(trajs.iter().filter(|t| t.label == label).count(), 10);
        }
        for m in &systems {
            let r = spectral_radius(m.as_ref()).unwrap();
            assert!((0.7 - 1e-12..=0.98 + 1e-12).contains(&r), "radius {r}");
        }
        assert!(trajs.iter().all(|t| t.trajectory.len() == 21));
    }

    #[test]
    fn noiseless_trials_coincide() {
        let trajs = simulate_multiregime(2, 3, 2, 10, 0.0, 5).unwrap();
        assert_eq!(trajs[0].trajectory, trajs[1].trajectory);
        assert_ne!(trajs[0].trajectory, trajs[2].trajectory);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(simulate_pendulum(1, 1, 0.0, 0).is_err());
        assert!(simulate_multiregime(1, 3, 2, 10, 0.0, 5).is_err());
        let rect = Mat::<f64>::zeros(2, 3);
        assert!(simulate_linear(rect.as_ref(), 1, 1, 0).is_err());
    }
}
