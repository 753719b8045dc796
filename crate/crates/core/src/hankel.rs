//! Hankel-DMD: DMD on time-delay embedded trajectories.

use faer::{c64, Mat, MatRef};

use crate::dynamics::Trajectory;
use crate::edmd::{eigenvalue_order, normalize_vector, EigenPair, Spectrum};
use crate::error::{KoopmanError, Result};
use crate::gram::compute_gram;
use crate::linalg;
use crate::residual::spectral_residual;

/// Delay-embedded snapshots. Column `j` stacks the states `x_j .. x_{j+delay-1}`,
/// coordinate-major within each time slot, so row `t * dim + c` holds
/// coordinate `c` at lag `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix {
    pub h: Mat<f64>,
    pub delay: usize,
    pub source_dim: usize,
}

impl HankelMatrix {
    pub fn ncols(&self) -> usize {
        self.h.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.h.nrows()
    }

    /// All columns but the last.
    pub fn h1(&self) -> MatRef<'_, f64> {
        self.h.subcols(0, self.ncols() - 1)
    }

    /// All columns but the first.
    pub fn h2(&self) -> MatRef<'_, f64> {
        self.h.subcols(1, self.ncols() - 1)
    }
}

/// Requested truncation rank for Hankel-DMD.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmdRank {
    /// Numerical rank of `H1`.
    Full,
    Fixed(usize),
}

pub fn build_hankel(traj: &Trajectory, delay: usize) -> Result<HankelMatrix> {
    build_hankel_from_rows(traj.to_matrix().as_ref(), delay)
}

/// Same as [`build_hankel`] for a series given as rows of a matrix.
pub fn build_hankel_from_rows(series: MatRef<'_, f64>, delay: usize) -> Result<HankelMatrix> {
    if delay == 0 {
        return Err(KoopmanError::param("delay must be positive"));
    }
    let len = series.nrows();
    let dim = series.ncols();
    if len < delay || dim == 0 {
        return Err(KoopmanError::TrajectoryTooShort { len, delay });
    }
    let ncols = len - delay + 1;
    let h = Mat::from_fn(delay * dim, ncols, |row, col| series[(col + row / dim, row % dim)]);
    Ok(HankelMatrix {
        h,
        delay,
        source_dim: dim,
    })
}

/// SVD-projected DMD of the shift `H1 -> H2`.
///
/// The returned eigenvectors live in delay-coordinate space (`n_k` equals the
/// number of Hankel rows): `phi(w) = w^T v` for a window `w`. Residuals are
/// filled against `Psi_X = H1^T`, `Psi_Y = H2^T`.
pub fn hankel_dmd(h: &HankelMatrix, rank: DmdRank) -> Result<Spectrum> {
    if h.ncols() < 2 {
        return Err(KoopmanError::param("Hankel matrix needs at least two columns"));
    }
    let h1 = h.h1();
    let h2 = h.h2();
    let svd = h1.thin_svd().map_err(|e| KoopmanError::Svd(format!("{e:?}")))?;
    let s = svd.S().column_vector();
    let max_rank = s.nrows();
    let r = match rank {
        DmdRank::Fixed(r) if r == 0 || r > max_rank => {
            return Err(KoopmanError::param(format!(
                "rank {r} outside 1..={max_rank} for a Hankel matrix with {} shift columns",
                h1.ncols()
            )))
        }
        DmdRank::Fixed(r) => r,
        DmdRank::Full => {
            let tol = s[0] * f64::EPSILON * h1.nrows().max(h1.ncols()) as f64;
            (0..max_rank).filter(|&i| s[i] > tol).count().max(1)
        }
    };
    let u = svd.U().subcols(0, r);
    let v = svd.V().subcols(0, r);
    let s_inv = Mat::from_fn(r, r, |i, j| if i == j { 1.0 / s[i] } else { 0.0 });
    // reduced operator U^T H2 V S^{-1}; its transpose acts on eigenfunction
    // coefficients
    let reduced = u.transpose() * h2 * v * &s_inv;
    let coeff_op = reduced.transpose().to_owned();
    let evd = coeff_op
        .eigen()
        .map_err(|e| KoopmanError::Eigensolver(format!("{e:?}")))?;

    let gram = compute_gram(h1.transpose(), h2.transpose())?;
    let u_c = linalg::to_complex(u);
    let w = evd.U();
    let lifted = &u_c * w;
    let n = h.nrows();
    let mut pairs = Vec::with_capacity(r);
    for j in 0..r {
        let vector = normalize_vector((0..n).map(|i| lifted[(i, j)]).collect(), gram.g.as_ref());
        let lambda = evd.S()[j];
        let residual = spectral_residual(lambda, &vector, &gram).ok();
        pairs.push(EigenPair {
            lambda,
            vector,
            residual,
        });
    }
    pairs.sort_by(|a, b| eigenvalue_order(&a.lambda, &b.lambda));
    Ok(Spectrum { pairs, n_k: n })
}

/// Eigenfunction samples `H^T v_i` on every window of `h`.
pub fn hankel_eigenfunctions(h: &HankelMatrix, spectrum: &Spectrum) -> Result<Mat<c64>> {
    if spectrum.n_k != h.nrows() {
        return Err(KoopmanError::dims("spectrum does not match the Hankel embedding"));
    }
    Ok(linalg::real_times_complex(h.h.transpose(), spectrum.vector_matrix().as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_series(values: &[f64]) -> Mat<f64> {
        Mat::from_fn(values.len(), 1, |i, _| values[i])
    }

    #[test]
    fn direct_construction() {
        let h = build_hankel_from_rows(scalar_series(&[1.0, 2.0, 3.0, 4.0]).as_ref(), 2).unwrap();
        let expected = crate::linalg::from_row_major(&[1.0, 2.0, 3.0, 2.0, 3.0, 4.0], 2, 3);
        assert_eq!(h.h, expected);
    }

    #[test]
    fn full_length_window_is_one_column() {
        let h = build_hankel_from_rows(scalar_series(&[1.0, 2.0, 3.0, 4.0]).as_ref(), 4).unwrap();
        assert_eq!(h.ncols(), 1);
        assert!(matches!(
            build_hankel_from_rows(scalar_series(&[1.0, 2.0]).as_ref(), 3),
            Err(KoopmanError::TrajectoryTooShort { len: 2, delay: 3 })
        ));
    }

    #[test]
    fn multivariate_interleaving() {
        let series = crate::linalg::from_row_major(&[1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0], 4, 2);
        let traj = Trajectory::from_matrix(series.as_ref(), 1.0).unwrap();
        let h = build_hankel(&traj, 3).unwrap();
        assert_eq!(h.nrows(), 6);
        assert_eq!(h.ncols(), 2);
        let col0: Vec<f64> = (0..6).map(|i| h.h[(i, 0)]).collect();
        assert_eq!(col0, vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0]);
        // shift structure
        for i in 0..4 {
            assert_eq!(h.h[(i + 2, 0)], h.h[(i, 1)]);
        }
    }

    #[test]
    fn cosine_gives_rotation_pair() {
        let values: Vec<f64> = (0..60).map(|k| (0.7 * k as f64).cos()).collect();
        let h = build_hankel_from_rows(scalar_series(&values).as_ref(), 2).unwrap();
        let spec = hankel_dmd(&h, DmdRank::Full).unwrap();
        assert_eq!(spec.len(), 2);
        let want = c64::from_polar(1.0, 0.7);
        assert!((spec.pairs[0].lambda - want.conj()).norm() < 1e-8);
        assert!((spec.pairs[1].lambda - want).norm() < 1e-8);
        let r: Vec<f64> = spec.pairs.iter().map(|p| p.residual.unwrap()).collect();
        assert!(r.iter().all(|&v| v < 1e-8), "{r:?}");
    }

    #[test]
    fn constant_and_geometric_series() {
        let h = build_hankel_from_rows(scalar_series(&[2.0; 10]).as_ref(), 3).unwrap();
        let spec = hankel_dmd(&h, DmdRank::Full).unwrap();
        assert_eq!(spec.len(), 1);
        assert!((spec.pairs[0].lambda - c64::new(1.0, 0.0)).norm() < 1e-12);

        let values: Vec<f64> = (0..20).map(|k| 0.8_f64.powi(k)).collect();
        let h = build_hankel_from_rows(scalar_series(&values).as_ref(), 1).unwrap();
        let spec = hankel_dmd(&h, DmdRank::Full).unwrap();
        assert_eq!(spec.len(), 1);
        assert!((spec.pairs[0].lambda - c64::new(0.8, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn linear_system_eigenvalues_recovered() {
        let m = crate::linalg::from_row_major(&[0.9, 0.2, -0.3, 0.6], 2, 2);
        let x0 = crate::linalg::from_row_major(&[1.0, -0.5], 1, 2);
        let pairs = crate::dynamics::simulate_linear_from(m.as_ref(), x0.as_ref(), 40).unwrap();
        let traj = Trajectory::from_matrix(pairs.x(), 1.0).unwrap();
        let h = build_hankel(&traj, 2).unwrap();
        let spec = hankel_dmd(&h, DmdRank::Full).unwrap();
        let truth = m.eigenvalues().unwrap();
        for t in truth {
            assert!(spec.eigenvalues().iter().any(|l| (l - t).norm() < 1e-6), "missing {t}");
        }
    }

    #[test]
    fn rank_is_validated() {
        let values: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let h = build_hankel_from_rows(scalar_series(&values).as_ref(), 3).unwrap();
        assert!(hankel_dmd(&h, DmdRank::Fixed(4)).is_err());
        assert!(hankel_dmd(&h, DmdRank::Fixed(2)).is_ok());
        let single = build_hankel_from_rows(scalar_series(&values).as_ref(), 10).unwrap();
        assert!(hankel_dmd(&single, DmdRank::Full).is_err());
    }
}
