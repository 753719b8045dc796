//! Finite-dimensional Koopman matrix, eigenpairs, eigenfunctions and modes.

use std::cmp::Ordering;

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef, Side};

use crate::dictionary::Dictionary;
use crate::error::{KoopmanError, Result};
use crate::gram::GramTriple;
use crate::linalg;

/// `K = (G + sigma I)^{-1} A`.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanMatrix {
    pub k: Mat<f64>,
    pub sigma: f64,
}

impl KoopmanMatrix {
    pub fn n_k(&self) -> usize {
        self.k.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: c64,
    /// Coefficients of the eigenfunction in the dictionary, `phi = Psi v`.
    pub vector: Vec<c64>,
    /// Spectral residual, once computed.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub pairs: Vec<EigenPair>,
    pub n_k: usize,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<c64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    /// Residuals in pair order; `None` for pairs not yet evaluated.
    pub fn residuals(&self) -> Vec<Option<f64>> {
        self.pairs.iter().map(|p| p.residual).collect()
    }

    /// Eigenvectors as the columns of an `n_k × len` matrix.
    pub fn vector_matrix(&self) -> Mat<c64> {
        Mat::from_fn(self.n_k, self.pairs.len(), |i, j| self.pairs[j].vector[i])
    }
}

/// Ordering of eigenpairs: descending `|lambda|`, then descending real part,
/// then ascending imaginary part.
pub fn eigenvalue_order(a: &c64, b: &c64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then_with(|| b.re.total_cmp(&a.re))
        .then_with(|| a.im.total_cmp(&b.im))
}

/// Scale-aware default regularization `1e-8 trace(G) / n_k`.
pub fn default_sigma(gram: &GramTriple) -> f64 {
    let n = gram.n_k();
    if n == 0 {
        return 0.0;
    }
    let trace: f64 = (0..n).map(|i| gram.g[(i, i)]).sum();
    1e-8 * trace / n as f64
}

/// Solves `(G + sigma I) K = A` by Cholesky.
pub fn solve_koopman(gram: &GramTriple, sigma: f64) -> Result<KoopmanMatrix> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(KoopmanError::param("sigma must be a nonnegative finite number"));
    }
    if sigma == 0.0 {
        let eigs = linalg::symmetric_eigenvalues(gram.g.as_ref())?;
        let norm = eigs.iter().fold(0.0_f64, |acc, e| acc.max(e.abs()));
        let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 1e-12 * norm) {
            return Err(KoopmanError::RegularizationRequired {
                min_eigenvalue: min,
                norm,
            });
        }
    }
    let llt = linalg::shifted_cholesky(gram.g.as_ref(), sigma)?;
    let k = llt.solve(&gram.a);
    if !linalg::all_finite(k.as_ref()) {
        return Err(KoopmanError::Cholesky("non-finite Koopman matrix".into()));
    }
    Ok(KoopmanMatrix { k, sigma })
}

pub(crate) fn normalize_vector(mut v: Vec<c64>, g: MatRef<'_, f64>) -> Vec<c64> {
    // fix the phase on the largest entry
    let mut pivot = 0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > v[pivot].norm() {
            pivot = i;
        }
    }
    let p = v[pivot];
    if p.norm() > 0.0 {
        let phase = p.conj() / p.norm();
        v.iter_mut().for_each(|z| *z *= phase);
        v[pivot] = c64::new(v[pivot].re, 0.0);
    }
    let q = linalg::hermitian_form(&v, g).re;
    if q > 0.0 && q.is_finite() {
        let s = 1.0 / q.sqrt();
        v.iter_mut().for_each(|z| *z *= s);
    }
    v
}

/// Full eigendecomposition of `K` with every eigenvector scaled to
/// `v^H G v = 1`, sorted by [`eigenvalue_order`].
pub fn eig(k: &KoopmanMatrix, gram: &GramTriple) -> Result<Spectrum> {
    let n = k.n_k();
    if gram.n_k() != n {
        return Err(KoopmanError::dims("Koopman matrix and Gram triple differ in size"));
    }
    if !linalg::all_finite(k.k.as_ref()) {
        return Err(KoopmanError::param("Koopman matrix has non-finite entries"));
    }
    if n == 0 {
        return Ok(Spectrum { pairs: Vec::new(), n_k: 0 });
    }
    let evd = k
        .k
        .eigen()
        .map_err(|e| KoopmanError::Eigensolver(format!("{e:?}")))?;
    let values = evd.S();
    let vectors = evd.U();
    let mut pairs: Vec<EigenPair> = (0..n)
        .map(|j| {
            let v = (0..n).map(|i| vectors[(i, j)]).collect();
            EigenPair {
                lambda: values[j],
                vector: normalize_vector(v, gram.g.as_ref()),
                residual: None,
            }
        })
        .collect();
    pairs.sort_by(|a, b| eigenvalue_order(&a.lambda, &b.lambda));
    Ok(Spectrum { pairs, n_k: n })
}

/// Condition number of the eigenvector matrix of a spectrum.
pub fn eigenvector_condition(spectrum: &Spectrum) -> Result<f64> {
    linalg::condition_number(spectrum.vector_matrix().as_ref())
}

/// Samples `phi_i = Psi(states) v_i` for every pair, one column per pair.
pub fn eval_eigenfunctions(dict: &dyn Dictionary, spectrum: &Spectrum, states: MatRef<'_, f64>) -> Result<Mat<c64>> {
    if dict.n_k() != spectrum.n_k {
        return Err(KoopmanError::dims("spectrum was computed for a different dictionary size"));
    }
    let psi = dict.evaluate_batch(states)?;
    Ok(linalg::real_times_complex(psi.as_ref(), spectrum.vector_matrix().as_ref()))
}

/// Koopman modes with fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDecomposition {
    /// One row per eigenpair, one column per state coordinate.
    pub modes: Mat<c64>,
    /// `|X - Phi B|_F / |X|_F`
    pub relative_error: f64,
    /// Set when the eigenfunction samples are numerically rank deficient.
    pub rank_deficient: bool,
}

/// Least-squares Koopman modes: `B = argmin |X - Phi B|_F` with
/// `Phi = Psi_X V`, solved through ridge-regularized normal equations.
pub fn koopman_modes(spectrum: &Spectrum, psi_x: MatRef<'_, f64>, x: MatRef<'_, f64>) -> Result<ModeDecomposition> {
    if spectrum.is_empty() {
        return Err(KoopmanError::param("spectrum is empty"));
    }
    if psi_x.ncols() != spectrum.n_k || psi_x.nrows() != x.nrows() {
        return Err(KoopmanError::dims("Psi_X, X and spectrum sizes disagree"));
    }
    let phi = linalg::real_times_complex(psi_x, spectrum.vector_matrix().as_ref());
    let k = phi.ncols();
    let normal = phi.adjoint() * &phi;
    let eigs = normal
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| KoopmanError::Eigensolver(format!("{e:?}")))?;
    let max = eigs.iter().fold(0.0_f64, |acc, e| acc.max(e.abs()));
    let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let ridge = 1e-10 * max;
    let rank_deficient = !(min > ridge);
    let regularized = Mat::from_fn(k, k, |i, j| {
        normal[(i, j)] + if i == j { c64::new(ridge, 0.0) } else { c64::new(0.0, 0.0) }
    });
    let llt = regularized
        .llt(Side::Lower)
        .map_err(|e| KoopmanError::Cholesky(format!("{e:?}")))?;
    let x_c = linalg::to_complex(x);
    let rhs = phi.adjoint() * &x_c;
    let modes = llt.solve(&rhs);
    let fit = &phi * &modes;
    let err = (&x_c - &fit).norm_l2();
    let scale = x_c.norm_l2();
    Ok(ModeDecomposition {
        modes,
        relative_error: if scale > 0.0 { err / scale } else { err },
        rank_deficient,
    })
}
