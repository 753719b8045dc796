//! Spectral residuals, residual-based filtering and pseudospectrum scans.

use faer::{c64, Mat, MatRef, Side};
use rayon::prelude::*;

use crate::edmd::Spectrum;
use crate::error::{KoopmanError, Result};
use crate::gram::{GramPart, GramTriple};
use crate::linalg::{self, Dd};

/// Pseudospectrum scan result; `accepted[j]` is `tau[j] < epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudospectrumGrid {
    pub points: Vec<c64>,
    pub tau: Vec<f64>,
    pub epsilon: f64,
    pub accepted: Vec<bool>,
}

impl PseudospectrumGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Grid points inside the epsilon-pseudospectrum.
    pub fn accepted_points(&self) -> Vec<c64> {
        self.points
            .iter()
            .zip(&self.accepted)
            .filter(|(_, &a)| a)
            .map(|(z, _)| *z)
            .collect()
    }
}

/// `D(z) = L - z A^T - conj(z) A + |z|^2 G`, so that
/// `v^H D(z) v = |(Psi_Y - z Psi_X) v|^2 / m`.
pub fn residual_matrix(gram: &GramTriple, z: c64) -> Mat<c64> {
    let n = gram.n_k();
    let zz = z.norm_sqr();
    Mat::from_fn(n, n, |i, j| {
        c64::new(gram.l[(i, j)] + zz * gram.g[(i, j)], 0.0) - z * gram.a[(j, i)] - z.conj() * gram.a[(i, j)]
    })
}

/// Relative spectral residual of the candidate pair `(lambda, Psi v)`:
/// `sqrt(v^H D(lambda) v / v^H G v)`.
pub fn spectral_residual(lambda: c64, v: &[c64], gram: &GramTriple) -> Result<f64> {
    let n = gram.n_k();
    if v.len() != n {
        return Err(KoopmanError::dims(format!("vector has length {}, expected {n}", v.len())));
    }
    let norm_g = gram.g.norm_l2();
    let norm_v: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let den = linalg::hermitian_form(v, gram.g.as_ref()).re;
    if !(den > 1e-14 * norm_v * norm_g) {
        return Err(KoopmanError::NullEigenfunction(den));
    }
    let vr: Vec<f64> = v.iter().map(|z| z.re).collect();
    let vi: Vec<f64> = v.iter().map(|z| z.im).collect();
    let (q_g, _) = quadratic_dd(gram, GramPart::G, &vr, &vi);
    let (q_l, _) = quadratic_dd(gram, GramPart::L, &vr, &vi);
    let (q_ar, q_ai) = quadratic_dd(gram, GramPart::A, &vr, &vi);
    let cross = Dd::new(lambda.re) * q_ar + Dd::new(lambda.im) * q_ai;
    let modulus = Dd::prod(lambda.re, lambda.re) + Dd::prod(lambda.im, lambda.im);
    let num = q_l - (cross + cross) + modulus * q_g;
    Ok((num.to_f64() / q_g.to_f64()).max(0.0).sqrt())
}

/// Real and imaginary parts of `v^H M v` in double-double arithmetic.
fn quadratic_dd(gram: &GramTriple, part: GramPart, vr: &[f64], vi: &[f64]) -> (Dd, Dd) {
    let n = vr.len();
    let mut re = Dd::default();
    let mut im = Dd::default();
    for i in 0..n {
        for j in 0..n {
            let m = gram.entry(part, i, j);
            let p = Dd::prod(vr[i], vr[j]) + Dd::prod(vi[i], vi[j]);
            re = re + p * m;
            if part == GramPart::A {
                let q = Dd::prod(vr[i], vi[j]) - Dd::prod(vi[i], vr[j]);
                im = im + q * m;
            }
        }
    }
    (re, im)
}

/// Fills the residual of every pair, keeping the order.
pub fn residuals_for_spectrum(spectrum: &Spectrum, gram: &GramTriple) -> Result<Spectrum> {
    let mut out = spectrum.clone();
    for pair in &mut out.pairs {
        pair.residual = Some(spectral_residual(pair.lambda, &pair.vector, gram)?);
    }
    Ok(out)
}

/// Like [`residuals_for_spectrum`], but pairs with a numerically null
/// eigenfunction keep an empty residual instead of failing the whole
/// spectrum. Returns how many were left empty.
pub fn residuals_where_defined(spectrum: &Spectrum, gram: &GramTriple) -> Result<(Spectrum, usize)> {
    let mut out = spectrum.clone();
    let mut null_pairs = 0;
    for pair in &mut out.pairs {
        match spectral_residual(pair.lambda, &pair.vector, gram) {
            Ok(r) => pair.residual = Some(r),
            Err(KoopmanError::NullEigenfunction(_)) => {
                pair.residual = None;
                null_pairs += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok((out, null_pairs))
}

/// Keeps the pairs whose residual is at most `epsilon`, in order.
pub fn resdmd_filter(spectrum: &Spectrum, epsilon: f64) -> Result<Spectrum> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(KoopmanError::param("epsilon must be nonnegative"));
    }
    let mut pairs = Vec::with_capacity(spectrum.len());
    for (i, pair) in spectrum.pairs.iter().enumerate() {
        let r = pair
            .residual
            .ok_or_else(|| KoopmanError::param(format!("pair {i} has no residual; compute residuals first")))?;
        if r <= epsilon {
            pairs.push(pair.clone());
        }
    }
    Ok(Spectrum {
        pairs,
        n_k: spectrum.n_k,
    })
}

/// Rectangular grid over `[re_min, re_max] x [im_min, im_max]`, real part
/// varying fastest.
pub fn rectangular_grid(re: (f64, f64), im: (f64, f64), n_re: usize, n_im: usize) -> Vec<c64> {
    let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        if n <= 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        }
    };
    let xs = axis(re.0, re.1, n_re);
    let ys = axis(im.0, im.1, n_im);
    ys.iter()
        .flat_map(|&y| xs.iter().map(move |&x| c64::new(x, y)))
        .collect()
}

/// Inverse of a lower-triangular matrix by forward substitution.
fn lower_inverse(l: MatRef<'_, f64>) -> Mat<f64> {
    let n = l.nrows();
    let mut inv = Mat::zeros(n, n);
    for col in 0..n {
        for i in col..n {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                s -= l[(i, k)] * inv[(k, col)];
            }
            inv[(i, col)] = s / l[(i, i)];
        }
    }
    inv
}

/// Minimal residual `tau_j` over the dictionary span at every grid point,
/// from the generalized problem `D(z) v = tau^2 (G + sigma I) v`.
pub fn pseudospectrum(gram: &GramTriple, grid: &[c64], epsilon: f64, sigma: f64) -> Result<PseudospectrumGrid> {
    if grid.is_empty() {
        return Err(KoopmanError::param("grid is empty"));
    }
    if !(epsilon > 0.0) {
        return Err(KoopmanError::param("epsilon must be positive"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(KoopmanError::param("sigma must be nonnegative"));
    }
    let llt = linalg::shifted_cholesky(gram.g.as_ref(), sigma)?;
    let linv = lower_inverse(llt.L());
    let congruence = |m: MatRef<'_, f64>| &linv * m * linv.transpose();
    let p = congruence(gram.l.as_ref());
    let q = congruence(gram.a.as_ref());
    let r = congruence(gram.g.as_ref());
    let n = gram.n_k();

    let tau = grid
        .par_iter()
        .map(|&z| {
            let zz = z.norm_sqr();
            let c = Mat::from_fn(n, n, |i, j| {
                c64::new(p[(i, j)] + zz * r[(i, j)], 0.0) - z * q[(j, i)] - z.conj() * q[(i, j)]
            });
            let eigs = c
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|e| KoopmanError::Eigensolver(format!("{e:?}")))?;
            let smallest = eigs.first().copied().unwrap_or(0.0);
            Ok(smallest.max(0.0).sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    let accepted = tau.iter().map(|&t| t < epsilon).collect();
    Ok(PseudospectrumGrid {
        points: grid.to_vec(),
        tau,
        epsilon,
        accepted,
    })
}
