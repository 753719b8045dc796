//! Small dense helpers shared by the numerical modules.

use faer::linalg::solvers::Llt;
use faer::{c64, Mat, MatRef, Side};

use crate::error::{KoopmanError, Result};

/// Builds a matrix from a row-major slice.
pub fn from_row_major(data: &[f64], nrows: usize, ncols: usize) -> Mat<f64> {
    assert_eq!(data.len(), nrows * ncols);
    Mat::from_fn(nrows, ncols, |i, j| data[i * ncols + j])
}

/// Flattens a matrix into a row-major vector.
pub fn to_row_major<T: Copy>(m: MatRef<'_, T>) -> Vec<T> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(KoopmanError::dims("ragged rows"));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn to_complex(m: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

/// `v^H M v` for a real matrix `M`.
pub fn hermitian_form(v: &[c64], m: MatRef<'_, f64>) -> c64 {
    let n = v.len();
    let mut acc = c64::new(0.0, 0.0);
    for i in 0..n {
        let mut row = c64::new(0.0, 0.0);
        for j in 0..n {
            row += v[j] * m[(i, j)];
        }
        acc += v[i].conj() * row;
    }
    acc
}

/// Largest absolute eigenvalue of a symmetric matrix (its spectral norm).
pub fn symmetric_norm(m: MatRef<'_, f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let eigs = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| KoopmanError::Eigensolver(format!("{e:?}")))?;
    Ok(eigs.iter().fold(0.0_f64, |acc, x| acc.max(x.abs())))
}

pub fn symmetric_eigenvalues(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| KoopmanError::Eigensolver(format!("{e:?}")))
}

/// Cholesky factor of `M + shift I`.
pub fn shifted_cholesky(m: MatRef<'_, f64>, shift: f64) -> Result<Llt<f64>> {
    let n = m.nrows();
    let shifted = Mat::from_fn(n, n, |i, j| m[(i, j)] + if i == j { shift } else { 0.0 });
    shifted
        .llt(Side::Lower)
        .map_err(|e| KoopmanError::Cholesky(format!("{e:?}")))
}

pub fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn all_finite(m: MatRef<'_, f64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()))
}

/// Real and imaginary parts of a complex matrix.
pub fn split_complex(m: MatRef<'_, c64>) -> (Mat<f64>, Mat<f64>) {
    (
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re),
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].im),
    )
}

/// `a * b` for real `a` and complex `b`.
pub fn real_times_complex(a: MatRef<'_, f64>, b: MatRef<'_, c64>) -> Mat<c64> {
    let (br, bi) = split_complex(b);
    let re = a * &br;
    let im = a * &bi;
    Mat::from_fn(re.nrows(), re.ncols(), |i, j| c64::new(re[(i, j)], im[(i, j)]))
}

/// Largest-to-smallest singular value ratio of a complex matrix.
pub fn condition_number(m: MatRef<'_, c64>) -> Result<f64> {
    let s = m
        .singular_values()
        .map_err(|e| KoopmanError::Svd(format!("{e:?}")))?;
    let max = s.first().copied().unwrap_or(0.0);
    let min = s.last().copied().unwrap_or(0.0);
    Ok(if min > 0.0 { max / min } else { f64::INFINITY })
}

/// Unevaluated sum `hi + lo` carrying roughly twice the precision of `f64`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn fast_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    pub fn new(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn from_parts(hi: f64, lo: f64) -> Self {
        fast_two_sum(hi, lo)
    }

    /// Exact product of two doubles.
    pub fn prod(a: f64, b: f64) -> Self {
        let p = a * b;
        Dd { hi: p, lo: a.mul_add(b, -p) }
    }

    pub fn div_f64(self, b: f64) -> Dd {
        let q = self.hi / b;
        let p = Dd::prod(q, b);
        let r = ((self.hi - p.hi) - p.lo + self.lo) / b;
        fast_two_sum(q, r)
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

impl std::ops::Add for Dd {
    type Output = Dd;

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let r = fast_two_sum(s, e + t);
        fast_two_sum(r.hi, r.lo + f)
    }
}

impl std::ops::Neg for Dd {
    type Output = Dd;

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl std::ops::Sub for Dd {
    type Output = Dd;

    fn sub(self, o: Dd) -> Dd {
        self + -o
    }
}

impl std::ops::Mul for Dd {
    type Output = Dd;

    fn mul(self, o: Dd) -> Dd {
        let p = Dd::prod(self.hi, o.hi);
        fast_two_sum(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi))
    }
}
