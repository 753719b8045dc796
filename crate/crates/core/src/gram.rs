//! Empirical Gram matrices of evaluated snapshot data.

use faer::{Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KoopmanError, Result};
use crate::linalg::{self, Dd};

/// `G = Psi_X^T Psi_X / m`, `A = Psi_X^T Psi_Y / m`, `L = Psi_Y^T Psi_Y / m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramTriple {
    pub g: Mat<f64>,
    pub a: Mat<f64>,
    pub l: Mat<f64>,
    pub m: usize,
    tail: Option<Box<GramTail>>,
}

/// Low-order parts of compensated Gram entries: the exact entry is
/// approximately `g + tail.g`.
#[derive(Debug, Clone, PartialEq)]
struct GramTail {
    g: Mat<f64>,
    a: Mat<f64>,
    l: Mat<f64>,
}

/// Selects one matrix of the triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramPart {
    G,
    A,
    L,
}

impl GramTriple {
    pub fn n_k(&self) -> usize {
        self.g.nrows()
    }

    /// Builds a triple from explicit matrices, checking shapes and symmetry
    /// of `G` and `L`.
    pub fn from_parts(g: Mat<f64>, a: Mat<f64>, l: Mat<f64>, m: usize) -> Result<Self> {
        let n = g.nrows();
        for (name, mat) in [("G", &g), ("A", &a), ("L", &l)] {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(KoopmanError::dims(format!("{name} must be {n}x{n}")));
            }
            if !linalg::all_finite(mat.as_ref()) {
                return Err(KoopmanError::param(format!("{name} has non-finite entries")));
            }
        }
        let mut g = g;
        let mut l = l;
        linalg::symmetrize(&mut g);
        linalg::symmetrize(&mut l);
        Ok(Self { g, a, l, m, tail: None })
    }

    /// True when entries carry compensated low-order parts.
    pub fn is_compensated(&self) -> bool {
        self.tail.is_some()
    }

    /// Entry `(i, j)` of one matrix with its low-order part, if any.
    pub fn entry(&self, part: GramPart, i: usize, j: usize) -> Dd {
        let (hi, lo) = match (part, &self.tail) {
            (GramPart::G, t) => (&self.g, t.as_ref().map(|t| &t.g)),
            (GramPart::A, t) => (&self.a, t.as_ref().map(|t| &t.a)),
            (GramPart::L, t) => (&self.l, t.as_ref().map(|t| &t.l)),
        };
        Dd {
            hi: hi[(i, j)],
            lo: lo.map_or(0.0, |lo| lo[(i, j)]),
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        #[derive(Serialize, Deserialize)]
        struct Doc {
            n_k: usize,
            m: usize,
            g: Vec<f64>,
            a: Vec<f64>,
            l: Vec<f64>,
        }
        serde_json::to_value(Doc {
            n_k: self.n_k(),
            m: self.m,
            g: linalg::to_row_major(self.g.as_ref()),
            a: linalg::to_row_major(self.a.as_ref()),
            l: linalg::to_row_major(self.l.as_ref()),
        })
        .expect("plain numeric document")
    }
}

fn check_shapes(psi_x: MatRef<'_, f64>, psi_y: MatRef<'_, f64>) -> Result<usize> {
    if psi_x.nrows() != psi_y.nrows() || psi_x.ncols() != psi_y.ncols() {
        return Err(KoopmanError::dims(format!(
            "Psi_X is {}x{} but Psi_Y is {}x{}",
            psi_x.nrows(),
            psi_x.ncols(),
            psi_y.nrows(),
            psi_y.ncols()
        )));
    }
    if psi_x.nrows() == 0 {
        return Err(KoopmanError::param("need at least one snapshot"));
    }
    Ok(psi_x.nrows())
}

/// Compensated dot product, accurate as if accumulated in twice the working
/// precision.
fn dot2(a: &[f64], b: &[f64]) -> Dd {
    let mut s = 0.0_f64;
    let mut c = 0.0_f64;
    for (&x, &y) in a.iter().zip(b) {
        let p = x * y;
        let e = x.mul_add(y, -p);
        let t = s + p;
        let z = t - s;
        c += ((s - (t - z)) + (p - z)) + e;
        s = t;
    }
    Dd::from_parts(s, c)
}

fn columns(m: MatRef<'_, f64>) -> Vec<Vec<f64>> {
    (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| m[(i, j)]).collect()).collect()
}

/// Assembles the Gram triple from evaluated dictionaries. Entries are
/// accumulated with compensated summation and keep their low-order parts,
/// which lets residuals of near-exact eigenpairs resolve below `sqrt(eps)`.
pub fn compute_gram(psi_x: MatRef<'_, f64>, psi_y: MatRef<'_, f64>) -> Result<GramTriple> {
    let m = check_shapes(psi_x, psi_y)?;
    let n = psi_x.ncols();
    let cx = columns(psi_x);
    let cy = columns(psi_y);
    let entries: Vec<[Dd; 3]> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % n, idx / n);
            let (lo, hi) = (i.min(j), i.max(j));
            let g = dot2(&cx[lo], &cx[hi]).div_f64(m as f64);
            let l = dot2(&cy[lo], &cy[hi]).div_f64(m as f64);
            let a = dot2(&cx[i], &cy[j]).div_f64(m as f64);
            [g, a, l]
        })
        .collect();
    let pick = |k: usize, hi: bool| {
        Mat::from_fn(n, n, |i, j| {
            let e = entries[i + j * n][k];
            if hi {
                e.hi
            } else {
                e.lo
            }
        })
    };
    Ok(GramTriple {
        g: pick(0, true),
        a: pick(1, true),
        l: pick(2, true),
        m,
        tail: Some(Box::new(GramTail {
            g: pick(0, false),
            a: pick(1, false),
            l: pick(2, false),
        })),
    })
}

/// Plain working-precision assembly through dense products. Faster, with
/// residual resolution limited to about `sqrt(eps)`.
pub fn compute_gram_fast(psi_x: MatRef<'_, f64>, psi_y: MatRef<'_, f64>) -> Result<GramTriple> {
    let m = check_shapes(psi_x, psi_y)?;
    let scale = faer::Scale(1.0 / m as f64);
    let mut g = psi_x.transpose() * psi_x * scale;
    let a = psi_x.transpose() * psi_y * scale;
    let mut l = psi_y.transpose() * psi_y * scale;
    linalg::symmetrize(&mut g);
    linalg::symmetrize(&mut l);
    Ok(GramTriple { g, a, l, m, tail: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::c64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_data() {
        let id = Mat::<f64>::identity(4, 4);
        let gram = compute_gram(id.as_ref(), id.as_ref()).unwrap();
        let expected = Mat::<f64>::identity(4, 4) * faer::Scale(0.25);
        assert_eq!(gram.g, expected);
        assert_eq!(gram.a, expected);
        assert_eq!(gram.l, expected);
        assert!(gram.is_compensated());
    }

    #[test]
    fn fast_and_compensated_agree() {
        let (x, y) = (random(80, 6, 4), random(80, 6, 5));
        let a = compute_gram(x.as_ref(), y.as_ref()).unwrap();
        let b = compute_gram_fast(x.as_ref(), y.as_ref()).unwrap();
        assert!(!b.is_compensated());
        for (p, q) in [(&a.g, &b.g), (&a.a, &b.a), (&a.l, &b.l)] {
            assert!((p - q).norm_l2() < 1e-13);
        }
    }

    #[test]
    fn compensation_recovers_cancelled_sums() {
        // 1 + 1e-20 - 1 in this order vanishes in plain arithmetic
        let x = crate::linalg::from_row_major(&[1.0, 1e-10, -1.0], 3, 1);
        let y = crate::linalg::from_row_major(&[1.0, 1e-10, 1.0], 3, 1);
        let gram = compute_gram(x.as_ref(), y.as_ref()).unwrap();
        let a = gram.entry(GramPart::A, 0, 0);
        assert!((a.to_f64() - 1e-20 / 3.0).abs() < 1e-35);
    }

    #[test]
    fn single_sample_outer_products() {
        let u = crate::linalg::from_row_major(&[1.0, 2.0, -1.0], 1, 3);
        let w = crate::linalg::from_row_major(&[0.5, 0.0, 3.0], 1, 3);
        let gram = compute_gram(u.as_ref(), w.as_ref()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(gram.g[(i, j)], u[(0, i)] * u[(0, j)]);
                assert_eq!(gram.a[(i, j)], u[(0, i)] * w[(0, j)]);
                assert_eq!(gram.l[(i, j)], w[(0, i)] * w[(0, j)]);
            }
        }
    }

    #[test]
    fn random_grams_are_psd() {
        let gram = compute_gram(random(50, 8, 1).as_ref(), random(50, 8, 2).as_ref()).unwrap();
        for mat in [&gram.g, &gram.l] {
            let eigs = crate::linalg::symmetric_eigenvalues(mat.as_ref()).unwrap();
            assert!(eigs.iter().all(|&e| e >= -1e-12));
        }
    }

    #[test]
    fn same_input_gives_symmetric_a() {
        let p = random(30, 5, 3);
        let gram = compute_gram(p.as_ref(), p.as_ref()).unwrap();
        assert_eq!(gram.g, gram.l);
        for i in 0..5 {
            for j in 0..5 {
                assert!((gram.a[(i, j)] - gram.g[(i, j)]).abs() < 1e-15);
                assert!((gram.a[(i, j)] - gram.a[(j, i)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(compute_gram(random(5, 3, 0).as_ref(), random(5, 4, 0).as_ref()).is_err());
        assert!(compute_gram(Mat::<f64>::zeros(0, 3).as_ref(), Mat::<f64>::zeros(0, 3).as_ref()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn residual_quadratic_form_is_nonnegative(seed in 0u64..100_000, re in -3.0..3.0f64, im in -3.0..3.0f64) {
            let n = 6;
            let gram = compute_gram(random(25, n, seed).as_ref(), random(25, n, seed + 1).as_ref()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
            let v: Vec<c64> = (0..n).map(|_| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let z = c64::new(re, im);
            let l = crate::linalg::hermitian_form(&v, gram.l.as_ref());
            let a = crate::linalg::hermitian_form(&v, gram.a.as_ref());
            let at = crate::linalg::hermitian_form(&v, gram.a.transpose());
            let g = crate::linalg::hermitian_form(&v, gram.g.as_ref());
            let q = l - z * at - z.conj() * a + g * z.norm_sqr();
            prop_assert!(q.re >= -1e-12 * (l.re + g.re * z.norm_sqr()).max(1.0));
            prop_assert!(q.im.abs() < 1e-10);
        }
    }
}
