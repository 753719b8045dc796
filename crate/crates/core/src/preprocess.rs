//! Truncated-SVD reduction and clustering-quality scoring.

use std::collections::BTreeMap;

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{KoopmanError, Result};
use crate::linalg;

/// Top-`r` right singular subspace of a data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdReducer {
    /// `d × r`, orthonormal columns.
    pub v_r: Mat<f64>,
    /// Descending.
    pub s_r: Vec<f64>,
    pub r: usize,
}

#[derive(Serialize, Deserialize)]
struct ReducerDoc {
    d: usize,
    r: usize,
    singular_values: Vec<f64>,
    v_r: Vec<f64>,
}

impl SvdReducer {
    pub fn d(&self) -> usize {
        self.v_r.nrows()
    }

    /// `X V_r`
    pub fn project(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if x.ncols() != self.d() {
            return Err(KoopmanError::dims(format!("data has {} columns, reducer expects {}", x.ncols(), self.d())));
        }
        Ok(x * &self.v_r)
    }

    /// `modes V_r^T`
    pub fn lift_modes(&self, modes: MatRef<'_, c64>) -> Result<Mat<c64>> {
        if modes.ncols() != self.r {
            return Err(KoopmanError::dims(format!("modes have {} columns, reducer rank is {}", modes.ncols(), self.r)));
        }
        let vt = linalg::to_complex(self.v_r.transpose());
        Ok(modes * vt)
    }

    /// Real-valued variant of [`SvdReducer::lift_modes`].
    pub fn lift_real(&self, modes: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if modes.ncols() != self.r {
            return Err(KoopmanError::dims(format!("modes have {} columns, reducer rank is {}", modes.ncols(), self.r)));
        }
        Ok(modes * self.v_r.transpose())
    }

    /// Rank-`r` approximation `X V_r V_r^T`, equal to `U_r S_r V_r^T` on the fitted data.
    pub fn reconstruct(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let p = self.project(x)?;
        self.lift_real(p.as_ref())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ReducerDoc {
            d: self.d(),
            r: self.r,
            singular_values: self.s_r.clone(),
            v_r: linalg::to_row_major(self.v_r.as_ref()),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ReducerDoc = serde_json::from_str(text)?;
        if doc.v_r.len() != doc.d * doc.r || doc.singular_values.len() != doc.r {
            return Err(KoopmanError::dims("reducer arrays do not match the declared shape"));
        }
        Ok(Self {
            v_r: linalg::from_row_major(&doc.v_r, doc.d, doc.r),
            s_r: doc.singular_values,
            r: doc.r,
        })
    }
}

pub fn fit_truncated_svd(x: MatRef<'_, f64>, r: usize) -> Result<SvdReducer> {
    let max = x.nrows().min(x.ncols());
    if r == 0 || r > max {
        return Err(KoopmanError::param(format!("rank {r} outside 1..={max}")));
    }
    if !linalg::all_finite(x) {
        return Err(KoopmanError::param("data has non-finite entries"));
    }
    let svd = x.thin_svd().map_err(|e| KoopmanError::Svd(format!("{e:?}")))?;
    let s = svd.S().column_vector();
    let v = svd.V();
    let mut v_r = v.subcols(0, r).to_owned();
    for j in 0..r {
        let mut pivot = 0;
        for i in 0..v_r.nrows() {
            if v_r[(i, j)].abs() > v_r[(pivot, j)].abs() {
                pivot = i;
            }
        }
        if v_r[(pivot, j)] < 0.0 {
            for i in 0..v_r.nrows() {
                v_r[(i, j)] = -v_r[(i, j)];
            }
        }
    }
    Ok(SvdReducer {
        v_r,
        s_r: (0..r).map(|i| s[i]).collect(),
        r,
    })
}

/// Davies-Bouldin index with Euclidean distances. Lower is better.
pub fn davies_bouldin(features: MatRef<'_, f64>, labels: &[i64]) -> Result<f64> {
    let n = features.nrows();
    let p = features.ncols();
    if labels.len() != n {
        return Err(KoopmanError::dims(format!("{} labels for {n} rows", labels.len())));
    }
    if !linalg::all_finite(features) {
        return Err(KoopmanError::param("features have non-finite entries"));
    }
    let mut members: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(KoopmanError::param("need at least two distinct labels"));
    }
    let clusters: Vec<(i64, Vec<f64>, f64)> = members
        .iter()
        .map(|(&label, rows)| {
            let mut c = vec![0.0; p];
            for &i in rows {
                for (k, ck) in c.iter_mut().enumerate() {
                    *ck += features[(i, k)];
                }
            }
            c.iter_mut().for_each(|v| *v /= rows.len() as f64);
            let scatter = rows
                .iter()
                .map(|&i| distance((0..p).map(|k| features[(i, k)]), &c))
                .sum::<f64>()
                / rows.len() as f64;
            (label, c, scatter)
        })
        .collect();
    let mut total = 0.0;
    for (i, (li, ci, si)) in clusters.iter().enumerate() {
        let mut worst = 0.0_f64;
        for (j, (lj, cj, sj)) in clusters.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = distance(ci.iter().copied(), cj);
            if d == 0.0 {
                return Err(KoopmanError::CoincidentCentroids {
                    first: *li.min(lj),
                    second: *li.max(lj),
                });
            }
            worst = worst.max((si + sj) / d);
        }
        total += worst;
    }
    Ok(total / clusters.len() as f64)
}

fn distance(a: impl Iterator<Item = f64>, b: &[f64]) -> f64 {
    a.zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Flattens eigenfunction samples into one feature vector: the magnitudes of
/// the first `count` columns over the first `len` rows, each column divided by
/// its root-mean-square so that eigenvector scaling drops out.
pub fn eigenfunction_features(phi: MatRef<'_, c64>, count: usize, len: usize) -> Result<Vec<f64>> {
    if count > phi.ncols() || len > phi.nrows() || len == 0 {
        return Err(KoopmanError::dims(format!(
            "need {len} samples of {count} eigenfunctions, have {}x{}",
            phi.nrows(),
            phi.ncols()
        )));
    }
    let mut out = Vec::with_capacity(count * len);
    for j in 0..count {
        let mags: Vec<f64> = (0..len).map(|t| phi[(t, j)].norm()).collect();
        let rms = (mags.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
        let scale = if rms > 0.0 { 1.0 / rms } else { 0.0 };
        out.extend(mags.iter().map(|v| v * scale));
    }
    Ok(out)
}
