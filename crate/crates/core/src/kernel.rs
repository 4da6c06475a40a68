//! RBF kernel on pre-embedded features.
//!
//! Every kernel in this crate acts on rows of a [`FeatureMatrix`], i.e. on
//! encoder outputs that were computed upstream. The only kernel is the
//! Gaussian RBF
//!
//! ```text
//! k(x, y) = exp(-γ ‖x - y‖²)
//! ```
//!
//! which is bounded in (0, 1] for finite inputs, characteristic, and equal
//! to 1 exactly on the diagonal.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n × d` table of finite feature vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl FeatureMatrix {
    /// Wraps row-major `data` of shape `n × d`.
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("feature matrix has no rows"));
        }
        if d == 0 {
            return Err(Error::Empty("feature matrix has no columns"));
        }
        if data.len() != n * d {
            return Err(Error::LengthMismatch {
                what: "feature data",
                expected: n * d,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self { data, n, d })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or(Error::Empty("feature matrix has no rows"))?;
        let d = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(data, rows.len(), d)
    }

    /// Stacks several matrices of equal dimension on top of each other.
    pub fn vstack(parts: &[&FeatureMatrix]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty("nothing to stack"))?;
        let d = first.d;
        let mut data = Vec::new();
        let mut n = 0;
        for part in parts {
            if part.d != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: part.d,
                });
            }
            data.extend_from_slice(&part.data);
            n += part.n;
        }
        Ok(Self { data, n, d })
    }

    /// Number of samples.
    pub fn nrows(&self) -> usize {
        self.n
    }

    /// Feature dimension.
    pub fn ncols(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Row-wise mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.d];
        for row in self.rows() {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.n as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub(crate) fn check_same_dim(&self, other: &FeatureMatrix) -> Result<()> {
        if self.d == other.d {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.d,
                got: other.d,
            })
        }
    }
}

/// Where a bandwidth came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthSource {
    Fixed,
    MedianHeuristic,
}

/// RBF bandwidth `γ` (inverse squared length-scale) plus its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub gamma: f64,
    pub source: BandwidthSource,
}

impl KernelSpec {
    pub fn fixed(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma > 0.0 {
            Ok(Self {
                gamma,
                source: BandwidthSource::Fixed,
            })
        } else {
            Err(Error::invalid(
                "gamma",
                gamma,
                "must be finite and positive",
            ))
        }
    }

    /// Kernel value from a precomputed squared distance.
    #[inline]
    pub fn eval_sq_dist(&self, sq_dist: f64) -> f64 {
        (-self.gamma * sq_dist).exp()
    }
}

/// Squared Euclidean distance, summed coordinate by coordinate in order.
#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let t = a - b;
            t * t
        })
        .sum()
}

#[inline]
pub(crate) fn dist(x: &[f64], y: &[f64]) -> f64 {
    sq_dist(x, y).sqrt()
}

/// `exp(-γ ‖x - y‖²)` for two feature vectors.
pub fn rbf_kernel(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel argument"));
    }
    Ok(spec.eval_sq_dist(sq_dist(x, y)))
}

/// Gram matrix `K[i, j] = k(X_i, Y_j)`.
///
/// Rows are filled in parallel; every entry is computed independently so the
/// result does not depend on scheduling. `gram_matrix(X, X)` is exactly
/// symmetric with a unit diagonal.
pub fn gram_matrix(
    x: &FeatureMatrix,
    y: &FeatureMatrix,
    spec: &KernelSpec,
) -> Result<DMatrix<f64>> {
    x.check_same_dim(y)?;
    let ny = y.nrows();
    let mut data = vec![0.0; x.nrows() * ny];
    data.par_chunks_mut(ny).enumerate().for_each(|(i, out)| {
        let xi = x.row(i);
        for (o, yj) in out.iter_mut().zip(y.rows()) {
            *o = spec.eval_sq_dist(sq_dist(xi, yj));
        }
    });
    Ok(DMatrix::from_row_slice(x.nrows(), ny, &data))
}

/// Median-heuristic bandwidth over the pooled sample.
///
/// `γ = 1 / (2 · median ‖a - b‖²)` where the median runs over all distinct
/// pairs `a ≠ b` (by index) of `X ∪ Y`. Even pair counts use the mean of
/// the two middle values.
pub fn median_heuristic(x: &FeatureMatrix, y: &FeatureMatrix) -> Result<KernelSpec> {
    x.check_same_dim(y)?;
    median_heuristic_pooled(&[x, y])
}

/// [`median_heuristic`] over an arbitrary list of samples (one or more).
pub fn median_heuristic_pooled(parts: &[&FeatureMatrix]) -> Result<KernelSpec> {
    let pooled = FeatureMatrix::vstack(parts)?;
    let n = pooled.nrows();
    if n < 2 {
        return Err(Error::InsufficientSamples {
            what: "median heuristic pool",
            needed: 2,
            got: n,
        });
    }
    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let pooled = &pooled;
            (i + 1..n).map(move |j| sq_dist(pooled.row(i), pooled.row(j)))
        })
        .collect();
    let median = median_in_place(&mut d2);
    if median.is_nan() || median <= 0.0 {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(KernelSpec {
        gamma: 1.0 / (2.0 * median),
        source: BandwidthSource::MedianHeuristic,
    })
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let len = values.len();
    let mid = len / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if len % 2 == 1 {
        upper
    } else {
        let lower = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}
