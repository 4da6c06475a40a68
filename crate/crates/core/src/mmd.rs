//! MMD estimators, concentration widths and permutation calibration.
//!
//! Two plug-in estimators of `MMD²(P, Q)` are provided:
//!
//! ```text
//! unbiased (U-statistic):
//!   1/(m(m-1)) Σ_{i≠j} k(xᵢ, xⱼ) + 1/(n(n-1)) Σ_{i≠j} k(yᵢ, yⱼ) - 2/(mn) Σ_{i,j} k(xᵢ, yⱼ)
//!
//! biased (V-statistic):
//!   1/m² Σ_{i,j} k(xᵢ, xⱼ) + 1/n² Σ_{i,j} k(yᵢ, yⱼ) - 2/(mn) Σ_{i,j} k(xᵢ, yⱼ)
//! ```
//!
//! The unbiased value can be negative and is kept as is in
//! [`MmdEstimate::mmd2`]; only the derived [`MmdEstimate::mmd`] is clamped.
//!
//! Both estimators are exactly symmetric in their two arguments: the cross
//! term is always accumulated in a canonical orientation chosen from the
//! data, not from the argument order.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit_open, Error, Result};
use crate::kernel::{gram_matrix, sq_dist, FeatureMatrix, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Biased,
    Unbiased,
}

/// A squared-MMD estimate together with the sample sizes behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdEstimate {
    /// Raw estimate of `MMD²`. May be negative for [`EstimatorKind::Unbiased`].
    pub mmd2: f64,
    /// `sqrt(max(mmd2, 0))`.
    pub mmd: f64,
    pub kind: EstimatorKind,
    /// Source sample count.
    pub m: usize,
    /// Target sample count.
    pub n: usize,
}

impl MmdEstimate {
    fn new(mmd2: f64, kind: EstimatorKind, m: usize, n: usize) -> Self {
        Self {
            mmd2,
            mmd: mmd2.max(0.0).sqrt(),
            kind,
            m,
            n,
        }
    }
}

/// `Σ_i Σ_j k(aᵢ, bⱼ)`, row partials summed in row order.
fn block_sum(a: &FeatureMatrix, b: &FeatureMatrix, spec: &KernelSpec) -> f64 {
    let partials: Vec<f64> = (0..a.nrows())
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i);
            b.rows()
                .map(|bj| spec.eval_sq_dist(sq_dist(ai, bj)))
                .sum::<f64>()
        })
        .collect();
    partials.iter().sum()
}

fn canonical_order(a: &FeatureMatrix, b: &FeatureMatrix) -> Ordering {
    a.nrows().cmp(&b.nrows()).then_with(|| {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Cross-kernel sum, independent of argument order.
fn cross_sum(a: &FeatureMatrix, b: &FeatureMatrix, spec: &KernelSpec) -> f64 {
    if canonical_order(a, b).is_le() {
        block_sum(a, b, spec)
    } else {
        block_sum(b, a, spec)
    }
}

/// Within-sample kernel sums of one sample, reusable across comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
struct WithinSums {
    /// `Σ_{i,j} k(xᵢ, xⱼ)`, diagonal included.
    full: f64,
    /// Sum of the diagonal, `n` for the RBF kernel.
    diag: f64,
    n: usize,
}

impl WithinSums {
    fn compute(x: &FeatureMatrix, spec: &KernelSpec) -> Self {
        let diag = x.rows().map(|r| spec.eval_sq_dist(sq_dist(r, r))).sum();
        Self {
            full: block_sum(x, x, spec),
            diag,
            n: x.nrows(),
        }
    }

    fn term(&self, kind: EstimatorKind) -> f64 {
        let n = self.n as f64;
        match kind {
            EstimatorKind::Biased => self.full / (n * n),
            EstimatorKind::Unbiased => (self.full - self.diag) / (n * (n - 1.0)),
        }
    }
}

fn combine(ws: &WithinSums, wt: &WithinSums, cross: f64, kind: EstimatorKind) -> MmdEstimate {
    let (m, n) = (ws.n, wt.n);
    let mut mmd2 = ws.term(kind) + wt.term(kind) - 2.0 * cross / (m as f64 * n as f64);
    if kind == EstimatorKind::Biased {
        mmd2 = mmd2.max(0.0);
    }
    MmdEstimate::new(mmd2, kind, m, n)
}

fn check_pair(xs: &FeatureMatrix, xt: &FeatureMatrix, kind: EstimatorKind) -> Result<()> {
    xs.check_same_dim(xt)?;
    if kind == EstimatorKind::Unbiased {
        for (what, x) in [("source sample", xs), ("target sample", xt)] {
            if x.nrows() < 2 {
                return Err(Error::InsufficientSamples {
                    what,
                    needed: 2,
                    got: x.nrows(),
                });
            }
        }
    }
    Ok(())
}

fn estimate(
    xs: &FeatureMatrix,
    xt: &FeatureMatrix,
    spec: &KernelSpec,
    kind: EstimatorKind,
) -> Result<MmdEstimate> {
    check_pair(xs, xt, kind)?;
    let ws = WithinSums::compute(xs, spec);
    let wt = WithinSums::compute(xt, spec);
    Ok(combine(&ws, &wt, cross_sum(xs, xt, spec), kind))
}

/// Unbiased (U-statistic) estimate of `MMD²`. Needs `m, n ≥ 2`.
pub fn mmd2_unbiased(
    xs: &FeatureMatrix,
    xt: &FeatureMatrix,
    spec: &KernelSpec,
) -> Result<MmdEstimate> {
    estimate(xs, xt, spec, EstimatorKind::Unbiased)
}

/// Biased (V-statistic) estimate `‖μ̂_s - μ̂_t‖²`, clamped at zero.
pub fn mmd2_biased(
    xs: &FeatureMatrix,
    xt: &FeatureMatrix,
    spec: &KernelSpec,
) -> Result<MmdEstimate> {
    estimate(xs, xt, spec, EstimatorKind::Biased)
}

/// A source sample with its within-sample kernel sum precomputed.
///
/// Used by the streaming monitor, where the same source is compared against
/// many target batches. Results are bit-identical to [`mmd2_unbiased`] and
/// [`mmd2_biased`].
#[derive(Debug, Clone)]
pub struct SourceEmbedding {
    xs: FeatureMatrix,
    spec: KernelSpec,
    within: WithinSums,
}

impl SourceEmbedding {
    pub fn new(xs: FeatureMatrix, spec: KernelSpec) -> Self {
        let within = WithinSums::compute(&xs, &spec);
        Self { xs, spec, within }
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.xs
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn estimate(&self, xt: &FeatureMatrix, kind: EstimatorKind) -> Result<MmdEstimate> {
        check_pair(&self.xs, xt, kind)?;
        let wt = WithinSums::compute(xt, &self.spec);
        Ok(combine(
            &self.within,
            &wt,
            cross_sum(&self.xs, xt, &self.spec),
            kind,
        ))
    }
}

/// Two-sided concentration width of the unbiased MMD estimate,
/// `sqrt(2 ln(2/α) / min(m, n))`.
pub fn concentration_width(m: usize, n: usize, alpha: f64) -> Result<f64> {
    check_unit_open("alpha", alpha)?;
    let k = m.min(n);
    if k == 0 {
        return Err(Error::InsufficientSamples {
            what: "concentration width",
            needed: 1,
            got: 0,
        });
    }
    Ok((2.0 * (2.0 / alpha).ln() / k as f64).sqrt())
}

/// Upper confidence bound `MMD ≤ MMD̂_u + ε_{m,n}(α)`.
pub fn mmd_upper_confidence(est: &MmdEstimate, alpha: f64) -> Result<f64> {
    if est.kind != EstimatorKind::Unbiased {
        return Err(Error::invalid(
            "estimator",
            0.0,
            "the concentration bound applies to the unbiased estimator only",
        ));
    }
    Ok(est.mmd + concentration_width(est.m, est.n, alpha)?)
}

/// Outcome of a permutation two-sample test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Credal radius: square root of the `(1-α)` quantile of the permuted
    /// unbiased `MMD²` statistics, clamped at zero.
    pub epsilon_alpha: f64,
    /// Add-one permutation p-value, never zero.
    pub p_value: f64,
    /// Unbiased `MMD²` of the observed split.
    pub observed_mmd2: f64,
    pub num_permutations: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl CalibrationResult {
    /// Whether `H₀: P_s = P_t` is rejected at level `alpha`.
    pub fn rejects_null(&self) -> bool {
        self.p_value <= self.alpha
    }
}

pub const MIN_PERMUTATIONS: usize = 100;

/// Pooled-Gram statistics for fast relabelling.
struct PooledGram {
    gram: DMatrix<f64>,
    row_sums: Vec<f64>,
    total: f64,
    m: usize,
    n: usize,
}

impl PooledGram {
    fn new(xs: &FeatureMatrix, xt: &FeatureMatrix, spec: &KernelSpec) -> Result<Self> {
        let pooled = FeatureMatrix::vstack(&[xs, xt])?;
        let gram = gram_matrix(&pooled, &pooled, spec)?;
        let row_sums: Vec<f64> = gram.column_iter().map(|c| c.iter().sum()).collect();
        let total = row_sums.iter().sum();
        Ok(Self {
            gram,
            row_sums,
            total,
            m: xs.nrows(),
            n: xt.nrows(),
        })
    }

    /// Unbiased `MMD²` when `group` (of size `min(m, n)`) plays the role of
    /// the smaller sample and everything else the larger one.
    fn statistic(&self, group: &[usize]) -> f64 {
        let k = group.len();
        let mut within = 0.0;
        let mut rows = 0.0;
        for &i in group {
            rows += self.row_sums[i];
            let col = self.gram.column(i);
            within += group.iter().map(|&j| col[j]).sum::<f64>();
        }
        let cross = rows - within;
        let other_within = self.total - within - 2.0 * cross;
        let other = self.m + self.n - k;
        // diagonal entries of an RBF Gram matrix are exactly 1
        let (k_f, o_f) = (k as f64, other as f64);
        (within - k_f) / (k_f * (k_f - 1.0)) + (other_within - o_f) / (o_f * (o_f - 1.0))
            - 2.0 * cross / (k_f * o_f)
    }

    fn small_is_source(&self) -> bool {
        self.m <= self.n
    }

    fn observed(&self) -> f64 {
        let group: Vec<usize> = if self.small_is_source() {
            (0..self.m).collect()
        } else {
            (self.m..self.m + self.n).collect()
        };
        self.statistic(&group)
    }
}

/// Permutation calibration of the credal radius.
///
/// The pooled Gram matrix is built once; each permutation draws a fresh
/// random relabelling from its own ChaCha stream (`stream = permutation
/// index`), so results are reproducible for a fixed `seed` regardless of
/// thread count.
pub fn permutation_calibrate(
    xs: &FeatureMatrix,
    xt: &FeatureMatrix,
    spec: &KernelSpec,
    num_permutations: usize,
    alpha: f64,
    seed: u64,
) -> Result<CalibrationResult> {
    check_pair(xs, xt, EstimatorKind::Unbiased)?;
    check_unit_open("alpha", alpha)?;
    if num_permutations < MIN_PERMUTATIONS {
        return Err(Error::invalid(
            "num_permutations",
            num_permutations as f64,
            "at least 100 permutations are required",
        ));
    }
    let pooled = PooledGram::new(xs, xt, spec)?;
    let observed = pooled.observed();
    let total = pooled.m + pooled.n;
    let small = pooled.m.min(pooled.n);

    let mut stats: Vec<f64> = (0..num_permutations)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let group = index::sample(&mut rng, total, small).into_vec();
            pooled.statistic(&group)
        })
        .collect();

    let exceed = stats.iter().filter(|&&s| s >= observed).count();
    let p_value = (1 + exceed) as f64 / (num_permutations + 1) as f64;

    stats.sort_by(f64::total_cmp);
    let rank = ((1.0 - alpha) * num_permutations as f64).ceil() as usize;
    let q = stats[rank.clamp(1, num_permutations) - 1];

    Ok(CalibrationResult {
        epsilon_alpha: q.max(0.0).sqrt(),
        p_value,
        observed_mmd2: observed,
        num_permutations,
        alpha,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fm(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    fn g(gamma: f64) -> KernelSpec {
        KernelSpec::fixed(gamma).unwrap()
    }

    const TWO_POINT: f64 = 1.264_241_117_657_115_4; // 2 - 2/e

    #[test]
    fn unbiased_examples() {
        let zeros = fm(&[&[0.0], &[0.0]]);
        assert_eq!(mmd2_unbiased(&zeros, &zeros, &g(0.3)).unwrap().mmd2, 0.0);
        let ones = fm(&[&[1.0], &[1.0]]);
        let est = mmd2_unbiased(&zeros, &ones, &g(1.0)).unwrap();
        assert_relative_eq!(est.mmd2, TWO_POINT, epsilon = 1e-15);
        assert_eq!(est.kind, EstimatorKind::Unbiased);
        assert_eq!((est.m, est.n), (2, 2));
        assert_eq!(est.mmd, est.mmd2.sqrt());
    }

    #[test]
    fn biased_examples() {
        let x = fm(&[&[0.2, 1.0], &[-1.0, 0.4], &[3.0, 3.0]]);
        assert_eq!(mmd2_biased(&x, &x, &g(0.8)).unwrap().mmd2, 0.0);
        let est = mmd2_biased(&fm(&[&[0.0]]), &fm(&[&[1.0]]), &g(1.0)).unwrap();
        assert_relative_eq!(est.mmd2, TWO_POINT, epsilon = 1e-15);
    }

    #[test]
    fn unbiased_needs_two_samples() {
        let one = fm(&[&[0.0]]);
        let two = fm(&[&[0.0], &[1.0]]);
        assert!(matches!(
            mmd2_unbiased(&one, &two, &g(1.0)),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(mmd2_unbiased(&two, &fm(&[&[0.0, 1.0], &[1.0, 1.0]]), &g(1.0)).is_err());
    }

    #[test]
    fn identical_inputs_order_estimators() {
        let x = fm(&[&[0.0, 0.1], &[1.0, -0.3], &[0.5, 0.5], &[2.0, 0.0]]);
        let spec = g(0.5);
        assert_eq!(mmd2_biased(&x, &x, &spec).unwrap().mmd2, 0.0);
        let u = mmd2_unbiased(&x, &x, &spec).unwrap();
        assert!(u.mmd2 <= 0.0);
        assert_eq!(u.mmd, 0.0);
    }

    #[test]
    fn symmetric_in_arguments() {
        let a = fm(&[&[0.0, 0.1], &[1.0, -0.3], &[0.5, 0.5]]);
        let b = fm(&[&[0.7, 0.2], &[-1.0, 0.3], &[0.1, 0.9], &[2.0, 2.0]]);
        let spec = g(0.9);
        assert_eq!(
            mmd2_unbiased(&a, &b, &spec).unwrap().mmd2,
            mmd2_unbiased(&b, &a, &spec).unwrap().mmd2
        );
        assert_eq!(
            mmd2_biased(&a, &b, &spec).unwrap().mmd2,
            mmd2_biased(&b, &a, &spec).unwrap().mmd2
        );
    }

    #[test]
    fn source_embedding_matches_direct() {
        let a = fm(&[&[0.0, 0.1], &[1.0, -0.3], &[0.5, 0.5]]);
        let b = fm(&[&[0.7, 0.2], &[-1.0, 0.3], &[0.1, 0.9], &[2.0, 2.0]]);
        let spec = g(0.9);
        let emb = SourceEmbedding::new(a.clone(), spec);
        assert_eq!(
            emb.estimate(&b, EstimatorKind::Unbiased).unwrap(),
            mmd2_unbiased(&a, &b, &spec).unwrap()
        );
        assert_eq!(
            emb.estimate(&b, EstimatorKind::Biased).unwrap(),
            mmd2_biased(&a, &b, &spec).unwrap()
        );
    }

    #[test]
    fn concentration_width_examples() {
        assert_relative_eq!(
            concentration_width(200, 200, 0.05).unwrap(),
            0.192_064_558_263_984_2,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            concentration_width(50, 100, 0.1).unwrap(),
            0.346_163_676_520_457,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            concentration_width(8, 8, 0.2).unwrap(),
            0.758_713_564_692_573_2,
            epsilon = 1e-12
        );
        assert!(concentration_width(10, 10, 0.0).is_err());
        assert!(concentration_width(10, 10, 1.0).is_err());
        assert!(
            concentration_width(10, 20, 0.1).unwrap() > concentration_width(11, 20, 0.1).unwrap()
        );
        assert!(
            concentration_width(10, 20, 0.1).unwrap() > concentration_width(10, 20, 0.2).unwrap()
        );
    }

    #[test]
    fn upper_confidence() {
        let mut est = MmdEstimate::new(0.0, EstimatorKind::Unbiased, 200, 200);
        assert_relative_eq!(
            mmd_upper_confidence(&est, 0.05).unwrap(),
            0.192_064_558_263_984_2,
            epsilon = 1e-12
        );
        est = MmdEstimate::new(0.09, EstimatorKind::Unbiased, 200, 200);
        assert_relative_eq!(
            mmd_upper_confidence(&est, 0.05).unwrap(),
            0.492_064_558_263_984_2,
            epsilon = 1e-12
        );
        let big = MmdEstimate::new(0.09, EstimatorKind::Unbiased, 800, 800);
        assert!(
            mmd_upper_confidence(&big, 0.05).unwrap() < mmd_upper_confidence(&est, 0.05).unwrap()
        );
        let biased = MmdEstimate::new(0.09, EstimatorKind::Biased, 200, 200);
        assert!(mmd_upper_confidence(&biased, 0.05).is_err());
    }

    #[test]
    fn pooled_statistic_matches_direct_estimator() {
        let a = fm(&[&[0.0, 0.1], &[1.0, -0.3], &[0.5, 0.5]]);
        let b = fm(&[
            &[0.7, 0.2],
            &[-1.0, 0.3],
            &[0.1, 0.9],
            &[2.0, 2.0],
            &[0.0, -1.0],
        ]);
        let spec = g(0.6);
        for (x, y) in [(&a, &b), (&b, &a)] {
            let pooled = PooledGram::new(x, y, &spec).unwrap();
            let direct = mmd2_unbiased(x, y, &spec).unwrap().mmd2;
            assert_relative_eq!(pooled.observed(), direct, epsilon = 1e-13);
        }
    }

    #[test]
    fn calibration_is_seed_deterministic() {
        let a = fm(&[&[0.0], &[0.3], &[0.9], &[1.4], &[-0.2]]);
        let b = fm(&[&[0.1], &[0.5], &[1.1], &[-0.7]]);
        let spec = g(1.0);
        let r1 = permutation_calibrate(&a, &b, &spec, 200, 0.05, 7).unwrap();
        let r2 = permutation_calibrate(&a, &b, &spec, 200, 0.05, 7).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.p_value > 0.0 && r1.p_value <= 1.0);
        assert!(r1.epsilon_alpha >= 0.0);
        assert!(permutation_calibrate(&a, &b, &spec, 99, 0.05, 7).is_err());
        assert!(permutation_calibrate(&fm(&[&[0.0]]), &b, &spec, 200, 0.05, 7).is_err());
    }
}
