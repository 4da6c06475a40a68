//! Geodesic distortion diagnostics.
//!
//! Near an anchor `a`, the geodesic distance induced by the RBF kernel is
//! `√(2γ)·‖a - y‖` up to `O(ε̄²)`. The diagnostic compares the expected
//! linearized distance from `a` to the source and to the target sample,
//!
//! ```text
//! lhs = √(2γ) · | E_s ‖a - y‖ - E_t ‖a - y‖ |
//! rhs = √(2γ) · C_W · MMD̂_u(Xs, Xt)
//! ```
//!
//! and reports `slack = rhs - lhs`. The features are taken to already be
//! the encoder output `f = W·φ`, so `C_W` is a user-supplied bound on
//! `‖W‖_op` (1 when unknown). Anchors far from the data are not filtered;
//! `ε̄` is reported so the caller can judge whether the linearization is
//! trustworthy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_nonnegative, Error, Result};
use crate::kernel::{dist, FeatureMatrix, KernelSpec};
use crate::mmd::mmd2_unbiased;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub anchor_index: usize,
    pub lhs_estimate: f64,
    pub rhs_bound: f64,
    pub slack: f64,
    /// Largest distance from the anchor to any source or target point.
    pub epsilon_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistortionSummary {
    pub class_label: String,
    pub sample_count: usize,
    pub mean_distortion: f64,
    pub max_distortion: f64,
}

/// Per-class summaries plus the class-independent right-hand side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RareClassReport {
    /// Sorted by ascending `sample_count`, rare classes first.
    pub classes: Vec<ClassDistortionSummary>,
    pub rhs_bound: f64,
    /// Largest `ε̄` over all anchors.
    pub epsilon_bar: f64,
}

/// Mean Euclidean distance from `anchor` to the rows of `x`.
pub fn expected_feature_distance(anchor: &[f64], x: &FeatureMatrix) -> Result<f64> {
    if anchor.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: anchor.len(),
        });
    }
    Ok(x.rows().map(|y| dist(anchor, y)).sum::<f64>() / x.nrows() as f64)
}

fn max_distance(anchor: &[f64], x: &FeatureMatrix) -> f64 {
    x.rows().map(|y| dist(anchor, y)).fold(0.0, f64::max)
}

fn shift_rhs(xs: &FeatureMatrix, xt: &FeatureMatrix, k: &KernelSpec, c_w: f64) -> Result<f64> {
    check_nonnegative("c_w", c_w)?;
    let mmd = mmd2_unbiased(xs, xt, k)?.mmd;
    Ok((2.0 * k.gamma).sqrt() * c_w * mmd)
}

fn report_with_rhs(
    anchor_index: usize,
    anchor: &[f64],
    xs: &FeatureMatrix,
    xt: &FeatureMatrix,
    k: &KernelSpec,
    rhs_bound: f64,
) -> Result<DistortionReport> {
    let ds = expected_feature_distance(anchor, xs)?;
    let dt = expected_feature_distance(anchor, xt)?;
    let lhs_estimate = (2.0 * k.gamma).sqrt() * (ds - dt).abs();
    Ok(DistortionReport {
        anchor_index,
        lhs_estimate,
        rhs_bound,
        slack: rhs_bound - lhs_estimate,
        epsilon_bar: max_distance(anchor, xs).max(max_distance(anchor, xt)),
    })
}

/// Distortion diagnostic for a single anchor (`anchor_index` is 0).
pub fn geodesic_distortion(
    anchor: &[f64],
    xs: &FeatureMatrix,
    xt: &FeatureMatrix,
    k: &KernelSpec,
    c_w: f64,
) -> Result<DistortionReport> {
    let rhs = shift_rhs(xs, xt, k, c_w)?;
    report_with_rhs(0, anchor, xs, xt, k, rhs)
}

/// Distortion diagnostics for every row of `anchors`, sharing one MMD
/// estimate.
pub fn distortion_reports(
    anchors: &FeatureMatrix,
    xs: &FeatureMatrix,
    xt: &FeatureMatrix,
    k: &KernelSpec,
    c_w: f64,
) -> Result<Vec<DistortionReport>> {
    let rhs = shift_rhs(xs, xt, k, c_w)?;
    anchors
        .rows()
        .enumerate()
        .map(|(i, a)| report_with_rhs(i, a, xs, xt, k, rhs))
        .collect()
}

/// Groups anchor distortions by class label.
pub fn rare_class_report<S: AsRef<str>>(
    anchors: &FeatureMatrix,
    labels: &[S],
    xs: &FeatureMatrix,
    xt: &FeatureMatrix,
    k: &KernelSpec,
    c_w: f64,
) -> Result<RareClassReport> {
    if labels.len() != anchors.nrows() {
        return Err(Error::LengthMismatch {
            what: "labels",
            expected: anchors.nrows(),
            got: labels.len(),
        });
    }
    let reports = distortion_reports(anchors, xs, xt, k, c_w)?;
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (label, r) in labels.iter().zip(&reports) {
        groups
            .entry(label.as_ref())
            .or_default()
            .push(r.lhs_estimate);
    }
    let mut classes: Vec<ClassDistortionSummary> = groups
        .into_iter()
        .map(|(label, values)| ClassDistortionSummary {
            class_label: label.to_owned(),
            sample_count: values.len(),
            mean_distortion: values.iter().sum::<f64>() / values.len() as f64,
            max_distortion: values.iter().copied().fold(0.0, f64::max),
        })
        .collect();
    // stable sort keeps label order within equal counts
    classes.sort_by_key(|c| c.sample_count);
    Ok(RareClassReport {
        classes,
        rhs_bound: reports.first().map_or(0.0, |r| r.rhs_bound),
        epsilon_bar: reports.iter().map(|r| r.epsilon_bar).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fm<const D: usize>(rows: &[[f64; D]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn expected_distance_examples() {
        assert_eq!(
            expected_feature_distance(&[1.0, 2.0], &fm(&[[1.0, 2.0]])).unwrap(),
            0.0
        );
        assert_eq!(
            expected_feature_distance(&[0.0], &fm(&[[3.0], [4.0]])).unwrap(),
            3.5
        );
        let a = fm(&[[3.0, 1.0], [0.0, -2.0], [1.0, 1.0]]);
        let b = fm(&[[1.0, 1.0], [3.0, 1.0], [0.0, -2.0]]);
        assert_relative_eq!(
            expected_feature_distance(&[0.5, 0.5], &a).unwrap(),
            expected_feature_distance(&[0.5, 0.5], &b).unwrap(),
            epsilon = 1e-15
        );
        assert!(expected_feature_distance(&[0.0], &a).is_err());
    }

    #[test]
    fn identical_samples_have_no_distortion() {
        let x = fm(&[[0.0, 0.0], [1.0, 0.2], [0.4, -0.6]]);
        let k = KernelSpec::fixed(0.5).unwrap();
        let r = geodesic_distortion(&[0.1, 0.1], &x, &x, &k, 1.0).unwrap();
        assert_eq!(r.lhs_estimate, 0.0);
        assert_eq!(r.slack, r.rhs_bound);
        assert!(r.rhs_bound >= 0.0);
    }

    #[test]
    fn linearized_hand_value() {
        let xs = fm(&[[0.1], [0.1]]);
        let xt = fm(&[[0.2], [0.2]]);
        let k = KernelSpec::fixed(1.0).unwrap();
        let r = geodesic_distortion(&[0.0], &xs, &xt, &k, 1.0).unwrap();
        assert_relative_eq!(r.lhs_estimate, 0.141_421_4, epsilon = 5e-8);
        assert_relative_eq!(r.epsilon_bar, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_and_scales_with_root_gamma() {
        let xs = fm(&[[0.0, 0.0], [1.0, 0.2], [0.4, -0.6]]);
        let xt = fm(&[[0.5, 0.1], [1.2, 0.8], [0.9, -0.1], [2.0, 0.0]]);
        let k = KernelSpec::fixed(0.3).unwrap();
        let a = geodesic_distortion(&[0.2, 0.3], &xs, &xt, &k, 1.0).unwrap();
        let b = geodesic_distortion(&[0.2, 0.3], &xt, &xs, &k, 1.0).unwrap();
        assert_eq!(a.lhs_estimate, b.lhs_estimate);
        let k2 = KernelSpec::fixed(0.6).unwrap();
        let c = geodesic_distortion(&[0.2, 0.3], &xs, &xt, &k2, 1.0).unwrap();
        assert_relative_eq!(
            c.lhs_estimate,
            2f64.sqrt() * a.lhs_estimate,
            max_relative = 1e-15
        );
        assert!(geodesic_distortion(&[0.2, 0.3], &xs, &xt, &k, -1.0).is_err());
    }

    #[test]
    fn rare_class_examples() {
        let xs = fm(&[[0.0, 0.0], [1.0, 0.2], [0.4, -0.6]]);
        let xt = fm(&[[0.5, 0.1], [1.2, 0.8], [0.9, -0.1]]);
        let k = KernelSpec::fixed(0.5).unwrap();

        let one = fm(&[[0.3, 0.3]]);
        let rep = rare_class_report(&one, &["cat"], &xs, &xt, &k, 1.0).unwrap();
        assert_eq!(rep.classes.len(), 1);
        let single = geodesic_distortion(&[0.3, 0.3], &xs, &xt, &k, 1.0).unwrap();
        assert_eq!(rep.classes[0].mean_distortion, single.lhs_estimate);
        assert_eq!(rep.classes[0].max_distortion, single.lhs_estimate);

        let anchors = fm(&[[0.3, 0.3], [0.3, 0.3], [0.3, 0.3]]);
        let rep = rare_class_report(&anchors, &["a", "b", "a"], &xs, &xs, &k, 1.0).unwrap();
        assert!(rep.classes.iter().all(|c| c.max_distortion == 0.0));
        assert_eq!(rep.classes[0].class_label, "b");
        assert_eq!(rep.classes[0].sample_count, 1);
        assert_eq!(rep.classes[1].sample_count, 2);

        assert!(rare_class_report(&anchors, &["a"], &xs, &xt, &k, 1.0).is_err());
    }
}
