//! MMD-ball credal sets and the risk intervals they induce.
//!
//! The credal set `C_ε(P_s) = { Q : MMD(P_s, Q) ≤ ε }` collects every
//! target distribution that is indistinguishable from the source at
//! resolution `ε`. Over this set the target risk of a posterior is bracketed
//! by
//!
//! ```text
//! lower = R̂ - complexity - L_H·ε
//! upper = R̂ + complexity + L_H·ε
//! width = 2·complexity + 2·L_H·ε
//! ```
//!
//! Both endpoints are reported with the `δ` the caller passed in. Whether
//! they hold jointly at `1 - δ` or need `δ/2` per side is left to the
//! caller; nothing here halves `δ`.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_nonnegative, Result};
use crate::kernel::{FeatureMatrix, KernelSpec};
use crate::mmd::{mmd2_unbiased, mmd_upper_confidence};
use crate::pac_bayes::{complexity_term, BoundKind, BoundReport, PosteriorComplexity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusSource {
    UserFixed,
    PermutationCalibrated,
    UpperConfidence,
}

/// Radius of the MMD ball around the source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredalSpec {
    pub epsilon: f64,
    pub radius_source: RadiusSource,
}

impl CredalSpec {
    pub fn new(epsilon: f64, radius_source: RadiusSource) -> Result<Self> {
        check_nonnegative("epsilon", epsilon)?;
        Ok(Self {
            epsilon,
            radius_source,
        })
    }

    pub fn fixed(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, RadiusSource::UserFixed)
    }
}

/// Lower/upper risk over the credal set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskInterval {
    pub lower: f64,
    pub upper: f64,
    /// `2·complexity + 2·L_H·ε`. Agrees with `upper - lower` only up to
    /// the rounding of the two endpoints.
    pub width: f64,
    pub epsilon: f64,
    pub components: BoundReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NoAdaptationNeeded,
    AdaptationWarranted,
    AdaptationFutile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationDecision {
    pub verdict: Verdict,
    pub r_max: f64,
    pub interval: RiskInterval,
}

/// Worst-case risk over the credal set: `R̂ + complexity + L_H·ε`.
///
/// The value depends on the set only through `ε`.
pub fn worst_case_risk(
    emp_risk: f64,
    c: &PosteriorComplexity,
    l_h: f64,
    spec: &CredalSpec,
) -> Result<f64> {
    Ok(risk_interval(emp_risk, c, l_h, spec)?.upper)
}

/// Lower/upper risk interval over `C_ε(P_s)`.
pub fn risk_interval(
    emp_risk: f64,
    c: &PosteriorComplexity,
    l_h: f64,
    spec: &CredalSpec,
) -> Result<RiskInterval> {
    check_finite("emp_risk", emp_risk)?;
    check_nonnegative("l_h", l_h)?;
    check_nonnegative("epsilon", spec.epsilon)?;
    let components = BoundReport::assemble(
        emp_risk,
        complexity_term(c),
        l_h * spec.epsilon,
        BoundKind::Population,
    );
    Ok(RiskInterval {
        lower: components.lower_risk,
        upper: components.upper_risk,
        width: 2.0 * components.complexity_term + 2.0 * components.shift_penalty,
        epsilon: spec.epsilon,
        components,
    })
}

/// Conservative membership test for `C_ε(P_s)` from samples.
///
/// Returns `true` only when the upper confidence bound on `MMD(P_s, Q)` at
/// level `1 - alpha` is within `ε`. `false` does not certify that `Q` lies
/// outside the ball.
pub fn membership_upper_confidence(
    xq: &FeatureMatrix,
    xs: &FeatureMatrix,
    k: &KernelSpec,
    spec: &CredalSpec,
    alpha: f64,
) -> Result<bool> {
    let est = mmd2_unbiased(xs, xq, k)?;
    Ok(mmd_upper_confidence(&est, alpha)? <= spec.epsilon)
}

/// Adaptation decision rule against a risk tolerance `r_max`.
///
/// * `upper ≤ r_max`: no adaptation needed (ties go here)
/// * `lower > r_max`: adaptation is futile
/// * otherwise the interval straddles `r_max` and adaptation is warranted
pub fn decide_adaptation(interval: &RiskInterval, r_max: f64) -> AdaptationDecision {
    let verdict = if interval.upper <= r_max {
        Verdict::NoAdaptationNeeded
    } else if interval.lower > r_max {
        Verdict::AdaptationFutile
    } else {
        Verdict::AdaptationWarranted
    };
    AdaptationDecision {
        verdict,
        r_max,
        interval: *interval,
    }
}
