//! PAC-Bayesian risk bounds with an MMD shift penalty.
//!
//! All bounds share the same three-term shape
//!
//! ```text
//! upper = empirical risk + complexity + L_H · (shift)
//! ```
//!
//! where `complexity = sqrt((KL(ρ‖π) + ln(c·√n / δ)) / 2n)`. The population
//! bound uses `c = 2` and the true MMD; the finite-sample bound uses `c = 4`
//! and replaces the MMD by `MMD̂_u + ε_{m,n}(δ/2)`.
//!
//! `n` here is always the labelled source count that produced the empirical
//! risk. It is unrelated to the sample sizes `m`, `n` of an [`MmdEstimate`].
//!
//! Risks are never clamped to `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_nonnegative, check_unit_open, Error, Result};
use crate::mmd::{concentration_width, EstimatorKind, MmdEstimate};

/// Posterior complexity budget: `KL(ρ‖π)`, labelled sample count and the
/// total failure probability `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorComplexity {
    pub kl: f64,
    pub n_labeled: usize,
    pub delta: f64,
}

impl PosteriorComplexity {
    pub fn new(kl: f64, n_labeled: usize, delta: f64) -> Result<Self> {
        check_nonnegative("kl", kl)?;
        check_unit_open("delta", delta)?;
        if n_labeled == 0 {
            return Err(Error::invalid("n_labeled", 0.0, "must be at least 1"));
        }
        Ok(Self {
            kl,
            n_labeled,
            delta,
        })
    }

    /// `sqrt((kl + ln(factor·√n/δ)) / 2n)`.
    fn term_with_factor(&self, factor: f64) -> f64 {
        let n = self.n_labeled as f64;
        ((self.kl + (factor * n.sqrt() / self.delta).ln()) / (2.0 * n)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Population,
    FiniteSample,
    LowerOnly,
}

/// Decomposed risk certificate.
///
/// `upper_risk` is always computed as
/// `empirical_risk + complexity_term + shift_penalty`, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub empirical_risk: f64,
    pub complexity_term: f64,
    pub shift_penalty: f64,
    pub upper_risk: f64,
    pub lower_risk: f64,
    pub kind: BoundKind,
}

impl BoundReport {
    pub(crate) fn assemble(
        empirical_risk: f64,
        complexity_term: f64,
        shift_penalty: f64,
        kind: BoundKind,
    ) -> Self {
        Self {
            empirical_risk,
            complexity_term,
            shift_penalty,
            upper_risk: empirical_risk + complexity_term + shift_penalty,
            lower_risk: empirical_risk - complexity_term - shift_penalty,
            kind,
        }
    }
}

/// Closed-form `KL(N(μ_p, diag σ²_p) ‖ N(μ_q, diag σ²_q))` in nats.
pub fn kl_diag_gaussians(mu_p: &[f64], var_p: &[f64], mu_q: &[f64], var_q: &[f64]) -> Result<f64> {
    let d = mu_p.len();
    for (what, v) in [("var_p", var_p), ("mu_q", mu_q), ("var_q", var_q)] {
        if v.len() != d {
            return Err(Error::LengthMismatch {
                what,
                expected: d,
                got: v.len(),
            });
        }
    }
    let mut kl = 0.0;
    for i in 0..d {
        let (mp, vp, mq, vq) = (mu_p[i], var_p[i], mu_q[i], var_q[i]);
        if !(vp > 0.0 && vp.is_finite()) {
            return Err(Error::invalid("var_p", vp, "variances must be positive"));
        }
        if !(vq > 0.0 && vq.is_finite()) {
            return Err(Error::invalid("var_q", vq, "variances must be positive"));
        }
        check_finite("mu_p", mp)?;
        check_finite("mu_q", mq)?;
        let diff = mp - mq;
        kl += 0.5 * ((vq / vp).ln() + (vp + diff * diff) / vq - 1.0);
    }
    // rounding can push identical distributions a hair below zero
    Ok(kl.max(0.0))
}

/// `sqrt((KL + ln(2√n/δ)) / 2n)`.
pub fn complexity_term(c: &PosteriorComplexity) -> f64 {
    c.term_with_factor(2.0)
}

/// The finite-sample variant of [`complexity_term`], with `ln(4√n/δ)`.
pub fn finite_sample_complexity_term(c: &PosteriorComplexity) -> f64 {
    c.term_with_factor(4.0)
}

/// Population bound with a known MMD:
/// `R_t ≤ R̂_s + complexity + L_H · MMD(P_s, P_t)`.
pub fn population_bound(
    emp_risk: f64,
    c: &PosteriorComplexity,
    l_h: f64,
    mmd: f64,
) -> Result<BoundReport> {
    check_finite("emp_risk", emp_risk)?;
    check_nonnegative("l_h", l_h)?;
    check_nonnegative("mmd", mmd)?;
    Ok(BoundReport::assemble(
        emp_risk,
        complexity_term(c),
        l_h * mmd,
        BoundKind::Population,
    ))
}

/// Fully computable bound from an unbiased MMD estimate; requires
/// `δ ∈ (0, 1/2)`.
pub fn finite_sample_bound(
    emp_risk: f64,
    c: &PosteriorComplexity,
    l_h: f64,
    est: &MmdEstimate,
) -> Result<BoundReport> {
    check_finite("emp_risk", emp_risk)?;
    check_nonnegative("l_h", l_h)?;
    if c.delta >= 0.5 {
        return Err(Error::invalid(
            "delta",
            c.delta,
            "finite-sample bound needs delta < 1/2",
        ));
    }
    if est.kind != EstimatorKind::Unbiased {
        return Err(Error::invalid(
            "estimator",
            0.0,
            "finite-sample bound needs the unbiased estimator",
        ));
    }
    let width = concentration_width(est.m, est.n, c.delta / 2.0)?;
    Ok(BoundReport::assemble(
        emp_risk,
        finite_sample_complexity_term(c),
        l_h * (est.mmd + width),
        BoundKind::FiniteSample,
    ))
}

/// Lower PAC-Bayes bound `R̂ - complexity`, same `2√n/δ` convention as
/// [`complexity_term`].
pub fn pac_lower_bound(emp_risk: f64, c: &PosteriorComplexity) -> f64 {
    emp_risk - complexity_term(c)
}

/// Shift-free two-sided report: `[R̂ - complexity, R̂ + complexity]`.
pub fn lower_only_report(emp_risk: f64, c: &PosteriorComplexity) -> Result<BoundReport> {
    check_finite("emp_risk", emp_risk)?;
    Ok(BoundReport::assemble(
        emp_risk,
        complexity_term(c),
        0.0,
        BoundKind::LowerOnly,
    ))
}
