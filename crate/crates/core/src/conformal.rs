//! Credal-width adaptive conformal coverage level.
//!
//! The base level `α₀` is raised by an increment `g(ε) ∈ [0, 1 - α₀]`:
//!
//! ```text
//! α(ε) = α₀ + g(ε)
//!
//! calibrated:  g(ε) = min{ 1 - α₀, (R̂ + L_H·ε / sqrt(KL / 2n)) / (1 + L_H·ε) }
//! shift-only:  g(ε) = min{ 1 - α₀, L_H·ε }
//! ```
//!
//! Both are clamped below at 0. Note that the calibrated form gives
//! `g(0) = min{1 - α₀, R̂}`, not 0, and divides by `sqrt(KL / 2n)`, so it is
//! undefined for `KL = 0`. Monotonicity in `ε` is not guaranteed for every
//! parameter choice.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_nonnegative, check_unit_open, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementMode {
    /// Risk-calibrated increment (requires `kl > 0`).
    #[default]
    Calibrated,
    /// `min{1 - α₀, L_H·ε}`.
    ShiftOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePolicy {
    pub alpha0: f64,
    pub emp_risk: f64,
    pub kl: f64,
    pub n_labeled: usize,
    pub l_h: f64,
    #[serde(default)]
    pub mode: IncrementMode,
}

impl CoveragePolicy {
    pub fn new(alpha0: f64, emp_risk: f64, kl: f64, n_labeled: usize, l_h: f64) -> Result<Self> {
        check_unit_open("alpha0", alpha0)?;
        check_finite("emp_risk", emp_risk)?;
        check_nonnegative("kl", kl)?;
        check_nonnegative("l_h", l_h)?;
        if n_labeled == 0 {
            return Err(Error::invalid("n_labeled", 0.0, "must be at least 1"));
        }
        Ok(Self {
            alpha0,
            emp_risk,
            kl,
            n_labeled,
            l_h,
            mode: IncrementMode::Calibrated,
        })
    }

    pub fn with_mode(mut self, mode: IncrementMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Coverage increment `g(ε)`.
pub fn coverage_increment(policy: &CoveragePolicy, epsilon: f64) -> Result<f64> {
    check_nonnegative("epsilon", epsilon)?;
    let cap = 1.0 - policy.alpha0;
    let shift = policy.l_h * epsilon;
    let raw = match policy.mode {
        IncrementMode::ShiftOnly => shift,
        IncrementMode::Calibrated => {
            if policy.kl <= 0.0 {
                return Err(Error::Singularity(
                    "calibrated increment divides by sqrt(KL / 2n); KL must be positive",
                ));
            }
            let scale = (policy.kl / (2.0 * policy.n_labeled as f64)).sqrt();
            (policy.emp_risk + shift / scale) / (1.0 + shift)
        }
    };
    Ok(raw.min(cap).max(0.0))
}

/// Adjusted level `α₀ + g(ε)`, never above 1.
pub fn adaptive_alpha(policy: &CoveragePolicy, epsilon: f64) -> Result<f64> {
    Ok((policy.alpha0 + coverage_increment(policy, epsilon)?).min(1.0))
}
