//! The certificate record.

use credal_cert::conformal::IncrementMode;
use credal_cert::credal::{RadiusSource, Verdict};
use credal_cert::kernel::BandwidthSource;
use credal_cert::pac_bayes::BoundKind;
use serde::{Deserialize, Serialize};

pub const TOOL_VERSION: &str = concat!("credal-cert ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormSource {
    User,
    Estimated,
}

/// Flat key-value certificate. Field names are a stable interface.
///
/// `upper_risk = empirical_risk + complexity_term + shift_penalty` and
/// `risk_width = 2·interval_complexity_term + 2·l_h·epsilon` hold exactly for
/// the serialized numbers unless `risk_clamped` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Certificate {
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_seq: Option<u64>,

    pub bound_kind: BoundKind,
    pub empirical_risk: f64,
    pub complexity_term: f64,
    pub shift_penalty: f64,
    pub upper_risk: f64,
    pub lower_risk: f64,

    pub interval_complexity_term: f64,
    pub risk_lower: f64,
    pub risk_upper: f64,
    pub risk_width: f64,

    pub epsilon: f64,
    pub epsilon_source: RadiusSource,
    pub permutation_p_value: Option<f64>,
    pub num_permutations: Option<usize>,
    pub seed: Option<u64>,

    pub mmd2: f64,
    pub mmd: f64,
    pub m: usize,
    pub n: usize,
    /// Concentration width at `δ/2`.
    pub mmd_width: f64,

    pub gamma: f64,
    pub gamma_source: BandwidthSource,

    pub delta: f64,
    pub kl: f64,
    pub n_labeled: usize,

    pub l_h: f64,
    pub l_h_source: NormSource,
    pub l_h_lambda: Option<f64>,
    pub l_h_residual_rms: Option<f64>,

    pub r_max: Option<f64>,
    pub verdict: Option<Verdict>,
    pub alpha0: Option<f64>,
    pub coverage_mode: Option<IncrementMode>,
    pub adaptive_alpha: Option<f64>,

    pub risk_clamped: bool,

    pub digest_source_features: String,
    pub digest_source_losses: String,
    pub digest_target_features: String,
    pub digest_config: String,
    pub digest_kl_file: Option<String>,
}

/// Help text listing the certificate fields.
pub const FIELDS_HELP: &str = "\
Certificate fields (JSON, one object; monitor adds batch_seq):
  tool_version              producing tool and version
  batch_seq                 monitor only: 0-based batch index
  bound_kind                finite_sample
  empirical_risk            mean source loss
  complexity_term           sqrt((kl + ln(4 sqrt(n)/delta)) / 2n)
  shift_penalty             l_h * (mmd + mmd_width)
  upper_risk, lower_risk    empirical_risk +/- (complexity_term + shift_penalty)
  interval_complexity_term  sqrt((kl + ln(2 sqrt(n)/delta)) / 2n)
  risk_lower, risk_upper    empirical_risk -/+ (interval_complexity_term + l_h * epsilon)
  risk_width                2 * interval_complexity_term + 2 * l_h * epsilon
  epsilon, epsilon_source   credal radius and its origin
  permutation_p_value       when epsilon_source is permutation_calibrated
  num_permutations, seed    when epsilon_source is permutation_calibrated
  mmd2, mmd, m, n           unbiased MMD^2 estimate, its clamped root, sample sizes
  mmd_width                 concentration width at delta/2
  gamma, gamma_source       RBF bandwidth and its origin
  delta, kl, n_labeled      complexity budget
  l_h, l_h_source           loss RKHS norm, user-given or estimated
  l_h_lambda                ridge used by the estimate
  l_h_residual_rms          fit residual of the estimate
  r_max, verdict            adaptation decision, when r_max is configured
  alpha0, coverage_mode     conformal inputs, when alpha0 is configured
  adaptive_alpha            alpha0 + coverage increment
  risk_clamped              risks were clipped to [0, 1] (--clamp-risk)
  digest_*                  SHA-256 of each input file";
