//! JSON configuration for `certify` and `monitor`.
//!
//! ```json
//! {
//!   "gamma": "median",
//!   "delta": 0.05,
//!   "kl": 2.5,
//!   "l_h": "estimate",
//!   "lambda": 1e-6,
//!   "r_max": 0.3,
//!   "alpha0": 0.1,
//!   "epsilon": "calibrate",
//!   "num_permutations": 500,
//!   "alpha": 0.05,
//!   "seed": 7
//! }
//! ```
//!
//! Unknown keys are rejected. Relative file references are resolved against
//! the directory of the config file.

use std::path::{Path, PathBuf};

use credal_cert::conformal::IncrementMode;
use credal_cert::pac_bayes::kl_diag_gaussians;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MedianToken {
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateToken {
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrateToken {
    Calibrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, expecting = "a positive number or \"median\"")]
pub enum GammaSetting {
    Value(f64),
    Token(MedianToken),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, expecting = "a nonnegative number or \"estimate\"")]
pub enum NormSetting {
    Value(f64),
    Token(EstimateToken),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, expecting = "a nonnegative number or \"calibrate\"")]
pub enum EpsilonSetting {
    Value(f64),
    Token(CalibrateToken),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlFileRef {
    pub file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, expecting = "a nonnegative number or {\"file\": path}")]
pub enum KlSetting {
    Value(f64),
    File(KlFileRef),
}

/// One diagonal Gaussian of a KL parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// `{"posterior": {...}, "prior": {...}}`; the KL is computed in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlFile {
    pub posterior: DiagGaussian,
    pub prior: DiagGaussian,
}

fn default_c_w() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    pub gamma: GammaSetting,
    pub delta: f64,
    pub kl: KlSetting,
    /// Defaults to the number of loss rows; must match it when given.
    #[serde(default)]
    pub n_labeled: Option<usize>,
    pub l_h: NormSetting,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_c_w")]
    pub c_w: f64,
    #[serde(default)]
    pub r_max: Option<f64>,
    #[serde(default)]
    pub alpha0: Option<f64>,
    /// Omitted: the upper confidence bound `MMD̂_u + ε_{m,n}(δ/2)`.
    #[serde(default)]
    pub epsilon: Option<EpsilonSetting>,
    #[serde(default)]
    pub num_permutations: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub coverage_mode: Option<IncrementMode>,
}

pub const DEFAULT_PERMUTATIONS: usize = 1000;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Parses JSON with a line/column diagnostic on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        origin: origin.to_string(),
        row: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// A config file together with where it came from.
pub struct LoadedConfig {
    pub config: CertifyConfig,
    pub digest: String,
    pub base_dir: PathBuf,
    pub origin: String,
}

impl CertifyConfig {
    pub fn from_json(text: &str, origin: &str) -> CliResult<Self> {
        let config: Self = parse_json(text, origin)?;
        config.validate(origin)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<LoadedConfig> {
        let loaded = io::load(path)?;
        let origin = path.display().to_string();
        let config = Self::from_json(&loaded.text, &origin)?;
        Ok(LoadedConfig {
            config,
            digest: loaded.digest,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            origin,
        })
    }

    fn validate(&self, origin: &str) -> CliResult<()> {
        let bad = |msg: &str| Err(CliError::config(origin, msg));
        if let GammaSetting::Value(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad("gamma must be a positive number or \"median\"");
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if let KlSetting::Value(kl) = self.kl {
            if !(kl >= 0.0 && kl.is_finite()) {
                return bad("kl must be a nonnegative number");
            }
        }
        if self.n_labeled == Some(0) {
            return bad("n_labeled must be at least 1");
        }
        match self.l_h {
            NormSetting::Value(v) => {
                if !(v >= 0.0 && v.is_finite()) {
                    return bad("l_h must be a nonnegative number or \"estimate\"");
                }
                if self.lambda.is_some() {
                    return bad("lambda only applies when l_h is \"estimate\"");
                }
            }
            NormSetting::Token(_) => {
                if let Some(l) = self.lambda {
                    if !(l > 0.0 && l.is_finite()) {
                        return bad("lambda must be a positive number");
                    }
                }
            }
        }
        if !(self.c_w >= 0.0 && self.c_w.is_finite()) {
            return bad("c_w must be a nonnegative number");
        }
        if let Some(r) = self.r_max {
            if !r.is_finite() {
                return bad("r_max must be finite");
            }
        }
        if let Some(a) = self.alpha0 {
            if !(a > 0.0 && a < 1.0) {
                return bad("alpha0 must lie in (0, 1)");
            }
        }
        match self.epsilon {
            Some(EpsilonSetting::Token(_)) => {
                if let Some(a) = self.alpha {
                    if !(a > 0.0 && a < 1.0) {
                        return bad("alpha must lie in (0, 1)");
                    }
                }
            }
            other => {
                if let Some(EpsilonSetting::Value(e)) = other {
                    if !(e >= 0.0 && e.is_finite()) {
                        return bad("epsilon must be a nonnegative number or \"calibrate\"");
                    }
                }
                if self.num_permutations.is_some() || self.alpha.is_some() || self.seed.is_some() {
                    return bad(
                        "num_permutations, alpha and seed only apply when epsilon is \"calibrate\"",
                    );
                }
            }
        }
        Ok(())
    }

    pub fn coverage_mode(&self) -> IncrementMode {
        self.coverage_mode.unwrap_or_default()
    }

    /// The KL value and, for a file reference, the digest of that file.
    pub fn resolve_kl(&self, base_dir: &Path) -> CliResult<(f64, Option<String>)> {
        match &self.kl {
            KlSetting::Value(v) => Ok((*v, None)),
            KlSetting::File(r) => {
                let path = if r.file.is_absolute() {
                    r.file.clone()
                } else {
                    base_dir.join(&r.file)
                };
                let loaded = io::load(&path)?;
                let f: KlFile = parse_json(&loaded.text, &path.display().to_string())?;
                let kl = kl_diag_gaussians(
                    &f.posterior.mean,
                    &f.posterior.var,
                    &f.prior.mean,
                    &f.prior.var,
                )?;
                Ok((kl, Some(loaded.digest)))
            }
        }
    }
}
