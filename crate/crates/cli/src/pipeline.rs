//! Source-side preparation and the per-target certificate pipeline shared by
//! `certify` and `monitor`.

use std::path::Path;

use credal_cert::conformal::{adaptive_alpha, CoveragePolicy};
use credal_cert::credal::{decide_adaptation, risk_interval, CredalSpec, RadiusSource};
use credal_cert::kernel::{median_heuristic_pooled, FeatureMatrix, KernelSpec};
use credal_cert::mmd::{concentration_width, permutation_calibrate, SourceEmbedding};
use credal_cert::pac_bayes::{finite_sample_bound, PosteriorComplexity};
use credal_cert::rkhs_norm::{estimate_rkhs_norm, estimate_rkhs_norm_default};
use credal_cert::EstimatorKind;

use crate::certificate::{Certificate, NormSource, TOOL_VERSION};
use crate::config::{
    CertifyConfig, EpsilonSetting, GammaSetting, LoadedConfig, NormSetting, DEFAULT_ALPHA,
    DEFAULT_PERMUTATIONS,
};
use crate::error::{CliError, CliResult};
use crate::io;

/// Source features with their per-sample losses.
pub struct SourceData {
    pub xs: FeatureMatrix,
    pub losses: Vec<f64>,
    pub digest_features: String,
    pub digest_losses: String,
}

impl SourceData {
    pub fn load(features: &Path, losses: &Path) -> CliResult<Self> {
        let (xs, digest_features) = io::read_features(features)?;
        let (losses_v, digest_losses) = io::read_losses(losses)?;
        if losses_v.len() != xs.nrows() {
            return Err(CliError::input(
                losses.display().to_string(),
                format!(
                    "{} loss rows but {} has {} feature rows",
                    losses_v.len(),
                    features.display(),
                    xs.nrows()
                ),
            ));
        }
        Ok(Self {
            xs,
            losses: losses_v,
            digest_features,
            digest_losses,
        })
    }
}

/// Fixed bandwidth from the config, or the median heuristic over `parts`.
pub fn select_kernel(cfg: &CertifyConfig, parts: &[&FeatureMatrix]) -> CliResult<KernelSpec> {
    Ok(match cfg.gamma {
        GammaSetting::Value(g) => KernelSpec::fixed(g)?,
        GammaSetting::Token(_) => median_heuristic_pooled(parts)?,
    })
}

struct NormInfo {
    l_h: f64,
    source: NormSource,
    lambda: Option<f64>,
    residual_rms: Option<f64>,
}

/// Everything that depends only on the source side and the config.
pub struct Pipeline {
    cfg: CertifyConfig,
    digest_config: String,
    kl: f64,
    digest_kl: Option<String>,
    n_labeled: usize,
    emp_risk: f64,
    embedding: SourceEmbedding,
    norm: NormInfo,
    digest_source_features: String,
    digest_source_losses: String,
}

impl Pipeline {
    pub fn new(source: SourceData, loaded: &LoadedConfig, kernel: KernelSpec) -> CliResult<Self> {
        let cfg = loaded.config.clone();
        let (kl, digest_kl) = cfg.resolve_kl(&loaded.base_dir)?;
        let rows = source.losses.len();
        let n_labeled = match cfg.n_labeled {
            Some(n) if n != rows => {
                return Err(CliError::config(
                    &loaded.origin,
                    format!("n_labeled is {n} but the loss file has {rows} rows"),
                ))
            }
            _ => rows,
        };
        let emp_risk = source.losses.iter().sum::<f64>() / rows as f64;
        let norm = match cfg.l_h {
            NormSetting::Value(v) => NormInfo {
                l_h: v,
                source: NormSource::User,
                lambda: None,
                residual_rms: None,
            },
            NormSetting::Token(_) => {
                let est = match cfg.lambda {
                    Some(l) => estimate_rkhs_norm(&source.xs, &source.losses, &kernel, l)?,
                    None => estimate_rkhs_norm_default(&source.xs, &source.losses, &kernel)?,
                };
                NormInfo {
                    l_h: est.l_h,
                    source: NormSource::Estimated,
                    lambda: Some(est.lambda),
                    residual_rms: Some(est.residual_rms),
                }
            }
        };
        Ok(Self {
            cfg,
            digest_config: loaded.digest.clone(),
            kl,
            digest_kl,
            n_labeled,
            emp_risk,
            embedding: SourceEmbedding::new(source.xs, kernel),
            norm,
            digest_source_features: source.digest_features,
            digest_source_losses: source.digest_losses,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        self.embedding.spec()
    }

    /// Certificate for one target sample.
    pub fn certify(
        &self,
        xt: &FeatureMatrix,
        digest_target: String,
        seed: u64,
        clamp: bool,
    ) -> CliResult<Certificate> {
        let cfg = &self.cfg;
        let k = self.embedding.spec();
        let est = self.embedding.estimate(xt, EstimatorKind::Unbiased)?;
        let mmd_width = concentration_width(est.m, est.n, cfg.delta / 2.0)?;

        let (epsilon, epsilon_source, p_value, perms, used_seed) = match cfg.epsilon {
            Some(EpsilonSetting::Value(e)) => (e, RadiusSource::UserFixed, None, None, None),
            Some(EpsilonSetting::Token(_)) => {
                let perms = cfg.num_permutations.unwrap_or(DEFAULT_PERMUTATIONS);
                let alpha = cfg.alpha.unwrap_or(DEFAULT_ALPHA);
                let cal =
                    permutation_calibrate(self.embedding.features(), xt, k, perms, alpha, seed)?;
                (
                    cal.epsilon_alpha,
                    RadiusSource::PermutationCalibrated,
                    Some(cal.p_value),
                    Some(perms),
                    Some(seed),
                )
            }
            None => (
                est.mmd + mmd_width,
                RadiusSource::UpperConfidence,
                None,
                None,
                None,
            ),
        };

        let c = PosteriorComplexity::new(self.kl, self.n_labeled, cfg.delta)?;
        let l_h = self.norm.l_h;
        let bound = finite_sample_bound(self.emp_risk, &c, l_h, &est)?;
        let interval = risk_interval(
            self.emp_risk,
            &c,
            l_h,
            &CredalSpec::new(epsilon, epsilon_source)?,
        )?;
        let verdict = cfg.r_max.map(|r| decide_adaptation(&interval, r).verdict);
        let adaptive = match cfg.alpha0 {
            Some(a0) => {
                let policy = CoveragePolicy::new(a0, self.emp_risk, self.kl, self.n_labeled, l_h)?
                    .with_mode(cfg.coverage_mode());
                Some(adaptive_alpha(&policy, epsilon)?)
            }
            None => None,
        };

        let clip = |v: f64| if clamp { v.clamp(0.0, 1.0) } else { v };
        Ok(Certificate {
            tool_version: TOOL_VERSION.to_string(),
            batch_seq: None,
            bound_kind: bound.kind,
            empirical_risk: bound.empirical_risk,
            complexity_term: bound.complexity_term,
            shift_penalty: bound.shift_penalty,
            upper_risk: clip(bound.upper_risk),
            lower_risk: clip(bound.lower_risk),
            interval_complexity_term: interval.components.complexity_term,
            risk_lower: clip(interval.lower),
            risk_upper: clip(interval.upper),
            risk_width: interval.width,
            epsilon,
            epsilon_source,
            permutation_p_value: p_value,
            num_permutations: perms,
            seed: used_seed,
            mmd2: est.mmd2,
            mmd: est.mmd,
            m: est.m,
            n: est.n,
            mmd_width,
            gamma: k.gamma,
            gamma_source: k.source,
            delta: cfg.delta,
            kl: self.kl,
            n_labeled: self.n_labeled,
            l_h,
            l_h_source: self.norm.source,
            l_h_lambda: self.norm.lambda,
            l_h_residual_rms: self.norm.residual_rms,
            r_max: cfg.r_max,
            verdict,
            alpha0: cfg.alpha0,
            coverage_mode: cfg.alpha0.map(|_| cfg.coverage_mode()),
            adaptive_alpha: adaptive,
            risk_clamped: clamp,
            digest_source_features: self.digest_source_features.clone(),
            digest_source_losses: self.digest_source_losses.clone(),
            digest_target_features: digest_target,
            digest_config: self.digest_config.clone(),
            digest_kl_file: self.digest_kl.clone(),
        })
    }
}
