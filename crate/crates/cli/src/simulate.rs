//! Synthetic experiments against the Gaussian oracle.
//!
//! ```json
//! {"experiment": "coverage", "trials": 500, "delta": 0.1, "n_labeled": 200,
//!  "scenario": {"d": 2, "mean_s": [0, 0], "mean_t": [0.5, 0.5],
//!               "var_s": 1, "var_t": 1, "gamma": 0.5, "seed": 1}}
//! ```

use std::fmt::Write;

use credal_cert::geometry::geodesic_distortion;
use credal_cert::mmd::{concentration_width, mmd2_unbiased};
use credal_cert::oracle::{
    analytic_mmd2, sample_scenario_trial, true_target_risk, KernelExpansion, ShiftScenario,
};
use credal_cert::pac_bayes::{population_bound, PosteriorComplexity};
use rand::Rng;
use serde::Deserialize;

use crate::config::parse_json;
use crate::error::{CliError, CliResult};

fn d_delta() -> f64 {
    0.1
}
fn d_n_labeled() -> usize {
    200
}
fn d_mc_samples() -> usize {
    20_000
}
fn d_centers() -> usize {
    5
}
fn d_fifty() -> usize {
    50
}
fn d_five_hundred() -> usize {
    500
}
fn d_alpha() -> f64 {
    0.05
}
fn d_c_w() -> f64 {
    1.0
}
fn d_remainder() -> f64 {
    0.05
}
fn d_required() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// Population bound with a kernel-expansion loss versus the true target
    /// risk; passes when the coverage rate is at least `1 - delta`.
    Coverage {
        scenario: ShiftScenario,
        trials: usize,
        #[serde(default = "d_delta")]
        delta: f64,
        #[serde(default = "d_n_labeled")]
        n_labeled: usize,
        #[serde(default = "d_mc_samples")]
        mc_samples: usize,
        #[serde(default = "d_centers")]
        centers: usize,
    },
    /// Mean unbiased estimate versus the analytic value; passes within
    /// three standard errors.
    Unbiasedness {
        scenario: ShiftScenario,
        trials: usize,
        #[serde(default = "d_fifty")]
        m: usize,
        #[serde(default = "d_fifty")]
        n: usize,
    },
    /// Frequency of `|MMD̂ - MMD| > ε_{m,n}(alpha)`; passes when at most
    /// `alpha`.
    Concentration {
        scenario: ShiftScenario,
        trials: usize,
        #[serde(default = "d_fifty")]
        m: usize,
        #[serde(default = "d_fifty")]
        n: usize,
        #[serde(default = "d_alpha")]
        alpha: f64,
    },
    /// `lhs ≤ rhs + remainder·ε̄²` at the first source point.
    Geometry {
        scenario: ShiftScenario,
        trials: usize,
        #[serde(default = "d_five_hundred")]
        m: usize,
        #[serde(default = "d_five_hundred")]
        n: usize,
        #[serde(default = "d_c_w")]
        c_w: f64,
        #[serde(default = "d_remainder")]
        remainder: f64,
        #[serde(default = "d_required")]
        required_rate: f64,
    },
}

impl Experiment {
    pub fn from_json(text: &str, origin: &str) -> CliResult<Self> {
        let e: Self = parse_json(text, origin)?;
        if e.trials() == 0 {
            return Err(CliError::config(origin, "trials must be at least 1"));
        }
        e.scenario().validate()?;
        Ok(e)
    }

    fn trials(&self) -> usize {
        match self {
            Self::Coverage { trials, .. }
            | Self::Unbiasedness { trials, .. }
            | Self::Concentration { trials, .. }
            | Self::Geometry { trials, .. } => *trials,
        }
    }

    fn scenario(&self) -> &ShiftScenario {
        match self {
            Self::Coverage { scenario, .. }
            | Self::Unbiasedness { scenario, .. }
            | Self::Concentration { scenario, .. }
            | Self::Geometry { scenario, .. } => scenario,
        }
    }

    fn scenario_mut(&mut self) -> &mut ShiftScenario {
        match self {
            Self::Coverage { scenario, .. }
            | Self::Unbiasedness { scenario, .. }
            | Self::Concentration { scenario, .. }
            | Self::Geometry { scenario, .. } => scenario,
        }
    }
}

/// Outcome of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: &'static str,
    pub trials: usize,
    pub rows: Vec<(&'static str, String)>,
    pub pass: bool,
}

impl Report {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: &str| writeln!(s, "{k:<14}{v}").unwrap();
        line("experiment", self.experiment);
        line("trials", &self.trials.to_string());
        for (k, v) in &self.rows {
            line(k, v);
        }
        line("result", if self.pass { "PASS" } else { "FAIL" });
        s
    }
}

/// Runs `e`; `seed` overrides the scenario seed.
pub fn run(mut e: Experiment, seed: Option<u64>) -> CliResult<Report> {
    if let Some(seed) = seed {
        e.scenario_mut().seed = seed;
    }
    let trials = e.trials();
    match &e {
        Experiment::Coverage {
            scenario: s,
            delta,
            n_labeled,
            mc_samples,
            centers,
            ..
        } => {
            // the loss is drawn once, from a stream no trial uses
            let mut rng = s.rng(u64::MAX);
            let src = s.source()?;
            let weights: Vec<f64> = (0..*centers)
                .map(|_| rng.random_range(0.0..1.0 / *centers as f64))
                .collect();
            let loss = KernelExpansion::new(src.sample(*centers, &mut rng)?, weights)?;
            let l_h = loss.rkhs_norm(s.gamma);
            let truth = true_target_risk(s, &loss, *mc_samples, s.seed ^ 0x5eed)?;
            let c = PosteriorComplexity::new(0.0, *n_labeled, *delta)?;
            let mmd = analytic_mmd2(s)?.sqrt();
            let mut covered = 0;
            for t in 0..trials as u64 {
                let (xs, _) = sample_scenario_trial(s, *n_labeled, 1, t)?;
                let emp = xs.rows().map(|x| loss.eval(x, s.gamma)).sum::<f64>() / *n_labeled as f64;
                if population_bound(emp, &c, l_h, mmd)?.upper_risk >= truth.mean {
                    covered += 1;
                }
            }
            let rate = covered as f64 / trials as f64;
            Ok(Report {
                experiment: "coverage",
                trials,
                rows: vec![
                    (
                        "target_risk",
                        format!("{:.6} ± {:.1e}", truth.mean, truth.std_error),
                    ),
                    ("l_h", format!("{l_h:.6}")),
                    ("rate", format!("{rate:.4}")),
                    ("required", format!(">= {:.4}", 1.0 - delta)),
                ],
                pass: rate >= 1.0 - delta,
            })
        }
        Experiment::Unbiasedness {
            scenario: s, m, n, ..
        } => {
            let exact = analytic_mmd2(s)?;
            let k = s.kernel()?;
            let values = (0..trials as u64)
                .map(|t| {
                    let (xs, xt) = sample_scenario_trial(s, *m, *n, t)?;
                    Ok(mmd2_unbiased(&xs, &xt, &k)?.mmd2)
                })
                .collect::<CliResult<Vec<f64>>>()?;
            let nf = values.len() as f64;
            let mean = values.iter().sum::<f64>() / nf;
            let se = if values.len() > 1 {
                (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0) / nf)
                    .sqrt()
            } else {
                f64::INFINITY
            };
            let bias = mean - exact;
            Ok(Report {
                experiment: "unbiasedness",
                trials,
                rows: vec![
                    ("analytic", format!("{exact:.6}")),
                    ("mean", format!("{mean:.6}")),
                    ("bias", format!("{bias:.3e}")),
                    ("std_error", format!("{se:.3e}")),
                    ("required", "|bias| <= 3 std_error".to_string()),
                ],
                pass: bias.abs() <= 3.0 * se,
            })
        }
        Experiment::Concentration {
            scenario: s,
            m,
            n,
            alpha,
            ..
        } => {
            let truth = analytic_mmd2(s)?.sqrt();
            let k = s.kernel()?;
            let width = concentration_width(*m, *n, *alpha)?;
            let mut misses = 0;
            for t in 0..trials as u64 {
                let (xs, xt) = sample_scenario_trial(s, *m, *n, t)?;
                if (mmd2_unbiased(&xs, &xt, &k)?.mmd - truth).abs() > width {
                    misses += 1;
                }
            }
            let rate = misses as f64 / trials as f64;
            Ok(Report {
                experiment: "concentration",
                trials,
                rows: vec![
                    ("width", format!("{width:.6}")),
                    ("rate", format!("{rate:.4}")),
                    ("required", format!("<= {alpha}")),
                ],
                pass: rate <= *alpha,
            })
        }
        Experiment::Geometry {
            scenario: s,
            m,
            n,
            c_w,
            remainder,
            required_rate,
            ..
        } => {
            let k = s.kernel()?;
            let mut held = 0;
            for t in 0..trials as u64 {
                let (xs, xt) = sample_scenario_trial(s, *m, *n, t)?;
                let r = geodesic_distortion(xs.row(0), &xs, &xt, &k, *c_w)?;
                if r.lhs_estimate <= r.rhs_bound + remainder * r.epsilon_bar * r.epsilon_bar {
                    held += 1;
                }
            }
            let rate = held as f64 / trials as f64;
            Ok(Report {
                experiment: "geometry",
                trials,
                rows: vec![
                    ("rate", format!("{rate:.4}")),
                    ("required", format!(">= {required_rate}")),
                ],
                pass: rate >= *required_rate,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario() -> &'static str {
        r#"{"d": 1, "mean_s": [0], "mean_t": [0.5], "var_s": 1, "var_t": 1, "gamma": 0.5, "seed": 3}"#
    }

    #[test]
    fn zero_trials_rejected() {
        let text = format!(
            r#"{{"experiment": "unbiasedness", "trials": 0, "scenario": {}}}"#,
            scenario()
        );
        let err = Experiment::from_json(&text, "sim.json").unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = format!(
            r#"{{"experiment": "unbiasedness", "trials": 5, "m": 10, "nn": 3, "scenario": {}}}"#,
            scenario()
        );
        assert!(Experiment::from_json(&text, "s").is_err());
        let text = format!(
            r#"{{"experiment": "bias", "trials": 5, "scenario": {}}}"#,
            scenario()
        );
        assert!(Experiment::from_json(&text, "s").is_err());
    }

    #[test]
    fn unbiasedness_runs() {
        let text = format!(
            r#"{{"experiment": "unbiasedness", "trials": 200, "m": 20, "n": 20, "scenario": {}}}"#,
            scenario()
        );
        let r = run(Experiment::from_json(&text, "s").unwrap(), None).unwrap();
        assert!(r.pass, "{}", r.render());
        assert!(r.render().contains("result        PASS"));
    }

    #[test]
    fn seed_override_is_deterministic() {
        let text = format!(
            r#"{{"experiment": "concentration", "trials": 50, "scenario": {}}}"#,
            scenario()
        );
        let e = Experiment::from_json(&text, "s").unwrap();
        assert_eq!(run(e.clone(), Some(9)).unwrap(), run(e, Some(9)).unwrap());
    }
}
