//! Ground truth for tests and simulation runs.
//!
//! Scenarios are pairs of isotropic Gaussians, `P_s = N(μ_s, σ²_s I)` and
//! `P_t = N(μ_t, σ²_t I)`. Under the RBF kernel the expected kernel value
//! between two such Gaussians has the closed form
//!
//! ```text
//! E k(x, y) = (1 + 2γ(σ₁² + σ₂²))^(-d/2) · exp(-γ‖μ₁ - μ₂‖² / (1 + 2γ(σ₁² + σ₂²)))
//! ```
//!
//! which gives exact population MMD values for scenarios and for finite
//! mixtures of Gaussians. Losses of the form `L(x) = Σ βⱼ k(zⱼ, x)` lie in
//! the RKHS by construction, with `‖L‖_H = sqrt(βᵀ K_zz β)`, and have a
//! closed-form expectation under any scenario component.
//!
//! [`brute_force_mmd2`] is a literal loop transcription of the estimators
//! that shares no code with [`crate::mmd`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{FeatureMatrix, KernelSpec};
use crate::mmd::EstimatorKind;

/// Size limit for [`brute_force_mmd2`].
pub const BRUTE_FORCE_LIMIT: usize = 200;

/// Smallest Monte-Carlo budget accepted by [`true_target_risk`].
pub const MIN_MC_SAMPLES: usize = 10_000;

/// An isotropic Gaussian `N(mean, var · I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: Vec<f64>,
    pub var: f64,
}

impl GaussianComponent {
    pub fn new(mean: Vec<f64>, var: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::Empty("gaussian mean"));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gaussian mean"));
        }
        if !(var > 0.0 && var.is_finite()) {
            return Err(Error::invalid("var", var, "must be finite and positive"));
        }
        Ok(Self { mean, var })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        let sd = self.var.sqrt();
        for mu in &self.mean {
            let z: f64 = rng.sample(StandardNormal);
            out.push(mu + sd * z);
        }
    }

    /// `count` i.i.d. draws.
    pub fn sample(&self, count: usize, rng: &mut ChaCha8Rng) -> Result<FeatureMatrix> {
        let mut data = Vec::with_capacity(count * self.dim());
        for _ in 0..count {
            self.draw(rng, &mut data);
        }
        FeatureMatrix::new(data, count, self.dim())
    }
}

/// `E k(x, y)` for independent `x ∼ a`, `y ∼ b`. Either variance may be 0
/// (point mass).
pub fn gaussian_kernel_expectation(
    a_mean: &[f64],
    a_var: f64,
    b_mean: &[f64],
    b_var: f64,
    gamma: f64,
) -> f64 {
    let d = a_mean.len() as f64;
    let denom = 1.0 + 2.0 * gamma * (a_var + b_var);
    let sq: f64 = a_mean
        .iter()
        .zip(b_mean)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    denom.powf(-0.5 * d) * (-gamma * sq / denom).exp()
}

fn component_expectation(a: &GaussianComponent, b: &GaussianComponent, gamma: f64) -> f64 {
    gaussian_kernel_expectation(&a.mean, a.var, &b.mean, b.var, gamma)
}

fn mixture_cross(
    p: &[(f64, GaussianComponent)],
    q: &[(f64, GaussianComponent)],
    gamma: f64,
) -> f64 {
    let mut acc = 0.0;
    for (wa, a) in p {
        for (wb, b) in q {
            acc += wa * wb * component_expectation(a, b, gamma);
        }
    }
    acc
}

/// Exact `MMD²` between two finite Gaussian mixtures, given as
/// `(weight, component)` lists with weights summing to one.
pub fn mixture_mmd2(
    p: &[(f64, GaussianComponent)],
    q: &[(f64, GaussianComponent)],
    gamma: f64,
) -> f64 {
    let v =
        mixture_cross(p, p, gamma) + mixture_cross(q, q, gamma) - 2.0 * mixture_cross(p, q, gamma);
    v.max(0.0)
}

/// A synthetic source/target pair with analytically known MMD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftScenario {
    pub d: usize,
    pub mean_s: Vec<f64>,
    pub mean_t: Vec<f64>,
    pub var_s: f64,
    pub var_t: f64,
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ShiftScenario {
    /// Source `N(0, I)`, target shifted by `offset` in every coordinate.
    pub fn mean_shift(d: usize, offset: f64, gamma: f64, seed: u64) -> Self {
        Self {
            d,
            mean_s: vec![0.0; d],
            mean_t: vec![offset; d],
            var_s: 1.0,
            var_t: 1.0,
            gamma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Empty("scenario dimension"));
        }
        for (what, mean) in [("mean_s", &self.mean_s), ("mean_t", &self.mean_t)] {
            if mean.len() != self.d {
                return Err(Error::LengthMismatch {
                    what,
                    expected: self.d,
                    got: mean.len(),
                });
            }
        }
        self.source()?;
        self.target()?;
        self.kernel()?;
        Ok(())
    }

    pub fn source(&self) -> Result<GaussianComponent> {
        GaussianComponent::new(self.mean_s.clone(), self.var_s)
    }

    pub fn target(&self) -> Result<GaussianComponent> {
        GaussianComponent::new(self.mean_t.clone(), self.var_t)
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        KernelSpec::fixed(self.gamma)
    }

    /// Generator for trial `trial`: same seed, one ChaCha stream per trial.
    pub fn rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        rng
    }
}

/// `m` source and `n` target draws, deterministic given the scenario seed.
pub fn sample_scenario(
    s: &ShiftScenario,
    m: usize,
    n: usize,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    sample_scenario_trial(s, m, n, 0)
}

/// [`sample_scenario`] for an independent replicate `trial`.
pub fn sample_scenario_trial(
    s: &ShiftScenario,
    m: usize,
    n: usize,
    trial: u64,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    s.validate()?;
    let mut rng = s.rng(trial);
    let xs = s.source()?.sample(m, &mut rng)?;
    let xt = s.target()?.sample(n, &mut rng)?;
    Ok((xs, xt))
}

/// Exact population `MMD²(P_s, P_t)` of a scenario.
pub fn analytic_mmd2(s: &ShiftScenario) -> Result<f64> {
    s.validate()?;
    Ok(mixture_mmd2(
        &[(1.0, s.source()?)],
        &[(1.0, s.target()?)],
        s.gamma,
    ))
}

fn literal_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let mut sq = 0.0;
    for idx in 0..a.len() {
        sq += (a[idx] - b[idx]) * (a[idx] - b[idx]);
    }
    (-gamma * sq).exp()
}

/// Reference `MMD²` estimator by direct triple loops.
///
/// Limited to `m + n ≤ 200`. The biased value is not clamped.
pub fn brute_force_mmd2(
    xs: &FeatureMatrix,
    xt: &FeatureMatrix,
    k: &KernelSpec,
    kind: EstimatorKind,
) -> Result<f64> {
    let (m, n) = (xs.nrows(), xt.nrows());
    if m + n > BRUTE_FORCE_LIMIT {
        return Err(Error::SizePolicy {
            limit: BRUTE_FORCE_LIMIT,
            got: m + n,
        });
    }
    if xs.ncols() != xt.ncols() {
        return Err(Error::DimensionMismatch {
            expected: xs.ncols(),
            got: xt.ncols(),
        });
    }
    let unbiased = kind == EstimatorKind::Unbiased;
    if unbiased && (m < 2 || n < 2) {
        return Err(Error::InsufficientSamples {
            what: "brute-force unbiased estimate",
            needed: 2,
            got: m.min(n),
        });
    }
    let g = k.gamma;

    let mut ss = 0.0;
    for i in 0..m {
        for j in 0..m {
            if unbiased && i == j {
                continue;
            }
            ss += literal_kernel(xs.row(i), xs.row(j), g);
        }
    }
    let mut tt = 0.0;
    for i in 0..n {
        for j in 0..n {
            if unbiased && i == j {
                continue;
            }
            tt += literal_kernel(xt.row(i), xt.row(j), g);
        }
    }
    let mut st = 0.0;
    for i in 0..m {
        for j in 0..n {
            st += literal_kernel(xs.row(i), xt.row(j), g);
        }
    }
    let (mf, nf) = (m as f64, n as f64);
    let (ds, dt) = if unbiased {
        (mf * (mf - 1.0), nf * (nf - 1.0))
    } else {
        (mf * mf, nf * nf)
    };
    Ok(ss / ds + tt / dt - 2.0 * st / (mf * nf))
}

/// A loss `L(x) = Σⱼ βⱼ k(zⱼ, x)` living in the RKHS by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelExpansion {
    pub centers: FeatureMatrix,
    pub weights: Vec<f64>,
}

impl KernelExpansion {
    pub fn new(centers: FeatureMatrix, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != centers.nrows() {
            return Err(Error::LengthMismatch {
                what: "expansion weights",
                expected: centers.nrows(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("expansion weights"));
        }
        Ok(Self { centers, weights })
    }

    pub fn eval(&self, x: &[f64], gamma: f64) -> f64 {
        self.centers
            .rows()
            .zip(&self.weights)
            .map(|(z, b)| b * literal_kernel(z, x, gamma))
            .sum()
    }

    /// Exact `‖L‖_H = sqrt(βᵀ K_zz β)`.
    pub fn rkhs_norm(&self, gamma: f64) -> f64 {
        let mut acc = 0.0;
        for (za, ba) in self.centers.rows().zip(&self.weights) {
            for (zb, bb) in self.centers.rows().zip(&self.weights) {
                acc += ba * bb * literal_kernel(za, zb, gamma);
            }
        }
        acc.max(0.0).sqrt()
    }

    /// Exact `E_{x∼c} L(x)`.
    pub fn expectation(&self, c: &GaussianComponent, gamma: f64) -> f64 {
        self.centers
            .rows()
            .zip(&self.weights)
            .map(|(z, b)| b * gaussian_kernel_expectation(z, 0.0, &c.mean, c.var, gamma))
            .sum()
    }
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte-Carlo target risk `E_{x∼P_t} L(x)` of a kernel-expansion loss.
pub fn true_target_risk(
    s: &ShiftScenario,
    expansion: &KernelExpansion,
    mc_samples: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    s.validate()?;
    if mc_samples < MIN_MC_SAMPLES {
        return Err(Error::InsufficientSamples {
            what: "Monte-Carlo target risk",
            needed: MIN_MC_SAMPLES,
            got: mc_samples,
        });
    }
    if expansion.centers.ncols() != s.d {
        return Err(Error::DimensionMismatch {
            expected: s.d,
            got: expansion.centers.ncols(),
        });
    }
    let target = s.target()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(s.d);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..mc_samples {
        x.clear();
        target.draw(&mut rng, &mut x);
        let v = expansion.eval(&x, s.gamma);
        sum += v;
        sum_sq += v * v;
    }
    let n = mc_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(RiskEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples: mc_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scenario_1d(offset: f64, var: f64, gamma: f64) -> ShiftScenario {
        ShiftScenario {
            d: 1,
            mean_s: vec![0.0],
            mean_t: vec![offset],
            var_s: var,
            var_t: var,
            gamma,
            seed: 3,
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = ShiftScenario::mean_shift(3, 0.5, 0.2, 42);
        let a = sample_scenario(&s, 10, 12).unwrap();
        let b = sample_scenario(&s, 10, 12).unwrap();
        assert_eq!(a, b);
        let c = sample_scenario_trial(&s, 10, 12, 1).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn tiny_variance_collapses_to_mean() {
        let mut s = ShiftScenario::mean_shift(2, 1.5, 1.0, 1);
        s.var_s = 1e-12;
        s.var_t = 1e-12;
        let (xs, xt) = sample_scenario(&s, 20, 20).unwrap();
        assert!(xs.as_slice().iter().all(|v| v.abs() < 1e-4));
        assert!(xt.as_slice().iter().all(|v| (v - 1.5).abs() < 1e-4));
    }

    #[test]
    fn sample_mean_within_clt_band() {
        let s = ShiftScenario {
            d: 2,
            mean_s: vec![1.0, -2.0],
            mean_t: vec![0.0, 0.0],
            var_s: 4.0,
            var_t: 1.0,
            gamma: 1.0,
            seed: 8,
        };
        let n = 100_000;
        let (xs, _) = sample_scenario(&s, n, 1).unwrap();
        let mean = xs.mean();
        let band = 4.0 * 2.0 / (n as f64).sqrt();
        assert!((mean[0] - 1.0).abs() < band);
        assert!((mean[1] + 2.0).abs() < band);
    }

    #[test]
    fn analytic_examples() {
        let s = ShiftScenario::mean_shift(4, 0.0, 0.3, 0);
        assert_eq!(analytic_mmd2(&s).unwrap(), 0.0);
        // point masses one unit apart
        let v = gaussian_kernel_expectation(&[0.0], 0.0, &[1.0], 0.0, 1.0);
        let two_point = 1.0 + 1.0 - 2.0 * v;
        assert_relative_eq!(two_point, 1.264_241_117_657_115_4, epsilon = 1e-15);
        let near_point = analytic_mmd2(&scenario_1d(1.0, 1e-300, 1.0)).unwrap();
        assert_relative_eq!(near_point, two_point, epsilon = 1e-12);
    }

    #[test]
    fn analytic_symmetry_and_monotonicity() {
        let s = ShiftScenario {
            d: 2,
            mean_s: vec![0.0, 1.0],
            mean_t: vec![0.5, -0.2],
            var_s: 0.7,
            var_t: 1.9,
            gamma: 0.4,
            seed: 0,
        };
        let swapped = ShiftScenario {
            mean_s: s.mean_t.clone(),
            mean_t: s.mean_s.clone(),
            var_s: s.var_t,
            var_t: s.var_s,
            ..s.clone()
        };
        assert_eq!(analytic_mmd2(&s).unwrap(), analytic_mmd2(&swapped).unwrap());

        let mut prev = -1.0;
        for step in 0..30 {
            let v =
                analytic_mmd2(&ShiftScenario::mean_shift(2, 0.1 * step as f64, 0.5, 0)).unwrap();
            assert!(v > prev || (step == 0 && v == 0.0));
            prev = v;
        }
    }

    #[test]
    fn brute_force_basics() {
        let k = KernelSpec::fixed(1.0).unwrap();
        let x = FeatureMatrix::from_rows(&[[0.0, 1.0], [2.0, 0.5]]).unwrap();
        assert_eq!(
            brute_force_mmd2(&x, &x, &k, EstimatorKind::Biased).unwrap(),
            0.0
        );
        let a = FeatureMatrix::from_rows(&[[0.0]]).unwrap();
        let b = FeatureMatrix::from_rows(&[[1.0]]).unwrap();
        assert_relative_eq!(
            brute_force_mmd2(&a, &b, &k, EstimatorKind::Biased).unwrap(),
            1.264_241_117_657_115_4,
            epsilon = 1e-15
        );
        let big = FeatureMatrix::new(vec![0.0; 150], 150, 1).unwrap();
        let small = FeatureMatrix::new(vec![0.0; 51], 51, 1).unwrap();
        assert!(matches!(
            brute_force_mmd2(&big, &small, &k, EstimatorKind::Unbiased),
            Err(Error::SizePolicy { .. })
        ));
    }

    #[test]
    fn target_risk_examples() {
        let s = ShiftScenario::mean_shift(2, 1.0, 0.5, 4);
        let centers = FeatureMatrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let zero = KernelExpansion::new(centers.clone(), vec![0.0, 0.0]).unwrap();
        assert_eq!(true_target_risk(&s, &zero, 10_000, 1).unwrap().mean, 0.0);

        let mut point = s.clone();
        point.var_t = 1e-14;
        let at_mean =
            KernelExpansion::new(FeatureMatrix::from_rows(&[[1.0, 1.0]]).unwrap(), vec![1.0])
                .unwrap();
        assert_relative_eq!(
            true_target_risk(&point, &at_mean, 10_000, 1).unwrap().mean,
            1.0,
            epsilon = 1e-10
        );

        let loss = KernelExpansion::new(centers, vec![0.3, 0.6]).unwrap();
        let mc = true_target_risk(&s, &loss, 200_000, 2).unwrap();
        let exact = loss.expectation(&s.target().unwrap(), s.gamma);
        assert!(
            (mc.mean - exact).abs() < 3.0 * mc.std_error,
            "{mc:?} vs {exact}"
        );
        assert!(true_target_risk(&s, &loss, 100, 2).is_err());
    }

    #[test]
    fn expansion_norm_of_unit_section() {
        let e =
            KernelExpansion::new(FeatureMatrix::from_rows(&[[0.3]]).unwrap(), vec![1.0]).unwrap();
        assert_eq!(e.rkhs_norm(2.0), 1.0);
        assert!(KernelExpansion::new(FeatureMatrix::from_rows(&[[0.3]]).unwrap(), vec![]).is_err());
    }

    #[test]
    fn scenario_validation() {
        let mut s = ShiftScenario::mean_shift(2, 1.0, 0.5, 4);
        s.mean_t.push(1.0);
        assert!(s.validate().is_err());
        let mut s = ShiftScenario::mean_shift(2, 1.0, 0.5, 4);
        s.var_s = 0.0;
        assert!(analytic_mmd2(&s).is_err());
        let mut s = ShiftScenario::mean_shift(2, 1.0, 0.5, 4);
        s.gamma = -1.0;
        assert!(s.validate().is_err());
    }
}
