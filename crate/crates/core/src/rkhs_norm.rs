//! Data-driven estimate of the RKHS loss norm `L_H`.
//!
//! Fits the losses with kernel ridge regression,
//!
//! ```text
//! α̂ = (K + λI)⁻¹ L,        ‖L̂‖²_H = α̂ᵀ K α̂
//! ```
//!
//! and reports `‖L̂‖_H` together with the in-sample residual. A large
//! residual means the losses are poorly explained by the RKHS, in which
//! case the bounded-norm assumption behind the shift penalty is suspect.
//!
//! Feeding per-sample losses `ℓ(w, x, y)` instead of conditional expected
//! losses `L(w, x)` makes the estimate an upwardly noisy proxy: label noise
//! has to be interpolated and inflates the norm.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, FeatureMatrix, KernelSpec};

/// Largest accepted condition estimate of `K + λI`.
pub const MAX_CONDITION: f64 = 1e14;

/// Default ridge is this multiple of `trace(K)/n`.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    /// Estimated `‖L(w, ·)‖_H`.
    pub l_h: f64,
    pub lambda: f64,
    pub n_fit: usize,
    /// Root mean square of `Kα̂ - L`.
    pub residual_rms: f64,
}

/// `DEFAULT_RIDGE_SCALE · trace(K) / n`.
pub fn default_lambda(gram: &DMatrix<f64>) -> f64 {
    DEFAULT_RIDGE_SCALE * gram.trace() / gram.nrows() as f64
}

/// Kernel ridge fit of `losses` on `x`; see the module docs.
pub fn estimate_rkhs_norm(
    x: &FeatureMatrix,
    losses: &[f64],
    k: &KernelSpec,
    lambda: f64,
) -> Result<NormEstimate> {
    let gram = gram_matrix(x, x, k)?;
    estimate_from_gram(&gram, losses, lambda)
}

/// Same as [`estimate_rkhs_norm`] with the ridge chosen by [`default_lambda`].
pub fn estimate_rkhs_norm_default(
    x: &FeatureMatrix,
    losses: &[f64],
    k: &KernelSpec,
) -> Result<NormEstimate> {
    let gram = gram_matrix(x, x, k)?;
    let lambda = default_lambda(&gram);
    estimate_from_gram(&gram, losses, lambda)
}

fn estimate_from_gram(gram: &DMatrix<f64>, losses: &[f64], lambda: f64) -> Result<NormEstimate> {
    let n = gram.nrows();
    if losses.len() != n {
        return Err(Error::LengthMismatch {
            what: "losses",
            expected: n,
            got: losses.len(),
        });
    }
    if losses.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("losses"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(
            "lambda",
            lambda,
            "must be finite and positive",
        ));
    }

    let mut system = gram.clone();
    for i in 0..n {
        system[(i, i)] += lambda;
    }
    let chol = system.cholesky().ok_or(Error::SingularSystem)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let cond = (hi / lo).powi(2);
    if cond.is_nan() || cond > MAX_CONDITION {
        return Err(Error::IllConditioned(cond));
    }

    let target = DVector::from_column_slice(losses);
    let alpha = chol.solve(&target);
    let fitted = gram * &alpha;
    let norm_sq = alpha.dot(&fitted);
    let residual = fitted - &target;
    Ok(NormEstimate {
        l_h: norm_sq.max(0.0).sqrt(),
        lambda,
        n_fit: n,
        residual_rms: (residual.norm_squared() / n as f64).sqrt(),
    })
}

/// Posterior-averaged norm `E_{w∼ρ} ‖L(w, ·)‖_H`, estimated as the mean of
/// one fit per posterior sample.
pub fn posterior_average_norm(estimates: &[NormEstimate]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::Empty("no norm estimates to average"));
    }
    Ok(estimates.iter().map(|e| e.l_h).sum::<f64>() / estimates.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureMatrix {
        let data = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        FeatureMatrix::new(data, n, d).unwrap()
    }

    #[test]
    fn zero_losses_have_zero_norm() {
        let x = FeatureMatrix::from_rows(&[[0.0], [1.0], [2.5]]).unwrap();
        let est =
            estimate_rkhs_norm(&x, &[0.0; 3], &KernelSpec::fixed(1.0).unwrap(), 1e-3).unwrap();
        assert_eq!(est.l_h, 0.0);
        assert_eq!(est.residual_rms, 0.0);
    }

    #[test]
    fn single_point_unit_section() {
        let x = FeatureMatrix::from_rows(&[[0.7, -0.1]]).unwrap();
        let est = estimate_rkhs_norm(&x, &[1.0], &KernelSpec::fixed(3.0).unwrap(), 1e-9).unwrap();
        assert_relative_eq!(est.l_h, 1.0, epsilon = 1e-8);
        assert_eq!(est.n_fit, 1);
    }

    #[test]
    fn recovers_expansion_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_points(&mut rng, 50, 2);
        let k = KernelSpec::fixed(0.5).unwrap();
        let centers = [3usize, 17, 29, 41];
        let beta: Vec<f64> = centers
            .iter()
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let gram = gram_matrix(&x, &x, &k).unwrap();
        let losses: Vec<f64> = (0..50)
            .map(|i| {
                centers
                    .iter()
                    .zip(&beta)
                    .map(|(&c, b)| b * gram[(c, i)])
                    .sum()
            })
            .collect();
        let mut truth = 0.0;
        for (a, ba) in centers.iter().zip(&beta) {
            for (b, bb) in centers.iter().zip(&beta) {
                truth += ba * bb * gram[(*a, *b)];
            }
        }
        let est = estimate_rkhs_norm(&x, &losses, &k, 1e-8).unwrap();
        assert!((est.l_h - truth.sqrt()).abs() / truth.sqrt() < 0.02);
        assert!(est.residual_rms < 1e-6);
    }

    #[test]
    fn ridge_path_monotone_and_scale_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x = random_points(&mut rng, 30, 3);
            let losses: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
            let k = KernelSpec::fixed(0.7).unwrap();
            let norms: Vec<f64> = [1e-6, 1e-3, 1e-1]
                .iter()
                .map(|&l| estimate_rkhs_norm(&x, &losses, &k, l).unwrap().l_h)
                .collect();
            assert!(norms[0] >= norms[1] && norms[1] >= norms[2], "{norms:?}");

            let scaled: Vec<f64> = losses.iter().map(|v| 2.5 * v).collect();
            let a = estimate_rkhs_norm(&x, &losses, &k, 1e-3).unwrap().l_h;
            let b = estimate_rkhs_norm(&x, &scaled, &k, 1e-3).unwrap().l_h;
            assert_relative_eq!(b, 2.5 * a, max_relative = 1e-12);
        }
    }

    #[test]
    fn errors() {
        let x = FeatureMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let k = KernelSpec::fixed(1.0).unwrap();
        assert!(matches!(
            estimate_rkhs_norm(&x, &[1.0], &k, 1e-3),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(estimate_rkhs_norm(&x, &[1.0, 2.0], &k, 0.0).is_err());
        assert!(estimate_rkhs_norm(&x, &[1.0, f64::NAN], &k, 1e-3).is_err());
        // duplicated points with a vanishing ridge
        let dup = FeatureMatrix::from_rows(&[[0.0], [0.0], [0.0]]).unwrap();
        let err = estimate_rkhs_norm(&dup, &[1.0, 2.0, 3.0], &k, 1e-300).unwrap_err();
        assert!(err.is_numerical(), "{err:?}");
    }

    #[test]
    fn default_lambda_is_relative_to_trace() {
        let x = FeatureMatrix::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
        let gram = gram_matrix(&x, &x, &KernelSpec::fixed(1.0).unwrap()).unwrap();
        assert_eq!(default_lambda(&gram), 1e-6);
        let est =
            estimate_rkhs_norm_default(&x, &[0.1, 0.2, 0.3], &KernelSpec::fixed(1.0).unwrap())
                .unwrap();
        assert_eq!(est.lambda, 1e-6);
    }

    #[test]
    fn posterior_average() {
        let e = |l_h| NormEstimate {
            l_h,
            lambda: 1e-3,
            n_fit: 3,
            residual_rms: 0.0,
        };
        assert_eq!(posterior_average_norm(&[e(1.5)]).unwrap(), 1.5);
        assert_eq!(posterior_average_norm(&[e(1.0), e(3.0)]).unwrap(), 2.0);
        assert!(posterior_average_norm(&[]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_points(&mut rng, 25, 2);
        let k = KernelSpec::fixed(1.0).unwrap();
        let base: Vec<f64> = (0..25).map(|_| rng.random_range(0.0..1.0)).collect();
        let fits: Vec<NormEstimate> = (0..20)
            .map(|_| {
                let losses: Vec<f64> = base
                    .iter()
                    .map(|v| v + rng.random_range(-0.1..0.1))
                    .collect();
                estimate_rkhs_norm(&x, &losses, &k, 1e-2).unwrap()
            })
            .collect();
        let avg = posterior_average_norm(&fits).unwrap();
        let lo = fits.iter().map(|f| f.l_h).fold(f64::INFINITY, f64::min);
        let hi = fits.iter().map(|f| f.l_h).fold(0.0, f64::max);
        assert!(lo <= avg && avg <= hi);
    }
}
