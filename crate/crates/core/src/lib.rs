//! Distribution-shift risk certificates from kernel mean embeddings.
//!
//! Given source features with per-sample losses, target features, and a
//! posterior-complexity budget, this crate computes:
//!
//! * unbiased and biased MMD estimates with finite-sample widths and
//!   permutation calibration ([`mmd`]),
//! * PAC-Bayesian target-risk bounds with an MMD shift penalty
//!   ([`pac_bayes`]),
//! * lower/upper risk intervals over the MMD-ball credal set and an
//!   adaptation verdict ([`credal`]),
//! * a kernel ridge estimate of the loss RKHS norm ([`rkhs_norm`]),
//! * geodesic distortion diagnostics ([`geometry`]),
//! * a credal-width adaptive conformal level ([`conformal`]).
//!
//! [`oracle`] holds closed-form Gaussian scenarios and brute-force
//! reference estimators used as ground truth by the tests.
//!
//! ```
//! use credal_cert::credal::{decide_adaptation, risk_interval, CredalSpec, Verdict};
//! use credal_cert::kernel::{median_heuristic, FeatureMatrix};
//! use credal_cert::mmd::{mmd2_unbiased, mmd_upper_confidence};
//! use credal_cert::pac_bayes::PosteriorComplexity;
//!
//! let xs = FeatureMatrix::from_rows(&[[0.0, 0.1], [0.3, -0.2], [0.1, 0.4], [-0.2, 0.0]])?;
//! let xt = FeatureMatrix::from_rows(&[[0.1, 0.0], [0.2, 0.3], [-0.1, 0.1]])?;
//! let kernel = median_heuristic(&xs, &xt)?;
//!
//! let est = mmd2_unbiased(&xs, &xt, &kernel)?;
//! let radius = CredalSpec::fixed(mmd_upper_confidence(&est, 0.05)?)?;
//! let budget = PosteriorComplexity::new(2.0, 500, 0.05)?;
//! let interval = risk_interval(0.08, &budget, 0.5, &radius)?;
//! assert!(interval.lower < 0.08 && 0.08 < interval.upper);
//!
//! let decision = decide_adaptation(&interval, 5.0);
//! assert_eq!(decision.verdict, Verdict::NoAdaptationNeeded);
//! # Ok::<(), credal_cert::Error>(())
//! ```

pub mod conformal;
pub mod credal;
mod error;
pub mod geometry;
pub mod kernel;
pub mod mmd;
pub mod oracle;
pub mod pac_bayes;
pub mod rkhs_norm;

pub use error::{Error, Result};
pub use kernel::{FeatureMatrix, KernelSpec};
pub use mmd::{EstimatorKind, MmdEstimate};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/credal.md")]
    mod credal {}
    #[doc = include_str!("../../../book/src/rkhs_norm.md")]
    mod rkhs_norm {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/conformal.md")]
    mod conformal {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
