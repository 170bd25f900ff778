//! Two-sample inference for controlled experiments on heavy-tailed metrics.
//!
//! The crate is organised bottom-up:
//!
//! * [`robust`] computes trimmed means, winsorized variances and the
//!   variance/covariance estimators of trimmed means.
//! * [`special`] and [`hypothesis`] turn per-group aggregates into Welch or
//!   Yuen test reports (statistic, degrees of freedom, p-value, interval).
//! * [`cuped`] combines trimming with CUPED variance reduction: each variable
//!   is trimmed on its own order statistics and the adjustment is applied to
//!   the aggregates, never to subject-level residuals.
//! * [`distributions`] generates the normal, lognormal and zero-inflated
//!   lognormal scenarios with Gaussian-copula covariates.
//! * [`sim`] replicates experiments to estimate power, false positive rate
//!   and the mean standard error of each method.

pub mod cuped;
pub mod distributions;
pub mod error;
pub mod hypothesis;
pub mod numeric;
pub mod robust;
pub mod sample;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use hypothesis::{GroupAggregate, Method, RelativeChange, TestReport};
pub use robust::{TrimmedCovariance, TrimmedMoments};
pub use sample::{Sample, TrimSpec};
