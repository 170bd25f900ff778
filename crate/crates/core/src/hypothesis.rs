//! Welch and Yuen two-sample tests.
//!
//! Every test reduces to [`two_sample_test`] on a pair of [`GroupAggregate`]s:
//! Welch passes raw means with `n`, Yuen passes trimmed means with `h`, and
//! the CUPED variants pass adjusted means and variances.

use crate::error::{Error, Result};
use crate::numeric::{normal_quantile, ExactSum};
use crate::robust::{trimmed_moments, TrimmedMoments};
use crate::sample::TrimSpec;
use crate::special::{t_two_sided_p, t_upper_quantile};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Welch,
    WelchCuped,
    Yuen,
    YuenCuped,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Welch,
        Method::WelchCuped,
        Method::Yuen,
        Method::YuenCuped,
    ];

    pub fn is_cuped(self) -> bool {
        matches!(self, Method::WelchCuped | Method::YuenCuped)
    }

    pub fn is_trimmed(self) -> bool {
        matches!(self, Method::Yuen | Method::YuenCuped)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Welch => "welch",
            Method::WelchCuped => "welch_cuped",
            Method::Yuen => "yuen",
            Method::YuenCuped => "yuen_cuped",
        }
    }

    /// The same test with or without the CUPED adjustment.
    pub fn with_cuped(self, cuped: bool) -> Method {
        match (self.is_trimmed(), cuped) {
            (false, false) => Method::Welch,
            (false, true) => Method::WelchCuped,
            (true, false) => Method::Yuen,
            (true, true) => Method::YuenCuped,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                format!("unknown method `{s}` (expected welch, welch_cuped, yuen or yuen_cuped)")
            })
    }
}

/// A group's point estimate together with the variance of that estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupAggregate {
    pub point_estimate: f64,
    pub variance_of_estimate: f64,
    /// `n` for untrimmed estimates, `h` for trimmed ones.
    pub effective_n: usize,
}

impl GroupAggregate {
    pub fn new(point_estimate: f64, variance_of_estimate: f64, effective_n: usize) -> Result<Self> {
        if !point_estimate.is_finite()
            || !variance_of_estimate.is_finite()
            || variance_of_estimate < 0.0
        {
            return Err(Error::Domain(format!(
                "invalid aggregate: estimate {point_estimate}, variance {variance_of_estimate}"
            )));
        }
        if effective_n < 2 {
            return Err(Error::Domain(format!(
                "effective sample size {effective_n} < 2"
            )));
        }
        Ok(GroupAggregate {
            point_estimate,
            variance_of_estimate,
            effective_n,
        })
    }

    pub fn from_moments(m: &TrimmedMoments) -> Self {
        GroupAggregate {
            point_estimate: m.trimmed_mean,
            variance_of_estimate: m.var_of_trimmed_mean,
            effective_n: m.h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeChange {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: Method,
    pub alpha: f64,
    /// Treatment minus control, in the metric's units.
    pub delta_hat: f64,
    pub std_error: f64,
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub relative_change: Option<RelativeChange>,
}

impl TestReport {
    pub fn rejects(&self) -> bool {
        self.p_value < self.alpha
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// Welch–Satterthwaite degrees of freedom from the variances of the two
/// estimates (already divided by the sample size).
pub fn welch_df(var1: f64, var2: f64, n1: usize, n2: usize) -> Result<f64> {
    if !(var1 >= 0.0 && var2 >= 0.0) {
        return Err(Error::Domain(format!("negative variance: {var1}, {var2}")));
    }
    if n1 < 2 || n2 < 2 {
        return Err(Error::Domain(format!(
            "sample sizes must be >= 2, got {n1} and {n2}"
        )));
    }
    let total = var1 + var2;
    if total == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let denom = var1 * var1 / (n1 - 1) as f64 + var2 * var2 / (n2 - 1) as f64;
    Ok(total * total / denom)
}

/// Two-sided test of `est2 - est1 = 0`.
pub fn two_sample_test(
    g1: &GroupAggregate,
    g2: &GroupAggregate,
    alpha: f64,
    method: Method,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    let df = welch_df(
        g1.variance_of_estimate,
        g2.variance_of_estimate,
        g1.effective_n,
        g2.effective_n,
    )?;
    let std_error = (g1.variance_of_estimate + g2.variance_of_estimate).sqrt();
    let delta_hat = g2.point_estimate - g1.point_estimate;
    let t_statistic = delta_hat / std_error;
    let p_value = t_two_sided_p(t_statistic, df)?;
    let half_width = t_upper_quantile(alpha / 2.0, df)? * std_error;
    Ok(TestReport {
        method,
        alpha,
        delta_hat,
        std_error,
        t_statistic,
        degrees_of_freedom: df,
        p_value,
        ci_low: delta_hat - half_width,
        ci_high: delta_hat + half_width,
        relative_change: None,
    })
}

/// Relative change `(est2 - est1) / est1` with a first-order delta-method
/// interval. `cov12` is the covariance between the two estimates.
pub fn relative_change(
    g1: &GroupAggregate,
    g2: &GroupAggregate,
    cov12: f64,
    alpha: f64,
) -> Result<RelativeChange> {
    check_alpha(alpha)?;
    let e1 = g1.point_estimate;
    let e2 = g2.point_estimate;
    let se1 = g1.variance_of_estimate.sqrt();
    if e1 == 0.0 || e1.abs() <= 3.0 * se1 {
        return Err(Error::UnstableDenominator {
            estimate: e1,
            std_error: se1,
        });
    }
    let ratio = e2 / e1;
    let variance = (g2.variance_of_estimate + ratio * ratio * g1.variance_of_estimate
        - 2.0 * ratio * cov12)
        / (e1 * e1);
    let half_width = normal_quantile(1.0 - alpha / 2.0) * variance.max(0.0).sqrt();
    let point = (e2 - e1) / e1;
    Ok(RelativeChange {
        point,
        ci_low: point - half_width,
        ci_high: point + half_width,
    })
}

fn mean_and_variance_of_mean(values: &[f64]) -> Result<GroupAggregate> {
    let n = values.len();
    if n < 2 {
        return Err(Error::DegenerateTrim { n, g: 0, h: n });
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mean = values.iter().copied().collect::<ExactSum>().value() / n as f64;
    let ss: ExactSum = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let s2 = ss.value() / (n - 1) as f64;
    GroupAggregate::new(mean, s2 / n as f64, n)
}

/// Welch's t-test on raw means.
pub fn welch_test(control: &[f64], treatment: &[f64], alpha: f64) -> Result<TestReport> {
    let g1 = mean_and_variance_of_mean(control)?;
    let g2 = mean_and_variance_of_mean(treatment)?;
    let mut report = two_sample_test(&g1, &g2, alpha, Method::Welch)?;
    report.relative_change = relative_change(&g1, &g2, 0.0, alpha).ok();
    Ok(report)
}

/// Yuen's trimmed t-test; each group is trimmed separately.
pub fn yuen_test(
    control: &[f64],
    treatment: &[f64],
    spec: TrimSpec,
    alpha: f64,
) -> Result<TestReport> {
    let m1 = trimmed_moments(control, spec)?;
    let m2 = trimmed_moments(treatment, spec)?;
    yuen_from_moments(&m1, &m2, alpha)
}

pub fn yuen_from_moments(
    m1: &TrimmedMoments,
    m2: &TrimmedMoments,
    alpha: f64,
) -> Result<TestReport> {
    let g1 = GroupAggregate::from_moments(m1);
    let g2 = GroupAggregate::from_moments(m2);
    let mut report = two_sample_test(&g1, &g2, alpha, Method::Yuen)?;
    report.relative_change = relative_change(&g1, &g2, 0.0, alpha).ok();
    Ok(report)
}
