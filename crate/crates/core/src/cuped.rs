//! CUPED variance reduction on (trimmed) group means.
//!
//! The outcome and the covariate are each trimmed on their own order
//! statistics, and the adjustment is applied to the resulting aggregates:
//!
//! ```text
//! Y**_tj = Y_tj - theta * (X_tj - X_t)
//! Var    = Var(Y_tj) + theta^2 Var(X_tj) - 2 theta Cov(Y_tj, X_tj)
//! ```
//!
//! where `X_t` is the pooled trimmed mean of the covariate. No subject-level
//! adjusted data is ever produced. Trimming subject-level residuals
//! `Y - theta X` gives a biased estimate of the trimmed effect; that estimator
//! is kept only as [`naive_trim_after_adjust`] so the bias can be measured.

use crate::error::{Error, Result};
use crate::hypothesis::{
    relative_change, two_sample_test, yuen_from_moments, GroupAggregate, Method, TestReport,
};
use crate::robust::{covariance_from_moments, trimmed_mean, trimmed_moments, TrimmedMoments};
use crate::sample::{Sample, TrimSpec};
use serde::{Deserialize, Serialize};

/// Trimmed moments of an outcome, its covariate and their covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedMoments {
    pub y: TrimmedMoments,
    pub x: TrimmedMoments,
    /// Estimated `Cov(Y_t, X_t)` of the two trimmed means.
    pub cov_yx: f64,
}

impl PairedMoments {
    pub fn compute(y: &[f64], x: &[f64], spec: TrimSpec) -> Result<Self> {
        let my = trimmed_moments(y, spec)?;
        Self::with_outcome_moments(my, y, x, spec)
    }

    /// Reuses already computed outcome moments.
    pub fn with_outcome_moments(
        my: TrimmedMoments,
        y: &[f64],
        x: &[f64],
        spec: TrimSpec,
    ) -> Result<Self> {
        if y.len() != x.len() {
            return Err(Error::LengthMismatch {
                left: y.len(),
                right: x.len(),
            });
        }
        let mx = trimmed_moments(x, spec)?;
        let cov = covariance_from_moments(y, &my, x, &mx)?;
        Ok(PairedMoments {
            y: my,
            x: mx,
            cov_yx: cov.cov_of_trimmed_means,
        })
    }

    /// Variance of `Y_t - theta * X_t`.
    pub fn residual_variance(&self, theta: f64) -> f64 {
        self.y.var_of_trimmed_mean + theta * theta * self.x.var_of_trimmed_mean
            - 2.0 * theta * self.cov_yx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustedGroup {
    pub moments: PairedMoments,
    /// Classical residual `Y_tj - theta * X_tj`.
    pub residual_mean: f64,
    /// `Y**_tj`, interpretable as the group's adjusted trimmed mean.
    pub adjusted_mean: f64,
    pub adjusted_variance: f64,
    pub imputed: usize,
}

impl AdjustedGroup {
    pub fn aggregate(&self) -> GroupAggregate {
        GroupAggregate {
            point_estimate: self.adjusted_mean,
            variance_of_estimate: self.adjusted_variance,
            effective_n: self.moments.y.h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CupedAdjustment {
    pub theta: f64,
    pub pooled_covariate_trimmed_mean: f64,
    /// Variance of the pooled covariate trimmed mean.
    pub pooled_covariate_variance: f64,
    pub control: AdjustedGroup,
    pub treatment: AdjustedGroup,
}

impl CupedAdjustment {
    pub fn delta_hat(&self) -> f64 {
        self.treatment.adjusted_mean - self.control.adjusted_mean
    }

    /// `Y*_t2 - Y*_t1`; equals [`delta_hat`](Self::delta_hat) because the
    /// pooled term cancels.
    pub fn residual_difference(&self) -> f64 {
        self.treatment.residual_mean - self.control.residual_mean
    }

    /// Covariance between the two adjusted means induced by the shared
    /// pooled covariate mean (first-order, `theta^2 Var(X_t)` only).
    pub fn cross_group_covariance(&self) -> f64 {
        self.theta * self.theta * self.pooled_covariate_variance
    }
}

/// Why an adjusted test fell back to its unadjusted counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    AllMissing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CupedOutcome {
    pub report: TestReport,
    pub adjustment: Option<CupedAdjustment>,
    pub fallback: Option<Fallback>,
}

/// `theta` minimising the summed residual variance over the given groups.
pub fn theta_from_moments(groups: &[&PairedMoments]) -> Result<f64> {
    let cov: f64 = groups.iter().map(|g| g.cov_yx).sum();
    let var: f64 = groups.iter().map(|g| g.x.var_of_trimmed_mean).sum();
    if var <= 0.0 {
        return Err(Error::ZeroCovariateVariance);
    }
    Ok(cov / var)
}

fn observed_covariates(s1: &Sample, s2: &Sample) -> Vec<f64> {
    [s1, s2]
        .iter()
        .filter_map(|s| s.covariates())
        .flat_map(|c| c.iter().flatten().copied())
        .collect()
}

/// Trimmed moments of every observed covariate of both groups combined.
pub fn pooled_covariate_moments(
    s1: &Sample,
    s2: &Sample,
    spec: TrimSpec,
) -> Result<TrimmedMoments> {
    let pooled = observed_covariates(s1, s2);
    if pooled.is_empty() {
        return Err(Error::AllMissing);
    }
    trimmed_moments(&pooled, spec)
}

/// Fills each missing covariate with the pooled trimmed mean of the observed
/// ones, which leaves that subject effectively unadjusted.
pub fn impute_missing_covariates(
    s1: &Sample,
    s2: &Sample,
    spec: TrimSpec,
) -> Result<(Sample, Sample, [usize; 2])> {
    let pooled = observed_covariates(s1, s2);
    if pooled.is_empty() {
        return Err(Error::AllMissing);
    }
    if s1.missing_count() == 0 && s2.missing_count() == 0 {
        return Ok((s1.clone(), s2.clone(), [0, 0]));
    }
    let fill = trimmed_mean(&pooled, spec)?;
    let mut a = s1.clone();
    let mut b = s2.clone();
    let counts = [a.fill_missing(fill), b.fill_missing(fill)];
    Ok((a, b, counts))
}

fn complete_pair_moments(s: &Sample, spec: TrimSpec) -> Result<Option<PairedMoments>> {
    let (y, x) = s.complete_pairs();
    if y.is_empty() {
        return Ok(None);
    }
    PairedMoments::compute(&y, &x, spec).map(Some)
}

/// `theta` from subjects with an observed covariate only.
pub fn estimate_theta(s1: &Sample, s2: &Sample, spec: TrimSpec) -> Result<f64> {
    let p1 = complete_pair_moments(s1, spec)?;
    let p2 = complete_pair_moments(s2, spec)?;
    let groups: Vec<&PairedMoments> = p1.iter().chain(p2.iter()).collect();
    if groups.is_empty() {
        return Err(Error::AllMissing);
    }
    theta_from_moments(&groups)
}

fn adjust_group(
    moments: PairedMoments,
    theta: f64,
    pooled_mean: f64,
    imputed: usize,
) -> AdjustedGroup {
    let residual_mean = moments.y.trimmed_mean - theta * moments.x.trimmed_mean;
    let adjusted_mean = moments.y.trimmed_mean - theta * (moments.x.trimmed_mean - pooled_mean);
    AdjustedGroup {
        moments,
        residual_mean,
        adjusted_mean,
        adjusted_variance: moments.residual_variance(theta).max(0.0),
        imputed,
    }
}

pub fn adjust_from_moments(
    control: PairedMoments,
    treatment: PairedMoments,
    theta: f64,
    pooled: &TrimmedMoments,
    imputed: [usize; 2],
) -> CupedAdjustment {
    CupedAdjustment {
        theta,
        pooled_covariate_trimmed_mean: pooled.trimmed_mean,
        pooled_covariate_variance: pooled.var_of_trimmed_mean,
        control: adjust_group(control, theta, pooled.trimmed_mean, imputed[0]),
        treatment: adjust_group(treatment, theta, pooled.trimmed_mean, imputed[1]),
    }
}

fn dense_covariates(s: &Sample) -> Result<Vec<f64>> {
    match s.covariates() {
        None => Err(Error::AllMissing),
        Some(_) => s.complete_covariates().ok_or(Error::MissingCovariates),
    }
}

/// Adjusts both groups with a given `theta`; covariates must be complete.
pub fn adjust(s1: &Sample, s2: &Sample, spec: TrimSpec, theta: f64) -> Result<CupedAdjustment> {
    let x1 = dense_covariates(s1)?;
    let x2 = dense_covariates(s2)?;
    let p1 = PairedMoments::compute(s1.values(), &x1, spec)?;
    let p2 = PairedMoments::compute(s2.values(), &x2, spec)?;
    let pooled = pooled_covariate_moments(s1, s2, spec)?;
    Ok(adjust_from_moments(p1, p2, theta, &pooled, [0, 0]))
}

/// Runs the adjusted test on a finished adjustment.
pub fn cuped_report(
    adjustment: &CupedAdjustment,
    alpha: f64,
    method: Method,
) -> Result<TestReport> {
    let g1 = adjustment.control.aggregate();
    let g2 = adjustment.treatment.aggregate();
    let mut report = two_sample_test(&g1, &g2, alpha, method)?;
    // The shared pooled term adds theta^2 Var(X_t) to each marginal variance
    // as well as to the covariance; it cancels in the difference only.
    let shared = adjustment.cross_group_covariance();
    let with_shared = |g: GroupAggregate| GroupAggregate {
        variance_of_estimate: g.variance_of_estimate + shared,
        ..g
    };
    report.relative_change =
        relative_change(&with_shared(g1), &with_shared(g2), shared, alpha).ok();
    Ok(report)
}

fn cuped_pipeline(
    s1: &Sample,
    s2: &Sample,
    spec: TrimSpec,
    alpha: f64,
    method: Method,
) -> Result<CupedOutcome> {
    let pooled = match pooled_covariate_moments(s1, s2, spec) {
        Ok(p) => p,
        Err(Error::AllMissing) => {
            let m1 = trimmed_moments(s1.values(), spec)?;
            let m2 = trimmed_moments(s2.values(), spec)?;
            let mut report = yuen_from_moments(&m1, &m2, alpha)?;
            report.method = method.with_cuped(false);
            return Ok(CupedOutcome {
                report,
                adjustment: None,
                fallback: Some(Fallback::AllMissing),
            });
        }
        Err(e) => return Err(e),
    };

    // theta from complete pairs, then impute, then adjust.
    let c1 = complete_pair_moments(s1, spec)?;
    let c2 = complete_pair_moments(s2, spec)?;
    let complete: Vec<&PairedMoments> = c1.iter().chain(c2.iter()).collect();
    let theta = theta_from_moments(&complete)?;

    let adjustment = if s1.missing_count() == 0 && s2.missing_count() == 0 {
        let (Some(p1), Some(p2)) = (c1, c2) else {
            unreachable!("complete samples always yield paired moments")
        };
        adjust_from_moments(p1, p2, theta, &pooled, [0, 0])
    } else {
        let mut a = s1.clone();
        let mut b = s2.clone();
        let imputed = [
            a.fill_missing(pooled.trimmed_mean),
            b.fill_missing(pooled.trimmed_mean),
        ];
        let p1 = PairedMoments::compute(a.values(), &dense_covariates(&a)?, spec)?;
        let p2 = PairedMoments::compute(b.values(), &dense_covariates(&b)?, spec)?;
        adjust_from_moments(p1, p2, theta, &pooled, imputed)
    };

    let report = cuped_report(&adjustment, alpha, method)?;
    Ok(CupedOutcome {
        report,
        adjustment: Some(adjustment),
        fallback: None,
    })
}

/// Yuen's test on CUPED-adjusted trimmed means.
///
/// Falls back to the plain Yuen test (with [`Fallback::AllMissing`]) when no
/// covariate is observed at all.
pub fn yuen_cuped_test(
    s1: &Sample,
    s2: &Sample,
    spec: TrimSpec,
    alpha: f64,
) -> Result<CupedOutcome> {
    cuped_pipeline(s1, s2, spec, alpha, Method::YuenCuped)
}

/// Welch's test on CUPED-adjusted means.
pub fn welch_cuped_test(s1: &Sample, s2: &Sample, alpha: f64) -> Result<CupedOutcome> {
    cuped_pipeline(s1, s2, TrimSpec::NONE, alpha, Method::WelchCuped)
}

/// Difference of trimmed means of subject-level residuals `Y - theta X`.
///
/// This estimator is biased for the trimmed effect; it exists only to
/// demonstrate that bias.
pub fn naive_trim_after_adjust(
    s1: &Sample,
    s2: &Sample,
    spec: TrimSpec,
    theta: f64,
) -> Result<f64> {
    let residual_mean = |s: &Sample| -> Result<f64> {
        let x = dense_covariates(s)?;
        let r: Vec<f64> = s
            .values()
            .iter()
            .zip(&x)
            .map(|(y, x)| y - theta * x)
            .collect();
        trimmed_mean(&r, spec)
    };
    Ok(residual_mean(s2)? - residual_mean(s1)?)
}
