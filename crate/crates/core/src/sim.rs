//! Replicated Monte Carlo experiments: power, false positive rate and mean
//! standard error per method.
//!
//! Replication `r` draws its control group from substream `2r` and its
//! treatment group from substream `2r + 1` of the configured seed, so results
//! do not depend on scheduling, and the first `n` subjects of a larger
//! experiment are exactly the subjects of a smaller one. All methods within a
//! replication see the same data.

use crate::cuped::{
    adjust_from_moments, cuped_report, naive_trim_after_adjust, theta_from_moments,
    welch_cuped_test, yuen_cuped_test, PairedMoments,
};
use crate::distributions::{generate_pairs, substream, Family, MarginalParams, ScenarioSpec};
use crate::error::{Error, Result};
use crate::hypothesis::{
    check_alpha, welch_test, yuen_from_moments, yuen_test, Method, TestReport,
};
use crate::numeric::ExactSum;
use crate::robust::{trimmed_moments, TrimmedMoments};
use crate::sample::{Sample, TrimSpec};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Replication count used by the published tables.
pub const FULL_SCALE_REPLICATIONS: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub name: String,
    pub scenario: ScenarioSpec,
    pub n_per_group: usize,
    pub replications: usize,
    pub gamma: TrimSpec,
    pub alpha: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Fraction of covariates dropped at random in every group.
    #[serde(default)]
    pub missing_covariate_fraction: f64,
    /// Also estimate the trim-after-adjust estimator on every replication.
    #[serde(default)]
    pub track_naive: bool,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        check_alpha(self.alpha)?;
        if self.replications < 1 {
            return Err(Error::InvalidScenario(
                "replications must be at least 1".into(),
            ));
        }
        if self.n_per_group < 10 {
            return Err(Error::InvalidScenario(format!(
                "n_per_group must be at least 10, got {}",
                self.n_per_group
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidScenario(
                "at least one method is required".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.missing_covariate_fraction) {
            return Err(Error::InvalidScenario(format!(
                "missing_covariate_fraction must lie in [0, 1), got {}",
                self.missing_covariate_fraction
            )));
        }
        Ok(())
    }

    fn trim_for(&self, method: Method) -> TrimSpec {
        if method.is_trimmed() {
            self.gamma
        } else {
            TrimSpec::NONE
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Trim proportion actually applied (0 for the Welch methods).
    pub gamma: f64,
    /// Replications that produced a test; rates are over these.
    pub replications_used: usize,
    /// Replications excluded because trimming or variances degenerated.
    pub degenerate: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    pub rejection_rate_se: f64,
    /// Mean of the t-statistic denominator (standard error).
    pub mean_std_error: f64,
    pub mean_delta_hat: f64,
    /// Monte Carlo standard error of `mean_delta_hat`.
    pub delta_hat_se: f64,
}

/// Mean and Monte Carlo standard error of an estimator over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub replications_used: usize,
    pub degenerate: usize,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub name: String,
    pub family: Family,
    pub spearman_rho: f64,
    pub n_per_group: usize,
    pub replications: usize,
    pub seed: u64,
    pub gamma: f64,
    pub alpha: f64,
    pub true_effect: f64,
    /// Difference of the population trimmed means at `gamma`.
    pub true_trimmed_effect: f64,
    pub methods: Vec<MethodSummary>,
    pub naive: Option<EstimatorSummary>,
}

impl SimResult {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// `|true_effect - true_trimmed_effect|`.
    pub fn trimming_gap(&self) -> f64 {
        (self.true_effect - self.true_trimmed_effect).abs()
    }
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    rejected: bool,
    std_error: f64,
    delta_hat: f64,
}

impl From<&TestReport> for Outcome {
    fn from(r: &TestReport) -> Self {
        Outcome {
            rejected: r.rejects(),
            std_error: r.std_error,
            delta_hat: r.delta_hat,
        }
    }
}

struct Replication {
    outcomes: Vec<Option<Outcome>>,
    naive: Option<Option<f64>>,
}

struct Prepared {
    control: MarginalParams,
    treatment: MarginalParams,
}

fn draw_group(
    spec: &SimScenario,
    outcome: &MarginalParams,
    covariate: &MarginalParams,
    stream: u64,
) -> (Vec<f64>, Vec<f64>, Option<Vec<bool>>) {
    let mut rng = substream(spec.seed, stream);
    let (y, x) = generate_pairs(
        outcome,
        covariate,
        spec.scenario.spearman_rho,
        spec.n_per_group,
        &mut rng,
    );
    let mask = (spec.missing_covariate_fraction > 0.0).then(|| {
        (0..spec.n_per_group)
            .map(|_| rng.random::<f64>() < spec.missing_covariate_fraction)
            .collect()
    });
    (y, x, mask)
}

/// Everything one trim level needs, computed once and shared by the plain
/// and adjusted tests.
struct Level {
    y1: TrimmedMoments,
    y2: TrimmedMoments,
    cuped: Option<Result<(PairedMoments, PairedMoments, TrimmedMoments)>>,
}

fn level(
    y1: &[f64],
    x1: &[f64],
    y2: &[f64],
    x2: &[f64],
    spec: TrimSpec,
    cuped: bool,
) -> Result<Level> {
    let m1 = trimmed_moments(y1, spec)?;
    let m2 = trimmed_moments(y2, spec)?;
    let cuped = cuped.then(|| {
        let p1 = PairedMoments::with_outcome_moments(m1, y1, x1, spec)?;
        let p2 = PairedMoments::with_outcome_moments(m2, y2, x2, spec)?;
        let pooled: Vec<f64> = x1.iter().chain(x2).copied().collect();
        let pooled = trimmed_moments(&pooled, spec)?;
        Ok((p1, p2, pooled))
    });
    Ok(Level {
        y1: m1,
        y2: m2,
        cuped,
    })
}

fn run_complete(spec: &SimScenario, y1: &[f64], x1: &[f64], y2: &[f64], x2: &[f64]) -> Replication {
    let mut outcomes = vec![None; spec.methods.len()];
    let mut naive = None;
    for trim in [TrimSpec::NONE, spec.gamma] {
        let wanted: Vec<usize> = (0..spec.methods.len())
            .filter(|&i| spec.trim_for(spec.methods[i]) == trim && outcomes[i].is_none())
            .collect();
        let track_naive = spec.track_naive && trim == spec.gamma && naive.is_none();
        if wanted.is_empty() && !track_naive {
            continue;
        }
        let needs_cuped = track_naive || wanted.iter().any(|&i| spec.methods[i].is_cuped());
        let Ok(lv) = level(y1, x1, y2, x2, trim, needs_cuped) else {
            if track_naive {
                naive = Some(None);
            }
            continue;
        };
        let mut theta = None;
        for &i in &wanted {
            let method = spec.methods[i];
            let report = if method.is_cuped() {
                match lv.cuped.as_ref() {
                    Some(Ok((p1, p2, pooled))) => theta_from_moments(&[p1, p2]).and_then(|t| {
                        theta = Some(t);
                        cuped_report(
                            &adjust_from_moments(*p1, *p2, t, pooled, [0, 0]),
                            spec.alpha,
                            method,
                        )
                    }),
                    Some(Err(e)) => Err(e.clone()),
                    None => unreachable!(),
                }
            } else {
                yuen_from_moments(&lv.y1, &lv.y2, spec.alpha).map(|mut r| {
                    r.method = method;
                    r
                })
            };
            outcomes[i] = report.ok().as_ref().map(Outcome::from);
        }
        if track_naive {
            let theta = theta.map(Ok).unwrap_or_else(|| match lv.cuped.as_ref() {
                Some(Ok((p1, p2, _))) => theta_from_moments(&[p1, p2]),
                Some(Err(e)) => Err(e.clone()),
                None => unreachable!(),
            });
            naive = Some(theta.ok().and_then(|t| {
                let s1 = Sample::with_complete_covariates(y1.to_vec(), x1.to_vec()).ok()?;
                let s2 = Sample::with_complete_covariates(y2.to_vec(), x2.to_vec()).ok()?;
                naive_trim_after_adjust(&s1, &s2, trim, t).ok()
            }));
        }
    }
    Replication { outcomes, naive }
}

fn masked_sample(y: Vec<f64>, x: Vec<f64>, mask: &[bool]) -> Result<Sample> {
    let cov = x
        .into_iter()
        .zip(mask)
        .map(|(x, &m)| (!m).then_some(x))
        .collect();
    Sample::with_covariates(y, cov)
}

fn run_masked(
    spec: &SimScenario,
    (y1, x1, m1): (Vec<f64>, Vec<f64>, Vec<bool>),
    (y2, x2, m2): (Vec<f64>, Vec<f64>, Vec<bool>),
) -> Replication {
    let samples = masked_sample(y1, x1, &m1).and_then(|a| Ok((a, masked_sample(y2, x2, &m2)?)));
    let Ok((s1, s2)) = samples else {
        return Replication {
            outcomes: vec![None; spec.methods.len()],
            naive: spec.track_naive.then_some(None),
        };
    };
    let outcomes = spec
        .methods
        .iter()
        .map(|&method| {
            let report = match method {
                Method::Welch => welch_test(s1.values(), s2.values(), spec.alpha),
                Method::Yuen => yuen_test(s1.values(), s2.values(), spec.gamma, spec.alpha),
                Method::WelchCuped => welch_cuped_test(&s1, &s2, spec.alpha).map(|o| o.report),
                Method::YuenCuped => {
                    yuen_cuped_test(&s1, &s2, spec.gamma, spec.alpha).map(|o| o.report)
                }
            };
            report.ok().as_ref().map(Outcome::from)
        })
        .collect();
    // The naive estimator needs complete pairs; it is not defined here.
    Replication {
        outcomes,
        naive: spec.track_naive.then_some(None),
    }
}

fn replicate(spec: &SimScenario, prepared: &Prepared, r: u64) -> Replication {
    let (y1, x1, m1) = draw_group(spec, &prepared.control, &prepared.control, 2 * r);
    let (y2, x2, m2) = draw_group(spec, &prepared.treatment, &prepared.control, 2 * r + 1);
    match (m1, m2) {
        (Some(m1), Some(m2)) => run_masked(spec, (y1, x1, m1), (y2, x2, m2)),
        _ => run_complete(spec, &y1, &x1, &y2, &x2),
    }
}

fn summarize_estimates(values: impl Iterator<Item = Option<f64>>) -> (usize, usize, f64, f64) {
    let mut used = 0;
    let mut degenerate = 0;
    let mut sum = ExactSum::new();
    let mut kept = Vec::new();
    for v in values {
        match v {
            Some(v) => {
                used += 1;
                sum.add(v);
                kept.push(v);
            }
            None => degenerate += 1,
        }
    }
    if used == 0 {
        return (0, degenerate, f64::NAN, f64::NAN);
    }
    let mean = sum.value() / used as f64;
    let se = if used > 1 {
        let ss: ExactSum = kept.iter().map(|v| (v - mean) * (v - mean)).collect();
        (ss.value() / (used - 1) as f64 / used as f64).sqrt()
    } else {
        f64::NAN
    };
    (used, degenerate, mean, se)
}

fn summarize(method: Method, gamma: f64, reps: &[Replication], index: usize) -> MethodSummary {
    let outcomes: Vec<Option<Outcome>> = reps.iter().map(|r| r.outcomes[index]).collect();
    let rejections = outcomes.iter().flatten().filter(|o| o.rejected).count();
    let (used, degenerate, mean_delta_hat, delta_hat_se) =
        summarize_estimates(outcomes.iter().map(|o| o.map(|o| o.delta_hat)));
    let mean_std_error = if used == 0 {
        f64::NAN
    } else {
        outcomes
            .iter()
            .flatten()
            .map(|o| o.std_error)
            .collect::<ExactSum>()
            .value()
            / used as f64
    };
    let rate = if used == 0 {
        f64::NAN
    } else {
        rejections as f64 / used as f64
    };
    MethodSummary {
        method,
        gamma,
        replications_used: used,
        degenerate,
        rejections,
        rejection_rate: rate,
        rejection_rate_se: (rate * (1.0 - rate) / used as f64).sqrt(),
        mean_std_error,
        mean_delta_hat,
        delta_hat_se,
    }
}

/// Runs every replication of one scenario and aggregates per method.
pub fn run_grid(spec: &SimScenario) -> Result<SimResult> {
    spec.validate()?;
    let prepared = Prepared {
        control: spec.scenario.control_marginal()?,
        treatment: spec.scenario.treatment_marginal()?,
    };
    let gamma = spec.gamma.gamma();
    let true_trimmed_effect = prepared.treatment.population_trimmed_mean(gamma)?
        - prepared.control.population_trimmed_mean(gamma)?;

    let reps: Vec<Replication> = (0..spec.replications as u64)
        .into_par_iter()
        .map(|r| replicate(spec, &prepared, r))
        .collect();

    let methods = spec
        .methods
        .iter()
        .enumerate()
        .map(|(i, &m)| summarize(m, spec.trim_for(m).gamma(), &reps, i))
        .collect();
    let naive = spec.track_naive.then(|| {
        let (used, degenerate, mean, se) =
            summarize_estimates(reps.iter().map(|r| r.naive.flatten()));
        EstimatorSummary {
            replications_used: used,
            degenerate,
            mean,
            se,
        }
    });

    Ok(SimResult {
        name: spec.name.clone(),
        family: spec.scenario.family,
        spearman_rho: spec.scenario.spearman_rho,
        n_per_group: spec.n_per_group,
        replications: spec.replications,
        seed: spec.seed,
        gamma,
        alpha: spec.alpha,
        true_effect: spec.scenario.effect,
        true_trimmed_effect,
        methods,
        naive,
    })
}

/// One [`SimResult`] per trim proportion, all drawn from the same seed.
pub fn gamma_sweep(spec: &SimScenario, gammas: &[f64]) -> Result<Vec<SimResult>> {
    let specs = gammas
        .iter()
        .map(|&g| {
            Ok(SimScenario {
                gamma: TrimSpec::new(g)?,
                ..spec.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    specs.iter().map(run_grid).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(methods: Vec<Method>) -> SimScenario {
        SimScenario {
            name: "unit".into(),
            scenario: ScenarioSpec {
                family: Family::Normal,
                mean: 5.0,
                sd: 1.0,
                zero_fraction: 0.0,
                spearman_rho: 0.9,
                effect: 0.5,
            },
            n_per_group: 50,
            replications: 20,
            gamma: TrimSpec::new(0.1).unwrap(),
            alpha: 0.05,
            methods,
            seed: 11,
            missing_covariate_fraction: 0.0,
            track_naive: false,
        }
    }

    #[test]
    fn validation() {
        let mut s = small(vec![Method::Welch]);
        s.methods.clear();
        assert!(s.validate().is_err());
        let mut s = small(vec![Method::Welch]);
        s.n_per_group = 9;
        assert!(s.validate().is_err());
        let mut s = small(vec![Method::Welch]);
        s.replications = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn single_replication_rate_is_binary() {
        let mut s = small(Method::ALL.to_vec());
        s.replications = 1;
        let r = run_grid(&s).unwrap();
        for m in &r.methods {
            assert!(m.rejection_rate == 0.0 || m.rejection_rate == 1.0);
        }
    }

    #[test]
    fn masked_path_runs_every_method() {
        let mut s = small(Method::ALL.to_vec());
        s.missing_covariate_fraction = 0.2;
        let r = run_grid(&s).unwrap();
        for m in &r.methods {
            assert_eq!(m.replications_used, 20);
        }
    }

    #[test]
    fn complete_and_masked_paths_agree_without_missing_values() {
        // The masked path with nothing masked runs the public pipeline
        // functions; the complete path reuses moments. They must agree.
        let s = small(Method::ALL.to_vec());
        let prepared = Prepared {
            control: s.scenario.control_marginal().unwrap(),
            treatment: s.scenario.treatment_marginal().unwrap(),
        };
        let (y1, x1, _) = draw_group(&s, &prepared.control, &prepared.control, 0);
        let (y2, x2, _) = draw_group(&s, &prepared.treatment, &prepared.control, 1);
        let fast = run_complete(&s, &y1, &x1, &y2, &x2);
        let none = vec![false; s.n_per_group];
        let slow = run_masked(&s, (y1, x1, none.clone()), (y2, x2, none));
        for (a, b) in fast.outcomes.iter().zip(&slow.outcomes) {
            let (a, b) = (a.unwrap(), b.unwrap());
            assert_eq!(a.rejected, b.rejected);
            assert!((a.std_error - b.std_error).abs() <= 1e-12 * a.std_error);
            assert!((a.delta_hat - b.delta_hat).abs() <= 1e-12 * a.std_error);
        }
    }
}
