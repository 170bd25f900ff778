//! The `analyze` command: ingest a CSV, run one test, build a
//! [`ReportDocument`].

use crate::error::{CliError, Result};
use crate::ingest::ingest_csv;
use crate::report::{
    CupedSummary, Diagnostic, GroupSummary, Groups, ReportDocument, Severity, Status, ToolInfo,
};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use trimcuped::cuped::{welch_cuped_test, yuen_cuped_test, CupedOutcome, Fallback};
use trimcuped::hypothesis::{welch_test, yuen_test};
use trimcuped::robust::trimmed_moments;
use trimcuped::{Error, Method, Sample, TestReport, TrimSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CovariatePolicy {
    /// Every subject must have a covariate.
    #[value(name = "require")]
    Require,
    /// Missing covariates are filled with the pooled trimmed mean.
    #[value(name = "impute_missing")]
    ImputeMissing,
    /// Covariates are dropped; only unadjusted methods are allowed.
    #[value(name = "ignore")]
    Ignore,
}

impl CovariatePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            CovariatePolicy::Require => "require",
            CovariatePolicy::ImputeMissing => "impute_missing",
            CovariatePolicy::Ignore => "ignore",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[value(name = "human_table")]
    HumanTable,
    #[value(name = "json")]
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub input: PathBuf,
    pub gamma: TrimSpec,
    pub alpha: f64,
    pub method: Method,
    pub covariate_policy: CovariatePolicy,
    pub format: OutputFormat,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Usage(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.covariate_policy == CovariatePolicy::Ignore && self.method.is_cuped() {
            return Err(CliError::Usage(format!(
                "method {} requires a covariate but covariate_policy is ignore",
                self.method
            )));
        }
        Ok(())
    }

    fn trim(&self) -> TrimSpec {
        if self.method.is_trimmed() {
            self.gamma
        } else {
            TrimSpec::NONE
        }
    }
}

pub struct Analysis {
    pub document: ReportDocument,
    /// 0 on success, 2 when the data were degenerate.
    pub exit_code: i32,
}

/// Reads the configured input and analyses it.
pub fn run_analysis(config: &AnalysisConfig) -> Result<Analysis> {
    config.validate()?;
    let (control, treatment) = ingest_csv(&config.input)?;
    analyze_samples(config, control, treatment)
}

fn degenerate(e: &Error) -> Option<&'static str> {
    match e {
        Error::DegenerateTrim { .. } => Some("degenerate_trim"),
        Error::ZeroVariance => Some("zero_variance"),
        Error::ZeroCovariateVariance => Some("zero_covariate_variance"),
        _ => None,
    }
}

fn apply_policy(config: &AnalysisConfig, s: Sample, group: &str) -> Result<Sample> {
    match config.covariate_policy {
        CovariatePolicy::Ignore => Ok(s.without_covariates()),
        CovariatePolicy::ImputeMissing => Ok(s),
        CovariatePolicy::Require => {
            let missing = s.missing_count();
            if missing > 0 {
                return Err(CliError::Usage(format!(
                    "covariate_policy is require but {missing} {group} subjects have no covariate"
                )));
            }
            Ok(s)
        }
    }
}

/// Analyses already ingested samples.
pub fn analyze_samples(
    config: &AnalysisConfig,
    control: Sample,
    treatment: Sample,
) -> Result<Analysis> {
    config.validate()?;
    let control = apply_policy(config, control, "control")?;
    let treatment = apply_policy(config, treatment, "treatment")?;
    let trim = config.trim();
    let mut diagnostics = Vec::new();

    let mut summaries = Vec::with_capacity(2);
    for (name, s) in [("control", &control), ("treatment", &treatment)] {
        match trimmed_moments(s.values(), trim) {
            Ok(m) => {
                if m.zero_variance {
                    diagnostics.push(Diagnostic::new(
                        "zero_variance",
                        Severity::Degenerate,
                        Some(name),
                        "every retained observation has the same value".into(),
                    ));
                }
                summaries.push(Some(GroupSummary::new(&m, s)));
            }
            Err(e) => {
                diagnostics.push(Diagnostic::from_error(&e, Some(name)));
                summaries.push(None);
            }
        }
    }

    let result: std::result::Result<CupedOutcome, Error> = match config.method {
        Method::Welch => welch_test(control.values(), treatment.values(), config.alpha).map(plain),
        Method::Yuen => yuen_test(
            control.values(),
            treatment.values(),
            config.gamma,
            config.alpha,
        )
        .map(plain),
        Method::WelchCuped => welch_cuped_test(&control, &treatment, config.alpha),
        Method::YuenCuped => yuen_cuped_test(&control, &treatment, config.gamma, config.alpha),
    };

    let mut test = None;
    let mut cuped = None;
    match result {
        Ok(outcome) => {
            if let Some(Fallback::AllMissing) = outcome.fallback {
                diagnostics.push(Diagnostic::new(
                    "fallback_all_missing",
                    Severity::Degenerate,
                    None,
                    format!(
                        "no covariate observed in either group; reported {} without adjustment",
                        outcome.report.method
                    ),
                ));
            }
            if let Some(adj) = &outcome.adjustment {
                for (group, summary) in [&adj.control, &adj.treatment]
                    .into_iter()
                    .zip(summaries.iter_mut())
                {
                    if let Some(summary) = summary {
                        summary.set_adjustment(group);
                    }
                    if group.imputed > 0 {
                        diagnostics.push(Diagnostic::new(
                            "imputed_covariates",
                            Severity::Info,
                            None,
                            format!(
                                "{} missing covariates filled with the pooled trimmed mean {}",
                                group.imputed, adj.pooled_covariate_trimmed_mean
                            ),
                        ));
                    }
                }
                cuped = Some(CupedSummary::new(adj));
            }
            if outcome.report.relative_change.is_none() {
                diagnostics.push(Diagnostic::new(
                    "relative_change_unavailable",
                    Severity::Info,
                    None,
                    "control estimate is within three standard errors of zero".into(),
                ));
            }
            test = Some(outcome.report);
        }
        Err(e) if degenerate(&e).is_some() => {
            let already = diagnostics
                .iter()
                .any(|d| d.code == degenerate(&e).unwrap_or_default());
            if !already {
                diagnostics.push(Diagnostic::from_error(&e, None));
            }
        }
        Err(e) => return Err(e.into()),
    }

    let status = if diagnostics
        .iter()
        .any(|d| d.severity == Severity::Degenerate)
    {
        Status::Degenerate
    } else {
        Status::Ok
    };
    let groups = match (summaries.remove(0), summaries.remove(0)) {
        (Some(control), Some(treatment)) => Some(Groups { control, treatment }),
        _ => None,
    };
    let exit_code = if status == Status::Ok { 0 } else { 2 };
    Ok(Analysis {
        document: ReportDocument {
            tool: ToolInfo::current(),
            config: config.clone(),
            status,
            method: test.as_ref().map_or(config.method, |t| t.method),
            test,
            groups,
            cuped,
            diagnostics,
        },
        exit_code,
    })
}

fn plain(report: TestReport) -> CupedOutcome {
    CupedOutcome {
        report,
        adjustment: None,
        fallback: None,
    }
}
