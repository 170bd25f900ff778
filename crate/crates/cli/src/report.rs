//! The analysis report document and its human-readable rendering.

use crate::analyze::AnalysisConfig;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use trimcuped::cuped::{AdjustedGroup, CupedAdjustment};
use trimcuped::{Error, Method, Sample, TestReport, TrimmedMoments};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        ToolInfo {
            name: "trimcuped".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: String,
    pub severity: Severity,
    pub group: Option<String>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: &str, severity: Severity, group: Option<&str>, message: String) -> Self {
        Diagnostic {
            code: code.into(),
            severity,
            group: group.map(str::to_string),
            message,
        }
    }

    pub fn from_error(e: &Error, group: Option<&str>) -> Self {
        let code = match e {
            Error::DegenerateTrim { .. } => "degenerate_trim",
            Error::ZeroVariance => "zero_variance",
            Error::ZeroCovariateVariance => "zero_covariate_variance",
            _ => "error",
        };
        Diagnostic::new(code, Severity::Degenerate, group, e.to_string())
    }
}

/// Per-group aggregates. For untrimmed methods `g = 0`, `h = n` and the
/// trimmed mean is the sample mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub g: usize,
    pub h: usize,
    pub trimmed_mean: f64,
    pub winsorized_variance: f64,
    pub variance_of_trimmed_mean: f64,
    pub zero_variance: bool,
    pub covariates_observed: usize,
    pub covariates_imputed: usize,
    pub covariate_trimmed_mean: Option<f64>,
    pub adjusted_mean: Option<f64>,
    pub adjusted_variance: Option<f64>,
}

impl GroupSummary {
    pub fn new(m: &TrimmedMoments, s: &Sample) -> Self {
        GroupSummary {
            n: m.n,
            g: m.g,
            h: m.h,
            trimmed_mean: m.trimmed_mean,
            winsorized_variance: m.winsorized_variance,
            variance_of_trimmed_mean: m.var_of_trimmed_mean,
            zero_variance: m.zero_variance,
            covariates_observed: s.len() - s.missing_count(),
            covariates_imputed: 0,
            covariate_trimmed_mean: None,
            adjusted_mean: None,
            adjusted_variance: None,
        }
    }

    pub fn set_adjustment(&mut self, a: &AdjustedGroup) {
        self.covariates_imputed = a.imputed;
        self.covariate_trimmed_mean = Some(a.moments.x.trimmed_mean);
        self.adjusted_mean = Some(a.adjusted_mean);
        self.adjusted_variance = Some(a.adjusted_variance);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Groups {
    pub control: GroupSummary,
    pub treatment: GroupSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CupedSummary {
    pub theta: f64,
    pub pooled_covariate_trimmed_mean: f64,
    pub pooled_covariate_variance: f64,
    pub cross_group_covariance: f64,
}

impl CupedSummary {
    pub fn new(a: &CupedAdjustment) -> Self {
        CupedSummary {
            theta: a.theta,
            pooled_covariate_trimmed_mean: a.pooled_covariate_trimmed_mean,
            pooled_covariate_variance: a.pooled_covariate_variance,
            cross_group_covariance: a.cross_group_covariance(),
        }
    }
}

/// Everything `analyze` writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool: ToolInfo,
    pub config: AnalysisConfig,
    pub status: Status,
    /// The method actually reported, which differs from the configured one
    /// after a fallback.
    pub method: Method,
    pub test: Option<TestReport>,
    pub groups: Option<Groups>,
    pub cuped: Option<CupedSummary>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ReportDocument {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(
            out,
            "{} {}  method {}  gamma {}  alpha {}  covariates {}",
            self.tool.name,
            self.tool.version,
            self.method,
            c.gamma.gamma(),
            c.alpha,
            c.covariate_policy.as_str()
        );
        if let Some(groups) = &self.groups {
            let _ = writeln!(
                out,
                "\n{:<10} {:>9} {:>7} {:>9} {:>14} {:>14} {:>14}",
                "group", "n", "g", "h", "trimmed mean", "adjusted mean", "var(estimate)"
            );
            for (name, s) in [
                ("control", &groups.control),
                ("treatment", &groups.treatment),
            ] {
                let adjusted = s
                    .adjusted_mean
                    .map_or("-".to_string(), |v| format!("{v:.6}"));
                let var = s.adjusted_variance.unwrap_or(s.variance_of_trimmed_mean);
                let _ = writeln!(
                    out,
                    "{:<10} {:>9} {:>7} {:>9} {:>14.6} {:>14} {:>14.6e}",
                    name, s.n, s.g, s.h, s.trimmed_mean, adjusted, var
                );
            }
        }
        if let Some(cuped) = &self.cuped {
            let _ = writeln!(
                out,
                "\ntheta {:.6}  pooled covariate trimmed mean {:.6}",
                cuped.theta, cuped.pooled_covariate_trimmed_mean
            );
        }
        if let Some(t) = &self.test {
            let _ = writeln!(out, "\ndelta     {:.6}", t.delta_hat);
            let _ = writeln!(out, "std error {:.6}", t.std_error);
            let _ = writeln!(
                out,
                "t         {:.4}  (df {:.1})",
                t.t_statistic, t.degrees_of_freedom
            );
            let _ = writeln!(out, "p-value   {:.4e}", t.p_value);
            let _ = writeln!(
                out,
                "{:.0}% CI    [{:.6}, {:.6}]",
                100.0 * (1.0 - t.alpha),
                t.ci_low,
                t.ci_high
            );
            if let Some(r) = &t.relative_change {
                let _ = writeln!(
                    out,
                    "relative  {:+.4}%  [{:+.4}%, {:+.4}%]",
                    100.0 * r.point,
                    100.0 * r.ci_low,
                    100.0 * r.ci_high
                );
            }
        }
        if !self.diagnostics.is_empty() {
            let _ = writeln!(out, "\ndiagnostics:");
            for d in &self.diagnostics {
                let group = d
                    .group
                    .as_deref()
                    .map(|g| format!(" [{g}]"))
                    .unwrap_or_default();
                let _ = writeln!(out, "  {:?} {}{}: {}", d.severity, d.code, group, d.message);
            }
        }
        out
    }
}
