//! The `simulate` command: scenario grids from a TOML file, rendered as
//! tables (rows: family and test, columns: rho and with/without CUPED) and
//! as newline-delimited JSON records.

use crate::error::{CliError, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use trimcuped::distributions::{Family, ScenarioSpec};
use trimcuped::sim::{gamma_sweep, SimResult, SimScenario, FULL_SCALE_REPLICATIONS};
use trimcuped::{Method, TrimSpec};

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub name: String,
    pub family: Family,
    pub mean: f64,
    pub sd: f64,
    #[serde(default)]
    pub zero_fraction: f64,
    pub spearman_rho: f64,
    #[serde(default)]
    pub effect: f64,
}

impl ScenarioEntry {
    pub fn spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            family: self.family,
            mean: self.mean,
            sd: self.sd,
            zero_fraction: self.zero_fraction,
            spearman_rho: self.spearman_rho,
            effect: self.effect,
        }
    }
}

/// Settings shared by every scenario of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_per_group: usize,
    pub replications: usize,
    pub gamma: TrimSpec,
    pub alpha: f64,
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub missing_covariate_fraction: f64,
    #[serde(default)]
    pub track_naive: bool,
    pub scenarios: Vec<ScenarioEntry>,
}

impl SimConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let config: SimConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if config.scenarios.is_empty() {
            return Err(CliError::Config {
                path: path.to_path_buf(),
                message: "at least one [[scenarios]] entry is required".into(),
            });
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimOverrides {
    pub replications: Option<usize>,
    pub full_scale: bool,
    pub seed: Option<u64>,
    pub gammas: Option<Vec<f64>>,
    pub effect: Option<f64>,
    pub n_per_group: Option<usize>,
}

/// A fully resolved scenario together with its trim proportions.
#[derive(Debug, Clone)]
pub struct Job {
    pub entry: ScenarioEntry,
    pub scenario: SimScenario,
    pub gammas: Vec<f64>,
}

pub fn resolve(config: &SimConfig, overrides: &SimOverrides, path: &Path) -> Result<Vec<Job>> {
    if overrides.full_scale && overrides.replications.is_some() {
        return Err(CliError::Usage(
            "--full-scale and --replications are mutually exclusive".into(),
        ));
    }
    let replications = if overrides.full_scale {
        FULL_SCALE_REPLICATIONS
    } else {
        overrides.replications.unwrap_or(config.replications)
    };
    let gammas = overrides
        .gammas
        .clone()
        .unwrap_or_else(|| vec![config.gamma.gamma()]);
    for &g in &gammas {
        TrimSpec::new(g)?;
    }
    config
        .scenarios
        .iter()
        .map(|entry| {
            let mut entry = entry.clone();
            if let Some(effect) = overrides.effect {
                entry.effect = effect;
            }
            let scenario = SimScenario {
                name: entry.name.clone(),
                scenario: entry.spec(),
                n_per_group: overrides.n_per_group.unwrap_or(config.n_per_group),
                replications,
                gamma: config.gamma,
                alpha: config.alpha,
                methods: config.methods.clone(),
                seed: overrides.seed.unwrap_or(config.seed),
                missing_covariate_fraction: config.missing_covariate_fraction,
                track_naive: config.track_naive,
            };
            scenario.validate().map_err(|e| CliError::Config {
                path: path.to_path_buf(),
                message: format!("scenario `{}`: {e}", entry.name),
            })?;
            Ok(Job {
                entry,
                scenario,
                gammas: gammas.clone(),
            })
        })
        .collect()
}

/// One scenario's results, one per trim proportion.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub entry: ScenarioEntry,
    pub results: Vec<SimResult>,
}

pub fn run_jobs(jobs: &[Job]) -> Result<Vec<ScenarioRun>> {
    jobs.iter()
        .map(|job| {
            Ok(ScenarioRun {
                entry: job.entry.clone(),
                results: gamma_sweep(&job.scenario, &job.gammas)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub scenario: String,
    pub family: Family,
    pub mean: f64,
    pub sd: f64,
    pub zero_fraction: f64,
    pub spearman_rho: f64,
    pub effect: f64,
    pub n_per_group: usize,
    pub replications: usize,
    pub seed: u64,
    pub gamma: f64,
    pub alpha: f64,
    pub true_effect: f64,
    pub true_trimmed_effect: f64,
}

/// One line of the structured simulation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum SimRecord {
    Method {
        #[serde(flatten)]
        setting: Setting,
        method: Method,
        /// Trim proportion the method applied (0 for the untrimmed tests).
        trim_applied: f64,
        replications_used: usize,
        degenerate: usize,
        rejections: usize,
        rejection_rate: f64,
        rejection_rate_se: f64,
        mean_std_error: f64,
        mean_delta_hat: f64,
        delta_hat_se: f64,
    },
    NaiveTrimAfterAdjust {
        #[serde(flatten)]
        setting: Setting,
        replications_used: usize,
        degenerate: usize,
        estimate_mean: f64,
        estimate_se: f64,
    },
}

pub fn records(runs: &[ScenarioRun]) -> Vec<SimRecord> {
    let mut out = Vec::new();
    for run in runs {
        for r in &run.results {
            let e = &run.entry;
            let setting = Setting {
                scenario: e.name.clone(),
                family: e.family,
                mean: e.mean,
                sd: e.sd,
                zero_fraction: e.zero_fraction,
                spearman_rho: e.spearman_rho,
                effect: e.effect,
                n_per_group: r.n_per_group,
                replications: r.replications,
                seed: r.seed,
                gamma: r.gamma,
                alpha: r.alpha,
                true_effect: r.true_effect,
                true_trimmed_effect: r.true_trimmed_effect,
            };
            for m in &r.methods {
                out.push(SimRecord::Method {
                    setting: setting.clone(),
                    method: m.method,
                    trim_applied: m.gamma,
                    replications_used: m.replications_used,
                    degenerate: m.degenerate,
                    rejections: m.rejections,
                    rejection_rate: m.rejection_rate,
                    rejection_rate_se: m.rejection_rate_se,
                    mean_std_error: m.mean_std_error,
                    mean_delta_hat: m.mean_delta_hat,
                    delta_hat_se: m.delta_hat_se,
                });
            }
            if let Some(n) = &r.naive {
                out.push(SimRecord::NaiveTrimAfterAdjust {
                    setting,
                    replications_used: n.replications_used,
                    degenerate: n.degenerate,
                    estimate_mean: n.mean,
                    estimate_se: n.se,
                });
            }
        }
    }
    out
}

pub fn to_ndjson(records: &[SimRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

/// Rows share everything but `spearman_rho`; columns are the rho values.
#[derive(PartialEq)]
struct BlockKey {
    family: Family,
    mean: f64,
    sd: f64,
    zero_fraction: f64,
    effect: f64,
}

impl BlockKey {
    fn of(e: &ScenarioEntry) -> Self {
        BlockKey {
            family: e.family,
            mean: e.mean,
            sd: e.sd,
            zero_fraction: e.zero_fraction,
            effect: e.effect,
        }
    }
}

fn fmt_cell(v: Option<f64>, precision: usize) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.precision$}"),
        _ => "-".into(),
    }
}

type Column = fn(&trimcuped::sim::MethodSummary) -> f64;

pub fn to_table(runs: &[ScenarioRun]) -> String {
    let mut out = String::new();
    let Some(first) = runs.first().and_then(|r| r.results.first()) else {
        return out;
    };
    let n_gammas = runs[0].results.len();
    let mut rhos: Vec<f64> = Vec::new();
    for run in runs {
        if !rhos.contains(&run.entry.spearman_rho) {
            rhos.push(run.entry.spearman_rho);
        }
    }
    rhos.sort_by(f64::total_cmp);
    let mut blocks: Vec<(BlockKey, Vec<&ScenarioRun>)> = Vec::new();
    for run in runs {
        let key = BlockKey::of(&run.entry);
        match blocks.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(run),
            None => blocks.push((key, vec![run])),
        }
    }
    let families: BTreeSet<&str> = runs.iter().map(|r| r.entry.family.as_str()).collect();
    let label_by_family = families.len() == blocks.len();

    for gi in 0..n_gammas {
        let gamma = runs[0].results[gi].gamma;
        let _ = writeln!(
            out,
            "gamma {gamma}  alpha {}  n {} per group  {} replications  seed {}",
            first.alpha, first.n_per_group, first.replications, first.seed
        );
        let sections: [(&str, usize, Column); 2] = [
            ("Rejection rate (%)", 2, |m| 100.0 * m.rejection_rate),
            ("Mean standard error", 3, |m| m.mean_std_error),
        ];
        for (title, precision, value) in sections {
            let _ = writeln!(out, "\n{title}");
            let mut header = format!("{:<26} {:<6}", "", "");
            for rho in &rhos {
                let _ = write!(header, " {:^19}", format!("rho {rho}"));
            }
            let _ = writeln!(out, "{}", header.trim_end());
            let mut header = format!("{:<26} {:<6}", "scenario", "test");
            for _ in &rhos {
                let _ = write!(header, " {:>9} {:>9}", "without", "with");
            }
            let _ = writeln!(out, "{header}");
            for (key, members) in &blocks {
                let label = if label_by_family {
                    key.family.as_str().to_string()
                } else {
                    members[0].entry.name.clone()
                };
                for (row, (test, base)) in [("Welch", Method::Welch), ("Yuen", Method::Yuen)]
                    .into_iter()
                    .enumerate()
                {
                    let mut line = format!(
                        "{:<26} {:<6}",
                        if row == 0 { label.as_str() } else { "" },
                        test
                    );
                    for rho in &rhos {
                        let run = members.iter().find(|r| r.entry.spearman_rho == *rho);
                        for cuped in [false, true] {
                            let v = run
                                .and_then(|r| r.results[gi].method(base.with_cuped(cuped)))
                                .map(value);
                            let _ = write!(line, " {:>9}", fmt_cell(v, precision));
                        }
                    }
                    let _ = writeln!(out, "{line}");
                }
            }
        }
        let _ = writeln!(out, "\nTreatment effects");
        let _ = writeln!(
            out,
            "{:<26} {:>12} {:>12}",
            "scenario", "untrimmed", "trimmed"
        );
        for (key, members) in &blocks {
            let label = if label_by_family {
                key.family.as_str().to_string()
            } else {
                members[0].entry.name.clone()
            };
            let r = &members[0].results[gi];
            let _ = writeln!(
                out,
                "{:<26} {:>12.4} {:>12.4}",
                label, r.true_effect, r.true_trimmed_effect
            );
        }
        let naive: Vec<_> = runs
            .iter()
            .filter_map(|r| r.results[gi].naive.as_ref().map(|n| (&r.entry, n)))
            .collect();
        if !naive.is_empty() {
            let _ = writeln!(out, "\nTrim-after-adjust estimator (biased)");
            let _ = writeln!(out, "{:<26} {:>12} {:>12}", "scenario", "mean", "MC SE");
            for (e, n) in naive {
                let _ = writeln!(out, "{:<26} {:>12.6} {:>12.6}", e.name, n.mean, n.se);
            }
        }
        let degenerate: usize = runs
            .iter()
            .flat_map(|r| r.results[gi].methods.iter())
            .map(|m| m.degenerate)
            .sum();
        if degenerate > 0 {
            let _ = writeln!(
                out,
                "\n{degenerate} method-replications excluded as degenerate"
            );
        }
        if gi + 1 < n_gammas {
            let _ = writeln!(out);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
n_per_group = 200
replications = 3
gamma = 0.01
alpha = 0.05
seed = 11

[[scenarios]]
name = "normal low"
family = "normal"
mean = 5.0
sd = 100.0
spearman_rho = 0.25
effect = 0.25

[[scenarios]]
name = "normal high"
family = "normal"
mean = 5.0
sd = 100.0
spearman_rho = 0.95
effect = 0.25
"#;

    #[test]
    fn parses_and_resolves_overrides() {
        let path = Path::new("inline.toml");
        let config = SimConfig::from_toml(CONFIG, path).unwrap();
        assert_eq!(config.methods, Method::ALL.to_vec());
        let jobs = resolve(
            &config,
            &SimOverrides {
                seed: Some(9),
                effect: Some(0.0),
                gammas: Some(vec![0.0, 0.05]),
                ..Default::default()
            },
            path,
        )
        .unwrap();
        assert_eq!(jobs.len(), 2);
        assert_eq!(jobs[0].scenario.seed, 9);
        assert_eq!(jobs[1].scenario.scenario.effect, 0.0);
        assert_eq!(jobs[0].gammas, vec![0.0, 0.05]);
        let full = resolve(
            &config,
            &SimOverrides {
                full_scale: true,
                ..Default::default()
            },
            path,
        )
        .unwrap();
        assert_eq!(full[0].scenario.replications, FULL_SCALE_REPLICATIONS);
    }

    #[test]
    fn config_errors_carry_a_location() {
        let path = Path::new("bad.toml");
        let err = SimConfig::from_toml("n_per_group = \"many\"\n", path)
            .unwrap_err()
            .to_string();
        assert!(err.contains("bad.toml") && err.contains("line 1"), "{err}");
        let bad = CONFIG.replace(
            "sd = 100.0\nspearman_rho = 0.95",
            "sd = -1.0\nspearman_rho = 0.95",
        );
        let config = SimConfig::from_toml(&bad, path).unwrap();
        let err = resolve(&config, &SimOverrides::default(), path)
            .unwrap_err()
            .to_string();
        assert!(err.contains("normal high"), "{err}");
        let err = resolve(
            &config,
            &SimOverrides {
                gammas: Some(vec![0.7]),
                ..Default::default()
            },
            path,
        );
        assert!(err.is_err());
    }

    #[test]
    fn table_has_one_column_pair_per_rho() {
        let path = Path::new("inline.toml");
        let config = SimConfig::from_toml(CONFIG, path).unwrap();
        let runs = run_jobs(&resolve(&config, &SimOverrides::default(), path).unwrap()).unwrap();
        let table = to_table(&runs);
        assert!(
            table.contains("rho 0.25") && table.contains("rho 0.95"),
            "{table}"
        );
        assert!(table.contains("normal") && table.contains("Yuen"));
        let recs = records(&runs);
        assert_eq!(recs.len(), 8);
        let text = to_ndjson(&recs);
        for line in text.lines() {
            let back: SimRecord = serde_json::from_str(line).unwrap();
            assert!(recs.contains(&back));
        }
    }
}
