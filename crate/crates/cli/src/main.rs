use clap::builder::{PossibleValuesParser, TypedValueParser as _};
use clap::{Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use trimcuped::{Method, TrimSpec};
use trimcuped_cli::analyze::{run_analysis, AnalysisConfig, CovariatePolicy, OutputFormat};
use trimcuped_cli::simulate::{
    records, resolve, run_jobs, to_ndjson, to_table, SimConfig, SimOverrides,
};
use trimcuped_cli::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "trimcuped",
    version,
    about = "Trimmed and CUPED-adjusted two-sample tests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimFormat {
    #[value(name = "human_table")]
    HumanTable,
    #[value(name = "ndjson")]
    Ndjson,
}

#[derive(Subcommand)]
enum Command {
    /// Test one experiment exported as CSV (subject_id, group, y, x).
    Analyze {
        #[arg(long)]
        input: PathBuf,
        /// Proportion trimmed from each tail.
        #[arg(long, default_value_t = 0.01)]
        gamma: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value = "yuen_cuped", value_parser = method_parser())]
        method: Method,
        #[arg(long, value_enum, default_value = "impute_missing")]
        covariate_policy: CovariatePolicy,
        #[arg(long, value_enum, default_value = "human_table")]
        format: OutputFormat,
        /// Write the report here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a Monte Carlo scenario grid.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "full_scale")]
        replications: Option<usize>,
        /// Use the full replication count.
        #[arg(long)]
        full_scale: bool,
        #[arg(long, env = "TRIMCUPED_SEED")]
        seed: Option<u64>,
        /// Comma-separated trim proportions; one result set per value.
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
        /// Replace every scenario's treatment effect (0 for false positive rates).
        #[arg(long, allow_hyphen_values = true)]
        effect: Option<f64>,
        #[arg(long)]
        n_per_group: Option<usize>,
        /// Worker threads (defaults to all cores); output does not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, value_enum, default_value = "human_table")]
        format: SimFormat,
        /// Also write the newline-delimited JSON records to this file.
        #[arg(long)]
        records: Option<PathBuf>,
    },
}

fn write_file(path: &PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })
}

fn print(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Output(e.to_string()))
}

fn method_parser() -> impl clap::builder::TypedValueParser<Value = Method> {
    let names = Method::ALL.map(Method::as_str);
    PossibleValuesParser::new(names).map(|s| s.parse::<Method>().expect("listed names parse"))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Analyze {
            input,
            gamma,
            alpha,
            method,
            covariate_policy,
            format,
            output,
        } => {
            let config = AnalysisConfig {
                input,
                gamma: TrimSpec::new(gamma)?,
                alpha,
                method,
                covariate_policy,
                format,
            };
            let analysis = run_analysis(&config)?;
            let text = match format {
                OutputFormat::Json => analysis.document.to_json(),
                OutputFormat::HumanTable => analysis.document.to_table(),
            };
            match output {
                Some(path) => write_file(&path, &text)?,
                None => print(&text)?,
            }
            Ok(analysis.exit_code as u8)
        }
        Command::Simulate {
            config,
            replications,
            full_scale,
            seed,
            gammas,
            effect,
            n_per_group,
            threads,
            format,
            records: records_path,
        } => {
            let sim = SimConfig::load(&config)?;
            let overrides = SimOverrides {
                replications,
                full_scale,
                seed,
                gammas,
                effect,
                n_per_group,
            };
            let jobs = resolve(&sim, &overrides, &config)?;
            let runs = match threads {
                Some(t) => rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?
                    .install(|| run_jobs(&jobs))?,
                None => run_jobs(&jobs)?,
            };
            let recs = records(&runs);
            if let Some(path) = records_path {
                write_file(&path, &to_ndjson(&recs))?;
            }
            match format {
                SimFormat::HumanTable => print(&to_table(&runs))?,
                SimFormat::Ndjson => print(&to_ndjson(&recs))?,
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // exit code 2 is reserved for degenerate data
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("trimcuped: error: {e}");
            ExitCode::from(1)
        }
    }
}
