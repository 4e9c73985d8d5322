//! Batch front-end: load scenario files, dispatch to the library, print a
//! human-readable report, optionally write JSON/CSV, and exit 0/1/2.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use envuni::cli::{
    run_born, run_collapse, run_envariance, run_experiment, run_measure, run_validate, BornArgs,
    CliConfig, CliError, ExperimentArgs, RunReport,
};
use envuni::hilbert::{Tolerances, DEFAULT_DIM_CAP};
use envuni::scenario::OperationSpec;

#[derive(Parser)]
#[command(
    name = "envuni",
    version,
    about = "Branch decomposition, envariance certificates and Born-rule statistics for recorded measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the JSON report to this path.
    #[arg(long, global = true, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Write the frequency distribution as CSV (experiment only).
    #[arg(long, global = true, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Override every tolerance with one value.
    #[arg(long, global = true, value_name = "X")]
    tolerance: Option<f64>,
    /// Sampling seed (overrides the scenario's).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Best-approximation denominator bound for decimal amplitudes.
    #[arg(long, global = true, value_name = "N")]
    max_denominator: Option<u64>,
    /// Fail the experiment when the observed frequency leaves ±Z sigma.
    #[arg(long, global = true, value_name = "Z")]
    z_band: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the projector families a scenario defines.
    Validate { file: PathBuf },
    /// Build the correlated state, verify correlations, decompose into branches.
    Measure { file: PathBuf },
    /// Decide a phase or swap envariance certificate.
    Envariance {
        file: PathBuf,
        /// Comma-separated phases, one per interesting condition (radians).
        #[arg(long, value_name = "s1,s2,...")]
        phase: Option<String>,
        /// The two condition labels to swap.
        #[arg(long, value_name = "b,g")]
        swap: Option<String>,
    },
    /// Fine-grain rational weights and derive Born probabilities by counting.
    Born {
        file: Option<PathBuf>,
        /// Colon-separated integer counts, e.g. 1:2:3.
        #[arg(long, value_name = "m1:m2:...")]
        weights: Option<String>,
        /// Comma-separated real amplitudes (normalized automatically).
        #[arg(long, value_name = "a1,a2,...")]
        amplitudes: Option<String>,
    },
    /// Sample repeated runs and check frequency concentration.
    Experiment {
        file: Option<PathBuf>,
        /// Comma-separated real amplitudes; outcomes are labeled 1..k.
        #[arg(long, value_name = "a1,a2,...")]
        amplitudes: Option<String>,
        #[arg(long, value_name = "N")]
        runs: Option<usize>,
        /// Outcome label whose frequency to track.
        #[arg(long, value_name = "LABEL")]
        target: Option<String>,
    },
    /// Replay a record log: coarse-grain and update step by step.
    Collapse { file: PathBuf },
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn parse_f64_list(raw: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Schema(format!("bad {flag} entry `{s}`: {e}")))
        })
        .collect()
}

fn parse_u64_list(raw: &str, flag: &str) -> Result<Vec<u64>, CliError> {
    raw.split(':')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| CliError::Schema(format!("bad {flag} entry `{s}`: {e}")))
        })
        .collect()
}

fn run(cli: &Cli, cfg: &CliConfig) -> Result<RunReport, CliError> {
    match &cli.command {
        Command::Validate { file } => run_validate(&read_file(file)?, cfg),
        Command::Measure { file } => run_measure(&read_file(file)?, cfg),
        Command::Envariance { file, phase, swap } => {
            let operation = match (phase, swap) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Schema("give --phase or --swap, not both".into()))
                }
                (Some(p), None) => Some(OperationSpec::Phase {
                    sigmas: parse_f64_list(p, "--phase")?,
                }),
                (None, Some(s)) => {
                    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
                    if parts.len() != 2 {
                        return Err(CliError::Schema(format!(
                            "--swap needs two condition labels, got `{s}`"
                        )));
                    }
                    Some(OperationSpec::Swap {
                        pair: [parts[0].to_string(), parts[1].to_string()],
                    })
                }
                (None, None) => None,
            };
            run_envariance(&read_file(file)?, operation, cfg)
        }
        Command::Born {
            file,
            weights,
            amplitudes,
        } => {
            let args = BornArgs {
                source: file.as_deref().map(read_file).transpose()?,
                weights: weights
                    .as_deref()
                    .map(|w| parse_u64_list(w, "--weights"))
                    .transpose()?,
                amplitudes: amplitudes
                    .as_deref()
                    .map(|a| parse_f64_list(a, "--amplitudes"))
                    .transpose()?,
                max_denominator: cli.max_denominator,
            };
            run_born(&args, cfg)
        }
        Command::Experiment {
            file,
            amplitudes,
            runs,
            target,
        } => {
            let args = ExperimentArgs {
                source: file.as_deref().map(read_file).transpose()?,
                amplitudes: amplitudes
                    .as_deref()
                    .map(|a| parse_f64_list(a, "--amplitudes"))
                    .transpose()?,
                runs: *runs,
                seed: cli.seed,
                target: target.clone(),
                z_band: cli.z_band,
            };
            run_experiment(&args, cfg)
        }
        Command::Collapse { file } => run_collapse(&read_file(file)?, cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = CliConfig::default();
    if let Some(t) = cli.tolerance {
        cfg.tolerances = Tolerances::uniform(t);
    }
    if let Ok(raw) = std::env::var("ENVUNI_DIM_CAP") {
        match raw.parse::<usize>() {
            Ok(cap) => cfg.dim_cap = cap,
            Err(_) => {
                eprintln!(
                    "envuni: ENVUNI_DIM_CAP=`{raw}` is not a dimension; using {DEFAULT_DIM_CAP}"
                );
            }
        }
    }

    match run(&cli, &cfg) {
        Ok(report) => {
            print!("{}", report.render_text());
            if let Some(path) = &cli.json {
                if let Err(e) = std::fs::write(path, report.to_json()) {
                    eprintln!("envuni: cannot write {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            if let Some(path) = &cli.csv {
                match &report.csv {
                    Some(rows) => {
                        if let Err(e) = std::fs::write(path, rows) {
                            eprintln!("envuni: cannot write {}: {e}", path.display());
                            return ExitCode::from(2);
                        }
                    }
                    None => {
                        eprintln!("envuni: this command produces no CSV distribution");
                        return ExitCode::from(2);
                    }
                }
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("envuni: {e}");
            ExitCode::from(2)
        }
    }
}
