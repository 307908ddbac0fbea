//! Experiment runner: `run` executes a configured Monte-Carlo study,
//! `ingest-run` replays an external CSV stream, `report` rebuilds the
//! aggregate report from raw run logs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use capstream::config::{preset, preset_names, DataSource, ResolvedConfig, RunConfig};
use capstream::report::ReportLabels;
use capstream::runner;
use capstream::Error;

#[derive(Parser)]
#[command(name = "capstream", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured scenario study across replications.
    Run(RunArgs),
    /// Run a configured study over an ingested CSV stream.
    IngestRun(RunArgs),
    /// Rebuild the aggregate report from raw run-log CSVs.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to a TOML config file.
    config: Option<PathBuf>,
    /// Use a built-in preset instead of a config file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the replication count.
    #[arg(long)]
    reps: Option<usize>,
    /// Override the worker count (0 = one per core).
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Raw run-log CSV files.
    logs: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Snapshot stride.
    #[arg(long, default_value_t = 10)]
    stride: usize,
    /// Label columns for the rebuilt report.
    #[arg(long, default_value = "na")]
    scenario: String,
    #[arg(long, default_value = "na")]
    selector: String,
    #[arg(long, default_value = "na")]
    picker: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_command(args, false),
        Command::IngestRun(args) => run_command(args, true),
        Command::Report(args) => report_command(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config { .. } | Error::IncompatibleRule { .. } | Error::InvalidLevel(_) => {
                    ExitCode::from(2)
                }
                Error::Io(_) | Error::Ingest { .. } => ExitCode::from(3),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn load_config(args: &RunArgs) -> Result<ResolvedConfig, Error> {
    let raw = match (&args.config, &args.preset) {
        (Some(path), None) => RunConfig::from_path(path)?,
        (None, Some(name)) => {
            let text = preset(name).ok_or_else(|| {
                Error::config(
                    "preset",
                    format!(
                        "unknown preset `{name}`; available: {}",
                        preset_names().join(", ")
                    ),
                )
            })?;
            RunConfig::from_toml_str(text)?
        }
        _ => {
            return Err(Error::config(
                "config",
                "exactly one of a config path or --preset is required",
            ))
        }
    };
    let mut cfg = raw.resolve()?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(reps) = args.reps {
        if reps == 0 {
            return Err(Error::config("run.replications", "must be at least 1"));
        }
        cfg.replications = reps;
    }
    if let Some(jobs) = args.jobs {
        cfg.parallelism = jobs;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run_command(args: RunArgs, ingest: bool) -> Result<(), Error> {
    let cfg = load_config(&args)?;
    match (&cfg.source, ingest) {
        (DataSource::Csv { .. }, false) => {
            return Err(Error::config(
                "data",
                "config names a CSV source; use the ingest-run subcommand",
            ))
        }
        (DataSource::Scenario { .. }, true) => {
            return Err(Error::config(
                "data",
                "ingest-run requires a csv_path data source",
            ))
        }
        _ => {}
    }
    let output = runner::run(&cfg)?;
    if let Some(last) = output.rows.last() {
        println!(
            "{} reps={} t={} fcr={:.4} mean_len={:.4}",
            output.labels.method, cfg.replications, last.t, last.fcr, last.mean_len
        );
    }
    if let Some(path) = &output.report_csv {
        println!("report: {}", path.display());
    }
    if output.invariant_violations > 0 {
        eprintln!(
            "warning: {} replications violated a spending invariant",
            output.invariant_violations
        );
    }
    Ok(())
}

fn report_command(args: ReportArgs) -> Result<(), Error> {
    let labels = ReportLabels {
        method: "na".to_string(),
        scenario: args.scenario.clone(),
        selector: args.selector.clone(),
        picker: args.picker.clone(),
    };
    let (rows, labels) = runner::report_from_logs(&args.logs, args.stride, labels)?;
    std::fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("report.csv");
    let json_path = args.out.join("report.json");
    let mut buf = Vec::new();
    capstream::report::write_report_csv(&mut buf, &rows, &labels)?;
    std::fs::write(&csv_path, buf)?;
    let mut buf = Vec::new();
    capstream::report::write_report_json(&mut buf, &rows, &labels)?;
    std::fs::write(&json_path, buf)?;
    println!("report: {}", csv_path.display());
    Ok(())
}
