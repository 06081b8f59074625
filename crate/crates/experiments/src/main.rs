use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use efkd_experiments::report::{self, Format, Row};
use efkd_experiments::runs;
use efkd_experiments::{CliError, ExperimentConfig, ExperimentKind, Result, RunOptions};

#[derive(Parser)]
#[command(name = "efkd", version, about = "Ensemble fusion, cyclic schedules and multi-teacher distillation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weak-model pool fused by every voting rule
    Vote(RunArgs),
    /// Cyclic learning-rate checkpoints against independent models
    Cyclic(RunArgs),
    /// Multi-teacher distillation grid
    Distill(RunArgs),
    /// Spatial election simulation
    Spatial(RunArgs),
    /// Summarize or convert an existing report
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Key-value config file; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; rows go to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cells run concurrently; results do not depend on it
    #[arg(long)]
    workers: Option<usize>,
    /// csv or json; inferred from the --out extension otherwise
    #[arg(long)]
    format: Option<Format>,
    /// Journal finished cells next to --out and skip them on the next run
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Report to read (.csv or .json)
    input: PathBuf,
    /// Also write the rows here
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json; inferred from the --out extension otherwise
    #[arg(long)]
    format: Option<Format>,
}

fn run_experiment(kind: ExperimentKind, args: RunArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_file(path, kind)?,
        None => ExperimentConfig::defaults(kind),
    };
    if config.kind != kind {
        return Err(CliError::Config(format!(
            "config is for `{}` but the subcommand is `{kind}`",
            config.kind
        )));
    }
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }
    if let Some(out) = args.out {
        if args.format.is_none() {
            config.output.format = Format::from_path(&out);
        }
        config.output.path = Some(out);
    }
    if let Some(w) = args.workers {
        config.output.workers = w;
    }
    if let Some(f) = args.format {
        config.output.format = f;
    }
    config.validate()?;

    let journal = match (&config.output.path, args.resume) {
        (Some(out), true) => Some(out.with_extension("journal")),
        (None, true) => return Err(CliError::Config("--resume needs --out".into())),
        (_, false) => None,
    };
    let options = RunOptions {
        workers: config.output.workers,
        journal: journal.clone(),
        stop_after: None,
    };
    let report = runs::run(&config, &options)?;
    log::info!(
        "{} rows from {} cells in {:.1}s (config {})",
        report.rows.len(),
        report.meta.cells,
        report.meta.wall_time_secs,
        report.meta.config_hash
    );
    match &config.output.path {
        Some(path) => {
            report::emit_report(&report, config.output.format, path)?;
            if let Some(j) = journal {
                fs::remove_file(&j).map_err(|e| CliError::Io { path: j, source: e })?;
            }
        }
        None => report::write_rows(&report.rows, config.output.format, io::stdout().lock())?,
    }
    Ok(())
}

fn summarize(rows: &[Row]) -> Result<()> {
    let mut groups: BTreeMap<(&str, &str, &str), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((&r.experiment, &r.cell, &r.metric))
            .or_default()
            .push(r.value);
    }
    let mut out = io::stdout().lock();
    let write = |out: &mut io::StdoutLock, line: String| {
        writeln!(out, "{line}").map_err(|e| CliError::Runtime(format!("stdout: {e}")))
    };
    write(&mut out, format!("{:<10} {:<14} {:<28} {:>5} {:>12} {:>10}", "experiment", "cell", "metric", "n", "mean", "std"))?;
    for ((exp, cell, metric), values) in groups {
        let (mean, std) = runs::mean_std(&values);
        write(
            &mut out,
            format!("{exp:<10} {cell:<14} {metric:<28} {:>5} {mean:>12.6} {std:>10.4}", values.len()),
        )?;
    }
    Ok(())
}

fn run_report(args: ReportArgs) -> Result<()> {
    let rows = report::read_report(&args.input)?;
    summarize(&rows)?;
    if let Some(out) = args.out {
        if rows.is_empty() {
            return Err(CliError::Runtime("refusing to write an empty report".into()));
        }
        let format = args.format.unwrap_or_else(|| Format::from_path(&out));
        let mut buf = Vec::new();
        report::write_rows(&rows, format, &mut buf)?;
        fs::write(&out, buf).map_err(|e| CliError::Io { path: out, source: e })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Vote(a) => run_experiment(ExperimentKind::Vote, a),
        Command::Cyclic(a) => run_experiment(ExperimentKind::Cyclic, a),
        Command::Distill(a) => run_experiment(ExperimentKind::Distill, a),
        Command::Spatial(a) => run_experiment(ExperimentKind::Spatial, a),
        Command::Report(a) => run_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
