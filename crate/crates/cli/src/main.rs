use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use refinery::experiment::{
    load_config_file, run_experiment, ConfigFile, Experiment, ExperimentSpec, EXIT_CONFIG,
};

/// Run scheduling experiments and write per-run and summary CSVs.
#[derive(Debug, Parser)]
#[command(name = "refinery", version)]
struct Args {
    /// frameworks, ablations, heuristics or rounding.
    #[arg(long)]
    experiment: Option<Experiment>,
    /// JSON experiment file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Layouts to run (NS1..NS4, Tiny), comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    layout: Vec<String>,
    /// densenet or mobilenet.
    #[arg(long)]
    task: Option<String>,
    /// Schedulers to run, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    scheduler: Vec<String>,
    /// Seeds as a list (`1,2,5`) and/or inclusive ranges (`1-20`).
    #[arg(long)]
    seeds: Option<String>,
    /// Training rounds per run.
    #[arg(long)]
    rounds: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-iteration solver records to trace.jsonl.
    #[arg(long)]
    trace: bool,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
                if a > b {
                    bail!("empty seed range `{part}`");
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().with_context(|| format!("bad seed `{part}`"))?),
        }
    }
    Ok(seeds)
}

fn build_spec(args: &Args) -> Result<ExperimentSpec> {
    let mut file = match &args.config {
        Some(path) => load_config_file(path)?,
        None => ConfigFile::default(),
    };
    if args.experiment.is_some() {
        file.experiment = args.experiment;
    }
    if !args.layout.is_empty() {
        file.layouts = Some(args.layout.clone());
    }
    if args.task.is_some() {
        file.task = args.task.clone();
    }
    if !args.scheduler.is_empty() {
        file.schedulers = Some(args.scheduler.clone());
    }
    if let Some(seeds) = &args.seeds {
        file.seeds = Some(parse_seeds(seeds).context("--seeds")?);
    }
    if args.rounds.is_some() {
        file.rounds = args.rounds;
    }
    if args.out.is_some() {
        file.out = args.out.clone();
    }
    if args.trace {
        file.trace = Some(true);
    }
    Ok(file.resolve()?)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let spec = match build_spec(&args) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let report = match run_experiment(&spec) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    for (cell, err) in report.failures() {
        eprintln!("{}: {err}", cell.run_id());
    }
    for row in &report.summary {
        let opt = row.mean_ratio_to_opt.map(|v| format!("  ratio_to_opt {v:.4}")).unwrap_or_default();
        println!(
            "{:<18} {:<5} seeds {:>3}  rue {:.6e}  training {:.1}{opt}",
            row.scheduler.to_string(),
            row.layout.to_string(),
            row.seeds,
            row.mean_rue,
            row.mean_training_amount
        );
    }
    println!("wrote {} files to {}", report.files.len(), spec.out.display());
    ExitCode::from(report.exit_code() as u8)
}
