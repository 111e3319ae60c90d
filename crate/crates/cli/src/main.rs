//! `mfugsa`: run, validate and summarise model-form uncertainty experiments.

use clap::{Parser, Subcommand};
use mfugsa_cli::config::ExperimentConfig;
use mfugsa_cli::output::{render_text, summarize, to_json, write_artifacts};
use mfugsa_cli::{run_experiment, CliError, Result};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "mfugsa", version, about = "Grouped sensitivity analysis of model-form uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write its artifact directory.
    Run {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replaces the configuration's seed.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Worker threads for model evaluations (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Verify an artifact directory and print its consolidated summary.
    Report {
        /// Directory produced by `run`.
        dir: PathBuf,
        /// Print the report as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Parse and validate a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(
    config: PathBuf,
    out: Option<PathBuf>,
    seed_override: Option<u64>,
    threads: Option<usize>,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::config("--threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config("--threads", e.to_string()))?;
    }
    let dir = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("results/{}", cfg.experiment.kind())));
    log::info!("running {} (seed {}) into {}", cfg.experiment.kind(), cfg.seed, dir.display());
    let output = run_experiment(&cfg)?;
    let report = write_artifacts(&dir, &cfg, &output)?;
    print!("{}", render_text(&report));
    println!("artifacts: {}", dir.display());
    if report.verdict != "PASS" {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        return Err(CliError::Acceptance(format!("failed checks: {}", failed.join(", "))));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed_override,
            threads,
        } => run(config, out, seed_override, threads),
        Command::Report { dir, json } => summarize(&dir).and_then(|s| {
            if json {
                println!("{}", to_json(&s.report));
            } else {
                print!("{}", s.to_text());
            }
            if s.intact() {
                Ok(())
            } else {
                Err(CliError::Artifact(format!(
                    "{} does not match its manifest",
                    dir.display()
                )))
            }
        }),
        Command::Validate { config } => ExperimentConfig::load(&config).map(|cfg| {
            println!("{}: valid {} configuration", config.display(), cfg.experiment.kind());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
