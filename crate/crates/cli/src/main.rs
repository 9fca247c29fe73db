use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;
use skillstream::config::RunConfig;
use skillstream::pipeline::{self, RunError};
use skillstream::report::cmd_report;
use skillstream::synth::generate_suite;

#[derive(Parser)]
#[command(name = "skillstream", version, about = "Lifelong skill discovery from demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic tabletop suite into --out.
    Generate(Common),
    /// Learn the whole task stream, evaluate, and write a run directory.
    Run(Common),
    /// Re-evaluate the learner saved in a run directory (--out).
    Eval {
        #[command(flatten)]
        common: Common,
        /// Episodes per task; defaults to the run's setting.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Write CSV tables for a finished run directory (--out).
    Report {
        #[command(flatten)]
        common: Common,
        /// Also draw the success curve as SVG.
        #[arg(long)]
        svg: bool,
    },
    /// Recompute metrics from the matrix.json of a run directory (--out).
    Metrics(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sections (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (for eval, report and metrics: the run directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report metrics as percentages.
    #[arg(long)]
    percent: bool,
}

impl Common {
    fn config(&self) -> Result<RunConfig, RunError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(threads) = self.threads {
            cfg.threads = threads;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        cfg.metrics.percent |= self.percent;
        cfg.validate()?;
        Ok(cfg)
    }

    fn run_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| RunConfig::default().out)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value).context("serializing output")?);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), RunError> {
    let runtime = |e: anyhow::Error| RunError::Runtime(format!("{e:#}"));
    match cli.command {
        Command::Generate(common) => {
            let cfg = common.config()?;
            let manifest = generate_suite(&cfg.generate, cfg.seed, &cfg.out)?;
            println!("{}", manifest.display());
        }
        Command::Run(common) => {
            let cfg = common.config()?;
            let summary = pipeline::cmd_run(&cfg)?;
            info!("run written to {}", summary.out.display());
            let shown = if cfg.metrics.percent {
                summary.metrics.scaled(100.0)
            } else {
                summary.metrics
            };
            print_json(&shown).map_err(runtime)?;
        }
        Command::Eval { common, episodes } => {
            let threads = common.threads.unwrap_or(0);
            let table = pipeline::cmd_eval(&common.run_dir(), episodes, threads)?;
            for (task, rate) in table {
                println!("{task}\t{rate:.3}");
            }
        }
        Command::Report { common, svg } => {
            for path in cmd_report(&common.run_dir(), svg)? {
                println!("{}", path.display());
            }
        }
        Command::Metrics(common) => {
            let metrics = pipeline::cmd_metrics(&common.run_dir(), common.percent)?;
            print_json(&metrics).map_err(runtime)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SKILLSTREAM_LOG", "warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exit_code(args: &[&str]) -> i32 {
        let cli = Cli::try_parse_from(std::iter::once("skillstream").chain(args.iter().copied())).unwrap();
        dispatch(cli).err().map_or(0, |e| e.exit_code())
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let path = |name: &str| dir.path().join(name).display().to_string();

        std::fs::write(path("bad.json"), "{ \"seed\": \"nope\" }").unwrap();
        assert_eq!(exit_code(&["run", "--config", &path("bad.json"), "--out", &path("r")]), 1);

        assert_eq!(exit_code(&["report", "--out", &path("empty")]), 2);
        assert_eq!(exit_code(&["metrics", "--out", &path("empty")]), 2);

        assert_eq!(exit_code(&["generate", "--seed", "1", "--out", &path("suite")]), 0);
        assert!(dir.path().join("suite").join("oracle.json").is_file());
    }
}
