use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use parity_herald::config::{ConfigSource, Experiment, ExperimentConfig};
use parity_herald::experiments;
use parity_herald::output;

#[derive(Parser)]
#[command(name = "parity-sim", version, about = "Heralded multi-qubit parity measurement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file; the built-in default for the command is used if omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for trajectory ensembles
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// key=value, applied after the config file (repeatable)
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Print the resolved default config and exit
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Master-equation correlator revivals
    Revival,
    /// Phase kick after a photodetection
    Kick,
    /// Heralded fidelities with dynamical decoupling
    Table1,
    /// Missed-detection bias against the displacement-swap period
    Bias,
    /// Cross-representation checks; exits nonzero on failure
    Validate,
    /// Three-qubit higher-order decoherence and two-qubit control
    AppendixB,
}

impl Command {
    fn experiment(self) -> Experiment {
        match self {
            Command::Revival => Experiment::Revival,
            Command::Kick => Experiment::Kick,
            Command::Table1 => Experiment::Table1,
            Command::Bias => Experiment::Bias,
            Command::Validate => Experiment::Validate,
            Command::AppendixB => Experiment::AppendixB,
        }
    }

    fn default_config(self) -> &'static str {
        match self {
            Command::Revival => include_str!("../configs/revival.conf"),
            Command::Kick => include_str!("../configs/kick.conf"),
            Command::Table1 => include_str!("../configs/table1.conf"),
            Command::Bias => include_str!("../configs/bias.conf"),
            Command::Validate => include_str!("../configs/validate.conf"),
            Command::AppendixB => include_str!("../configs/appendix_b.conf"),
        }
    }
}

fn load(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => cli.command.default_config().to_string(),
    };
    let mut src = ConfigSource::parse(&text)?;
    for o in &cli.overrides {
        src.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        src.apply_override(&format!("seed={seed}"))?;
    }
    let cfg = ExperimentConfig::from_source(&src)?;
    if cfg.experiment != cli.command.experiment() {
        bail!(
            "config is for '{}' but the command is '{}'",
            cfg.experiment.as_str(),
            cli.command.experiment().as_str()
        );
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    if cli.print_config {
        print!("{}", cli.command.default_config());
        return Ok(true);
    }
    let cfg = load(cli)?;
    if let Some(n) = cli.workers.or(cfg.workers) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("worker pool")?;
    }
    let artifacts = experiments::run(&cfg)?;
    let dir = cli.out.clone().or_else(|| cfg.out.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));
    for (name, body) in &artifacts.files {
        let path = dir.join(name);
        output::write_text(&path, body)?;
        eprintln!("wrote {}", path.display());
    }
    println!("{}", artifacts.summary);
    Ok(artifacts.passed.unwrap_or(true))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
