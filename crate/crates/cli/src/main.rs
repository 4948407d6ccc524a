use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use agesirs::commands::{run_command, Command};
use agesirs::config::{load_config, GridSpec, Preset, RunConfig};
use agesirs::control::Strategy;

/// Age-structured SIRS model: simulation, equilibria, optimal treatment and studies.
#[derive(Debug, Parser)]
#[command(name = "agesirs", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML run configuration; missing keys take the preset values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Parameter preset. With --config, replaces the parameter block.
    #[arg(long, global = true, value_enum)]
    preset: Option<PresetArg>,

    /// Controls to optimise (optcontrol, sweep-alpha).
    #[arg(long, global = true, value_enum)]
    strategy: Option<StrategyArg>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of integration steps on the time grid.
    #[arg(long, global = true, value_name = "N")]
    steps: Option<usize>,

    /// Horizon in days. Without --steps the default step size is kept.
    #[arg(long = "T", global = true, value_name = "DAYS")]
    horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Integrate the model under the preset treatment rates.
    Simulate,
    /// Disease-free and endemic equilibria with their stability.
    Equilibria,
    /// Basic reproduction number, with and without young treatment.
    R0,
    /// Optimal treatment by forward-backward sweep.
    Optcontrol,
    /// One-at-a-time parameter sweeps and their classification.
    Sensitivity,
    /// Burden of every strategy as transmission is rescaled to target r0 values.
    SweepR0,
    /// Burden of one strategy over saturation and r0 grids.
    SweepAlpha,
    /// Run every reference check and write a comparison report.
    #[command(alias = "replicate-paper")]
    Replicate,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Equilibria => Command::Equilibria,
            Cmd::R0 => Command::R0,
            Cmd::Optcontrol => Command::OptControl,
            Cmd::Sensitivity => Command::Sensitivity,
            Cmd::SweepR0 => Command::SweepR0,
            Cmd::SweepAlpha => Command::SweepAlpha,
            Cmd::Replicate => Command::Replicate,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    Table2,
    Table3,
    Table4,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Table2 => Preset::Table2,
            PresetArg::Table3 => Preset::Table3,
            PresetArg::Table4 => Preset::Table4,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    None,
    U11,
    U12,
    Both,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::None => Strategy::None,
            StrategyArg::U11 => Strategy::U11Only,
            StrategyArg::U12 => Strategy::U12Only,
            StrategyArg::Both => Strategy::Both,
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path).with_context(|| format!("reading {}", path.display()))?,
        None => RunConfig::from_preset(cli.preset.map_or(Preset::Table2, Preset::from)),
    };
    if let (Some(_), Some(p)) = (&cli.config, cli.preset) {
        cfg.preset = p.into();
        cfg.params = cfg.preset.params();
    }
    if let Some(t) = cli.horizon {
        cfg.grid = GridSpec::with_horizon(t).context("--T")?;
    }
    if let Some(n) = cli.steps {
        cfg.grid.n_steps = n;
    }
    if let Some(dir) = &cli.out {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = build_config(cli)?;
    let command = Command::from(cli.command);
    let summary = run_command(command, &cfg, cli.strategy.map(Strategy::from))
        .with_context(|| format!("{command} failed"))?;
    for (k, v) in &summary.scalars {
        println!("{k} = {v:?}");
    }
    for c in &summary.checks {
        let status = match c.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "N/A ",
        };
        if c.detail.is_empty() {
            println!("{status} {}", c.name);
        } else {
            println!("{status} {}: {}", c.name, c.detail);
        }
    }
    println!("wrote {} files to {}", summary.files.len(), cfg.output_dir.display());
    Ok(summary.all_passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
