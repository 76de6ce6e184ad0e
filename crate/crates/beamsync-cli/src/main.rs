use beamsync_cli::{resolve_scenario, run_command, Command};
use clap::{Parser, Subcommand};
use std::path::PathBuf;

/// Over-the-air synchronization simulator: scenario files in, CSV out.
#[derive(Parser)]
#[command(name = "beamsync", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// Scenario file (TOML); mutually exclusive with --preset.
    #[arg(long, global = true, value_name = "PATH")]
    scenario: Option<PathBuf>,

    /// Named preset: fig5, fig6, fig8, fig9, fig10, fig11 or fig14.
    #[arg(long, global = true, value_name = "NAME", conflicts_with = "scenario")]
    preset: Option<String>,

    /// Output CSV path; stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Override the scenario's Monte-Carlo trial count.
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Override the scenario's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Slave AP count for the budget and schedule subcommands.
    #[arg(long, global = true, default_value_t = 1)]
    slaves: usize,
}

#[derive(Subcommand)]
enum Sub {
    /// Phase-offset RMSE vs SNR.
    PhaseRmse,
    /// Frequency-offset RMSE vs SNR.
    FreqRmse,
    /// Beamforming gain at the user over slow time.
    GainTimeline,
    /// Mean absolute phase deviation at the user over slow time.
    DeviationTimeline,
    /// Cramér-Rao bound sweeps over SNR and synchronization length.
    Crb,
    /// Measurement budget comparison for a master/slave group.
    Budget,
    /// Multi-AP synchronization event order.
    Schedule,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let (scenario, warnings) = resolve_scenario(
        cli.scenario.as_deref(),
        cli.preset.as_deref(),
        cli.trials,
        cli.seed,
    )?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let cmd = match cli.command {
        Sub::PhaseRmse => Command::PhaseRmse,
        Sub::FreqRmse => Command::FreqRmse,
        Sub::GainTimeline => Command::GainTimeline,
        Sub::DeviationTimeline => Command::DeviationTimeline,
        Sub::Crb => Command::Crb,
        Sub::Budget => Command::Budget,
        Sub::Schedule => Command::Schedule,
    };
    run_command(cmd, &scenario, cli.out.as_deref(), cli.slaves, cli.workers)
}
