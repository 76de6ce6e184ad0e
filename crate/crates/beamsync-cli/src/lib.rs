//! Scenario parsing and subcommand dispatch for the `beamsync` binary.
//!
//! Scenario files are TOML documents whose keys mirror the
//! [`Scenario`] fields (`M_A`, `M_B`, `L`, `N`, `L_B`, `N_f`,
//! `snr_grid_db`, `trials`, `seed`, `estimator`, `scheme`, `mode`,
//! `lo_kind`, `sigma_eps2`, `delta_range_hz`, `residual_delta_hz`,
//! `resync_period_min`, `horizon_min`, `f_c`, `T`). Unknown keys are
//! rejected; missing keys fall back to the defaults. An empty file yields
//! the default scenario.

use anyhow::{bail, Context};
use beamsync::experiments::{
    beamforming_gain_timeline, crb_sweep, measurement_budget, monte_carlo_rmse, multi_ap_schedule,
    phase_deviation_timeline, preset, render_budget_csv, render_crb_csv, render_rmse_csv,
    render_schedule_csv, render_timeline_csv, ModeKind, Scenario,
};
use std::path::Path;

/// Subcommands of the front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    PhaseRmse,
    FreqRmse,
    GainTimeline,
    DeviationTimeline,
    Crb,
    Budget,
    Schedule,
}

/// Parses and validates a scenario file. Returns the scenario and any
/// validation warnings (for example auto-raised pilot lengths).
pub fn parse_scenario(path: &Path) -> anyhow::Result<(Scenario, Vec<String>)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario file {}", path.display()))?;
    let mut scenario: Scenario = toml::from_str(&text)
        .with_context(|| format!("cannot parse scenario file {}", path.display()))?;
    let warnings = scenario.validate()?;
    Ok((scenario, warnings))
}

/// Resolves the scenario from `--scenario`/`--preset` plus overrides.
pub fn resolve_scenario(
    scenario_path: Option<&Path>,
    preset_name: Option<&str>,
    trials: Option<usize>,
    seed: Option<u64>,
) -> anyhow::Result<(Scenario, Vec<String>)> {
    let (mut s, mut warnings) = match (scenario_path, preset_name) {
        (Some(path), None) => parse_scenario(path)?,
        (None, Some(name)) => {
            let s = preset(name)
                .with_context(|| format!("unknown preset `{name}`; expected fig5, fig6, fig8, fig9, fig10, fig11 or fig14"))?;
            (s, Vec::new())
        }
        (None, None) => (Scenario::default(), Vec::new()),
        (Some(_), Some(_)) => bail!("--scenario and --preset are mutually exclusive"),
    };
    if let Some(t) = trials {
        s.trials = t;
    }
    if let Some(sd) = seed {
        s.seed = sd;
    }
    warnings.extend(s.validate()?);
    Ok((s, warnings))
}

/// Synchronization-length grid used by the `crb` subcommand.
pub const CRB_NF_GRID: [usize; 6] = [2, 4, 8, 16, 32, 64];

/// Runs a subcommand and renders its CSV output.
pub fn render_output(cmd: Command, scenario: &Scenario, slaves: usize) -> anyhow::Result<String> {
    let mut s = scenario.clone();
    match cmd {
        Command::PhaseRmse => {
            s.mode = ModeKind::Phase;
            let table = monte_carlo_rmse(&s)?;
            Ok(render_rmse_csv(&s, &table))
        }
        Command::FreqRmse => {
            s.mode = ModeKind::Freq;
            let table = monte_carlo_rmse(&s)?;
            Ok(render_rmse_csv(&s, &table))
        }
        Command::GainTimeline => {
            s.mode = ModeKind::Phase;
            let points = beamforming_gain_timeline(&s)?;
            Ok(render_timeline_csv(&s, &points, true))
        }
        Command::DeviationTimeline => {
            s.mode = ModeKind::Phase;
            let points = phase_deviation_timeline(&s)?;
            Ok(render_timeline_csv(&s, &points, false))
        }
        Command::Crb => {
            let rows = crb_sweep(&s, &CRB_NF_GRID)?;
            Ok(render_crb_csv(&s, &rows))
        }
        Command::Budget => {
            let budget = measurement_budget(slaves, s.m_a, s.l, s.n);
            Ok(render_budget_csv(&s, slaves, &budget))
        }
        Command::Schedule => {
            let events = multi_ap_schedule(slaves, s.mode);
            Ok(render_schedule_csv(&s, slaves, &events))
        }
    }
}

/// Runs a subcommand inside a worker pool of the requested size and
/// writes the CSV to `out` (or stdout when absent).
pub fn run_command(
    cmd: Command,
    scenario: &Scenario,
    out: Option<&Path>,
    slaves: usize,
    workers: Option<usize>,
) -> anyhow::Result<()> {
    let output = match workers {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("cannot build worker pool")?;
            pool.install(|| render_output(cmd, scenario, slaves))?
        }
        _ => render_output(cmd, scenario, slaves)?,
    };
    match out {
        Some(path) => std::fs::write(path, output)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{output}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn empty_file_gives_defaults() {
        let f = write_temp("");
        let (s, warnings) = parse_scenario(f.path()).unwrap();
        let d = Scenario::default();
        assert_eq!(s.m_a, d.m_a);
        assert_eq!(s.n, d.n);
        assert_eq!(s.seed, d.seed);
        assert!(warnings.is_empty());
    }

    #[test]
    fn unknown_key_rejected_with_name() {
        let f = write_temp("upsilon = 3\n");
        let err = parse_scenario(f.path()).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("upsilon"), "{msg}");
    }

    #[test]
    fn zero_trials_rejected_naming_field() {
        let f = write_temp("trials = 0\n");
        let err = parse_scenario(f.path()).unwrap_err();
        assert!(format!("{err:#}").contains("trials"));
    }

    #[test]
    fn pilot_length_auto_raised_with_warning() {
        let f = write_temp("M_A = 32\nM_B = 32\n");
        let (s, warnings) = parse_scenario(f.path()).unwrap();
        assert_eq!(s.l, 32);
        assert_eq!(s.l_b, 32);
        assert_eq!(warnings.len(), 2);
        assert!(warnings[0].contains("L raised"));
    }

    #[test]
    fn estimator_and_mode_parse() {
        let f = write_temp("estimator = \"nls\"\nmode = \"freq\"\nscheme = \"fgb\"\nlo_kind = \"lo2\"\n");
        let (s, _) = parse_scenario(f.path()).unwrap();
        assert_eq!(s.mode, ModeKind::Freq);
        assert_eq!(s.lo_kind, beamsync::hardware::LoKind::Lo2);
    }

    #[test]
    fn scenario_round_trips_losslessly() {
        let f = write_temp(
            "M_A = 8\nM_B = 4\nL = 12\nN = 40\ntrials = 123\nseed = 9\n\
             estimator = \"pcsi\"\nmode = \"freq\"\nlo_kind = \"lo1\"\n\
             resync_period_min = 12.5\ndelta_range_hz = [-250.0, 250.0]\n",
        );
        let (parsed, _) = parse_scenario(f.path()).unwrap();
        let serialized = toml::to_string(&parsed).unwrap();
        let mut reparsed: Scenario = toml::from_str(&serialized).unwrap();
        reparsed.validate().unwrap();
        assert_eq!(parsed, reparsed);
    }

    #[test]
    fn budget_output_rows() {
        let mut s = Scenario::default();
        s.n = 8;
        let csv = render_output(Command::Budget, &s, 1).unwrap();
        assert!(csv.contains("beamsync,32"), "{csv}");
        assert!(csv.contains("beamsweep,512"), "{csv}");
        assert!(csv.contains("fgb,256"), "{csv}");
    }

    #[test]
    fn schedule_output_shape() {
        let s = Scenario::default();
        let csv = render_output(Command::Schedule, &s, 3).unwrap();
        let data_rows: Vec<&str> = csv
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("step"))
            .collect();
        assert_eq!(data_rows.len(), 7);
        assert!(data_rows[0].contains("pilot_broadcast"));
    }

    #[test]
    fn rmse_csv_shape_and_determinism() {
        let mut s = Scenario::default();
        s.trials = 16;
        s.m_a = 4;
        s.m_b = 4;
        s.l = 4;
        s.n = 8;
        s.snr_grid_db = vec![0.0, 6.0];
        let a = render_output(Command::PhaseRmse, &s, 1).unwrap();
        let b = render_output(Command::PhaseRmse, &s, 1).unwrap();
        assert_eq!(a, b);
        let header = a.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(header, "snr_db,rmse_rad,trials,outliers");
        assert_eq!(a.lines().filter(|l| !l.starts_with('#')).count(), 3);
    }
}
