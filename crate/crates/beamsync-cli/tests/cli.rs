//! End-to-end checks of the `beamsync` binary.

use std::io::Write;
use std::process::Command;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_beamsync"))
}

#[test]
fn budget_rows_match_formulas() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(&scenario, "N = 8\n").unwrap();
    let out = binary()
        .args(["budget", "--slaves", "1", "--scenario"])
        .arg(&scenario)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("beamsync,32"), "{text}");
    assert!(text.contains("beamsweep,512"), "{text}");
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    let mut f = std::fs::File::create(&scenario).unwrap();
    writeln!(
        f,
        "M_A = 4\nM_B = 4\nL = 4\nN = 8\ntrials = 200\nsnr_grid_db = [0.0, 10.0]"
    )
    .unwrap();

    let out1 = dir.path().join("a.csv");
    let out8 = dir.path().join("b.csv");
    for (path, workers) in [(&out1, "1"), (&out8, "8")] {
        let status = binary()
            .args(["phase-rmse", "--workers", workers, "--scenario"])
            .arg(&scenario)
            .arg("--out")
            .arg(path)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out8).unwrap();
    assert_eq!(a, b, "worker count changed the CSV bytes");
    assert!(!a.is_empty());
}

#[test]
fn schedule_csv_for_three_slaves() {
    let out = binary()
        .args(["schedule", "--slaves", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("step"))
        .collect();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[0], "0,pilot_broadcast,0,all");
    assert_eq!(rows[1], "1,sync_signal,1,0");
    assert_eq!(rows[2], "2,conjugate_echo,0,1");
}

#[test]
fn unknown_preset_fails_with_diagnostic() {
    let out = binary().args(["phase-rmse", "--preset", "fig99"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("fig99"), "{err}");
}

#[test]
fn invalid_scenario_fails_naming_key() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("bad.toml");
    std::fs::write(&scenario, "trials = 0\n").unwrap();
    let out = binary()
        .args(["phase-rmse", "--scenario"])
        .arg(&scenario)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("trials"), "{err}");
}

#[test]
fn deviation_timeline_runs_from_binary() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(
        &scenario,
        "M_A = 4\nM_B = 4\nL = 4\nN = 8\ntrials = 40\nsnr_grid_db = [20.0]\n\
         horizon_min = 5.0\nresync_period_min = 2.0\nlo_kind = \"lo2\"\n",
    )
    .unwrap();
    let out = binary()
        .args(["deviation-timeline", "--scenario"])
        .arg(&scenario)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("t_min"))
        .count();
    assert_eq!(rows, 6); // minutes 0..=5
}

#[test]
fn crb_subcommand_emits_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(
        &scenario,
        "M_A = 4\nM_B = 4\nL = 4\nL_B = 4\ntrials = 50\nsnr_grid_db = [0.0, 20.0]\n",
    )
    .unwrap();
    let out = binary()
        .args(["crb", "--scenario"])
        .arg(&scenario)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("snr_db"))
        .count();
    // two SNR points x six synchronization lengths
    assert_eq!(rows, 12);
}
