//! Minimal tour: one phase trial, one frequency trial, one small sweep.
//!
//! Run: cargo run --release -p beamsync --example quickstart

use beamsync::channel::{draw_rayleigh, snr_to_sigma2};
use beamsync::experiments::{monte_carlo_rmse, Scenario};
use beamsync::freq_sync::{run_freq_protocol, FreqConfig};
use beamsync::hardware::{ApState, LoModel};
use beamsync::phase_sync::{run_phase_protocol, PhaseConfig, PhaseEstimator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ap_a = ApState::draw(16, LoModel::ideal(), &mut rng).unwrap();
    let ap_b = ApState::draw(16, LoModel::ideal(), &mut rng).unwrap();
    let channel = draw_rayleigh(16, 16, &mut rng);
    let sigma2 = snr_to_sigma2(10.0).sigma2;

    let cfg = PhaseConfig::new(16, 100, sigma2, PhaseEstimator::Simple);
    let trace = run_phase_protocol(&ap_a, &ap_b, &channel, &cfg, &mut rng).unwrap();
    println!(
        "phase offset: true {:+.4} rad, estimated {:+.4} rad, error {:+.2e} rad",
        trace.truth, trace.estimate, trace.error
    );

    let cfg = FreqConfig::new(16, 10, sigma2);
    let trace = run_freq_protocol(&ap_a, &ap_b, &channel, &cfg, &mut rng).unwrap();
    println!(
        "frequency offset: true {:+.2} Hz, estimated {:+.2} Hz (CRB rmse bound {:.2} Hz)",
        trace.truth.delta_hz,
        trace.delta_hat_hz,
        trace.crb.sqrt() / trace.truth.symbol_time_s,
    );

    let mut scenario = Scenario::default();
    scenario.trials = 2000;
    scenario.snr_grid_db = vec![0.0, 10.0, 20.0];
    let table = monte_carlo_rmse(&scenario).unwrap();
    println!("phase RMSE sweep ({} trials/point):", scenario.trials);
    for row in &table.rows {
        println!("  {:>5} dB: {:.5} rad", row.x_value, row.rmse);
    }
}
