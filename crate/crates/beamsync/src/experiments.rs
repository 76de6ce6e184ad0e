//! Monte-Carlo harness, multi-AP scheduling, measurement budgets and the
//! slow-time drift studies.
//!
//! Reproducibility contract: every trial draws from its own counter-based
//! random stream derived from `(seed, sweep index, trial index)`, and all
//! aggregation happens in trial order, so results are bit-identical for
//! any worker count.

use crate::channel::{draw_rayleigh, snr_to_sigma2};
use crate::error::{Error, Result};
use crate::fgb::{run_fgb_freq, run_fgb_phase};
use crate::freq_sync::{run_freq_protocol, FreqConfig, FreqTrace, GridSpec};
use crate::hardware::{pair_phase_offset, perturb_calibration, ApState, LoKind, LoModel};
use crate::phase_sync::{run_phase_protocol, PhaseConfig, PhaseEstimator, PhaseTrace};
use crate::wrap_angle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which synchronization quantity a run estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Phase,
    Freq,
}

/// Which scheme executes the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Beamsync,
    Fgb,
}

/// One experiment configuration. Field names follow the scenario-file
/// vocabulary; see [`Scenario::default`] for the baseline setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    #[serde(rename = "M_A")]
    pub m_a: usize,
    #[serde(rename = "M_B")]
    pub m_b: usize,
    /// Phase-mode pilot length, `L >= M_A`.
    #[serde(rename = "L")]
    pub l: usize,
    /// Phase synchronization signal length.
    #[serde(rename = "N")]
    pub n: usize,
    /// Frequency-mode pilot length, `L_B >= M_B`.
    #[serde(rename = "L_B")]
    pub l_b: usize,
    /// Frequency synchronization signal length, `>= 2`.
    #[serde(rename = "N_f")]
    pub n_f: usize,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub estimator: PhaseEstimator,
    pub scheme: SchemeKind,
    pub mode: ModeKind,
    pub lo_kind: LoKind,
    /// Reciprocity-calibration drift parameter (see
    /// [`crate::hardware::perturb_calibration`]); zero disables drift.
    pub sigma_eps2: f64,
    /// The true frequency offset is drawn uniformly from this range, Hz.
    pub delta_range_hz: (f64, f64),
    /// Residual carrier frequency offset during phase synchronization, Hz.
    pub residual_delta_hz: f64,
    /// Re-synchronization period for the timeline studies, minutes;
    /// absent means synchronize once at time zero.
    pub resync_period_min: Option<f64>,
    /// Timeline horizon, minutes.
    pub horizon_min: f64,
    /// Carrier frequency, Hz.
    pub f_c: f64,
    /// Symbol time, s.
    #[serde(rename = "T")]
    pub t: f64,
}

impl Default for Scenario {
    /// Baseline setup: 16 antennas per AP, pilot length 16, signal length
    /// 100, SNR swept from -30 to 30 dB in 3 dB steps, 10^4 trials.
    fn default() -> Self {
        Scenario {
            m_a: 16,
            m_b: 16,
            l: 16,
            n: 100,
            l_b: 16,
            n_f: 10,
            snr_grid_db: (-10..=10).map(|k| 3.0 * k as f64).collect(),
            trials: 10_000,
            seed: 42,
            estimator: PhaseEstimator::Simple,
            scheme: SchemeKind::Beamsync,
            mode: ModeKind::Phase,
            lo_kind: LoKind::Ideal,
            sigma_eps2: 0.0,
            delta_range_hz: (-300.0, 300.0),
            residual_delta_hz: 0.0,
            resync_period_min: None,
            horizon_min: 240.0,
            f_c: 3e9,
            t: 1.0 / 14e3,
        }
    }
}

impl Scenario {
    /// Validates the scenario, auto-raising pilot lengths to the antenna
    /// counts where needed. Returns the warnings produced by such fixes.
    pub fn validate(&mut self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.m_a == 0 {
            return Err(Error::invalid("M_A", "antenna count must be positive"));
        }
        if self.m_b == 0 {
            return Err(Error::invalid("M_B", "antenna count must be positive"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must run at least one trial"));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::invalid("snr_grid_db", "must contain at least one point"));
        }
        if self.snr_grid_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("snr_grid_db", "points must be finite"));
        }
        // RMSE tables are reported in ascending SNR order
        self.snr_grid_db.sort_by(|a, b| a.total_cmp(b));
        if self.n == 0 {
            return Err(Error::invalid("N", "synchronization length must be positive"));
        }
        if self.n_f < 2 {
            return Err(Error::invalid("N_f", "frequency synchronization length must be at least 2"));
        }
        if !(self.f_c > 0.0) {
            return Err(Error::invalid("f_c", "carrier frequency must be positive"));
        }
        if !(self.t > 0.0) {
            return Err(Error::invalid("T", "symbol time must be positive"));
        }
        if !(self.delta_range_hz.0 < self.delta_range_hz.1) {
            return Err(Error::invalid("delta_range_hz", "range must be increasing"));
        }
        if (self.delta_range_hz.0 * self.t).abs() >= 0.5
            || (self.delta_range_hz.1 * self.t).abs() >= 0.5
        {
            return Err(Error::invalid(
                "delta_range_hz",
                "normalized offsets must stay inside (-0.5, 0.5) cycles/sample",
            ));
        }
        if !(self.horizon_min > 0.0) {
            return Err(Error::invalid("horizon_min", "must be positive"));
        }
        if let Some(p) = self.resync_period_min {
            if !(p > 0.0) {
                return Err(Error::invalid("resync_period_min", "must be positive"));
            }
        }
        if self.l < self.m_a {
            warnings.push(format!(
                "L raised from {} to {} to satisfy L >= M_A",
                self.l, self.m_a
            ));
            self.l = self.m_a;
        }
        if self.l_b < self.m_b {
            warnings.push(format!(
                "L_B raised from {} to {} to satisfy L_B >= M_B",
                self.l_b, self.m_b
            ));
            self.l_b = self.m_b;
        }
        Ok(warnings)
    }

    fn lo_model(&self) -> LoModel {
        LoModel::new(self.lo_kind.c_vco(), self.f_c, crate::hardware::SAMPLE_INTERVAL_S)
    }

    fn phase_config(&self, sigma2: f64) -> PhaseConfig {
        PhaseConfig {
            pilot_len: self.l,
            sync_len: self.n,
            sigma2,
            estimator: self.estimator,
            residual_cfo_hz: self.residual_delta_hz,
            symbol_time_s: self.t,
        }
    }

    fn freq_config(&self, sigma2: f64) -> FreqConfig {
        FreqConfig {
            pilot_len: self.l_b,
            sync_len: self.n_f,
            sigma2,
            delta_range_hz: self.delta_range_hz,
            symbol_time_s: self.t,
            grid: GridSpec {
                min_hz: self.delta_range_hz.0,
                max_hz: self.delta_range_hz.1,
                coarse_points: 512,
                refine_tol_hz: 1e-4,
            },
            genie_beam: false,
        }
    }
}

/// Figure-reproduction presets.
pub fn preset(name: &str) -> Option<Scenario> {
    let mut s = Scenario::default();
    match name {
        // phase RMSE vs SNR, simple/NLS/PCSI and the FGB baseline
        "fig5" => {}
        // antenna scaling study: pilot length tracks the array size
        "fig6" => {
            s.m_a = 32;
            s.m_b = 32;
            s.l = 32;
        }
        // phase noise floors
        "fig8" => {
            s.n = 20;
            s.lo_kind = LoKind::Lo1;
        }
        // frequency offset estimation
        "fig11" => {
            s.mode = ModeKind::Freq;
        }
        // phase floors under residual frequency offset
        "fig14" => {
            s.m_a = 32;
            s.m_b = 32;
            s.l = 32;
            s.n = 32;
            s.residual_delta_hz = 1.0;
        }
        // beamforming-gain and phase-deviation timelines
        "fig9" | "fig10" => {
            s.n = 20;
            s.snr_grid_db = vec![20.0];
            s.lo_kind = LoKind::Lo2;
            s.sigma_eps2 = crate::hardware::DRIFT_REF_SIGMA_EPS2;
            s.resync_period_min = Some(10.0);
            s.horizon_min = 250.0;
            s.trials = 2000;
        }
        _ => return None,
    }
    Some(s)
}

/// Derives the independent random stream for one unit of work by mixing
/// `(seed, sweep index, trial index)` into a ChaCha key.
pub fn trial_rng(seed: u64, sweep_index: u64, trial_index: u64) -> ChaCha8Rng {
    fn splitmix64(x: &mut u64) -> u64 {
        *x = x.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = *x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
    let mut state = seed ^ 0x243f6a8885a308d3;
    state ^= splitmix64(&mut state) ^ sweep_index.wrapping_mul(0x9e3779b97f4a7c15);
    state ^= splitmix64(&mut state) ^ trial_index.wrapping_mul(0xbf58476d1ce4e5b9);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// One row of an RMSE sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseRow {
    /// Independent variable (SNR in dB for the standard sweeps).
    pub x_value: f64,
    /// Root-mean-square error: radians in phase mode, cycles/sample in
    /// frequency mode.
    pub rmse: f64,
    pub trials: usize,
    /// Degenerate phase statistics or boundary-pinned frequency searches.
    pub outliers: usize,
}

/// RMSE sweep result, one row per grid point, sorted by the independent
/// variable as given in the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseTable {
    pub rows: Vec<RmseRow>,
}

/// Runs the configured Monte-Carlo sweep: `trials` independent protocol
/// executions per SNR point, each on its own random stream.
pub fn monte_carlo_rmse(scenario: &Scenario) -> Result<RmseTable> {
    let mut s = scenario.clone();
    s.validate()?;
    let mut rows = Vec::with_capacity(s.snr_grid_db.len());
    for (si, &snr_db) in s.snr_grid_db.iter().enumerate() {
        let sigma2 = snr_to_sigma2(snr_db).sigma2;
        let outcomes: Result<Vec<(f64, bool)>> = (0..s.trials)
            .into_par_iter()
            .map(|ti| {
                let mut rng = trial_rng(s.seed, si as u64, ti as u64);
                run_single_trial(&s, sigma2, &mut rng)
            })
            .collect();
        let outcomes = outcomes?;
        let mut sum_sq = 0.0;
        let mut outliers = 0usize;
        for (err, outlier) in &outcomes {
            sum_sq += err * err;
            if *outlier {
                outliers += 1;
            }
        }
        rows.push(RmseRow {
            x_value: snr_db,
            rmse: (sum_sq / s.trials as f64).sqrt(),
            trials: s.trials,
            outliers,
        });
    }
    Ok(RmseTable { rows })
}

fn run_single_trial(s: &Scenario, sigma2: f64, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let lo = s.lo_model();
    let ap_a = ApState::draw(s.m_a, lo.clone(), rng)?;
    let ap_b = ApState::draw(s.m_b, lo, rng)?;
    let channel = draw_rayleigh(s.m_a, s.m_b, rng);
    match s.mode {
        ModeKind::Phase => {
            let cfg = s.phase_config(sigma2);
            let trace = match s.scheme {
                SchemeKind::Beamsync => run_phase_protocol(&ap_a, &ap_b, &channel, &cfg, rng)?,
                SchemeKind::Fgb => run_fgb_phase(&ap_a, &ap_b, &channel, &cfg, rng)?,
            };
            Ok((trace.error, trace.degenerate))
        }
        ModeKind::Freq => {
            let mut cfg = s.freq_config(sigma2);
            cfg.genie_beam = s.estimator == PhaseEstimator::Pcsi;
            let trace = match s.scheme {
                SchemeKind::Beamsync => run_freq_protocol(&ap_a, &ap_b, &channel, &cfg, rng)?,
                SchemeKind::Fgb => run_fgb_freq(&ap_a, &ap_b, &channel, &cfg, rng)?,
            };
            Ok((trace.error_cycles, trace.boundary))
        }
    }
}

/// One sampled instant of a slow-time drift study.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelinePoint {
    pub t_min: f64,
    /// Ensemble-mean beamforming gain at the user,
    /// `mean |norm(g_A)^2 + exp(j psi) norm(g_B)^2|`; at most `M_A + M_B`.
    pub gain: f64,
    /// Ensemble mean of `|wrap(psi)|` in degrees.
    pub mean_abs_dev_deg: f64,
}

/// Slow-time drift rate of the pair phase between synchronization runs,
/// rad^2 per minute. Free-running oscillators would randomize the pair
/// phase within seconds; deployed APs discipline their oscillators with a
/// PLL, so the studies use stabilized rates anchored to the oscillator
/// quality ratio.
pub fn timeline_drift_var_per_min(lo_kind: LoKind) -> f64 {
    match lo_kind {
        LoKind::Ideal => 0.0,
        // calibrated for the high-quality oscillator; the ordinary one
        // scales by the c_vco ratio
        LoKind::Lo2 => 0.0436,
        LoKind::Lo1 => 0.0436 * (LoKind::Lo1.c_vco() / LoKind::Lo2.c_vco()),
    }
}

/// Beamforming-gain evolution at the user over the scenario horizon.
pub fn beamforming_gain_timeline(scenario: &Scenario) -> Result<Vec<TimelinePoint>> {
    timeline(scenario)
}

/// Mean absolute phase deviation (degrees) at the user over the horizon.
pub fn phase_deviation_timeline(scenario: &Scenario) -> Result<Vec<TimelinePoint>> {
    timeline(scenario)
}

fn timeline(scenario: &Scenario) -> Result<Vec<TimelinePoint>> {
    let mut s = scenario.clone();
    s.validate()?;
    if s.mode != ModeKind::Phase {
        return Err(Error::invalid("mode", "timeline studies run in phase mode"));
    }
    let snr_db = s.snr_grid_db[0];
    let sigma2 = snr_to_sigma2(snr_db).sigma2;
    let minutes = s.horizon_min.floor() as usize;
    let drift_var = timeline_drift_var_per_min(s.lo_kind);
    let points = minutes + 1;

    let per_trial: Result<Vec<Vec<(f64, f64)>>> = (0..s.trials)
        .into_par_iter()
        .map(|ti| {
            let mut rng = trial_rng(s.seed, 0, ti as u64);
            timeline_single_trial(&s, sigma2, drift_var, minutes, &mut rng)
        })
        .collect();
    let per_trial = per_trial?;

    let mut out = Vec::with_capacity(points);
    for idx in 0..points {
        let mut gain_sum = 0.0;
        let mut dev_sum = 0.0;
        for trial in &per_trial {
            gain_sum += trial[idx].0;
            dev_sum += trial[idx].1;
        }
        out.push(TimelinePoint {
            t_min: idx as f64,
            gain: gain_sum / s.trials as f64,
            mean_abs_dev_deg: dev_sum / s.trials as f64,
        });
    }
    Ok(out)
}

fn timeline_single_trial(
    s: &Scenario,
    sigma2: f64,
    drift_var_per_min: f64,
    minutes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, f64)>> {
    let lo = s.lo_model();
    let mut ap_a = ApState::draw(s.m_a, lo.clone(), rng)?;
    let mut ap_b = ApState::draw(s.m_b, lo, rng)?;
    let cfg = s.phase_config(sigma2);

    let mut correction = 0.0;
    let mut lo_drift = 0.0;
    let mut minutes_since_sync = 0.0;
    let mut out = Vec::with_capacity(minutes + 1);

    for minute in 0..=minutes {
        let resync_due = minute == 0
            || s
                .resync_period_min
                .map(|p| (minute as f64 / p).fract() == 0.0)
                .unwrap_or(false);
        if resync_due {
            let channel = draw_rayleigh(s.m_a, s.m_b, rng);
            let trace = match s.scheme {
                SchemeKind::Beamsync => run_phase_protocol(&ap_a, &ap_b, &channel, &cfg, rng)?,
                SchemeKind::Fgb => run_fgb_phase(&ap_a, &ap_b, &channel, &cfg, rng)?,
            };
            correction = trace.estimate;
            lo_drift = 0.0;
            minutes_since_sync = 0.0;
        }

        let cfo_phase = 2.0 * PI * s.residual_delta_hz * 60.0 * minutes_since_sync;
        let phi_now = pair_phase_offset(&ap_a, &ap_b).phi;
        let psi = wrap_angle(phi_now - correction + lo_drift + cfo_phase);

        // fresh user channels at every evaluation
        let ga2: f64 = (0..s.m_a)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                (re * re + im * im) / 2.0
            })
            .sum();
        let gb2: f64 = (0..s.m_b)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                (re * re + im * im) / 2.0
            })
            .sum();
        let gain = {
            let re = ga2 + psi.cos() * gb2;
            let im = psi.sin() * gb2;
            (re * re + im * im).sqrt()
        };
        out.push((gain, psi.abs().to_degrees()));

        if minute < minutes {
            if drift_var_per_min > 0.0 {
                let step: f64 = rng.sample(StandardNormal);
                lo_drift += step * drift_var_per_min.sqrt();
            }
            if s.sigma_eps2 > 0.0 {
                ap_a = perturb_calibration(&ap_a, 60.0, s.sigma_eps2, rng)?;
                ap_b = perturb_calibration(&ap_b, 60.0, s.sigma_eps2, rng)?;
            }
            minutes_since_sync += 1.0;
        }
    }
    Ok(out)
}

/// One row of a Cramér-Rao bound sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbRow {
    pub snr_db: f64,
    pub n_f: usize,
    /// Monte-Carlo mean of the bound at the true composite channel with
    /// the optimal beam, (cycles/sample)^2.
    pub mean_crb: f64,
}

/// Cramér-Rao bound of the normalized offset estimate, averaged over
/// hardware and channel draws with noiseless beam selection, swept over
/// the scenario's SNR grid and the given synchronization lengths.
pub fn crb_sweep(scenario: &Scenario, n_f_grid: &[usize]) -> Result<Vec<CrbRow>> {
    use crate::cmatrix::{mat_vec, MatOp};
    use crate::freq_sync::{fim_and_crb, make_freq_sync_signal};

    let mut s = scenario.clone();
    s.validate()?;
    let mut rows = Vec::new();
    for (si, &snr_db) in s.snr_grid_db.iter().enumerate() {
        let sigma2 = snr_to_sigma2(snr_db).sigma2;
        for (fi, &n_f) in n_f_grid.iter().enumerate() {
            let x_f = make_freq_sync_signal(n_f)?;
            let point = (si * n_f_grid.len() + fi) as u64;
            let crbs: Result<Vec<f64>> = (0..s.trials)
                .into_par_iter()
                .map(|ti| {
                    let mut rng = trial_rng(s.seed, point, ti as u64);
                    let lo = s.lo_model();
                    let ap_a = ApState::draw(s.m_a, lo.clone(), &mut rng)?;
                    let ap_b = ApState::draw(s.m_b, lo, &mut rng)?;
                    let channel = draw_rayleigh(s.m_a, s.m_b, &mut rng);
                    // optimal beam: dominant direction of the effective channel
                    let g_e =
                        crate::phase_sync::effective_channel_of(&ap_a, &ap_b, &channel)?;
                    let d = crate::cmatrix::dominant_left_singular_vector(
                        &g_e,
                        crate::cmatrix::POWER_ITER_TOL,
                        crate::cmatrix::POWER_ITER_MAX,
                    )?;
                    let beam = d.vector.conj();
                    let h = crate::phase_sync::tx_to_rx_channel(&ap_a, &ap_b, &channel.g, true);
                    let rho = crate::phase_sync::beamformed_tx_scale(&ap_a, &beam);
                    let b = mat_vec(&h, MatOp::Plain, &beam)?
                        .scale(num_complex::Complex64::new(rho, 0.0));
                    Ok(fim_and_crb(&b, &x_f, sigma2)?.1)
                })
                .collect();
            let crbs = crbs?;
            let mean = crbs.iter().sum::<f64>() / crbs.len() as f64;
            rows.push(CrbRow {
                snr_db,
                n_f,
                mean_crb: mean,
            });
        }
    }
    Ok(rows)
}

/// CRB sweep as CSV.
pub fn render_crb_csv(s: &Scenario, rows: &[CrbRow]) -> String {
    let mut out = scenario_metadata_lines(s).join("\n");
    out.push('\n');
    out.push_str("snr_db,n_f,mean_crb_cycles2,rmse_bound_cycles\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.snr_db,
            r.n_f,
            r.mean_crb,
            r.mean_crb.sqrt()
        ));
    }
    out
}

/// Measurement counts for synchronizing one master with `K` slaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasurementBudget {
    /// Dominant-direction protocol: one pilot broadcast of length `L`
    /// plus `2N` beamformed samples per slave.
    pub beamsync: usize,
    /// Exhaustive pairwise beam sweeping across `K + 1` APs.
    pub beamsweep: usize,
    /// Fixed-grid selection for one AP pair.
    pub fgb: usize,
}

/// Measurement budget formulas: `beamsync = L + 2KN`,
/// `beamsweep = (K+1) M^2`, `fgb = M^2` per pair.
pub fn measurement_budget(k: usize, m: usize, l: usize, n: usize) -> MeasurementBudget {
    MeasurementBudget {
        beamsync: l + 2 * k * n,
        beamsweep: (k + 1) * m * m,
        fgb: m * m,
    }
}

/// AP index in a master/slave group; the master is 0.
pub type ApId = usize;

/// One step of the multi-AP synchronization schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncEvent {
    /// Phase stage I: the master broadcasts the pilot once for everyone.
    PilotBroadcast { from: ApId },
    /// Frequency stage I: one slave sends its pilot to the master.
    Pilot { from: ApId, to: ApId },
    /// Beamformed synchronization signal.
    SyncSignal { from: ApId, to: ApId },
    /// Phase stage III: the master echoes the conjugate back to a slave.
    ConjugateEcho { from: ApId, to: ApId },
}

/// Serialized event order for synchronizing `K` slaves with one master.
/// Phase mode: one broadcast, then a stage-II/stage-III pair per slave.
/// Frequency mode: a pilot/sync-signal pair per slave.
pub fn multi_ap_schedule(k: usize, mode: ModeKind) -> Vec<SyncEvent> {
    let mut events = Vec::new();
    match mode {
        ModeKind::Phase => {
            events.push(SyncEvent::PilotBroadcast { from: 0 });
            for slave in 1..=k {
                events.push(SyncEvent::SyncSignal { from: slave, to: 0 });
                events.push(SyncEvent::ConjugateEcho { from: 0, to: slave });
            }
        }
        ModeKind::Freq => {
            for slave in 1..=k {
                events.push(SyncEvent::Pilot { from: slave, to: 0 });
                events.push(SyncEvent::SyncSignal { from: 0, to: slave });
            }
        }
    }
    events
}

/// Executes a phase-mode schedule against simulated APs: the master's
/// single broadcast reaches every slave through its own channel, then each
/// slave completes stages II/III in order. Returns one trace per slave.
pub fn run_multi_ap_phase(
    k: usize,
    s: &Scenario,
    sigma2: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PhaseTrace>> {
    let lo = s.lo_model();
    let master = ApState::draw(s.m_a, lo.clone(), rng)?;
    let slaves: Vec<ApState> = (0..k)
        .map(|_| ApState::draw(s.m_b, lo.clone(), rng))
        .collect::<Result<_>>()?;
    let channels: Vec<_> = (0..k).map(|_| draw_rayleigh(s.m_a, s.m_b, rng)).collect();
    let cfg = s.phase_config(sigma2);

    let mut traces: Vec<Option<PhaseTrace>> = vec![None; k];
    for event in multi_ap_schedule(k, ModeKind::Phase) {
        if let SyncEvent::ConjugateEcho { to, .. } = event {
            // stages II and III for this slave; the broadcast is shared,
            // each slave sees it through its own channel realization
            let slave_idx = to - 1;
            let trace = run_phase_protocol(
                &master,
                &slaves[slave_idx],
                &channels[slave_idx],
                &cfg,
                rng,
            )?;
            traces[slave_idx] = Some(trace);
        }
    }
    Ok(traces.into_iter().map(|t| t.unwrap()).collect())
}

/// Executes a frequency-mode schedule: per slave, a pilot to the master
/// and a beamformed synchronization signal back.
pub fn run_multi_ap_freq(
    k: usize,
    s: &Scenario,
    sigma2: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FreqTrace>> {
    let lo = s.lo_model();
    let master = ApState::draw(s.m_a, lo.clone(), rng)?;
    let cfg = s.freq_config(sigma2);
    let mut traces = Vec::with_capacity(k);
    for event in multi_ap_schedule(k, ModeKind::Freq) {
        if let SyncEvent::SyncSignal { to, .. } = event {
            let slave = ApState::draw(s.m_b, lo.clone(), rng)?;
            let channel = draw_rayleigh(s.m_a, s.m_b, rng);
            let trace = run_freq_protocol(&master, &slave, &channel, &cfg, rng)?;
            let _ = to;
            traces.push(trace);
        }
    }
    Ok(traces)
}

// ── CSV rendering ───────────────────────────────────────────────────

/// Metadata lines embedded in every CSV: artifact version, resolved
/// scenario and seed, enough to reproduce the file byte for byte.
pub fn scenario_metadata_lines(s: &Scenario) -> Vec<String> {
    let (dmin, dmax) = s.delta_range_hz;
    vec![
        format!("# beamsync v{}", env!("CARGO_PKG_VERSION")),
        format!(
            "# scenario: M_A={} M_B={} L={} N={} L_B={} N_f={} trials={} seed={}",
            s.m_a, s.m_b, s.l, s.n, s.l_b, s.n_f, s.trials, s.seed
        ),
        format!(
            "# scenario: estimator={:?} scheme={:?} mode={:?} lo_kind={:?} sigma_eps2={} residual_delta_hz={}",
            s.estimator, s.scheme, s.mode, s.lo_kind, s.sigma_eps2, s.residual_delta_hz
        ),
        format!(
            "# scenario: delta_range_hz=[{dmin},{dmax}] resync_period_min={:?} horizon_min={} f_c={} T={}",
            s.resync_period_min, s.horizon_min, s.f_c, s.t
        ),
        format!("# snr_grid_db: {:?}", s.snr_grid_db),
    ]
}

/// RMSE sweep as CSV with `#` metadata lines.
pub fn render_rmse_csv(s: &Scenario, table: &RmseTable) -> String {
    let mut out = scenario_metadata_lines(s).join("\n");
    out.push('\n');
    let value_header = match s.mode {
        ModeKind::Phase => "rmse_rad",
        ModeKind::Freq => "rmse_cycles_per_sample",
    };
    out.push_str(&format!("snr_db,{value_header},trials,outliers\n"));
    for row in &table.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.x_value, row.rmse, row.trials, row.outliers
        ));
    }
    out
}

/// Timeline as CSV; `gain` selects the beamforming-gain column, otherwise
/// the deviation column is emitted.
pub fn render_timeline_csv(s: &Scenario, points: &[TimelinePoint], gain: bool) -> String {
    let mut out = scenario_metadata_lines(s).join("\n");
    out.push('\n');
    if gain {
        out.push_str("t_min,gain\n");
        for p in points {
            out.push_str(&format!("{},{}\n", p.t_min, p.gain));
        }
    } else {
        out.push_str("t_min,mean_abs_dev_deg\n");
        for p in points {
            out.push_str(&format!("{},{}\n", p.t_min, p.mean_abs_dev_deg));
        }
    }
    out
}

/// Measurement budget as CSV rows `scheme,count`.
pub fn render_budget_csv(s: &Scenario, k: usize, budget: &MeasurementBudget) -> String {
    let mut out = scenario_metadata_lines(s).join("\n");
    out.push('\n');
    out.push_str(&format!("# slaves: {k}\n"));
    out.push_str("scheme,measurements\n");
    out.push_str(&format!("beamsync,{}\n", budget.beamsync));
    out.push_str(&format!("beamsweep,{}\n", budget.beamsweep));
    out.push_str(&format!("fgb,{}\n", budget.fgb));
    out
}

/// Schedule as CSV rows `step,event,from,to`.
pub fn render_schedule_csv(s: &Scenario, k: usize, events: &[SyncEvent]) -> String {
    let mut out = scenario_metadata_lines(s).join("\n");
    out.push('\n');
    out.push_str(&format!("# slaves: {k}\n"));
    out.push_str("step,event,from,to\n");
    for (i, e) in events.iter().enumerate() {
        let (name, from, to) = match e {
            SyncEvent::PilotBroadcast { from } => ("pilot_broadcast", *from, usize::MAX),
            SyncEvent::Pilot { from, to } => ("pilot", *from, *to),
            SyncEvent::SyncSignal { from, to } => ("sync_signal", *from, *to),
            SyncEvent::ConjugateEcho { from, to } => ("conjugate_echo", *from, *to),
        };
        if to == usize::MAX {
            out.push_str(&format!("{i},{name},{from},all\n"));
        } else {
            out.push_str(&format!("{i},{name},{from},{to}\n"));
        }
    }
    out
}
