//! Fixed-grid-of-beams baseline.
//!
//! Both protocols rerun with analog-style beam selection instead of the
//! dominant-direction computation: each AP picks the DFT-codebook receive
//! beam that maximizes its received power and transmits on that beam's
//! conjugate. Reception and the conjugate echo are then confined to the
//! selected beam (one RF chain), which is what makes the baseline lose
//! beamforming gain relative to dominant-direction synchronization.

use crate::channel::{awgn, ChannelRealization};
use crate::cmatrix::{mat_vec, CMat, CVec, MatOp};
use crate::error::{Error, Result};
use crate::freq_sync::{
    freq_stage1, freq_stage2, make_freq_sync_signal, ml_freq_estimate, FreqConfig,
    FreqOffsetTruth, FreqTrace,
};
use crate::hardware::{pair_phase_offset, ApState};
use crate::phase_sync::{
    beamformed_tx_scale, impairment_phase_path, make_pilot, phase_stage1, phase_stage2,
    rotate_columns, simple_phase_estimate, tx_to_rx_channel, PhaseConfig, PhaseEstimator,
    PhaseTrace, SyncSignal,
};
use crate::wrap_angle;
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

/// DFT beam codebook: `M` orthonormal beams for an `M`-antenna AP.
#[derive(Debug, Clone)]
pub struct BeamGrid {
    /// `M x M`; column `k` is beam `f_k` with entries
    /// `exp(-j 2 pi k m / M) / sqrt(M)`.
    pub beams: CMat,
}

impl BeamGrid {
    pub fn beam(&self, k: usize) -> CVec {
        self.beams.column(k)
    }

    pub fn beam_count(&self) -> usize {
        self.beams.cols()
    }
}

/// Builds the DFT codebook for an `M`-antenna AP.
pub fn dft_beam_grid(m: usize) -> BeamGrid {
    let scale = 1.0 / (m as f64).sqrt();
    BeamGrid {
        beams: CMat::from_fn(m, m, |antenna, beam| {
            let angle = -2.0 * PI * (beam as f64) * (antenna as f64) / (m as f64);
            Complex64::from_polar(scale, angle)
        }),
    }
}

/// Receive-beam selection: index of the codebook beam maximizing
/// `norm(f_kᴴ Y)^2`. Ties go to the lowest index.
pub fn fgb_select_beam(y: &CMat, grid: &BeamGrid) -> usize {
    let mut best = 0usize;
    let mut best_power = f64::NEG_INFINITY;
    for k in 0..grid.beam_count() {
        let f = grid.beam(k);
        // f_kᴴ Y row vector; its squared norm is the received beam power
        let mut power = 0.0;
        for col in 0..y.cols() {
            let mut acc = Complex64::ZERO;
            for row in 0..y.rows() {
                acc += f[row].conj() * y[(row, col)];
            }
            power += acc.norm_sqr();
        }
        if power > best_power {
            best_power = power;
            best = k;
        }
    }
    best
}

/// Phase protocol with fixed-grid beam selection. Supports the simple
/// estimator and a PCSI variant that selects beams on the noiseless
/// receptions; the whitened NLS estimator is specific to the full digital
/// echo and is not offered here.
pub fn run_fgb_phase(
    ap_a: &ApState,
    ap_b: &ApState,
    channel: &ChannelRealization,
    cfg: &PhaseConfig,
    rng: &mut impl Rng,
) -> Result<PhaseTrace> {
    if cfg.estimator == PhaseEstimator::Nls {
        return Err(Error::invalid(
            "estimator",
            "the fixed-grid baseline supports the simple and pcsi estimators",
        ));
    }
    let genie_selection = cfg.estimator == PhaseEstimator::Pcsi;
    let truth = pair_phase_offset(ap_a, ap_b).phi;
    let l = cfg.pilot_len;
    let n = cfg.sync_len;
    let pilot = make_pilot(l, ap_a.antennas())?;
    let grid_a = dft_beam_grid(ap_a.antennas());
    let grid_b = dft_beam_grid(ap_b.antennas());

    let phases = impairment_phase_path(
        ap_a,
        ap_b,
        cfg.residual_cfo_hz,
        cfg.symbol_time_s,
        l + 2 * n,
        rng,
    );

    let mut pilot_rx = phase_stage1(ap_a, ap_b, channel, &pilot, cfg.sigma2, rng)?;
    if let Some(p) = &phases {
        rotate_columns(&mut pilot_rx, p, 0);
    }

    // composite one-hop channel, reused by the echo and the genie selection
    let a_to_b = tx_to_rx_channel(ap_a, ap_b, &channel.g, true);

    let rx_beam_b = if genie_selection {
        fgb_select_beam(&a_to_b, &grid_b)
    } else {
        fgb_select_beam(&pilot_rx, &grid_b)
    };
    let beam = grid_b.beam(rx_beam_b).conj();

    let signal = SyncSignal::gaussian(n, rng);
    let mut sync_rx = phase_stage2(ap_b, ap_a, &beam, &signal, channel, cfg.sigma2, rng)?;
    if let Some(p) = &phases {
        rotate_columns(&mut sync_rx, p, l);
    }

    let rx_beam_a = if genie_selection {
        let b_to_a = tx_to_rx_channel(ap_b, ap_a, &channel.g, false);
        let steered = mat_vec(&b_to_a, MatOp::Plain, &beam)?;
        let clean = steered.outer_t(&signal.x);
        fgb_select_beam(&clean, &grid_a)
    } else {
        fgb_select_beam(&sync_rx, &grid_a)
    };
    let f_a = grid_a.beam(rx_beam_a);

    // A receives through its selected beam, yielding one scalar per
    // sample, and echoes the normalized conjugate through the beam's
    // conjugate; the echo power budget is set net of A's noise floor.
    let received = mat_vec(&sync_rx, MatOp::ConjTrans, &f_a)?.conj();
    let energy = received.norm().powi(2);
    if energy == 0.0 {
        return Err(Error::invalid("sync_rx", "zero stage-II reception"));
    }
    let echo_scale = n as f64 / energy;
    let signal_energy = (energy - cfg.sigma2 * n as f64).max(0.1 * energy);
    let echo_gain =
        (n as f64).sqrt() * beamformed_tx_scale(ap_a, &f_a.conj()) / signal_energy.sqrt();
    let tx_vector = mat_vec(&a_to_b, MatOp::Plain, &f_a.conj())?;
    let clean_echo = tx_vector
        .scale(Complex64::new(echo_gain, 0.0))
        .outer_t(&received.conj());
    let noise = awgn(clean_echo.rows(), clean_echo.cols(), cfg.sigma2, rng);
    let mut echo_rx = clean_echo.add(&noise)?;
    if let Some(p) = &phases {
        rotate_columns(&mut echo_rx, p, l + n);
    }

    let estimate = simple_phase_estimate(&beam, &echo_rx, &signal.x);
    let (estimate, degenerate) = match estimate {
        Ok(v) => (v, false),
        Err(Error::DegenerateEstimate { .. }) => {
            let u: f64 = rng.random::<f64>();
            (wrap_angle((u - 0.5) * 2.0 * PI), true)
        }
        Err(e) => return Err(e),
    };

    Ok(PhaseTrace {
        pilot_rx,
        beam,
        sync_rx,
        echo_scale,
        echo_gain,
        echo_rx,
        estimate,
        truth,
        error: wrap_angle(estimate - truth),
        degenerate,
    })
}

/// Frequency protocol with fixed-grid beam selection: A transmits the
/// synchronization signal on its selected beam's conjugate and B runs the
/// ML search on the output of its own selected receive beam.
pub fn run_fgb_freq(
    ap_a: &ApState,
    ap_b: &ApState,
    channel: &ChannelRealization,
    cfg: &FreqConfig,
    rng: &mut impl Rng,
) -> Result<FreqTrace> {
    let (lo, hi) = cfg.delta_range_hz;
    let delta_hz = lo + (hi - lo) * rng.random::<f64>();
    let truth = FreqOffsetTruth::new(delta_hz, cfg.symbol_time_s)?;
    let grid_a = dft_beam_grid(ap_a.antennas());
    let grid_b = dft_beam_grid(ap_b.antennas());

    let pilot = make_pilot(cfg.pilot_len, ap_b.antennas())?;
    let pilot_rx = freq_stage1(ap_b, ap_a, channel, &pilot, cfg.sigma2, truth, rng)?;
    let rx_beam_a = if cfg.genie_beam {
        let b_to_a = tx_to_rx_channel(ap_b, ap_a, &channel.g, false);
        fgb_select_beam(&b_to_a, &grid_a)
    } else {
        fgb_select_beam(&pilot_rx, &grid_a)
    };
    let beam = grid_a.beam(rx_beam_a).conj();

    let x_f = make_freq_sync_signal(cfg.sync_len)?;
    let sync_rx = freq_stage2(ap_a, ap_b, &beam, &x_f, channel, cfg.sigma2, truth, rng)?;

    let rx_beam_b = if cfg.genie_beam {
        let h = tx_to_rx_channel(ap_a, ap_b, &channel.g, true);
        let steered = mat_vec(&h, MatOp::Plain, &beam)?;
        let clean = CMat::from_fn(steered.len(), 1, |i, _| steered[i]);
        fgb_select_beam(&clean, &grid_b)
    } else {
        fgb_select_beam(&sync_rx, &grid_b)
    };
    let f_b = grid_b.beam(rx_beam_b);
    // one scalar sample per time instant through the selected beam
    let combined = mat_vec(&sync_rx, MatOp::ConjTrans, &f_b)?.conj();
    let z = CMat::from_fn(1, cfg.sync_len, |_, n| combined[n]);
    let estimate = ml_freq_estimate(&z, &x_f, &cfg.grid, cfg.symbol_time_s)?;

    let h = tx_to_rx_channel(ap_a, ap_b, &channel.g, true);
    let rho = beamformed_tx_scale(ap_a, &beam);
    let b_full = mat_vec(&h, MatOp::Plain, &beam)?.scale(Complex64::new(rho, 0.0));
    let b_scalar = CVec::from(vec![f_b.dot_h(&b_full)]);
    let crb = if cfg.sigma2 > 0.0 {
        crate::freq_sync::fim_and_crb(&b_scalar, &x_f, cfg.sigma2)?.1
    } else {
        0.0
    };

    Ok(FreqTrace {
        pilot_rx,
        beam,
        sync_rx,
        truth,
        delta_hat_hz: estimate.delta_hat_hz,
        b_hat: estimate.b_hat,
        crb,
        error_cycles: (truth.delta_hz - estimate.delta_hat_hz) * cfg.symbol_time_s,
        boundary: estimate.boundary,
    })
}
