//! Three-stage over-the-air phase synchronization between two APs.
//!
//! Stage I: AP A broadcasts an orthonormal pilot; AP B receives it and
//! estimates the dominant direction of the effective channel. Stage II:
//! AP B beamforms a synchronization signal back along that direction.
//! Stage III: AP A echoes a power-normalized conjugate of what it
//! received; AP B estimates the pair phase offset from the echo.
//!
//! The estimators:
//! * [`simple_phase_estimate`]: `angle(aᵀ Y x)`, no channel knowledge;
//! * [`nls_phase_estimate`]: whitened nonlinear least squares, needs the
//!   true effective channel (genie-aided reference);
//! * PCSI mode: beamforms along the true dominant direction and runs the
//!   genie estimator, an upper-bound reference.
//!
//! Oscillator phase noise and residual carrier frequency offset enter as
//! per-sample rotations of the received blocks on one shared sample clock
//! across the three stages; the conjugate echo cancels the static part,
//! leaving only the drift accumulated between a sample and its echo.

use crate::channel::{awgn, ChannelRealization};
use crate::cmatrix::{
    dominant_left_singular_vector, hpd_solve_vec, mat_vec, matmul, CMat, CVec, MatOp,
    POWER_ITER_MAX, POWER_ITER_TOL,
};
use crate::error::{Error, Result};
use crate::hardware::{pair_phase_offset, ApState};
use crate::wrap_angle;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Statistic magnitudes below this are reported as degenerate rather than
/// returning the angle of numerical noise.
pub const DEGENERATE_STATISTIC_FLOOR: f64 = 1e-14;

/// Orthonormal pilot matrix: the first `M` columns of the `L x L` unitary
/// DFT matrix, so that `pilotᴴ pilot = I_M`.
#[derive(Debug, Clone)]
pub struct PilotMatrix {
    /// `L x M`, unit-energy orthonormal columns.
    pub phi: CMat,
}

impl PilotMatrix {
    pub fn len(&self) -> usize {
        self.phi.rows()
    }

    pub fn antennas(&self) -> usize {
        self.phi.cols()
    }
}

/// Builds the pilot for `m` antennas over `l >= m` samples.
pub fn make_pilot(l: usize, m: usize) -> Result<PilotMatrix> {
    if l < m {
        return Err(Error::invalid(
            "pilot_len",
            format!("pilot length {l} shorter than antenna count {m}"),
        ));
    }
    let scale = 1.0 / (l as f64).sqrt();
    let phi = CMat::from_fn(l, m, |row, col| {
        let angle = -2.0 * PI * (row as f64) * (col as f64) / (l as f64);
        Complex64::from_polar(scale, angle)
    });
    Ok(PilotMatrix { phi })
}

/// Phase synchronization signal with `norm(x)^2 = N` exactly.
#[derive(Debug, Clone)]
pub struct SyncSignal {
    pub x: CVec,
}

impl SyncSignal {
    /// Complex Gaussian signal, renormalized to energy `n`.
    pub fn gaussian(n: usize, rng: &mut impl Rng) -> Self {
        let raw = CVec::from_fn(n, |_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im)
        });
        let scale = (n as f64).sqrt() / raw.norm();
        SyncSignal {
            x: raw.scale(Complex64::new(scale, 0.0)),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }
}

/// Which phase-offset estimator the protocol run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseEstimator {
    /// `angle(aᵀ Y x)`; needs no channel knowledge.
    Simple,
    /// Whitened NLS with the true effective channel (genie).
    Nls,
    /// Perfect-CSI reference: true dominant beam plus the genie NLS.
    Pcsi,
}

/// Full record of one phase protocol execution.
#[derive(Debug, Clone)]
pub struct PhaseTrace {
    /// Stage-I reception at B (`M_B x L`).
    pub pilot_rx: CMat,
    /// Unit beamforming direction used in stage II.
    pub beam: CVec,
    /// Stage-II reception at A (`M_A x N`).
    pub sync_rx: CMat,
    /// Baseband echo normalization `c = N / norm_F(sync_rx)^2`.
    pub echo_scale: f64,
    /// Real amplitude actually applied to the conjugate echo after the
    /// radiated-power normalization.
    pub echo_gain: f64,
    /// Stage-III reception at B (`M_B x N`).
    pub echo_rx: CMat,
    /// Estimated pair phase offset, rad, in `(-pi, pi]`.
    pub estimate: f64,
    /// Ground-truth pair phase offset, rad.
    pub truth: f64,
    /// `wrap(estimate - truth)`, rad.
    pub error: f64,
    /// Set when the estimator statistic was degenerate and the estimate
    /// was replaced by a uniform draw.
    pub degenerate: bool,
}

/// Knobs for one protocol execution.
#[derive(Debug, Clone)]
pub struct PhaseConfig {
    /// Pilot length `L >= M_A`.
    pub pilot_len: usize,
    /// Synchronization signal length `N`.
    pub sync_len: usize,
    /// Receiver noise power per complex sample.
    pub sigma2: f64,
    pub estimator: PhaseEstimator,
    /// Residual carrier frequency offset between the APs, Hz. Rotates the
    /// received samples at `2 pi delta T` per sample.
    pub residual_cfo_hz: f64,
    /// Symbol time `T` used by the residual-CFO rotation, s.
    pub symbol_time_s: f64,
}

impl PhaseConfig {
    pub fn new(pilot_len: usize, sync_len: usize, sigma2: f64, estimator: PhaseEstimator) -> Self {
        PhaseConfig {
            pilot_len,
            sync_len,
            sigma2,
            estimator,
            residual_cfo_hz: 0.0,
            symbol_time_s: 1.0 / 14e3,
        }
    }
}

/// Composite one-hop channel from the transmitter's calibrated chains to
/// the receiver's antennas: entry
/// `(k, m) = rx_coupling[k] * G[m, k] * tx_coupling[m]`
/// when the propagation matrix is oriented `tx x rx`.
pub(crate) fn tx_to_rx_channel(tx: &ApState, rx: &ApState, g: &CMat, tx_is_rows: bool) -> CMat {
    if tx_is_rows {
        // g is (tx antennas) x (rx antennas)
        CMat::from_fn(rx.antennas(), tx.antennas(), |k, m| {
            rx.rx_coupling(k) * g[(m, k)] * tx.tx_coupling(m)
        })
    } else {
        // g is (rx antennas) x (tx antennas)
        CMat::from_fn(rx.antennas(), tx.antennas(), |k, m| {
            rx.rx_coupling(k) * g[(k, m)] * tx.tx_coupling(m)
        })
    }
}

/// Transmit power normalization: every transmission is scaled by a real
/// positive factor so that the radiated signal carries unit average power
/// per channel use, i.e. a fixed power budget per AP. The scaling cancels
/// the otherwise heavy-tailed `|t/r|` amplitude statistics of the raw
/// chain gains without touching any phase relationship. `weights` are the
/// per-antenna effective transmit gains applied to a baseband signal of
/// unit average total power.
pub(crate) fn tx_power_scale(weights: &[Complex64]) -> f64 {
    let power: f64 = weights.iter().map(|w| w.norm_sqr()).sum();
    if power > 0.0 {
        1.0 / power.sqrt()
    } else {
        0.0
    }
}

/// Power normalization of a unit-power signal beamformed through the
/// AP's calibrated transmit chains along `beam`.
pub(crate) fn beamformed_tx_scale(ap: &ApState, beam: &CVec) -> f64 {
    let weights: Vec<Complex64> = (0..ap.antennas())
        .map(|m| ap.tx_coupling(m) * beam[m])
        .collect();
    tx_power_scale(&weights)
}

/// Stage I: A broadcasts the pilot, B receives `M_B x L`.
pub fn phase_stage1(
    ap_a: &ApState,
    ap_b: &ApState,
    channel: &ChannelRealization,
    pilot: &PilotMatrix,
    sigma2: f64,
    rng: &mut impl Rng,
) -> Result<CMat> {
    if pilot.antennas() != ap_a.antennas() {
        return Err(Error::dim("phase_stage1", pilot.antennas(), ap_a.antennas()));
    }
    if channel.g.rows() != ap_a.antennas() || channel.g.cols() != ap_b.antennas() {
        return Err(Error::dim(
            "phase_stage1",
            format!("{}x{}", channel.g.rows(), channel.g.cols()),
            format!("{}x{}", ap_a.antennas(), ap_b.antennas()),
        ));
    }
    // H = D_rB Gᵀ D_txA, then Y = rho H Φᵀ + W. The broadcast pilot is
    // omnidirectional: every chain radiates at its unit power budget, so
    // rho makes the per-antenna pilot sequence unit power per channel use
    // (a factor sqrt(L) on the orthonormal pilot).
    let h = tx_to_rx_channel(ap_a, ap_b, &channel.g, true);
    let tx_weights: Vec<Complex64> = (0..ap_a.antennas()).map(|m| ap_a.tx_coupling(m)).collect();
    let rho =
        (ap_a.antennas() as f64 * pilot.len() as f64).sqrt() * tx_power_scale(&tx_weights);
    let signal = matmul(&h, MatOp::Plain, &pilot.phi, MatOp::Trans)?.scale(Complex64::new(rho, 0.0));
    let noise = awgn(signal.rows(), signal.cols(), sigma2, rng);
    signal.add(&noise)
}

/// Beam direction from the stage-I reception: conjugate of the dominant
/// left singular vector of the received block.
pub fn estimate_beam_direction(pilot_rx: &CMat) -> Result<CVec> {
    let d = dominant_left_singular_vector(pilot_rx, POWER_ITER_TOL, POWER_ITER_MAX)?;
    Ok(d.vector.conj())
}

/// Stage II: B beamforms the synchronization signal along `beam`, A
/// receives `M_A x N`.
pub fn phase_stage2(
    ap_b: &ApState,
    ap_a: &ApState,
    beam: &CVec,
    signal: &SyncSignal,
    channel: &ChannelRealization,
    sigma2: f64,
    rng: &mut impl Rng,
) -> Result<CMat> {
    if beam.len() != ap_b.antennas() {
        return Err(Error::dim("phase_stage2", beam.len(), ap_b.antennas()));
    }
    // received direction: rho D_rA G D_txB · beam, with rho normalizing
    // the beamformed transmission to unit average power per channel use
    let h = tx_to_rx_channel(ap_b, ap_a, &channel.g, false);
    let rho = beamformed_tx_scale(ap_b, beam);
    let steered = mat_vec(&h, MatOp::Plain, beam)?.scale(Complex64::new(rho, 0.0));
    let clean = steered.outer_t(&signal.x);
    let noise = awgn(clean.rows(), clean.cols(), sigma2, rng);
    clean.add(&noise)
}

/// Stage III: A transmits the power-normalized conjugate of its stage-II
/// reception; B receives `M_B x N`. Returns the received block, the
/// baseband normalization `c = N / norm_F(sync_rx)^2` and the effective
/// real amplitude `echo_gain` actually applied to `H sync_rx*` after the
/// radiated-power normalization.
pub fn phase_stage3(
    ap_a: &ApState,
    ap_b: &ApState,
    sync_rx: &CMat,
    channel: &ChannelRealization,
    sigma2: f64,
    rng: &mut impl Rng,
) -> Result<(CMat, f64, f64)> {
    let energy = sync_rx.frobenius_norm().powi(2);
    if energy == 0.0 {
        return Err(Error::invalid("sync_rx", "zero stage-II reception"));
    }
    let n = sync_rx.cols() as f64;
    let c = n / energy;
    // Radiated energy of the tx-weighted conjugate echo. The echoing AP
    // knows its own noise floor and backs it off when setting the echo
    // power, so the budget goes to the signal component; at very low SNR
    // the subtraction bottoms out and the AP simply radiates its budget.
    let mut weighted = 0.0;
    let mut weight_sum = 0.0;
    for m in 0..sync_rx.rows() {
        let w = ap_a.tx_coupling(m).norm_sqr();
        weight_sum += w;
        for col in 0..sync_rx.cols() {
            weighted += w * sync_rx[(m, col)].norm_sqr();
        }
    }
    if weighted == 0.0 {
        return Err(Error::invalid("sync_rx", "zero radiated echo power"));
    }
    let noise_energy = sigma2 * n * weight_sum;
    let weighted_signal = (weighted - noise_energy).max(0.1 * weighted);
    let echo_gain = (n / weighted_signal).sqrt();
    let h = tx_to_rx_channel(ap_a, ap_b, &channel.g, true);
    let echo = matmul(&h, MatOp::Plain, sync_rx, MatOp::Conj)?;
    let scaled = echo.scale(Complex64::new(echo_gain, 0.0));
    let noise = awgn(scaled.rows(), scaled.cols(), sigma2, rng);
    Ok((scaled.add(&noise)?, c, echo_gain))
}

/// Phase estimate `angle(aᵀ Y x)` in `(-pi, pi]`. Needs no channel
/// knowledge; coincides with the NLS estimator when the beam is the
/// dominant direction.
pub fn simple_phase_estimate(beam: &CVec, echo_rx: &CMat, x: &CVec) -> Result<f64> {
    let yx = mat_vec(echo_rx, MatOp::Plain, x)?;
    let stat = beam.dot_t(&yx);
    let magnitude = stat.norm();
    if magnitude < DEGENERATE_STATISTIC_FLOOR {
        return Err(Error::DegenerateEstimate { magnitude });
    }
    Ok(stat.arg())
}

/// Whitened NLS phase estimate
/// `angle(aᵀ G_eᵀ G_e* (I + c2² G_eᵀ G_e*)⁻¹ Y x)`, computed with a
/// Cholesky solve. Genie-aided: needs the true effective channel and the
/// echo amplitude factor `c2`.
pub fn nls_phase_estimate(
    echo_rx: &CMat,
    beam: &CVec,
    x: &CVec,
    g_e: &CMat,
    c2: f64,
) -> Result<f64> {
    // G_eᵀ G_e*: Hermitian PSD, M_B x M_B
    let ggc = matmul(g_e, MatOp::Trans, g_e, MatOp::Conj)?;
    let mut r = ggc.scale(Complex64::new(c2 * c2, 0.0));
    for i in 0..r.rows() {
        r[(i, i)] += Complex64::ONE;
    }
    let yx = mat_vec(echo_rx, MatOp::Plain, x)?;
    let whitened = hpd_solve_vec(&r, &yx)?;
    let steered = mat_vec(&ggc, MatOp::Plain, &whitened)?;
    let stat = beam.dot_t(&steered);
    let magnitude = stat.norm();
    if magnitude < DEGENERATE_STATISTIC_FLOOR {
        return Err(Error::DegenerateEstimate { magnitude });
    }
    Ok(stat.arg())
}

/// `c2 = echo_gain |t_1^A / r_1^A|`, the amplitude with which the
/// stage-II receiver noise re-enters the echo; it parameterizes the NLS
/// whitening matrix. With power-controlled chains the coupling ratio has
/// unit magnitude, leaving the echo gain itself.
pub fn echo_amplitude_c2(ap_a: &ApState, echo_gain: f64) -> f64 {
    echo_gain * ap_a.tr_coupling().norm()
}

/// Per-sample received-phase path for the protocol impairments: combined
/// oscillator phase noise of both APs plus the residual-CFO ramp,
/// evaluated at sample indices `1..=len`. Any frequency offset carried by
/// the oscillators themselves adds to the configured residual.
pub(crate) fn impairment_phase_path(
    ap_a: &ApState,
    ap_b: &ApState,
    residual_cfo_hz: f64,
    symbol_time_s: f64,
    len: usize,
    rng: &mut impl Rng,
) -> Option<Vec<f64>> {
    let sigma2_combined = ap_a.lo.sigma_nu2 + ap_b.lo.sigma_nu2;
    let offset_hz = residual_cfo_hz + (ap_a.lo.delta_f - ap_b.lo.delta_f);
    let cfo_step = 2.0 * PI * offset_hz * symbol_time_s;
    if sigma2_combined == 0.0 && cfo_step == 0.0 {
        return None;
    }
    let std = sigma2_combined.sqrt();
    let mut omega = 0.0;
    let mut path = Vec::with_capacity(len);
    for k in 1..=len {
        path.push(omega + cfo_step * k as f64);
        if std > 0.0 && k < len {
            let nu: f64 = rng.sample(StandardNormal);
            omega += std * nu;
        }
    }
    Some(path)
}

/// Rotates column `n` of the block by `exp(-j phases[offset + n])`; the
/// receive-side convention applied at every reception.
pub(crate) fn rotate_columns(block: &mut CMat, phases: &[f64], offset: usize) {
    for n in 0..block.cols() {
        let rot = Complex64::from_polar(1.0, -phases[offset + n]);
        block.scale_column(n, rot);
    }
}

/// Executes stages I-III and the chosen estimator. Optional impairments:
/// Wiener oscillator phase noise (enabled whenever either AP's oscillator
/// has `c_vco > 0`) and a residual carrier frequency offset, both applied
/// as per-sample rotations across the `L + 2N` protocol samples.
pub fn run_phase_protocol(
    ap_a: &ApState,
    ap_b: &ApState,
    channel: &ChannelRealization,
    cfg: &PhaseConfig,
    rng: &mut impl Rng,
) -> Result<PhaseTrace> {
    let truth = pair_phase_offset(ap_a, ap_b).phi;
    let l = cfg.pilot_len;
    let n = cfg.sync_len;
    let pilot = make_pilot(l, ap_a.antennas())?;

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

    let beam = match cfg.estimator {
        PhaseEstimator::Simple | PhaseEstimator::Nls => estimate_beam_direction(&pilot_rx)?,
        PhaseEstimator::Pcsi => {
            // true dominant right singular direction of the effective channel
            let g_e = effective_channel_of(ap_a, ap_b, channel)?;
            let d = dominant_left_singular_vector(
                &g_e.hermitian_transpose(),
                POWER_ITER_TOL,
                POWER_ITER_MAX,
            )?;
            d.vector
        }
    };

    let signal = SyncSignal::gaussian(n, rng);
    let mut sync_rx = phase_stage2(ap_b, ap_a, &beam, &signal, channel, cfg.sigma2, rng)?;
    if let Some(p) = &phases {
        rotate_columns(&mut sync_rx, p, l);
    }

    let (mut echo_rx, echo_scale, echo_gain) =
        phase_stage3(ap_a, ap_b, &sync_rx, channel, cfg.sigma2, rng)?;
    if let Some(p) = &phases {
        rotate_columns(&mut echo_rx, p, l + n);
    }

    let estimate = match cfg.estimator {
        PhaseEstimator::Simple => simple_phase_estimate(&beam, &echo_rx, &signal.x),
        PhaseEstimator::Nls | PhaseEstimator::Pcsi => {
            let g_e = effective_channel_of(ap_a, ap_b, channel)?;
            let c2 = echo_amplitude_c2(ap_a, echo_gain);
            nls_phase_estimate(&echo_rx, &beam, &signal.x, &g_e, c2)
        }
    };

    // A degenerate statistic carries no phase information; model the
    // estimator as returning an arbitrary phase so low-SNR floors stay
    // honest, and flag the trial.
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

/// Effective channel as the protocol experiences it: the propagation
/// matrix wrapped in the receive couplings of both APs.
pub(crate) fn effective_channel_of(
    ap_a: &ApState,
    ap_b: &ApState,
    channel: &ChannelRealization,
) -> Result<CMat> {
    let r_a: Vec<Complex64> = (0..ap_a.antennas()).map(|m| ap_a.rx_coupling(m)).collect();
    let r_b: Vec<Complex64> = (0..ap_b.antennas()).map(|m| ap_b.rx_coupling(m)).collect();
    crate::channel::effective_channel(channel, &r_a, &r_b)
}
