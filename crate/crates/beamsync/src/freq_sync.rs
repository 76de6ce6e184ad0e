//! Two-stage over-the-air carrier-frequency synchronization.
//!
//! Stage I: AP B broadcasts an orthonormal pilot; AP A receives it (with
//! the frequency offset rotating successive samples) and picks the
//! dominant direction. Stage II: AP A beamforms a real-valued sinusoidal
//! synchronization signal back; AP B jointly estimates the offset and the
//! nuisance composite channel by maximum likelihood, via a coarse grid
//! search refined by golden-section search.
//!
//! [`fim_and_crb`] assembles the Slepian-Bangs Fisher information matrix
//! of (Re b, Im b, offset) and evaluates the closed-form Cramér-Rao bound
//! of the normalized offset estimate.

use crate::channel::{awgn, ChannelRealization};
use crate::cmatrix::{
    dominant_left_singular_vector, mat_vec, matmul, CMat, CVec, MatOp, POWER_ITER_MAX,
    POWER_ITER_TOL,
};
use crate::error::{Error, Result};
use crate::hardware::ApState;
use crate::phase_sync::{
    beamformed_tx_scale, make_pilot, tx_power_scale, tx_to_rx_channel, PilotMatrix,
};
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

/// Ground-truth frequency offset between the APs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqOffsetTruth {
    /// Offset in Hz.
    pub delta_hz: f64,
    /// Symbol time, s.
    pub symbol_time_s: f64,
    /// Normalized offset in cycles/sample, `delta_hz * symbol_time_s`.
    pub delta_norm: f64,
}

impl FreqOffsetTruth {
    /// Requires the normalized offset to stay inside the unambiguous
    /// estimation range `|delta * T| < 0.5`.
    pub fn new(delta_hz: f64, symbol_time_s: f64) -> Result<Self> {
        let delta_norm = delta_hz * symbol_time_s;
        if !(delta_norm.abs() < 0.5) {
            return Err(Error::invalid(
                "delta_hz",
                format!("normalized offset {delta_norm} outside (-0.5, 0.5)"),
            ));
        }
        Ok(FreqOffsetTruth {
            delta_hz,
            symbol_time_s,
            delta_norm,
        })
    }
}

/// Unit-modulus rotation vector with entries `exp(j 2 pi k delta T)` for
/// `k = 1..=tau`.
pub fn rotation_vector(tau: usize, delta_hz: f64, symbol_time_s: f64) -> CVec {
    let step = 2.0 * PI * delta_hz * symbol_time_s;
    CVec::from_fn(tau, |i| Complex64::from_polar(1.0, step * (i + 1) as f64))
}

/// Real sinusoidal synchronization signal of length `n_f >= 2`:
/// `x(n) = sqrt(2) cos(2 pi n / N_f + pi/5)`, renormalized so that
/// `norm(x)^2 = N_f` exactly. The phase offset keeps every sample away
/// from zero, which would otherwise weaken the Fisher information.
pub fn make_freq_sync_signal(n_f: usize) -> Result<CVec> {
    if n_f < 2 {
        return Err(Error::invalid("n_f", "synchronization length must be at least 2"));
    }
    let raw: Vec<f64> = (1..=n_f)
        .map(|n| (2.0f64).sqrt() * (2.0 * PI * n as f64 / n_f as f64 + PI / 5.0).cos())
        .collect();
    let energy: f64 = raw.iter().map(|v| v * v).sum();
    let scale = (n_f as f64 / energy).sqrt();
    Ok(CVec::from_fn(n_f, |i| Complex64::new(raw[i] * scale, 0.0)))
}

/// Stage I: B broadcasts its pilot, A receives `M_A x L_B` with the
/// offset rotation advancing once per pilot sample.
pub fn freq_stage1(
    ap_b: &ApState,
    ap_a: &ApState,
    channel: &ChannelRealization,
    pilot: &PilotMatrix,
    sigma2: f64,
    offset: FreqOffsetTruth,
    rng: &mut impl Rng,
) -> Result<CMat> {
    if pilot.antennas() != ap_b.antennas() {
        return Err(Error::dim("freq_stage1", pilot.antennas(), ap_b.antennas()));
    }
    // M = D_rA G D_txB; Y = rho M Φᵀ D_rot + W. As in the phase protocol,
    // the broadcast pilot radiates at unit power per antenna per channel
    // use (a factor sqrt(L_B) on the orthonormal pilot).
    let h = tx_to_rx_channel(ap_b, ap_a, &channel.g, false);
    let tx_weights: Vec<Complex64> = (0..ap_b.antennas()).map(|k| ap_b.tx_coupling(k)).collect();
    let rho =
        (ap_b.antennas() as f64 * pilot.len() as f64).sqrt() * tx_power_scale(&tx_weights);
    let mut signal =
        matmul(&h, MatOp::Plain, &pilot.phi, MatOp::Trans)?.scale(Complex64::new(rho, 0.0));
    let rot = rotation_vector(pilot.len(), offset.delta_hz, offset.symbol_time_s);
    for l in 0..signal.cols() {
        signal.scale_column(l, rot[l]);
    }
    let noise = awgn(signal.rows(), signal.cols(), sigma2, rng);
    signal.add(&noise)
}

/// Beam direction for stage II: conjugate of the dominant left singular
/// vector of the stage-I reception. The per-sample unit rotations do not
/// disturb it.
pub fn estimate_beam_direction_freq(pilot_rx: &CMat) -> Result<CVec> {
    let d = dominant_left_singular_vector(pilot_rx, POWER_ITER_TOL, POWER_ITER_MAX)?;
    Ok(d.vector.conj())
}

/// Stage II: A beamforms the synchronization signal along `beam`, B
/// receives `M_B x N_f`; successive samples carry the conjugate rotation
/// `exp(-j 2 pi n delta T)`.
pub fn freq_stage2(
    ap_a: &ApState,
    ap_b: &ApState,
    beam: &CVec,
    x_f: &CVec,
    channel: &ChannelRealization,
    sigma2: f64,
    offset: FreqOffsetTruth,
    rng: &mut impl Rng,
) -> Result<CMat> {
    if beam.len() != ap_a.antennas() {
        return Err(Error::dim("freq_stage2", beam.len(), ap_a.antennas()));
    }
    let h = tx_to_rx_channel(ap_a, ap_b, &channel.g, true);
    let rho = beamformed_tx_scale(ap_a, beam);
    let steered = mat_vec(&h, MatOp::Plain, beam)?.scale(Complex64::new(rho, 0.0));
    let mut signal = steered.outer_t(x_f);
    let rot = rotation_vector(x_f.len(), offset.delta_hz, offset.symbol_time_s);
    for n in 0..signal.cols() {
        signal.scale_column(n, rot[n].conj());
    }
    let noise = awgn(signal.rows(), signal.cols(), sigma2, rng);
    signal.add(&noise)
}

/// Search grid for the ML offset estimate.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub min_hz: f64,
    pub max_hz: f64,
    /// Coarse grid points across the range.
    pub coarse_points: usize,
    /// Golden-section refinement stops below this width.
    pub refine_tol_hz: f64,
}

impl GridSpec {
    pub fn symmetric(range_hz: f64) -> Self {
        GridSpec {
            min_hz: -range_hz,
            max_hz: range_hz,
            coarse_points: 512,
            refine_tol_hz: 1e-4,
        }
    }
}

/// Maximum-likelihood frequency estimate.
#[derive(Debug, Clone)]
pub struct FreqEstimate {
    pub delta_hat_hz: f64,
    /// Least-squares composite channel at the estimated offset,
    /// `Y D(delta_hat) x / norm(x)^2`.
    pub b_hat: CVec,
    /// The coarse maximum sat on the search boundary; at very low SNR the
    /// objective is uninformative and piles up there.
    pub boundary: bool,
}

/// Joint ML estimate of the offset (grid search + golden-section
/// refinement of `norm(Y D(delta) x)^2`) and the nuisance channel vector.
pub fn ml_freq_estimate(
    y_b: &CMat,
    x_f: &CVec,
    search: &GridSpec,
    symbol_time_s: f64,
) -> Result<FreqEstimate> {
    if search.coarse_points < 2 || !(search.min_hz < search.max_hz) {
        return Err(Error::EmptySearchGrid);
    }
    if y_b.cols() != x_f.len() {
        return Err(Error::dim("ml_freq_estimate", y_b.cols(), x_f.len()));
    }

    // P[m][n] = Y[m,n] x[n]; the objective at delta is
    // sum_m |sum_n P[m][n] e^{j 2 pi n delta T}|^2
    let m = y_b.rows();
    let n = y_b.cols();
    let p = CMat::from_fn(m, n, |i, j| y_b[(i, j)] * x_f[j]);
    let objective = |delta_hz: f64| -> f64 {
        let step = 2.0 * PI * delta_hz * symbol_time_s;
        let rotor = Complex64::from_polar(1.0, step);
        let mut total = 0.0;
        for i in 0..m {
            let mut acc = Complex64::ZERO;
            let mut phase = rotor; // e^{j step * 1}
            for j in 0..n {
                acc += p[(i, j)] * phase;
                phase *= rotor;
            }
            total += acc.norm_sqr();
        }
        total
    };

    let pts = search.coarse_points;
    let spacing = (search.max_hz - search.min_hz) / (pts - 1) as f64;
    let mut best_idx = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..pts {
        let v = objective(search.min_hz + spacing * i as f64);
        if v > best_val {
            best_val = v;
            best_idx = i;
        }
    }
    let boundary = best_idx == 0 || best_idx == pts - 1;

    // golden-section refinement over the bracket of neighboring cells
    let mut lo = search.min_hz + spacing * best_idx.saturating_sub(1) as f64;
    let mut hi = search.min_hz + spacing * (best_idx + 1).min(pts - 1) as f64;
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = objective(c);
    let mut fd = objective(d);
    while hi - lo > search.refine_tol_hz {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = objective(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = objective(d);
        }
    }
    let delta_hat_hz = 0.5 * (lo + hi);

    let rot = rotation_vector(n, delta_hat_hz, symbol_time_s);
    let derotated = CVec::from_fn(n, |j| x_f[j] * rot[j]);
    let b_hat = mat_vec(y_b, MatOp::Plain, &derotated)?
        .scale(Complex64::new(1.0 / x_f.norm().powi(2), 0.0));

    Ok(FreqEstimate {
        delta_hat_hz,
        b_hat,
        boundary,
    })
}

/// Assembled Fisher information matrix of `(Re b, Im b, delta_norm)` and
/// the closed-form Cramér-Rao bound of the normalized offset:
/// `CRB = sigma^2 / (8 pi^2 |b|^2 (S2 - S1^2 / S0))` with
/// `Sk = sum_n n^k x(n)^2`.
pub fn fim_and_crb(b: &CVec, x_f: &CVec, sigma2: f64) -> Result<(CMat, f64)> {
    let m = b.len();
    let bnorm2 = b.norm().powi(2);
    if bnorm2 <= 0.0 {
        return Err(Error::invalid("b", "zero composite channel"));
    }
    if sigma2 <= 0.0 {
        return Err(Error::invalid("sigma2", "must be positive"));
    }

    let (mut s0, mut s1, mut s2) = (0.0f64, 0.0f64, 0.0f64);
    for (i, x) in x_f.as_slice().iter().enumerate() {
        let n = (i + 1) as f64;
        let x2 = x.norm_sqr();
        s0 += x2;
        s1 += n * x2;
        s2 += n * n * x2;
    }
    let denom = s2 - s1 * s1 / s0;
    if denom <= 1e-12 * s2.max(1.0) {
        return Err(Error::invalid(
            "x_f",
            "degenerate signal support: Fisher information for the offset vanishes",
        ));
    }

    // per-sample blocks summed over n (real symmetric, stored complex)
    let dim = 2 * m + 1;
    let mut j = CMat::zeros(dim, dim);
    let two_over_sigma2 = 2.0 / sigma2;
    for i in 0..m {
        j[(i, i)] = Complex64::new(two_over_sigma2 * s0, 0.0);
        j[(m + i, m + i)] = Complex64::new(two_over_sigma2 * s0, 0.0);
        let cross_i = two_over_sigma2 * 2.0 * PI * s1 * b[i].im;
        let cross_r = -two_over_sigma2 * 2.0 * PI * s1 * b[i].re;
        j[(i, dim - 1)] = Complex64::new(cross_i, 0.0);
        j[(dim - 1, i)] = Complex64::new(cross_i, 0.0);
        j[(m + i, dim - 1)] = Complex64::new(cross_r, 0.0);
        j[(dim - 1, m + i)] = Complex64::new(cross_r, 0.0);
    }
    j[(dim - 1, dim - 1)] = Complex64::new(two_over_sigma2 * 4.0 * PI * PI * s2 * bnorm2, 0.0);

    let crb = sigma2 / (8.0 * PI * PI * bnorm2 * denom);
    Ok((j, crb))
}

/// Full record of one frequency protocol execution.
#[derive(Debug, Clone)]
pub struct FreqTrace {
    /// Stage-I reception at A (`M_A x L_B`).
    pub pilot_rx: CMat,
    /// Unit beamforming direction used in stage II.
    pub beam: CVec,
    /// Stage-II reception at B (`M_B x N_f`).
    pub sync_rx: CMat,
    /// Ground-truth offset.
    pub truth: FreqOffsetTruth,
    /// Estimated offset, Hz.
    pub delta_hat_hz: f64,
    /// Estimated composite channel at the estimated offset.
    pub b_hat: CVec,
    /// Cramér-Rao bound of the normalized offset, evaluated at the true
    /// composite channel, (cycles/sample)^2.
    pub crb: f64,
    /// `(truth - estimate) * T`, cycles/sample.
    pub error_cycles: f64,
    /// Coarse search peaked on the range boundary.
    pub boundary: bool,
}

/// Knobs for one frequency protocol execution.
#[derive(Debug, Clone)]
pub struct FreqConfig {
    /// Pilot length `L_B >= M_B`.
    pub pilot_len: usize,
    /// Synchronization signal length `N_f >= 2`.
    pub sync_len: usize,
    pub sigma2: f64,
    /// The true offset is drawn uniformly from this range, Hz.
    pub delta_range_hz: (f64, f64),
    pub symbol_time_s: f64,
    pub grid: GridSpec,
    /// Beamform along the true dominant direction of the effective
    /// channel instead of the pilot-estimated one (PCSI reference).
    pub genie_beam: bool,
}

impl FreqConfig {
    pub fn new(pilot_len: usize, sync_len: usize, sigma2: f64) -> Self {
        FreqConfig {
            pilot_len,
            sync_len,
            sigma2,
            delta_range_hz: (-300.0, 300.0),
            symbol_time_s: 1.0 / 14e3,
            grid: GridSpec {
                min_hz: -300.0,
                max_hz: 300.0,
                coarse_points: 512,
                refine_tol_hz: 1e-4,
            },
            genie_beam: false,
        }
    }
}

/// Executes stage I, beam selection, stage II and the ML estimate. The
/// true offset is drawn from the configured range; the trace records the
/// CRB at the true composite channel for bound comparisons.
pub fn run_freq_protocol(
    ap_a: &ApState,
    ap_b: &ApState,
    channel: &ChannelRealization,
    cfg: &FreqConfig,
    rng: &mut impl Rng,
) -> Result<FreqTrace> {
    let (lo, hi) = cfg.delta_range_hz;
    let delta_hz = lo + (hi - lo) * rng.random::<f64>();
    let truth = FreqOffsetTruth::new(delta_hz, cfg.symbol_time_s)?;

    let pilot = make_pilot(cfg.pilot_len, ap_b.antennas())?;
    let pilot_rx = freq_stage1(ap_b, ap_a, channel, &pilot, cfg.sigma2, truth, rng)?;
    let beam = if cfg.genie_beam {
        // true dominant left singular direction of the effective channel
        let g_e = crate::phase_sync::effective_channel_of(ap_a, ap_b, channel)?;
        let d = dominant_left_singular_vector(&g_e, POWER_ITER_TOL, POWER_ITER_MAX)?;
        d.vector.conj()
    } else {
        estimate_beam_direction_freq(&pilot_rx)?
    };

    let x_f = make_freq_sync_signal(cfg.sync_len)?;
    let sync_rx = freq_stage2(ap_a, ap_b, &beam, &x_f, channel, cfg.sigma2, truth, rng)?;
    let estimate = ml_freq_estimate(&sync_rx, &x_f, &cfg.grid, cfg.symbol_time_s)?;

    // true composite channel seen at B for the bound, including the
    // transmit power normalization actually applied in stage II
    let h = tx_to_rx_channel(ap_a, ap_b, &channel.g, true);
    let rho = beamformed_tx_scale(ap_a, &beam);
    let b_true = mat_vec(&h, MatOp::Plain, &beam)?.scale(Complex64::new(rho, 0.0));
    let crb = if cfg.sigma2 > 0.0 {
        fim_and_crb(&b_true, &x_f, cfg.sigma2)?.1
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_rayleigh;
    use crate::cmatrix::hpd_solve;
    use crate::hardware::LoModel;
    use crate::test_support::{jacobi_dominant_eigvec, seeded_rng, standard_complex};

    const T: f64 = 1.0 / 14e3;

    #[test]
    fn sync_signal_construction() {
        let x = make_freq_sync_signal(2).unwrap();
        assert_eq!(x.len(), 2);
        assert!((x.norm().powi(2) - 2.0).abs() < 1e-12);
        for n in [2usize, 3, 10, 64] {
            let x = make_freq_sync_signal(n).unwrap();
            assert!(x.as_slice().iter().all(|z| z.im == 0.0));
            assert!((x.norm().powi(2) - n as f64).abs() < 1e-12);
        }
        assert!(make_freq_sync_signal(1).is_err());
    }

    #[test]
    fn sync_signal_identifiable() {
        // the CRB denominator stays positive across the length family
        for n in 2..=64usize {
            let x = make_freq_sync_signal(n).unwrap();
            let b = CVec::from(vec![Complex64::ONE]);
            let (_, crb) = fim_and_crb(&b, &x, 1.0).unwrap();
            assert!(crb.is_finite() && crb > 0.0, "N_f = {n}");
        }
    }

    #[test]
    fn crb_monotone_in_length() {
        let b = CVec::from(vec![Complex64::new(0.3, -0.8), Complex64::new(1.1, 0.2)]);
        for k in 2..=32usize {
            let (_, crb_k) = fim_and_crb(&b, &make_freq_sync_signal(k).unwrap(), 0.5).unwrap();
            let (_, crb_2k) = fim_and_crb(&b, &make_freq_sync_signal(2 * k).unwrap(), 0.5).unwrap();
            assert!(crb_2k < crb_k, "k = {k}");
        }
    }

    #[test]
    fn crb_closed_form_scalings() {
        let x = make_freq_sync_signal(10).unwrap();
        let b = CVec::from(vec![Complex64::new(1.0, 0.5)]);
        let b2 = b.scale(Complex64::new(2.0f64.sqrt(), 0.0));
        let (_, crb) = fim_and_crb(&b, &x, 1.0).unwrap();
        let (_, crb_bigger_b) = fim_and_crb(&b2, &x, 1.0).unwrap();
        assert!((crb_bigger_b - crb / 2.0).abs() < 1e-15 * crb);
        let (_, crb_half_noise) = fim_and_crb(&b, &x, 0.5).unwrap();
        assert!((crb_half_noise - crb / 2.0).abs() < 1e-15 * crb);
    }

    #[test]
    fn crb_matches_block_inverse() {
        let mut rng = seeded_rng(50);
        for _ in 0..20 {
            let m = 1 + (rng.random::<u32>() % 4) as usize;
            let b = CVec::from_fn(m, |_| standard_complex(&mut rng));
            let n_f = 2 + (rng.random::<u32>() % 16) as usize;
            let x = make_freq_sync_signal(n_f).unwrap();
            let sigma2 = 0.1 + rng.random::<f64>();
            let (j, crb) = fim_and_crb(&b, &x, sigma2).unwrap();
            // corner of J^{-1} via a Cholesky solve against the last basis vector
            let dim = 2 * m + 1;
            let e_last = CMat::from_fn(dim, 1, |i, _| {
                if i == dim - 1 {
                    Complex64::ONE
                } else {
                    Complex64::ZERO
                }
            });
            let col = hpd_solve(&j, &e_last).unwrap();
            let corner = col[(dim - 1, 0)].re;
            assert!(
                (corner - crb).abs() < 1e-8 * crb.max(1e-12),
                "corner {corner} vs closed form {crb}"
            );
        }
    }

    #[test]
    fn stage1_scalar_case() {
        let mut rng = seeded_rng(51);
        let chain = crate::hardware::RfChain::new(Complex64::ONE, Complex64::ONE).unwrap();
        let ap = ApState::new(vec![chain], LoModel::ideal()).unwrap();
        let ch = ChannelRealization {
            g: CMat::identity(1),
        };
        let pilot = make_pilot(1, 1).unwrap();
        let offset = FreqOffsetTruth::new(0.0, T).unwrap();
        let y = freq_stage1(&ap, &ap, &ch, &pilot, 0.0, offset, &mut rng).unwrap();
        assert!((y[(0, 0)] - Complex64::ONE).norm() < 1e-14);
    }

    #[test]
    fn stage1_rotation_peel() {
        let mut rng = seeded_rng(52);
        let ap_b = ApState::draw(3, LoModel::ideal(), &mut rng).unwrap();
        let ap_a = ApState::draw(4, LoModel::ideal(), &mut rng).unwrap();
        let ch = draw_rayleigh(4, 3, &mut rng);
        let pilot = make_pilot(6, 3).unwrap();
        let offset = FreqOffsetTruth::new(137.0, T).unwrap();
        let none = FreqOffsetTruth::new(0.0, T).unwrap();
        let with = freq_stage1(&ap_b, &ap_a, &ch, &pilot, 0.0, offset, &mut rng).unwrap();
        let without = freq_stage1(&ap_b, &ap_a, &ch, &pilot, 0.0, none, &mut rng).unwrap();
        let rot = rotation_vector(6, 137.0, T);
        for l in 0..6 {
            for m in 0..4 {
                let peeled = with[(m, l)] * rot[l].conj();
                assert!((peeled - without[(m, l)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn beam_direction_ignores_rotation_and_matches_oracle() {
        let mut rng = seeded_rng(53);
        let ap_b = ApState::draw(3, LoModel::ideal(), &mut rng).unwrap();
        let ap_a = ApState::draw(4, LoModel::ideal(), &mut rng).unwrap();
        let ch = draw_rayleigh(4, 3, &mut rng);
        let pilot = make_pilot(3, 3).unwrap();
        for delta in [0.0, 200.0] {
            let offset = FreqOffsetTruth::new(delta, T).unwrap();
            let y = freq_stage1(&ap_b, &ap_a, &ch, &pilot, 0.0, offset, &mut rng).unwrap();
            let a_f = estimate_beam_direction_freq(&y).unwrap();
            // oracle: dominant eigenvector of G_e G_eᴴ is u1
            let g_e = crate::phase_sync::effective_channel_of(&ap_a, &ap_b, &ch).unwrap();
            let gg = matmul(&g_e, MatOp::Plain, &g_e, MatOp::ConjTrans).unwrap();
            let (_, u1) = jacobi_dominant_eigvec(&gg);
            let overlap = a_f.conj().dot_h(&u1).norm();
            assert!((overlap - 1.0).abs() < 1e-8, "delta {delta}: overlap {overlap}");
        }
    }

    #[test]
    fn stage2_rank_one_and_grid_consistency() {
        let mut rng = seeded_rng(54);
        let ap_a = ApState::draw(3, LoModel::ideal(), &mut rng).unwrap();
        let ap_b = ApState::draw(2, LoModel::ideal(), &mut rng).unwrap();
        let ch = draw_rayleigh(3, 2, &mut rng);
        let beam = CVec::from_fn(3, |_| standard_complex(&mut rng)).normalized();
        let x = make_freq_sync_signal(8).unwrap();
        let offset = FreqOffsetTruth::new(0.0, T).unwrap();
        let y = freq_stage2(&ap_a, &ap_b, &beam, &x, &ch, 0.0, offset, &mut rng).unwrap();
        // delta = 0, sigma2 = 0: exactly b x_fᵀ
        let h = tx_to_rx_channel(&ap_a, &ap_b, &ch.g, true);
        let rho = beamformed_tx_scale(&ap_a, &beam);
        let b = mat_vec(&h, MatOp::Plain, &beam)
            .unwrap()
            .scale(Complex64::new(rho, 0.0));
        for k in 0..2 {
            for n in 0..8 {
                assert!((y[(k, n)] - b[k] * x[n]).norm() < 1e-12);
            }
        }

        // noiseless objective peaks at the true offset on a fine grid
        let offset = FreqOffsetTruth::new(93.0, T).unwrap();
        let y = freq_stage2(&ap_a, &ap_b, &beam, &x, &ch, 0.0, offset, &mut rng).unwrap();
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..1201 {
            let delta = -300.0 + 0.5 * i as f64;
            let rot = rotation_vector(8, delta, T);
            let derot = CVec::from_fn(8, |j| x[j] * rot[j]);
            let v = mat_vec(&y, MatOp::Plain, &derot).unwrap().norm();
            if v > best.1 {
                best = (delta, v);
            }
        }
        assert!((best.0 - 93.0).abs() <= 0.5);
    }

    #[test]
    fn ml_estimate_noiseless_exact() {
        let mut rng = seeded_rng(55);
        for _ in 0..10 {
            let ap_a = ApState::draw(3, LoModel::ideal(), &mut rng).unwrap();
            let ap_b = ApState::draw(3, LoModel::ideal(), &mut rng).unwrap();
            let ch = draw_rayleigh(3, 3, &mut rng);
            let cfg = FreqConfig::new(3, 10, 0.0);
            let trace = run_freq_protocol(&ap_a, &ap_b, &ch, &cfg, &mut rng).unwrap();
            assert!(
                (trace.delta_hat_hz - trace.truth.delta_hz).abs() < 1e-3,
                "delta_hat {} vs {}",
                trace.delta_hat_hz,
                trace.truth.delta_hz
            );
        }
    }

    #[test]
    fn ml_estimate_recovers_channel_noiseless() {
        let mut rng = seeded_rng(56);
        let ap_a = ApState::draw(4, LoModel::ideal(), &mut rng).unwrap();
        let ap_b = ApState::draw(3, LoModel::ideal(), &mut rng).unwrap();
        let ch = draw_rayleigh(4, 3, &mut rng);
        let beam = CVec::from_fn(4, |_| standard_complex(&mut rng)).normalized();
        let x = make_freq_sync_signal(12).unwrap();
        let offset = FreqOffsetTruth::new(-140.0, T).unwrap();
        let y = freq_stage2(&ap_a, &ap_b, &beam, &x, &ch, 0.0, offset, &mut rng).unwrap();
        let est = ml_freq_estimate(&y, &x, &GridSpec::symmetric(300.0), T).unwrap();
        let h = tx_to_rx_channel(&ap_a, &ap_b, &ch.g, true);
        let rho = beamformed_tx_scale(&ap_a, &beam);
        let b = mat_vec(&h, MatOp::Plain, &beam)
            .unwrap()
            .scale(Complex64::new(rho, 0.0));
        for k in 0..3 {
            assert!((est.b_hat[k] - b[k]).norm() < 1e-6 * b.norm());
        }
    }

    #[test]
    fn ml_estimate_equivariance() {
        let mut rng = seeded_rng(57);
        let y = CMat::from_fn(2, 10, |_, _| standard_complex(&mut rng));
        let x = make_freq_sync_signal(10).unwrap();
        let grid = GridSpec::symmetric(300.0);
        let base = ml_freq_estimate(&y, &x, &grid, T).unwrap();
        // push the spectrum by an extra rotation, keeping the peak in range
        let shift = 41.0;
        let mut y_shift = y.clone();
        let rot = rotation_vector(10, shift, T);
        for n in 0..10 {
            y_shift.scale_column(n, rot[n].conj());
        }
        let moved = ml_freq_estimate(&y_shift, &x, &grid, T).unwrap();
        if !base.boundary && !moved.boundary {
            assert!(
                (moved.delta_hat_hz - base.delta_hat_hz - shift).abs() < 0.5,
                "base {} moved {}",
                base.delta_hat_hz,
                moved.delta_hat_hz
            );
        }
    }

    #[test]
    fn a_f_choice_maximizes_received_energy() {
        let mut rng = seeded_rng(58);
        for _ in 0..10 {
            let ap_a = ApState::draw(4, LoModel::ideal(), &mut rng).unwrap();
            let ap_b = ApState::draw(4, LoModel::ideal(), &mut rng).unwrap();
            let ch = draw_rayleigh(4, 4, &mut rng);
            let g_e = crate::phase_sync::effective_channel_of(&ap_a, &ap_b, &ch).unwrap();
            let gg = matmul(&g_e, MatOp::Plain, &g_e, MatOp::ConjTrans).unwrap();
            let (_, u1) = jacobi_dominant_eigvec(&gg);
            let energy = |a: &CVec| -> f64 {
                mat_vec(&g_e, MatOp::Trans, a).unwrap().norm().powi(2)
            };
            let best = energy(&u1.conj());
            for _ in 0..100 {
                let a = CVec::from_fn(4, |_| standard_complex(&mut rng)).normalized();
                assert!(best * (1.0 + 1e-9) >= energy(&a));
            }
        }
    }

    #[test]
    fn rotation_vector_unit_modulus() {
        let rot = rotation_vector(16, 250.0, T);
        for z in rot.as_slice() {
            assert!((z.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn offset_truth_range_check() {
        assert!(FreqOffsetTruth::new(300.0, T).is_ok());
        assert!(FreqOffsetTruth::new(8000.0, T).is_err());
    }
}
