//! RF hardware models: per-chain complex transmit/receive gains, per-AP
//! internal reciprocity calibration, oscillator phase noise and slow
//! calibration drift.
//!
//! Each access point carries one local oscillator driving all of its RF
//! chains. An AP is "internally reciprocity calibrated" when every antenna
//! `m` applies the coefficient `t_1 r_m / (r_1 t_m)` on transmit, which
//! references all chains to the first one. What remains between two such
//! APs is a single pair phase offset, the quantity the phase protocol
//! estimates.

use crate::error::{Error, Result};
use crate::wrap_angle;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Simulation signal bandwidth (Hz). Sets the sampling interval for the
/// oscillator phase noise model.
pub const SIGNAL_BANDWIDTH_HZ: f64 = 20e6;
/// Sampling interval, `1 / SIGNAL_BANDWIDTH_HZ`.
pub const SAMPLE_INTERVAL_S: f64 = 1.0 / SIGNAL_BANDWIDTH_HZ;
/// Gains drawn with magnitude below this are redrawn, keeping the nonzero
/// gain invariant testable.
pub const MIN_GAIN_MAGNITUDE: f64 = 1e-12;

/// One RF chain: complex transmit and receive gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfChain {
    pub t: Complex64,
    pub r: Complex64,
}

impl RfChain {
    /// Rejects zero (or numerically zero) gains.
    pub fn new(t: Complex64, r: Complex64) -> Result<Self> {
        if t.norm() <= MIN_GAIN_MAGNITUDE {
            return Err(Error::invalid("t", "transmit gain magnitude must be positive"));
        }
        if r.norm() <= MIN_GAIN_MAGNITUDE {
            return Err(Error::invalid("r", "receive gain magnitude must be positive"));
        }
        Ok(RfChain { t, r })
    }
}

/// Oscillator quality presets used in the simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoKind {
    /// No phase noise.
    Ideal,
    /// Ordinary crystal oscillator.
    Lo1,
    /// High-performance oscillator.
    Lo2,
}

impl LoKind {
    /// Oscillator quality constant `c_vco` in (rad Hz)^-1.
    pub fn c_vco(self) -> f64 {
        match self {
            LoKind::Ideal => 0.0,
            LoKind::Lo1 => 1.7610e-19,
            LoKind::Lo2 => 1.4647e-21,
        }
    }
}

/// Discrete Wiener phase noise model of a local oscillator, plus its
/// carrier frequency offset from nominal.
#[derive(Debug, Clone, PartialEq)]
pub struct LoModel {
    /// Oscillator quality constant, (rad Hz)^-1.
    pub c_vco: f64,
    /// Carrier frequency, Hz.
    pub f_c: f64,
    /// Sampling interval, s.
    pub t_s: f64,
    /// Per-sample phase increment variance, rad^2:
    /// `sigma_nu2 = 4 pi^2 f_c^2 c_vco T_s`.
    pub sigma_nu2: f64,
    /// Accumulated oscillator phase, rad. Starts at zero; any initial
    /// phase is absorbed into the chain gains.
    pub omega: f64,
    /// Carrier frequency offset from nominal, Hz.
    pub delta_f: f64,
}

impl LoModel {
    pub fn new(c_vco: f64, f_c: f64, t_s: f64) -> Self {
        let sigma_nu2 = 4.0 * std::f64::consts::PI.powi(2) * f_c * f_c * c_vco * t_s;
        LoModel {
            c_vco,
            f_c,
            t_s,
            sigma_nu2,
            omega: 0.0,
            delta_f: 0.0,
        }
    }

    pub fn from_kind(kind: LoKind, f_c: f64) -> Self {
        LoModel::new(kind.c_vco(), f_c, SAMPLE_INTERVAL_S)
    }

    pub fn ideal() -> Self {
        LoModel::new(0.0, 3e9, SAMPLE_INTERVAL_S)
    }
}

/// One access point: RF chains, local oscillator and the internal
/// calibration coefficients currently applied on transmit.
///
/// The calibration vector is frozen at construction; drifting the chain
/// gains afterwards (see [`perturb_calibration`]) leaves the AP using its
/// stale coefficients, which is exactly the modeled impairment.
#[derive(Debug, Clone)]
pub struct ApState {
    pub chains: Vec<RfChain>,
    pub lo: LoModel,
    pub calib: Vec<Complex64>,
}

impl ApState {
    pub fn new(chains: Vec<RfChain>, lo: LoModel) -> Result<Self> {
        if chains.is_empty() {
            return Err(Error::invalid("chains", "at least one RF chain required"));
        }
        let calib = internal_calibration(&chains);
        Ok(ApState { chains, lo, calib })
    }

    /// Draws an AP with `m` CN(0,1) chains.
    pub fn draw(m: usize, lo: LoModel, rng: &mut impl Rng) -> Result<Self> {
        ApState::new(draw_rf_chain_gains(m, rng), lo)
    }

    pub fn antennas(&self) -> usize {
        self.chains.len()
    }

    /// Effective transmit gain of antenna `m`: stored calibration
    /// coefficient times the current chain gain. With fresh calibration
    /// this equals `(t_1/r_1) r_m`.
    pub fn tx_effective(&self, m: usize) -> Complex64 {
        self.calib[m] * self.chains[m].t
    }

    pub fn rx_gain(&self, m: usize) -> Complex64 {
        self.chains[m].r
    }

    /// First-chain transmit/receive ratio `t_1 / r_1`.
    pub fn tr_ratio(&self) -> Complex64 {
        self.chains[0].t / self.chains[0].r
    }

    /// Transmit coupling of antenna `m` as the protocol sees it: each
    /// chain drives at a fixed power (per-chain power control), so only
    /// the phase of the calibrated gain survives.
    pub fn tx_coupling(&self, m: usize) -> Complex64 {
        unit_phase(self.tx_effective(m))
    }

    /// Receive coupling of antenna `m`: automatic gain control levels the
    /// chain amplitude ahead of sampling, leaving the phase of `r_m`.
    pub fn rx_coupling(&self, m: usize) -> Complex64 {
        unit_phase(self.chains[m].r)
    }

    /// Unit-modulus first-chain ratio `exp(j(angle t_1 - angle r_1))`.
    pub fn tr_coupling(&self) -> Complex64 {
        unit_phase(self.chains[0].t / self.chains[0].r)
    }
}

fn unit_phase(z: Complex64) -> Complex64 {
    let n = z.norm();
    if n > 0.0 {
        z / Complex64::new(n, 0.0)
    } else {
        Complex64::ONE
    }
}

/// Draws `m` i.i.d. CN(0,1) transmit/receive gain pairs. Draws with
/// magnitude below [`MIN_GAIN_MAGNITUDE`] are redrawn.
pub fn draw_rf_chain_gains(m: usize, rng: &mut impl Rng) -> Vec<RfChain> {
    let draw = |rng: &mut dyn rand::RngCore| -> Complex64 {
        loop {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
            if z.norm() > MIN_GAIN_MAGNITUDE {
                return z;
            }
        }
    };
    (0..m)
        .map(|_| RfChain {
            t: draw(rng),
            r: draw(rng),
        })
        .collect()
}

/// Internal reciprocity calibration coefficients `t_1 r_m / (r_1 t_m)`.
/// Entry 0 is exactly one.
pub fn internal_calibration(chains: &[RfChain]) -> Vec<Complex64> {
    let first = &chains[0];
    let mut coeffs: Vec<Complex64> = chains
        .iter()
        .map(|c| (first.t * c.r) / (first.r * c.t))
        .collect();
    coeffs[0] = Complex64::ONE;
    coeffs
}

/// Ground-truth pair phase offset between two APs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOffsetTruth {
    /// `angle(t_1^A) - angle(r_1^A)`.
    pub phi_a: f64,
    /// `angle(t_1^B) - angle(r_1^B)`.
    pub phi_b: f64,
    /// `wrap(phi_a - phi_b)`, in `(-pi, pi]`.
    pub phi: f64,
}

/// Computes the pair phase offset between two constructed APs.
pub fn pair_phase_offset(ap_a: &ApState, ap_b: &ApState) -> PhaseOffsetTruth {
    let phi_a = ap_a.chains[0].t.arg() - ap_a.chains[0].r.arg();
    let phi_b = ap_b.chains[0].t.arg() - ap_b.chains[0].r.arg();
    PhaseOffsetTruth {
        phi_a,
        phi_b,
        phi: wrap_angle(phi_a - phi_b),
    }
}

/// Advances the oscillator along a Wiener phase noise path of length `n`.
///
/// The returned path starts at the oscillator's current phase and each
/// subsequent sample adds an independent `N(0, sigma_nu2)` increment. The
/// oscillator state is advanced to the last sample, so consecutive calls
/// form one continuous path.
pub fn wiener_phase_noise_path(lo: &mut LoModel, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let std = lo.sigma_nu2.sqrt();
    let mut path = Vec::with_capacity(n);
    let mut omega = lo.omega;
    path.push(omega);
    for _ in 1..n {
        let nu: f64 = rng.sample(StandardNormal);
        omega += std * nu;
        path.push(omega);
    }
    lo.omega = omega;
    path
}

/// Reference drift variance: the relative complex random-walk variance one
/// gain accumulates over four hours at the nominal drift parameter
/// `sigma_eps2 = 10^(-9.6)`. Calibrated so that the stale-calibration
/// coefficient ratio shows a mean absolute angle deviation of about
/// 0.027 rad (2.7%) after four hours.
pub const DRIFT_REF_SIGMA_EPS2: f64 = 2.5118864315095718e-10; // 10^(-9.6)
const DRIFT_REF_WALK_VAR_4H: f64 = 5.726e-4;
const FOUR_HOURS_S: f64 = 4.0 * 3600.0;

/// Applies reciprocity-calibration drift: every chain gain receives an
/// independent multiplicative complex Gaussian random-walk increment whose
/// variance is proportional to `sigma_eps2 * elapsed`. The calibration
/// coefficients are *not* recomputed; the AP keeps using its stale
/// calibration.
pub fn perturb_calibration(
    ap: &ApState,
    elapsed_s: f64,
    sigma_eps2: f64,
    rng: &mut impl Rng,
) -> Result<ApState> {
    if elapsed_s < 0.0 {
        return Err(Error::invalid("elapsed", "must be nonnegative"));
    }
    if sigma_eps2 < 0.0 {
        return Err(Error::invalid("sigma_eps2", "must be nonnegative"));
    }
    if elapsed_s == 0.0 || sigma_eps2 == 0.0 {
        return Ok(ap.clone());
    }

    let var = DRIFT_REF_WALK_VAR_4H * (sigma_eps2 / DRIFT_REF_SIGMA_EPS2) * (elapsed_s / FOUR_HOURS_S);
    let std = (var / 2.0).sqrt();
    let drift = |g: Complex64, rng: &mut dyn rand::RngCore| -> Complex64 {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        g * (Complex64::ONE + Complex64::new(std * re, std * im))
    };
    let chains = ap
        .chains
        .iter()
        .map(|c| RfChain {
            t: drift(c.t, rng),
            r: drift(c.r, rng),
        })
        .collect();
    Ok(ApState {
        chains,
        lo: ap.lo.clone(),
        calib: ap.calib.clone(), // deliberately stale
    })
}

/// Ratio of a bidirectional calibration measurement between two antennas:
/// `z12 / z21`. The reciprocal channel between the antennas cancels,
/// leaving the transmit/receive chain mismatch that antenna 2 must
/// pre-compensate for coherent combining.
pub fn bidirectional_calibration_ratio(z12: Complex64, z21: Complex64) -> Result<Complex64> {
    let mag = z21.norm();
    if mag < 1e-14 {
        return Err(Error::DegenerateMeasurement { magnitude: mag });
    }
    Ok(z12 / z21)
}
