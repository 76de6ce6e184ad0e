//! Propagation channels and additive receiver noise.
//!
//! The inter-AP channel is reciprocal and frozen for the duration of one
//! protocol execution (a single coherence block): the same realization
//! backs both link directions and is never redrawn mid-protocol.

use crate::cmatrix::CMat;
use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// One reciprocal inter-AP channel realization, `M_A x M_B` with
/// i.i.d. CN(0,1) entries.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub g: CMat,
}

/// Additive receiver noise power per complex sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma2: f64,
}

/// Draws an i.i.d. Rayleigh channel realization.
pub fn draw_rayleigh(m_a: usize, m_b: usize, rng: &mut impl Rng) -> ChannelRealization {
    ChannelRealization {
        g: gaussian_matrix(m_a, m_b, 1.0, rng),
    }
}

/// Effective channel `G_e` with entry `(i, j) = rA[i] * G[i, j] * rB[j]`,
/// i.e. the propagation channel wrapped in the receive-gain diagonals of
/// both APs.
pub fn effective_channel(
    channel: &ChannelRealization,
    r_a: &[Complex64],
    r_b: &[Complex64],
) -> Result<CMat> {
    let g = &channel.g;
    if r_a.len() != g.rows() || r_b.len() != g.cols() {
        return Err(Error::dim(
            "effective_channel",
            format!("{}x{}", g.rows(), g.cols()),
            format!("{}x{}", r_a.len(), r_b.len()),
        ));
    }
    Ok(CMat::from_fn(g.rows(), g.cols(), |i, j| {
        r_a[i] * g[(i, j)] * r_b[j]
    }))
}

/// Converts an SNR in dB to a noise power, under the convention that
/// transmit symbols carry unit average power per channel use and channel
/// entries have unit variance: `sigma2 = 10^(-snr_db / 10)`.
pub fn snr_to_sigma2(snr_db: f64) -> NoiseModel {
    NoiseModel {
        sigma2: 10f64.powf(-snr_db / 10.0),
    }
}

/// AWGN matrix with i.i.d. CN(0, sigma2) entries. `sigma2 = 0` yields the
/// zero matrix without consuming randomness.
pub fn awgn(rows: usize, cols: usize, sigma2: f64, rng: &mut impl Rng) -> CMat {
    if sigma2 == 0.0 {
        return CMat::zeros(rows, cols);
    }
    gaussian_matrix(rows, cols, sigma2, rng)
}

fn gaussian_matrix(rows: usize, cols: usize, variance: f64, rng: &mut impl Rng) -> CMat {
    let std = (variance / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(std * re, std * im)
    })
}
