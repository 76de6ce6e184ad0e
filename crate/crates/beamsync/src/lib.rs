//! Over-the-air phase and carrier-frequency synchronization between
//! distributed multi-antenna access points.
//!
//! The library models a pair (or a master/slave group) of reciprocity-
//! calibrated access points that align their carrier phase and frequency
//! by exchanging pilots and beamformed synchronization signals, without
//! sending any measurements over the fronthaul. It provides:
//!
//! * [`cmatrix`]: the small dense complex linear algebra the protocols
//!   need (products, dominant singular direction, Cholesky solves),
//! * [`hardware`]: RF chain gains, per-AP internal reciprocity
//!   calibration, oscillator phase noise and calibration drift,
//! * [`channel`]: Rayleigh channel draws, effective channels, AWGN,
//! * [`phase_sync`]: the three-stage phase protocol and its estimators,
//! * [`freq_sync`]: the two-stage frequency protocol, the grid-search
//!   ML offset estimator and its Fisher-information/CRB machinery,
//! * [`fgb`]: the fixed-grid-of-beams baseline,
//! * [`experiments`]: the Monte-Carlo harness, multi-AP schedules,
//!   measurement budgets and the slow-time drift studies.

pub mod channel;
pub mod cmatrix;
pub mod error;
pub mod experiments;
pub mod fgb;
pub mod freq_sync;
pub mod hardware;
pub mod phase_sync;

#[cfg(test)]
pub(crate) mod test_support;

pub use channel::{ChannelRealization, NoiseModel};
pub use cmatrix::{CMat, CVec, MatOp};
pub use error::{Error, Result};
pub use experiments::{RmseTable, Scenario, TimelinePoint};
pub use fgb::BeamGrid;
pub use freq_sync::FreqTrace;
pub use hardware::{ApState, LoKind, LoModel, RfChain};
pub use phase_sync::PhaseTrace;

use std::f64::consts::PI;

/// Wraps an angle to the half-open interval `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let x = 0.37 + k as f64 * PI / 3.0;
            let w = wrap_angle(x);
            assert!(w > -PI && w <= PI, "wrap({x}) = {w} out of range");
            // wrapped value differs from the input by a multiple of 2*pi
            let d = (x - w) / (2.0 * PI);
            assert!((d - d.round()).abs() < 1e-12);
        }
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0), 0.0);
    }
}
