#![allow(dead_code)]

//! Shared oracles for the integration and acceptance suites. Everything
//! here is independent of the library's numerical paths: eigenvectors
//! come from cyclic Jacobi sweeps, expectations from quadrature.

use beamsync::cmatrix::{CMat, CVec};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_complex(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations; returns (eigenvalues, eigenvector columns), unordered.
pub fn jacobi_hermitian_eig(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.rows();
    assert_eq!(h.cols(), n);
    let mut a = h.clone();
    let mut v = CMat::identity(n);

    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() < 1e-13 * (1.0 + a.frobenius_norm()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.norm() < 1e-300 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let mag = apq.norm();
                let phase = apq / Complex64::new(mag, 0.0);
                let theta = 0.5 * (2.0 * mag).atan2(aqq - app);
                let c = theta.cos();
                let s = theta.sin();
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * c - aiq * phase.conj() * s;
                    a[(i, q)] = aip * phase * s + aiq * c;
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * c - viq * phase.conj() * s;
                    v[(i, q)] = vip * phase * s + viq * c;
                }
                for j in 0..n {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = apj * c - aqj * phase * s;
                    a[(q, j)] = apj * phase.conj() * s + aqj * c;
                }
            }
        }
    }

    let vals = (0..n).map(|i| a[(i, i)].re).collect();
    (vals, v)
}

/// Dominant eigenpair of a Hermitian matrix via the Jacobi oracle.
pub fn jacobi_dominant_eigvec(h: &CMat) -> (f64, CVec) {
    let (vals, vecs) = jacobi_hermitian_eig(h);
    let (best, lambda) = vals
        .iter()
        .copied()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap();
    (lambda, vecs.column(best))
}

/// `sqrt(E[(X - Y)^2])` for independent `X, Y ~ U(-a, a)`, by composite
/// Simpson quadrature over the square (the analytic value is
/// `a sqrt(2/3)`; the quadrature keeps the oracle independent).
pub fn uniform_difference_std(a: f64, panels: usize) -> f64 {
    let n = 2 * panels; // even interval count for Simpson
    let h = 2.0 * a / n as f64;
    let weight = |i: usize| -> f64 {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut acc = 0.0;
    for i in 0..=n {
        let x = -a + h * i as f64;
        for j in 0..=n {
            let y = -a + h * j as f64;
            acc += weight(i) * weight(j) * (x - y) * (x - y);
        }
    }
    let integral = acc * (h / 3.0) * (h / 3.0);
    let density = 1.0 / (2.0 * a) / (2.0 * a);
    (integral * density).sqrt()
}
