//! Shared helpers for unit tests. Independent of the library's own
//! numerical paths: the eigendecomposition here is a cyclic Jacobi sweep,
//! not the power iteration under test.

use crate::cmatrix::{CMat, CVec};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// One CN(0,1) draw.
pub fn standard_complex(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Random unitary matrix from Gram-Schmidt on a Gaussian matrix.
pub fn random_unitary(n: usize, rng: &mut impl Rng) -> CMat {
    let mut cols: Vec<CVec> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v = CVec::from_fn(n, |_| standard_complex(rng));
        for c in &cols {
            let proj = c.dot_h(&v);
            for i in 0..n {
                v[i] -= proj * c[i];
            }
        }
        if v.norm() > 1e-8 {
            cols.push(v.normalized());
        }
    }
    CMat::from_fn(n, n, |i, j| cols[j][i])
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Returns (eigenvalues, eigenvector columns), unordered.
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
                // unitary 2x2 rotation zeroing a[p][q]:
                // first strip the phase of a_pq, then a real Jacobi rotation
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let mag = apq.norm();
                let phase = apq / Complex64::new(mag, 0.0);
                let theta = 0.5 * (2.0 * mag).atan2(aqq - app);
                let c = theta.cos();
                let s = theta.sin();
                // columns p and q of the accumulated transforms
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

/// Dominant eigenvector (largest eigenvalue) of a Hermitian matrix via the
/// Jacobi oracle.
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmatrix::{matmul, MatOp};

    #[test]
    fn jacobi_reconstructs_hermitian_matrix() {
        let mut rng = seeded_rng(11);
        let m = CMat::from_fn(5, 5, |_, _| standard_complex(&mut rng));
        let h = matmul(&m, MatOp::Plain, &m, MatOp::ConjTrans).unwrap();
        let (vals, vecs) = jacobi_hermitian_eig(&h);
        // H v_i = lambda_i v_i
        for i in 0..5 {
            let vi = vecs.column(i);
            let hv = crate::cmatrix::mat_vec(&h, MatOp::Plain, &vi).unwrap();
            for k in 0..5 {
                assert!((hv[k] - vi[k] * vals[i]).norm() < 1e-9, "eigpair {i}");
            }
        }
    }
}
