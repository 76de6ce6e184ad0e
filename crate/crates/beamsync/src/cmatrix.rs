//! Minimal dense complex linear algebra for the synchronization protocols.
//!
//! Everything here operates on small matrices (antenna counts up to a few
//! hundred), so the kernels are plain triple loops; no BLAS, no sparsity.
//! The three nontrivial pieces are [`matmul`] with per-argument
//! transpose/conjugate modifiers, [`dominant_left_singular_vector`] (power
//! iteration on `A Aᴴ`, which is all the protocols need of the SVD) and
//! [`hpd_solve`] (Cholesky solve for Hermitian positive-definite systems).

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Default convergence tolerance (angle between successive iterates) for
/// the power iteration.
pub const POWER_ITER_TOL: f64 = 1e-10;
/// Default iteration budget for the power iteration.
pub const POWER_ITER_MAX: usize = 10_000;
/// Pivots below this floor make a Cholesky factorization fail.
pub const CHOLESKY_PIVOT_FLOOR: f64 = 1e-14;

/// How an argument of [`matmul`] is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatOp {
    /// Use the matrix as stored.
    Plain,
    /// Use the transpose.
    Trans,
    /// Use the elementwise conjugate.
    Conj,
    /// Use the conjugate transpose.
    ConjTrans,
}

impl MatOp {
    fn transposed(self) -> bool {
        matches!(self, MatOp::Trans | MatOp::ConjTrans)
    }

    fn conjugated(self) -> bool {
        matches!(self, MatOp::Conj | MatOp::ConjTrans)
    }
}

/// Dense complex matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![Complex64::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMat { rows, cols, data }
    }

    /// Builds a matrix from row-major data. The entry count must match.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("from_rows", format!("{rows}x{cols}"), data.len()));
        }
        Ok(CMat { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> CVec {
        CVec::from((0..self.rows).map(|i| self[(i, j)]).collect::<Vec<_>>())
    }

    pub fn transpose(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn hermitian_transpose(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: Complex64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &CMat) -> Result<CMat> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dim("add", self.shape_string(), other.shape_string()));
        }
        Ok(CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Multiplies column `j` by `s`, in place.
    pub fn scale_column(&mut self, j: usize, s: Complex64) {
        for i in 0..self.rows {
            self[(i, j)] *= s;
        }
    }

    /// `self * other` with both arguments read plainly.
    pub fn mul(&self, other: &CMat) -> Result<CMat> {
        matmul(self, MatOp::Plain, other, MatOp::Plain)
    }

    /// All entries finite (no NaN or infinity).
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn shape_string(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Dense complex vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CVec {
    data: Vec<Complex64>,
}

impl CVec {
    pub fn zeros(n: usize) -> Self {
        CVec {
            data: vec![Complex64::ZERO; n],
        }
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> Complex64) -> Self {
        CVec {
            data: (0..n).map(f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn conj(&self) -> CVec {
        CVec {
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> CVec {
        CVec {
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Conjugate inner product `selfᴴ · other`.
    pub fn dot_h(&self, other: &CVec) -> Complex64 {
        debug_assert_eq!(self.len(), other.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Plain (unconjugated) inner product `selfᵀ · other`.
    pub fn dot_t(&self, other: &CVec) -> Complex64 {
        debug_assert_eq!(self.len(), other.len());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Normalizes to unit Euclidean norm.
    pub fn normalized(&self) -> CVec {
        let n = self.norm();
        self.scale(Complex64::new(1.0 / n, 0.0))
    }

    /// Outer product `self · otherᵀ`.
    pub fn outer_t(&self, other: &CVec) -> CMat {
        CMat::from_fn(self.len(), other.len(), |i, j| self[i] * other[j])
    }
}

impl std::ops::Index<usize> for CVec {
    type Output = Complex64;

    fn index(&self, i: usize) -> &Complex64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for CVec {
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        &mut self.data[i]
    }
}

impl From<Vec<Complex64>> for CVec {
    fn from(data: Vec<Complex64>) -> Self {
        CVec { data }
    }
}

/// Complex matrix product with optional transpose/conjugate on each
/// argument. Shapes are checked after the modifiers are applied.
pub fn matmul(a: &CMat, op_a: MatOp, b: &CMat, op_b: MatOp) -> Result<CMat> {
    let (ar, ac) = if op_a.transposed() {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    let (br, bc) = if op_b.transposed() {
        (b.cols, b.rows)
    } else {
        (b.rows, b.cols)
    };
    if ac != br {
        return Err(Error::dim("matmul", format!("{ar}x{ac}"), format!("{br}x{bc}")));
    }

    let read_a = |i: usize, k: usize| -> Complex64 {
        let v = if op_a.transposed() { a[(k, i)] } else { a[(i, k)] };
        if op_a.conjugated() {
            v.conj()
        } else {
            v
        }
    };
    let read_b = |k: usize, j: usize| -> Complex64 {
        let v = if op_b.transposed() { b[(j, k)] } else { b[(k, j)] };
        if op_b.conjugated() {
            v.conj()
        } else {
            v
        }
    };

    let mut out = CMat::zeros(ar, bc);
    for i in 0..ar {
        for k in 0..ac {
            let aik = read_a(i, k);
            if aik == Complex64::ZERO {
                continue;
            }
            for j in 0..bc {
                out[(i, j)] += aik * read_b(k, j);
            }
        }
    }
    Ok(out)
}

/// Matrix-vector product `op(A) · v`.
pub fn mat_vec(a: &CMat, op: MatOp, v: &CVec) -> Result<CVec> {
    let (r, c) = if op.transposed() {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    if c != v.len() {
        return Err(Error::dim("mat_vec", format!("{r}x{c}"), v.len()));
    }
    let mut out = CVec::zeros(r);
    for i in 0..r {
        let mut acc = Complex64::ZERO;
        for k in 0..c {
            let aik = if op.transposed() { a[(k, i)] } else { a[(i, k)] };
            let aik = if op.conjugated() { aik.conj() } else { aik };
            acc += aik * v[k];
        }
        out[i] = acc;
    }
    Ok(out)
}

/// Dominant left singular direction of a complex matrix.
#[derive(Debug, Clone)]
pub struct DominantDirection {
    /// Unit-norm dominant left singular vector, with its largest-magnitude
    /// entry rotated to be real and positive.
    pub vector: CVec,
    /// Leading singular value.
    pub sigma: f64,
    /// Set when the two leading singular values are numerically equal; the
    /// returned vector is then one valid choice among many.
    pub degenerate: bool,
    /// Iterations spent.
    pub iterations: usize,
}

/// Computes the dominant left singular vector and singular value of `a` by
/// power iteration on `A Aᴴ`. Convergence is declared when the angle
/// between successive iterates drops below `tol`.
pub fn dominant_left_singular_vector(
    a: &CMat,
    tol: f64,
    max_iter: usize,
) -> Result<DominantDirection> {
    if tol <= 0.0 {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::invalid("matrix", "zero matrix has no dominant direction"));
    }
    let m = a.rows;

    // B = A Aᴴ (m x m Hermitian PSD), formed once.
    let b = matmul(a, MatOp::Plain, a, MatOp::ConjTrans)?;

    // Deterministic full-support start vector.
    let mut v = CVec::from_fn(m, |i| {
        let x = 1.0 + 0.37 * ((i + 1) as f64).sin();
        let y = 0.21 * ((2 * i + 1) as f64).cos();
        Complex64::new(x, y)
    })
    .normalized();

    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    while iterations < max_iter {
        let w = mat_vec(&b, MatOp::Plain, &v)?;
        let wn = w.norm();
        if wn == 0.0 {
            // start vector exactly in the null space; reseed orthogonally
            v = CVec::from_fn(m, |i| Complex64::new((i as f64 + 0.5).cos(), 0.3)).normalized();
            iterations += 1;
            continue;
        }
        let next = w.scale(Complex64::new(1.0 / wn, 0.0));
        residual = 1.0 - v.dot_h(&next).norm().min(1.0);
        v = next;
        iterations += 1;
        if residual < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::PowerIterationDiverged {
            iterations,
            residual,
        });
    }

    // lambda_1 = vᴴ B v, sigma_1 = sqrt(lambda_1)
    let lambda1 = v.dot_h(&mat_vec(&b, MatOp::Plain, &v)?).re.max(0.0);
    let sigma = lambda1.sqrt();

    // Estimate lambda_2 from a short deflated iteration to flag a
    // (near-)degenerate leading pair.
    let degenerate = {
        let mut u = CVec::from_fn(m, |i| {
            Complex64::new(((i * 7 + 3) as f64).sin(), ((i * 5 + 1) as f64).cos())
        });
        // remove the v component
        let proj = v.dot_h(&u);
        for i in 0..m {
            u[i] -= proj * v[i];
        }
        let mut lambda2 = 0.0;
        if u.norm() > 1e-12 {
            u = u.normalized();
            for _ in 0..32 {
                let mut w = mat_vec(&b, MatOp::Plain, &u)?;
                let proj = v.dot_h(&w);
                for i in 0..m {
                    w[i] -= proj * v[i];
                }
                let wn = w.norm();
                if wn == 0.0 {
                    break;
                }
                u = w.scale(Complex64::new(1.0 / wn, 0.0));
            }
            lambda2 = u.dot_h(&mat_vec(&b, MatOp::Plain, &u)?).re.max(0.0);
        }
        m > 1 && lambda1 - lambda2 <= 1e-6 * lambda1
    };

    Ok(DominantDirection {
        vector: canonicalize_phase(&v),
        sigma,
        degenerate,
        iterations,
    })
}

/// Rotates a vector by a global phase so its largest-magnitude entry is
/// real and positive. Ties go to the lowest index.
pub fn canonicalize_phase(v: &CVec) -> CVec {
    let mut best = 0;
    let mut best_mag = -1.0;
    for i in 0..v.len() {
        let mag = v[i].norm();
        if mag > best_mag + 1e-300 && mag > best_mag {
            best = i;
            best_mag = mag;
        }
    }
    if best_mag <= 0.0 {
        return v.clone();
    }
    let phase = v[best] / Complex64::new(best_mag, 0.0);
    v.scale(phase.conj())
}

/// Solves `H X = B` for Hermitian positive-definite `H` via Cholesky
/// factorization. `H` is checked to be Hermitian within `1e-10` (relative
/// to its largest entry).
pub fn hpd_solve(h: &CMat, b: &CMat) -> Result<CMat> {
    let n = h.rows;
    if h.cols != n {
        return Err(Error::dim("hpd_solve", h.shape_string(), "square"));
    }
    if b.rows != n {
        return Err(Error::dim("hpd_solve", h.shape_string(), b.shape_string()));
    }

    let scale = h.data.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1.0);
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in i..n {
            asym = asym.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    if asym > 1e-10 * scale {
        return Err(Error::NotHermitian { asymmetry: asym });
    }

    // L lower triangular with H = L Lᴴ.
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut diag = h[(j, j)].re;
        for k in 0..j {
            diag -= l[(j, k)].norm_sqr();
        }
        if diag <= CHOLESKY_PIVOT_FLOOR {
            return Err(Error::NotPositiveDefinite {
                index: j,
                value: diag,
            });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut acc = h[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / ljj;
        }
    }

    // forward then back substitution, column by column of B
    let mut x = b.clone();
    for col in 0..b.cols {
        // L y = b
        for i in 0..n {
            let mut acc = x[(i, col)];
            for k in 0..i {
                acc -= l[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = acc / l[(i, i)];
        }
        // Lᴴ x = y
        for i in (0..n).rev() {
            let mut acc = x[(i, col)];
            for k in i + 1..n {
                acc -= l[(k, i)].conj() * x[(k, col)];
            }
            x[(i, col)] = acc / l[(i, i)];
        }
    }
    Ok(x)
}

/// Convenience wrapper solving `H x = b` for a single right-hand side.
pub fn hpd_solve_vec(h: &CMat, b: &CVec) -> Result<CVec> {
    let rhs = CMat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = hpd_solve(h, &rhs)?;
    Ok(CVec::from_fn(b.len(), |i| x[(i, 0)]))
}
