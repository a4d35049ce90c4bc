//! Small dense complex linear algebra for Hermitian positive semidefinite
//! matrices: Cholesky-type factorization for sampling, cyclic Jacobi
//! eigendecomposition, and the Moore–Penrose pseudo-inverse.
//!
//! Everything here targets dimensions up to 64; no blocking or BLAS.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative tolerance for the Hermitian symmetry check.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Default relative eigenvalue cutoff for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Sweep cap for the Jacobi eigensolver.
pub const MAX_JACOBI_SWEEPS: usize = 100;

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1");
        ComplexMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diag(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let d: Vec<Complex64> = diag.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Self::from_diag(&d)
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("matrix entries must be finite".into()));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::from_row_major(r, c, rows.concat())
    }

    /// Real matrix convenience constructor.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| Complex64::new(v, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diag(&self) -> Vec<Complex64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> Complex64 {
        self.diag().into_iter().sum()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest off-diagonal entry magnitude.
    pub fn max_abs_offdiag(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                if i != j {
                    m = m.max(self[(i, j)].norm());
                }
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = ZERO;
                for k in 0..self.cols {
                    acc += self[(i, k)] * other[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }

    /// `self · v` for a column vector `v`.
    pub fn mul_vec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix times length-{} vector",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![ZERO; self.rows];
        self.mul_vec_into(v, &mut out);
        Ok(out)
    }

    /// Unchecked `out = self · v`; lengths must already agree.
    #[inline]
    pub(crate) fn mul_vec_into(&self, v: &[Complex64], out: &mut [Complex64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = row[0] * v[0];
            for k in 1..self.cols {
                acc += row[k] * v[k];
            }
            *o = acc;
        }
    }

    /// Hermitian part `(A + Aᴴ)/2`.
    pub fn hermitian_part(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch("hermitian part of a non-square matrix".into()));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            out[(i, i)] = Complex64::new(self[(i, i)].re, 0.0);
            for j in (i + 1)..self.cols {
                let v = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
        Ok(out)
    }

    /// Max |A_ij − conj(A_ji)|.
    pub fn max_asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                m = m.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        m
    }

    fn check_hermitian(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let asymmetry = self.max_asymmetry();
        let tolerance = HERMITIAN_TOL * self.max_abs();
        if asymmetry > tolerance {
            return Err(Error::NotHermitian { asymmetry, tolerance });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    /// Panics on a dimension mismatch; use [`ComplexMatrix::matmul`] for the checked form.
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("matrix dimensions must agree")
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:>+.6}{:+.6}j  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Serialized as nested row arrays of `[re, im]` pairs.
impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[Complex64]> = (0..self.rows).map(|i| self.row(i)).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<Complex64>>::deserialize(d)?;
        ComplexMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Symmetry and definiteness summary of a square matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HermitianCheckReport {
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
}

/// Measures asymmetry and, on the Hermitian part, the smallest eigenvalue.
pub fn hermitian_report(a: &ComplexMatrix) -> Result<HermitianCheckReport> {
    let max_asymmetry = a.max_asymmetry();
    let (vals, _) = eig_hermitian(&a.hermitian_part()?)?;
    Ok(HermitianCheckReport {
        max_asymmetry,
        min_eigenvalue: *vals.last().expect("nonempty spectrum"),
    })
}

/// Lower-triangular `L` with `L·Lᴴ = A + jitter·I`.
///
/// The plain factorization is tried first; `jitter` is only added on failure.
pub fn hermitian_factor(a: &ComplexMatrix, jitter: f64) -> Result<ComplexMatrix> {
    a.check_hermitian()?;
    if let Some(l) = cholesky(a, 0.0) {
        return Ok(l);
    }
    if jitter > 0.0 {
        if let Some(l) = cholesky(a, jitter) {
            return Ok(l);
        }
    }
    Err(Error::NotPsd { jitter })
}

/// Factorization with the default jitter ladder `0, 1e-12·tr/M, 1e-9·tr/M`.
///
/// Returns the factor and the jitter that was needed.
pub fn hermitian_factor_auto(a: &ComplexMatrix) -> Result<(ComplexMatrix, f64)> {
    a.check_hermitian()?;
    let mean_diag = a.trace().re / a.rows() as f64;
    let mut last = 0.0;
    for rel in [0.0, 1e-12, 1e-9] {
        let jitter = rel * mean_diag.max(0.0);
        if rel > 0.0 && jitter == 0.0 {
            break;
        }
        last = jitter;
        if let Some(l) = cholesky(a, jitter) {
            return Ok((l, jitter));
        }
    }
    Err(Error::NotPsd { jitter: last })
}

fn cholesky(a: &ComplexMatrix, jitter: f64) -> Option<ComplexMatrix> {
    let n = a.rows();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re + jitter;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        // Pivots at rounding level mean the matrix is numerically singular.
        if d.is_nan() || d <= 64.0 * f64::EPSILON * scale {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
///
/// Eigenvalues are returned in descending order; column `k` of the returned
/// matrix is the eigenvector for eigenvalue `k`.
pub fn eig_hermitian(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    a.check_hermitian()?;
    let n = a.rows();
    let mut m = a.hermitian_part()?;
    let mut v = ComplexMatrix::identity(n);

    let frob = m.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let target = f64::EPSILON * frob;
    let off_norm = |m: &ComplexMatrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[(i, j)].norm_sqr();
            }
        }
        (2.0 * s).sqrt()
    };

    let mut converged = n == 1 || off_norm(&m) <= target;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_JACOBI_SWEEPS {
            return Err(Error::NoConvergence("Jacobi eigensolver"));
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
        converged = off_norm(&m) <= target;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].re.total_cmp(&m[(i, i)].re));
    let vals = order.iter().map(|&i| m[(i, i)].re).collect();
    let mut vecs = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vecs[(r, dst)] = v[(r, src)];
        }
    }
    Ok((vals, vecs))
}

/// One two-sided rotation `A ← Jᴴ A J`, `V ← V J` annihilating `A[p][q]`.
///
/// `J = D·R` where `D = diag(1, e^{-iφ})` rotates the pivot onto the real
/// axis and `R` is the classical real Jacobi rotation.
fn rotate(m: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    // Negligible pivot relative to both diagonals.
    if mag * 1e18 < app.abs() && mag * 1e18 < aqq.abs() {
        m[(p, q)] = ZERO;
        m[(q, p)] = ZERO;
        return;
    }
    let phase = apq / mag;
    let theta = 0.5 * (aqq - app) / mag;
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = m.rows();
    let e_conj = phase.conj();

    // Columns: A ← A J
    for k in 0..n {
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        m[(k, p)] = akp * c - akq * e_conj * s;
        m[(k, q)] = akp * s + akq * e_conj * c;
    }
    // Rows: A ← Jᴴ A
    for k in 0..n {
        let apk = m[(p, k)];
        let aqk = m[(q, k)];
        m[(p, k)] = apk * c - aqk * phase * s;
        m[(q, k)] = apk * s + aqk * phase * c;
    }
    m[(p, q)] = ZERO;
    m[(q, p)] = ZERO;
    m[(p, p)] = Complex64::new(app - t * mag, 0.0);
    m[(q, q)] = Complex64::new(aqq + t * mag, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c - vkq * e_conj * s;
        v[(k, q)] = vkp * s + vkq * e_conj * c;
    }
}

/// Pseudo-inverse result with the rank decision that produced it.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: ComplexMatrix,
    /// Number of eigenvalues kept.
    pub rank: usize,
    /// True when at least one eigenvalue was truncated.
    pub truncated: bool,
}

/// Moore–Penrose pseudo-inverse of a Hermitian matrix.
///
/// Eigenvalues with `|λ| <= rank_tol · max|λ|` are treated as zero.
pub fn pseudo_inverse(a: &ComplexMatrix, rank_tol: f64) -> Result<ComplexMatrix> {
    Ok(pseudo_inverse_with_rank(a, rank_tol)?.matrix)
}

pub fn pseudo_inverse_with_rank(a: &ComplexMatrix, rank_tol: f64) -> Result<PseudoInverse> {
    let (vals, vecs) = eig_hermitian(a)?;
    let n = a.rows();
    let lmax = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = rank_tol * lmax;
    let inv: Vec<f64> = vals
        .iter()
        .map(|&l| if lmax > 0.0 && l.abs() > cutoff { 1.0 / l } else { 0.0 })
        .collect();
    let rank = inv.iter().filter(|&&v| v != 0.0).count();
    let mut out = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = ZERO;
            for (k, &w) in inv.iter().enumerate() {
                if w != 0.0 {
                    acc += vecs[(i, k)] * Complex64::new(w, 0.0) * vecs[(j, k)].conj();
                }
            }
            out[(i, j)] = acc;
        }
    }
    Ok(PseudoInverse {
        matrix: out,
        rank,
        truncated: rank < n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(seed: u64, n: usize) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexMatrix::from_row_major(n, n, data).unwrap()
    }

    fn gram(g: &ComplexMatrix) -> ComplexMatrix {
        g * &g.adjoint()
    }

    fn max_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        a.sub(b).unwrap().max_abs()
    }

    #[test]
    fn factor_identity_and_diagonal() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(hermitian_factor(&i2, 0.0).unwrap(), i2);

        let d = ComplexMatrix::from_real_diag(&[2.0, 8.0]);
        let l = hermitian_factor(&d, 0.0).unwrap();
        assert!((l[(0, 0)].re - 2f64.sqrt()).abs() < 1e-15);
        assert!((l[(1, 1)].re - 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(l[(1, 0)], ZERO);
    }

    #[test]
    fn factor_reconstructs_gram_matrix() {
        let a = gram(&random_matrix(11, 4));
        let l = hermitian_factor(&a, 0.0).unwrap();
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert_eq!(l[(i, j)], ZERO);
            }
        }
        assert!(max_diff(&(&l * &l.adjoint()), &a) < 1e-8 * a.max_abs().max(1.0));
    }

    #[test]
    fn factor_rejects_non_hermitian() {
        let a = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.5, 0.0)], vec![c(0.2, 0.0), c(1.0, 0.0)]])
            .unwrap();
        assert!(matches!(hermitian_factor(&a, 0.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn factor_rejects_indefinite() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        assert!(matches!(hermitian_factor(&a, 1e-9), Err(Error::NotPsd { .. })));
        assert!(matches!(hermitian_factor_auto(&a), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn jitter_ladder_handles_rank_deficient() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = [c(s, 0.0), c(s, 0.0)];
        let a = ComplexMatrix::from_rows(&[
            vec![v[0] * v[0].conj(), v[0] * v[1].conj()],
            vec![v[1] * v[0].conj(), v[1] * v[1].conj()],
        ])
        .unwrap();
        assert!(hermitian_factor(&a, 0.0).is_err());
        let (l, jitter) = hermitian_factor_auto(&a).unwrap();
        assert!(jitter > 0.0);
        let target = a.add(&ComplexMatrix::identity(2).scale(jitter)).unwrap();
        assert!(max_diff(&(&l * &l.adjoint()), &target) < 1e-8);
    }

    #[test]
    fn eig_diagonal_and_swap() {
        let (vals, vecs) = eig_hermitian(&ComplexMatrix::from_real_diag(&[1.0, 3.0])).unwrap();
        assert_eq!(vals, vec![3.0, 1.0]);
        assert_eq!(vecs[(1, 0)].norm(), 1.0);
        assert_eq!(vecs[(0, 1)].norm(), 1.0);

        let x = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let (vals, _) = eig_hermitian(&x).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        for seed in 0..20 {
            let g = random_matrix(seed, 4);
            let a = g.add(&g.adjoint()).unwrap();
            let (vals, v) = eig_hermitian(&a).unwrap();
            assert!(vals.windows(2).all(|w| w[0] >= w[1]));
            let lambda = ComplexMatrix::from_real_diag(&vals);
            let tol = 1e-8 * a.max_abs();
            assert!(max_diff(&(&a * &v), &(&v * &lambda)) < tol);
            assert!(max_diff(&(&v.adjoint() * &v), &ComplexMatrix::identity(4)) < 1e-8);
        }
    }

    #[test]
    fn eig_handles_complex_phases() {
        let a = ComplexMatrix::from_rows(&[
            vec![c(2.0, 0.0), c(0.0, 1.0)],
            vec![c(0.0, -1.0), c(2.0, 0.0)],
        ])
        .unwrap();
        let (vals, _) = eig_hermitian(&a).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_larger_dimension() {
        let g = random_matrix(99, 32);
        let a = gram(&g);
        let (vals, v) = eig_hermitian(&a).unwrap();
        let lambda = ComplexMatrix::from_real_diag(&vals);
        let recon = &(&v * &lambda) * &v.adjoint();
        assert!(max_diff(&recon, &a) < 1e-8 * a.max_abs());
    }

    #[test]
    fn pinv_identity_and_rank_deficient_diag() {
        let i3 = ComplexMatrix::identity(3);
        assert!(max_diff(&pseudo_inverse(&i3, DEFAULT_RANK_TOL).unwrap(), &i3) < 1e-15);

        let d = ComplexMatrix::from_real_diag(&[4.0, 0.0]);
        let p = pseudo_inverse_with_rank(&d, 1e-10).unwrap();
        assert!(p.truncated);
        assert_eq!(p.rank, 1);
        assert!(max_diff(&p.matrix, &ComplexMatrix::from_real_diag(&[0.25, 0.0])) < 1e-15);
    }

    fn assert_penrose(a: &ComplexMatrix, p: &ComplexMatrix) {
        let tol = 1e-8 * p.max_abs().max(a.max_abs()).max(1.0);
        let apa = &(a * p) * a;
        let pap = &(p * a) * p;
        let ap = a * p;
        let pa = p * a;
        assert!(max_diff(&apa, a) < tol);
        assert!(max_diff(&pap, p) < tol);
        assert!(ap.max_asymmetry() < tol);
        assert!(pa.max_asymmetry() < tol);
    }

    #[test]
    fn pinv_of_rank_one_projector_is_itself() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = ComplexMatrix::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]).unwrap();
        let p = pseudo_inverse(&a, DEFAULT_RANK_TOL).unwrap();
        assert!(max_diff(&p, &a) < 1e-12);
        assert_penrose(&a, &p);
        assert!((s * s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pinv_equals_inverse_on_full_rank() {
        let a = gram(&random_matrix(5, 4)).add(&ComplexMatrix::identity(4)).unwrap();
        let p = pseudo_inverse(&a, DEFAULT_RANK_TOL).unwrap();
        assert!(max_diff(&(&a * &p), &ComplexMatrix::identity(4)) < 1e-10);
        assert_penrose(&a, &p);
    }

    #[test]
    fn hermitian_report_flags() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        let r = hermitian_report(&a).unwrap();
        assert_eq!(r.max_asymmetry, 0.0);
        assert!((r.min_eigenvalue + 1.0).abs() < 1e-14);
    }

    #[test]
    fn serde_nested_pairs() {
        let a = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.5, -0.5)], vec![c(0.5, 0.5), c(2.0, 0.0)]])
            .unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[[[1.0,0.0],[0.5,-0.5]],[[0.5,0.5],[2.0,0.0]]]");
        let back: ComplexMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<ComplexMatrix>("[[[1,0]],[[1,0],[2,0]]]").is_err());
    }
}
