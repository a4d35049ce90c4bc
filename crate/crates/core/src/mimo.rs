//! Vector Bussgang decomposition `z = U(x) = B·x + η` with `B = C_zx·C_x⁻¹`.
//!
//! Two estimators share one engine:
//! - [`CorrelationEstimate::Population`]: `B̂ = Ĉ_zx·C_x⁺` with the configured
//!   `C_x` (the Gaussian paths);
//! - [`CorrelationEstimate::Sample`]: `B̂ = Ĉ_zx·Ĉ_x⁺` with `Ĉ_x` from the same
//!   draws, the linear-MMSE split used for non-Gaussian sources.
//!
//! `C_η` is the sample correlation of the in-sample regression residual
//! `z − Ĉ_zx·Ĉ_x⁺·x`, i.e. the Schur complement `Ĉ_z − Ĉ_zx·Ĉ_x⁺·Ĉ_xz`. It is
//! positive semidefinite by construction, and unlike `Ĉ_z − B̂·C_x·B̂ᴴ` it
//! carries no error of order `|B|²·C_x/√n`, which would swamp the distortion
//! of fine quantizers. Standard errors are entrywise, from the per-sample
//! influence of each statistic.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, pseudo_inverse_with_rank, ComplexMatrix, DEFAULT_RANK_TOL};
use crate::mc::{self, Moments, MomentsVec};
use crate::nonlinearity::{Domain, Nonlinearity};
use crate::sampling::{PreparedSource, RandomStream, SignalSource};
use crate::scalar::{self, GainEstimate};

pub const MIN_SAMPLES: usize = 10_000;

/// Relative floor on reported standard errors, so that statistics which are
/// constant up to rounding (e.g. constant-modulus inputs) still compare.
pub const STD_ERROR_FLOOR: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Entrywise standard errors, row-major nested.
pub type StdErrorMatrix = Vec<Vec<f64>>;

/// A map from `C^M` to `C^M`.
pub trait VectorMap: Sync + Send {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[Complex64], out: &mut [Complex64]);
    fn describe(&self) -> String;
}

/// `z_m = U_m(x_m)`: no crosstalk between antennas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElementwiseDistortion {
    per_antenna: Vec<Nonlinearity>,
}

impl ElementwiseDistortion {
    pub fn new(per_antenna: Vec<Nonlinearity>) -> Result<Self> {
        if per_antenna.is_empty() {
            return Err(Error::InvalidParameter("element-wise distortion needs at least one antenna".into()));
        }
        if let Some(u) = per_antenna.iter().find(|u| u.domain() != Domain::Complex) {
            return Err(Error::DomainMismatch {
                name: u.name().to_string(),
                expected: u.domain(),
                got: Domain::Complex,
            });
        }
        Ok(ElementwiseDistortion { per_antenna })
    }

    /// The same map on every one of `m` antennas.
    pub fn uniform(u: Nonlinearity, m: usize) -> Result<Self> {
        Self::new(vec![u; m])
    }

    pub fn per_antenna(&self) -> &[Nonlinearity] {
        &self.per_antenna
    }
}

impl VectorMap for ElementwiseDistortion {
    fn dim(&self) -> usize {
        self.per_antenna.len()
    }

    fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        for ((o, &v), u) in out.iter_mut().zip(x).zip(&self.per_antenna) {
            *o = u.eval(v);
        }
    }

    fn describe(&self) -> String {
        let names: Vec<String> = self.per_antenna.iter().map(Nonlinearity::spec_string).collect();
        format!("elementwise[{}]", names.join(";"))
    }
}

/// `z_m = U_m((K·x)_m)`: a linear crosstalk stage followed by per-antenna maps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedDistortion {
    mix: ComplexMatrix,
    inner: ElementwiseDistortion,
}

impl MixedDistortion {
    pub fn new(mix: ComplexMatrix, inner: ElementwiseDistortion) -> Result<Self> {
        let m = inner.dim();
        if mix.rows() != m || mix.cols() != m {
            return Err(Error::DimensionMismatch(format!(
                "mix matrix is {}x{} but there are {m} antennas",
                mix.rows(),
                mix.cols()
            )));
        }
        Ok(MixedDistortion { mix, inner })
    }
}

impl VectorMap for MixedDistortion {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        for (i, (o, u)) in out.iter_mut().zip(&self.inner.per_antenna).enumerate() {
            let v = self.mix.row(i).iter().zip(x).fold(ZERO, |acc, (k, v)| acc + k * v);
            *o = u.eval(v);
        }
    }

    fn describe(&self) -> String {
        format!("mixed[{}]", self.inner.describe())
    }
}

/// Any closure `f(x, out)` as a vector map.
pub struct FnMap<F> {
    dim: usize,
    name: String,
    f: F,
}

impl<F> FnMap<F>
where
    F: Fn(&[Complex64], &mut [Complex64]) + Sync + Send,
{
    pub fn new(dim: usize, name: impl Into<String>, f: F) -> Self {
        FnMap {
            dim,
            name: name.into(),
            f,
        }
    }
}

impl<F> VectorMap for FnMap<F>
where
    F: Fn(&[Complex64], &mut [Complex64]) + Sync + Send,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        (self.f)(x, out)
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationEstimate {
    Population,
    Sample,
}

/// `B̂` with entrywise standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainMatrix {
    pub b: ComplexMatrix,
    pub std_error: StdErrorMatrix,
    pub used_pseudo_inverse: bool,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MimoDiagnostics {
    /// `max |B_ij|`, `i ≠ j`.
    pub diagonality_defect: f64,
    /// Standard error of the entry attaining the defect.
    pub diagonality_std_error: f64,
    /// `max |B_ij| / se_ij` over off-diagonal entries.
    pub max_offdiag_z: f64,
    /// Minimum eigenvalue of the symmetrized `C_η`.
    pub psd_margin: f64,
    /// Largest entrywise standard error of `C_η`.
    pub eps_mc: f64,
    /// `‖Ê{η xᴴ}‖_max`.
    pub orthogonality_residual: f64,
    /// Largest entrywise standard error of `Ê{η xᴴ}`.
    pub orthogonality_std_error: f64,
    /// `max |Ê{η xᴴ}_ij| / se_ij`.
    pub orthogonality_z: f64,
    /// Largest asymmetry removed when symmetrizing `C_η`.
    pub symmetrization_defect: f64,
    pub used_pseudo_inverse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MimoDecomposition {
    pub b: ComplexMatrix,
    pub b_std_error: StdErrorMatrix,
    /// The configured (population) input correlation.
    pub c_x: ComplexMatrix,
    pub c_x_hat: ComplexMatrix,
    pub c_z_hat: ComplexMatrix,
    pub c_zx_hat: ComplexMatrix,
    pub c_eta: ComplexMatrix,
    pub c_eta_std_error: StdErrorMatrix,
    pub diagnostics: MimoDiagnostics,
    pub estimate: CorrelationEstimate,
    pub map: String,
    pub n_samples: usize,
}

fn check_samples(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        Err(Error::TooFewSamples { need: MIN_SAMPLES, got: n })
    } else {
        Ok(())
    }
}

fn check_dims(map: &dyn VectorMap, m: usize) -> Result<()> {
    if map.dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "map has dimension {} but the input has dimension {m}",
            map.dim()
        )));
    }
    Ok(())
}

/// One pass over `n` draws: `stat(draw, z, acc)` with `z = map(draw[..M])`.
fn sample_pass<F>(src: &PreparedSource, map: &dyn VectorMap, stream: &RandomStream, n: usize, len: usize, stat: F) -> MomentsVec
where
    F: Fn(&[Complex64], &[Complex64], &mut [Moments]) + Sync + Send,
{
    let dim = src.dim();
    let m = map.dim();
    let parts = mc::map_blocks(n, |block, count| {
        let mut buf = Vec::with_capacity(count * dim);
        src.draw_block(stream, block, count, &mut buf);
        let mut acc = MomentsVec::new(len);
        let mut z = vec![ZERO; m];
        for draw in buf.chunks_exact(dim) {
            map.apply(&draw[..m], &mut z);
            stat(draw, &z, &mut acc.0);
        }
        acc
    });
    MomentsVec::merged(parts, len)
}

/// Pushes `a_i · conj(b_j)` for all `i, j` into `acc` (row-major).
#[inline]
fn push_outer(acc: &mut [Moments], a: &[Complex64], b: &[Complex64]) {
    let m = b.len();
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            acc[i * m + j].push(ai * bj.conj());
        }
    }
}

fn means(acc: &[Moments], rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_row_major(rows, cols, acc.iter().map(Moments::mean).collect()).expect("shape")
}

fn std_errors(acc: &[Moments], cols: usize, floor: f64) -> StdErrorMatrix {
    acc.chunks(cols)
        .map(|row| row.iter().map(|m| m.std_error().max(floor)).collect())
        .collect()
}

/// `max |a_ij| / se_ij` over the selected entries, with the maximizing entry's `|a_ij|` and `se_ij`.
fn max_ratio(a: &ComplexMatrix, se: &StdErrorMatrix, offdiag_only: bool) -> (f64, f64, f64) {
    let mut best = (0.0, 0.0, 0.0);
    let mut largest = (0.0, 0.0);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            if offdiag_only && i == j {
                continue;
            }
            let v = a[(i, j)].norm();
            let r = if se[i][j] > 0.0 { v / se[i][j] } else if v > 0.0 { f64::INFINITY } else { 0.0 };
            if r > best.0 {
                best.0 = r;
            }
            if v > largest.0 {
                largest = (v, se[i][j]);
            }
        }
    }
    (best.0, largest.0, largest.1)
}

fn max_se(se: &StdErrorMatrix) -> f64 {
    se.iter().flatten().fold(0.0, |a: f64, &b| a.max(b))
}

fn mean_diag(a: &ComplexMatrix) -> f64 {
    a.trace().re / a.rows() as f64
}

/// Monte Carlo gain matrix `B̂ = Ĉ_zx·C_x⁺` over `x ~ CN(0, C_x)`.
///
/// At `M = 1` this is bit-identical to [`scalar::gain_correlation`] on the same stream.
pub fn gain_matrix(map: &dyn VectorMap, c_x: &ComplexMatrix, stream: &RandomStream, n: usize) -> Result<GainMatrix> {
    check_samples(n)?;
    let m = c_x.rows();
    check_dims(map, m)?;
    let pinv = pseudo_inverse_with_rank(c_x, DEFAULT_RANK_TOL)?;
    let p = &pinv.matrix;
    let src = SignalSource::ComplexGaussianVector { covariance: c_x.clone() }.prepare()?;

    let acc = sample_pass(&src, map, stream, n, 2 * m * m, |x, z, acc| {
        let (zx, zw) = acc.split_at_mut(m * m);
        push_outer(zx, z, x);
        let w: Vec<Complex64> = p.mul_vec(x).expect("shape");
        push_outer(zw, z, &w);
    });
    let c_zx = means(&acc.0[..m * m], m, m);
    let b = c_zx.matmul(p)?;
    let floor = STD_ERROR_FLOOR * b.max_abs().max(f64::MIN_POSITIVE);
    Ok(GainMatrix {
        b,
        std_error: std_errors(&acc.0[m * m..], m, floor),
        used_pseudo_inverse: pinv.truncated,
        n_samples: n,
    })
}

/// Per-antenna gains `d_m = E{U_m(x_m) x_m*} / [C_x]_mm` from the scalar engine,
/// each on substream `m`.
pub fn elementwise_gain_diag(
    dist: &ElementwiseDistortion,
    c_x: &ComplexMatrix,
    stream: &RandomStream,
    n: usize,
) -> Result<Vec<GainEstimate>> {
    check_dims(dist, c_x.rows())?;
    dist.per_antenna
        .iter()
        .enumerate()
        .map(|(m, u)| scalar::gain_correlation(u, c_x[(m, m)].re, &stream.child(m as u64), n))
        .collect()
}

/// Full decomposition for Gaussian input `x ~ CN(0, C_x)`, with `B̂` against the configured `C_x`.
pub fn distortion_correlation(
    map: &dyn VectorMap,
    c_x: &ComplexMatrix,
    stream: &RandomStream,
    n: usize,
) -> Result<MimoDecomposition> {
    let source = SignalSource::ComplexGaussianVector { covariance: c_x.clone() };
    decompose_with_source(map, &source, CorrelationEstimate::Population, stream, n)
}

/// Linear-MMSE decomposition for any source: `B̂ = Ĉ_zx·Ĉ_x⁺`.
pub fn decompose_general(
    map: &dyn VectorMap,
    source: &SignalSource,
    stream: &RandomStream,
    n: usize,
) -> Result<MimoDecomposition> {
    decompose_with_source(map, source, CorrelationEstimate::Sample, stream, n)
}

pub fn decompose_with_source(
    map: &dyn VectorMap,
    source: &SignalSource,
    estimate: CorrelationEstimate,
    stream: &RandomStream,
    n: usize,
) -> Result<MimoDecomposition> {
    check_samples(n)?;
    let m = source.dim();
    check_dims(map, m)?;
    let c_x = source.correlation()?;
    let src = source.prepare()?;
    let mm = m * m;

    // Pass 1: raw correlations.
    let acc = sample_pass(&src, map, stream, n, 3 * mm, |x, z, acc| {
        let (zx, rest) = acc.split_at_mut(mm);
        let (zz, xx) = rest.split_at_mut(mm);
        push_outer(zx, z, x);
        push_outer(zz, z, z);
        push_outer(xx, x, x);
    });
    let c_zx_hat = means(&acc.0[..mm], m, m);
    let c_z_hat = means(&acc.0[mm..2 * mm], m, m).hermitian_part()?;
    let c_x_hat = means(&acc.0[2 * mm..], m, m).hermitian_part()?;

    let basis = match estimate {
        CorrelationEstimate::Population => &c_x,
        CorrelationEstimate::Sample => &c_x_hat,
    };
    let pinv = pseudo_inverse_with_rank(basis, DEFAULT_RANK_TOL)?;
    let p = &pinv.matrix;
    let b = c_zx_hat.matmul(p)?;
    let b_fit = match estimate {
        CorrelationEstimate::Population => c_zx_hat.matmul(&pseudo_inverse_with_rank(&c_x_hat, DEFAULT_RANK_TOL)?.matrix)?,
        CorrelationEstimate::Sample => b.clone(),
    };
    // (I − C·P)x vanishes for x in the range of C when P = C⁺.
    let proj_resid = ComplexMatrix::identity(m).sub(&basis.matmul(p)?)?;

    // Pass 2: residual correlation and influence terms.
    let acc2 = sample_pass(&src, map, stream, n, 3 * mm, |x, z, acc| {
        let bx = b.mul_vec(x).expect("shape");
        let fit = b_fit.mul_vec(x).expect("shape");
        let eta: Vec<Complex64> = z.iter().zip(&fit).map(|(z, f)| z - f).collect();
        let w = p.mul_vec(x).expect("shape");
        let (ee, rest) = acc.split_at_mut(mm);
        let (infl_b, infl_o) = rest.split_at_mut(mm);
        push_outer(ee, &eta, &eta);
        match estimate {
            // B̂ = Ĉ_zx·P: influence z·(Px)ᴴ. Residual Ĉ_zx − B̂Ĉ_x: z·((I − CP)x)ᴴ − B̂x·xᴴ.
            CorrelationEstimate::Population => {
                push_outer(infl_b, z, &w);
                let r = proj_resid.mul_vec(x).expect("shape");
                for i in 0..m {
                    for j in 0..m {
                        infl_o[i * m + j].push(z[i] * r[j].conj() - bx[i] * x[j].conj());
                    }
                }
            }
            // B̂ = Ĉ_zx·Ĉ_x⁺: influence η·(Px)ᴴ. The residual is zero identically at full rank.
            CorrelationEstimate::Sample => {
                push_outer(infl_b, &eta, &w);
                let r = proj_resid.mul_vec(x).expect("shape");
                push_outer(infl_o, z, &r);
            }
        }
    });

    let scale_z = mean_diag(&c_z_hat).max(f64::MIN_POSITIVE);
    let scale_x = mean_diag(&c_x_hat).max(f64::MIN_POSITIVE);
    let raw_eta = means(&acc2.0[..mm], m, m);
    let symmetrization_defect = raw_eta.max_asymmetry();
    let c_eta = raw_eta.hermitian_part()?;
    let c_eta_std_error = std_errors(&acc2.0[..mm], m, STD_ERROR_FLOOR * scale_z);
    let b_std_error = std_errors(&acc2.0[mm..2 * mm], m, STD_ERROR_FLOOR * b.max_abs().max(f64::MIN_POSITIVE));
    let orth_se = std_errors(&acc2.0[2 * mm..], m, STD_ERROR_FLOOR * (scale_z * scale_x).sqrt());

    let orthogonality = c_zx_hat.sub(&b.matmul(&c_x_hat)?)?;
    let (orthogonality_z, _, _) = max_ratio(&orthogonality, &orth_se, false);
    let (max_offdiag_z, diagonality_defect, diagonality_std_error) = max_ratio(&b, &b_std_error, true);
    let (eigs, _) = eig_hermitian(&c_eta)?;
    let psd_margin = eigs.iter().copied().fold(f64::INFINITY, f64::min);

    let diagnostics = MimoDiagnostics {
        diagonality_defect,
        diagonality_std_error,
        max_offdiag_z,
        psd_margin,
        eps_mc: max_se(&c_eta_std_error),
        orthogonality_residual: orthogonality.max_abs(),
        orthogonality_std_error: max_se(&orth_se),
        orthogonality_z,
        symmetrization_defect,
        used_pseudo_inverse: pinv.truncated,
    };
    Ok(MimoDecomposition {
        b,
        b_std_error,
        c_x,
        c_x_hat,
        c_z_hat,
        c_zx_hat,
        c_eta,
        c_eta_std_error,
        diagnostics,
        estimate,
        map: map.describe(),
        n_samples: n,
    })
}

/// Distortion correlations of several maps driven by the same Gaussian draws.
///
/// Single pass: `C_η = Ĉ_z − Ĉ_zx·Ĉ_x⁺·Ĉ_xz`, the same estimate as
/// [`distortion_correlation`]. Returns one symmetrized `C_η` per map.
pub fn distortion_correlation_batch(
    maps: &[&dyn VectorMap],
    c_x: &ComplexMatrix,
    stream: &RandomStream,
    n: usize,
) -> Result<Vec<ComplexMatrix>> {
    check_samples(n)?;
    let m = c_x.rows();
    for map in maps {
        check_dims(*map, m)?;
    }
    let src = SignalSource::ComplexGaussianVector { covariance: c_x.clone() }.prepare()?;
    let mm = m * m;
    // Per map: Σ z xᴴ and Σ z zᴴ; shared: Σ x xᴴ. Plain sums, in block order.
    let stride = 2 * mm;
    let len = maps.len() * stride + mm;
    let parts = mc::map_blocks(n, |block, count| {
        let mut buf = Vec::with_capacity(count * m);
        src.draw_block(stream, block, count, &mut buf);
        let mut acc = vec![ZERO; len];
        let mut z = vec![ZERO; m];
        let (per_map, shared) = acc.split_at_mut(maps.len() * stride);
        for x in buf.chunks_exact(m) {
            for (map, sums) in maps.iter().zip(per_map.chunks_exact_mut(stride)) {
                map.apply(x, &mut z);
                let (zx, zz) = sums.split_at_mut(mm);
                for (i, ((zi, zx_row), zz_row)) in z.iter().zip(zx.chunks_exact_mut(m)).zip(zz.chunks_exact_mut(m)).enumerate() {
                    for (a, xj) in zx_row.iter_mut().zip(x) {
                        *a += zi * xj.conj();
                    }
                    for (a, zj) in zz_row[i..].iter_mut().zip(&z[i..]) {
                        *a += zi * zj.conj();
                    }
                }
            }
            for (i, (xi, row)) in x.iter().zip(shared.chunks_exact_mut(m)).enumerate() {
                for (a, xj) in row[i..].iter_mut().zip(&x[i..]) {
                    *a += xi * xj.conj();
                }
            }
        }
        acc
    });
    let mut sums = vec![ZERO; len];
    for part in &parts {
        for (s, v) in sums.iter_mut().zip(part) {
            *s += v;
        }
    }
    let inv_n = 1.0 / n as f64;
    let upper = |off: usize| {
        let mut a = ComplexMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = sums[off + i * m + j] * inv_n;
                a[(i, j)] = v;
                a[(j, i)] = v.conj();
            }
            a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
        }
        a
    };
    let c_x_hat = upper(maps.len() * stride);
    let p_hat = pseudo_inverse_with_rank(&c_x_hat, DEFAULT_RANK_TOL)?.matrix;
    (0..maps.len())
        .map(|k| {
            let base = k * stride;
            let c_zx = ComplexMatrix::from_row_major(m, m, sums[base..base + mm].iter().map(|v| v * inv_n).collect())?;
            let c_z = upper(base + mm);
            let explained = c_zx.matmul(&p_hat)?.matmul(&c_zx.adjoint())?;
            c_z.sub(&explained)?.hermitian_part()
        })
        .collect()
}

/// Both sides of `C_zy = C_zx·C_x⁻¹·C_xy` for jointly Gaussian `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MimoTheoremReport {
    /// `Ĉ_zy`.
    pub lhs: ComplexMatrix,
    /// `Ĉ_zx·C_x⁺·C_xy`.
    pub rhs: ComplexMatrix,
    pub max_dev: f64,
    pub std_error: StdErrorMatrix,
    /// `max |lhs_ij − rhs_ij| / se_ij`.
    pub max_z: f64,
    /// Every entry within 4 standard errors.
    pub within_tolerance: bool,
    pub n_samples: usize,
}

pub fn verify_mimo_theorem(
    map: &dyn VectorMap,
    c_x: &ComplexMatrix,
    c_y: &ComplexMatrix,
    c_xy: &ComplexMatrix,
    stream: &RandomStream,
    n: usize,
) -> Result<MimoTheoremReport> {
    check_samples(n)?;
    let m = c_x.rows();
    check_dims(map, m)?;
    let my = c_y.rows();
    if !c_x.is_square() || !c_y.is_square() || c_xy.rows() != m || c_xy.cols() != my {
        return Err(Error::DimensionMismatch(format!(
            "C_x {}x{}, C_y {}x{}, C_xy {}x{}",
            c_x.rows(),
            c_x.cols(),
            c_y.rows(),
            c_y.cols(),
            c_xy.rows(),
            c_xy.cols()
        )));
    }
    let dim = m + my;
    let mut joint = ComplexMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            joint[(i, j)] = match (i < m, j < m) {
                (true, true) => c_x[(i, j)],
                (true, false) => c_xy[(i, j - m)],
                (false, true) => c_xy[(j, i - m)].conj(),
                (false, false) => c_y[(i - m, j - m)],
            };
        }
    }
    let (eigs, _) = eig_hermitian(&joint)?;
    let lmax = eigs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let lmin = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    if lmin < -1e-10 * lmax {
        return Err(Error::JointCovarianceNotPsd(lmin));
    }

    let p = pseudo_inverse_with_rank(c_x, DEFAULT_RANK_TOL)?.matrix;
    // ε = y − C_yx·C_x⁺·x, so Ĉ_zy − Ĉ_zx·C_x⁺·C_xy = Ê{z εᴴ} exactly.
    let g = c_xy.adjoint().matmul(&p)?;
    let src = SignalSource::ComplexGaussianVector { covariance: joint }.prepare()?;
    let acc = sample_pass(&src, map, stream, n, m * my + m * m + m * my, |draw, z, acc| {
        let (x, y) = draw.split_at(m);
        let gx = g.mul_vec(x).expect("shape");
        let eps: Vec<Complex64> = y.iter().zip(&gx).map(|(y, gx)| y - gx).collect();
        let (zy, rest) = acc.split_at_mut(m * my);
        let (zx, h) = rest.split_at_mut(m * m);
        push_outer(zy, z, y);
        push_outer(zx, z, x);
        push_outer(h, z, &eps);
    });
    let lhs = means(&acc.0[..m * my], m, my);
    let c_zx = means(&acc.0[m * my..m * my + m * m], m, m);
    let rhs = c_zx.matmul(&p)?.matmul(c_xy)?;
    let dev = lhs.sub(&rhs)?;
    let scale = (mean_diag(c_x).max(0.0) * mean_diag(c_y).max(0.0)).sqrt().max(c_zx.max_abs());
    let std_error = std_errors(&acc.0[m * my + m * m..], my, STD_ERROR_FLOOR * scale.max(f64::MIN_POSITIVE));
    let (max_z, _, _) = max_ratio(&dev, &std_error, false);
    Ok(MimoTheoremReport {
        lhs,
        rhs,
        max_dev: dev.max_abs(),
        std_error,
        max_z,
        within_tolerance: max_z < 4.0,
        n_samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const N: usize = 200_000;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn stream(id: u64) -> RandomStream {
        RandomStream::new(42, id)
    }

    fn random_psd(seed: u64, m: usize) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = ComplexMatrix::from_row_major(
            m,
            m,
            (0..m * m).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
        )
        .unwrap();
        g.matmul(&g.adjoint()).unwrap().add(&ComplexMatrix::identity(m).scale(0.1)).unwrap()
    }

    fn third(m: usize) -> ElementwiseDistortion {
        ElementwiseDistortion::uniform(Nonlinearity::third_order(), m).unwrap()
    }

    #[test]
    fn identity_gain_is_identity() {
        let cx = random_psd(1, 3);
        let id = ElementwiseDistortion::uniform(Nonlinearity::identity(), 3).unwrap();
        let g = gain_matrix(&id, &cx, &stream(0), N).unwrap();
        assert!(!g.used_pseudo_inverse);
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) };
                assert!((g.b[(i, j)] - target).norm() < 4.0 * g.std_error[i][j], "{i}{j}");
            }
        }
        let d = distortion_correlation(&id, &cx, &stream(0), N).unwrap();
        assert!(d.c_eta.max_abs() < 1e-3, "{:?}", d.c_eta);
    }

    #[test]
    fn third_order_diagonal_input() {
        let cx = ComplexMatrix::from_real_diag(&[0.5, 2.0]);
        let g = gain_matrix(&third(2), &cx, &stream(1), N).unwrap();
        assert!((g.b[(0, 0)] - c(1.0, 0.0)).norm() < 4.0 * g.std_error[0][0]);
        assert!((g.b[(1, 1)] - c(4.0, 0.0)).norm() < 4.0 * g.std_error[1][1]);
        assert!(g.b[(0, 1)].norm() < 4.0 * g.std_error[0][1]);
    }

    #[test]
    fn one_bit_on_correlated_input_is_diagonal() {
        let cx = ComplexMatrix::from_real_rows(&[&[1.0, 0.9], &[0.9, 1.0]]).unwrap();
        let dist = ElementwiseDistortion::uniform(Nonlinearity::one_bit(), 2).unwrap();
        let g = gain_matrix(&dist, &cx, &stream(2), N).unwrap();
        for (i, j) in [(0, 1), (1, 0)] {
            assert!(g.b[(i, j)].norm() < 4.0 * g.std_error[i][j], "{:?}", g);
        }
    }

    #[test]
    fn single_antenna_matches_scalar_engine_bitwise() {
        for u in [Nonlinearity::third_order(), Nonlinearity::one_bit(), Nonlinearity::soft_clipper(0.8).unwrap()] {
            let cx = ComplexMatrix::from_real_diag(&[1.7]);
            let dist = ElementwiseDistortion::new(vec![u.clone()]).unwrap();
            let g = gain_matrix(&dist, &cx, &stream(3), 50_000).unwrap();
            let s = scalar::gain_correlation(&u, 1.7, &stream(3), 50_000).unwrap();
            assert_eq!(g.b[(0, 0)], s.value, "{u}");
        }
    }

    #[test]
    fn elementwise_gains_match_matrix_diagonal() {
        let dist = ElementwiseDistortion::new(vec![Nonlinearity::identity(), Nonlinearity::third_order()]).unwrap();
        let cx = ComplexMatrix::from_real_rows(&[&[1.0, 0.5], &[0.5, 1.0]]).unwrap();
        let d = elementwise_gain_diag(&dist, &cx, &stream(4), N).unwrap();
        assert!((d[0].value - c(1.0, 0.0)).norm() < 4.0 * d[0].std_error.max(1e-12));
        assert!((d[1].value - c(2.0, 0.0)).norm() < 4.0 * d[1].std_error);
        let g = gain_matrix(&dist, &cx, &stream(5), N).unwrap();
        for (m, est) in d.iter().enumerate() {
            let se = (g.std_error[m][m].powi(2) + est.std_error.powi(2)).sqrt();
            assert!((g.b[(m, m)] - est.value).norm() < 4.0 * se);
        }
    }

    #[test]
    fn third_order_distortion_correlation() {
        let d = distortion_correlation(&third(2), &ComplexMatrix::identity(2), &stream(6), N).unwrap();
        for i in 0..2 {
            assert!((d.c_eta[(i, i)].re - 2.0).abs() < 4.0 * d.c_eta_std_error[i][i], "{:?}", d.c_eta);
        }
        assert!(d.c_eta[(0, 1)].norm() < 4.0 * d.c_eta_std_error[0][1]);
        assert!(d.diagnostics.orthogonality_z < 4.0, "{:?}", d.diagnostics);
        assert!(d.diagnostics.psd_margin > -4.0 * d.diagnostics.eps_mc);

        let cx = ComplexMatrix::from_real_rows(&[&[1.0, 0.99], &[0.99, 1.0]]).unwrap();
        let d = distortion_correlation(&third(2), &cx, &stream(7), N).unwrap();
        assert!((d.c_eta[(0, 1)].norm() - d.c_eta[(0, 0)].re).abs() < 0.1 * d.c_eta[(0, 0)].re);
    }

    #[test]
    fn batch_matches_two_pass_decomposition() {
        let cx = random_psd(8, 3);
        let q = ElementwiseDistortion::new(
            (0..3)
                .map(|m| Nonlinearity::uniform_quantizer_for_power(2, cx[(m, m)].re, Domain::Complex).unwrap())
                .collect(),
        )
        .unwrap();
        let t = third(3);
        let batch = distortion_correlation_batch(&[&q, &t], &cx, &stream(8), 30_000).unwrap();
        for (k, map) in [&q as &dyn VectorMap, &t].iter().enumerate() {
            let full = distortion_correlation(*map, &cx, &stream(8), 30_000).unwrap();
            let diff = batch[k].sub(&full.c_eta).unwrap().max_abs();
            assert!(diff < 1e-9 * full.c_eta.max_abs(), "{k}: {diff}");
        }
    }

    #[test]
    fn general_decomposition_gaussian_and_qpsk() {
        let cx = random_psd(9, 2);
        let gauss = SignalSource::ComplexGaussianVector { covariance: cx.clone() };
        let g = gain_matrix(&third(2), &cx, &stream(9), N).unwrap();
        let d = decompose_general(&third(2), &gauss, &stream(9), N).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let se = g.std_error[i][j].max(d.b_std_error[i][j]);
                assert!((g.b[(i, j)] - d.b[(i, j)]).norm() < 4.0 * se, "{i}{j}");
            }
        }
        assert!(d.diagnostics.orthogonality_z < 4.0);

        let qpsk = SignalSource::Qpsk { power: 1.0, dim: 1 };
        let d = decompose_general(&third(1), &qpsk, &stream(10), 20_000).unwrap();
        assert!((d.b[(0, 0)] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(d.diagnostics.orthogonality_z < 4.0, "{:?}", d.diagnostics);

        let h = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.6, 0.3)], vec![c(0.2, -0.5), c(0.9, 0.0)]]).unwrap();
        let mixed = SignalSource::ChannelProduct {
            channel: h,
            symbols: Box::new(SignalSource::Qpsk { power: 1.0, dim: 2 }),
        };
        let d = decompose_general(&third(2), &mixed, &stream(11), N).unwrap();
        assert!(d.diagnostics.diagonality_defect > 10.0 * d.diagnostics.diagonality_std_error, "{:?}", d.diagnostics);
        assert!(d.diagnostics.orthogonality_z < 4.0);
    }

    #[test]
    fn rank_deficient_input_uses_pseudo_inverse() {
        let v = [c(1.0, 0.0), c(0.0, 1.0)];
        let mut cx = ComplexMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                cx[(i, j)] = v[i] * v[j].conj();
            }
        }
        let d = distortion_correlation(&third(2), &cx, &stream(12), N).unwrap();
        assert!(d.diagnostics.used_pseudo_inverse);
        // One-dimensional gain 2 embedded along v: B = 2vvᴴ/|v|² = vvᴴ, C_η = 2vvᴴ.
        for i in 0..2 {
            for j in 0..2 {
                assert!((d.b[(i, j)] - cx[(i, j)]).norm() < 4.0 * d.b_std_error[i][j], "{:?}", d.b);
                assert!((d.c_eta[(i, j)] - cx[(i, j)] * 2.0).norm() < 4.0 * d.c_eta_std_error[i][j]);
            }
        }
        assert!(d.diagnostics.orthogonality_z < 4.0, "{:?}", d.diagnostics);
    }

    #[test]
    fn mimo_theorem_cases() {
        let cx = random_psd(13, 2);
        let cy = random_psd(14, 2);
        let sign = ElementwiseDistortion::uniform(Nonlinearity::one_bit(), 2).unwrap();
        let zero = ComplexMatrix::zeros(2, 2);
        let r = verify_mimo_theorem(&sign, &cx, &cy, &zero, &stream(13), N).unwrap();
        assert!(r.lhs.max_abs() < 0.01 && r.rhs.max_abs() < 1e-12);
        assert!(r.within_tolerance);

        let same = verify_mimo_theorem(&third(2), &cx, &cx, &cx, &stream(14), N).unwrap();
        assert!(same.within_tolerance, "{same:?}");

        // Joint covariance from a random 4x4 Gram matrix.
        let j = random_psd(15, 4);
        let block = |r0: usize, c0: usize| {
            let mut b = ComplexMatrix::zeros(2, 2);
            for i in 0..2 {
                for k in 0..2 {
                    b[(i, k)] = j[(r0 + i, c0 + k)];
                }
            }
            b
        };
        let r = verify_mimo_theorem(&sign, &block(0, 0), &block(2, 2), &block(0, 2), &stream(15), N).unwrap();
        assert!(r.within_tolerance, "{r:?}");

        let bad = ComplexMatrix::identity(2).scale(2.0);
        assert!(matches!(
            verify_mimo_theorem(&sign, &ComplexMatrix::identity(2), &ComplexMatrix::identity(2), &bad, &stream(0), N),
            Err(Error::JointCovarianceNotPsd(_))
        ));
    }

    #[test]
    fn input_validation() {
        let cx = ComplexMatrix::identity(2);
        assert!(matches!(gain_matrix(&third(3), &cx, &stream(0), N), Err(Error::DimensionMismatch(_))));
        assert!(matches!(gain_matrix(&third(2), &cx, &stream(0), 100), Err(Error::TooFewSamples { .. })));
        assert!(matches!(
            ElementwiseDistortion::new(vec![Nonlinearity::sign()]),
            Err(Error::DomainMismatch { .. })
        ));
        assert!(ElementwiseDistortion::new(vec![]).is_err());
        let asym = ComplexMatrix::from_real_rows(&[&[1.0, 0.5], &[0.0, 1.0]]).unwrap();
        assert!(matches!(gain_matrix(&third(2), &asym, &stream(0), N), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn crosstalk_map_gives_full_gain_matrix() {
        let k = ComplexMatrix::from_real_rows(&[&[1.0, 0.5], &[0.0, 1.0]]).unwrap();
        let mixed = MixedDistortion::new(k, third(2)).unwrap();
        let d = distortion_correlation(&mixed, &ComplexMatrix::identity(2), &stream(16), N).unwrap();
        assert!(d.diagnostics.max_offdiag_z > 10.0);
        assert!(d.diagnostics.orthogonality_z < 4.0);

        let f = FnMap::new(2, "swap", |x: &[Complex64], out: &mut [Complex64]| {
            out[0] = x[1];
            out[1] = x[0];
        });
        let src = SignalSource::ComplexGaussianVector { covariance: random_psd(17, 2) };
        let g = decompose_general(&f, &src, &stream(17), 20_000).unwrap();
        assert!((g.b[(0, 1)] - c(1.0, 0.0)).norm() < 1e-9);
        assert!(g.b[(0, 0)].norm() < 1e-9);
        assert!(g.c_eta.max_abs() < 1e-9);
    }
}
