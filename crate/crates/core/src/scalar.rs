//! Scalar Bussgang decomposition `U(x) = B·x + η` for real and complex inputs.
//!
//! Real inputs are carried as complex samples with zero imaginary part and
//! follow `N(0, C_x)`; complex inputs follow `CN(0, C_x)` (each component
//! `N(0, C_x/2)`). The configured `C_x`, not the sample power, is the
//! denominator of every gain estimate.
//!
//! Standard errors are normal-approximation errors of the corresponding
//! sample means; for statistics that are functions of several means they
//! come from the first-order (delta-method) expansion.

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mc::{self, Moments};
use crate::nonlinearity::{Domain, Nonlinearity};
use crate::sampling::{JointPair, PreparedSource, RandomStream, SignalSource};

pub const MIN_SAMPLES: usize = 1000;
pub const MIN_SAMPLES_PROBE: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMethod {
    ClosedForm,
    CorrelationMc,
    DerivativeMc,
}

/// A Bussgang gain value with the route that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainEstimate {
    pub value: Complex64,
    pub method: GainMethod,
    pub n_samples: usize,
    /// Zero for closed forms.
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionMethod {
    Exact,
    MonteCarlo,
}

/// Serializes `f64::INFINITY` as the string `"inf"`.
pub fn serialize_maybe_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarDecomposition {
    /// Bussgang gain `C_zx / C_x`.
    pub b: Complex64,
    pub c_x: f64,
    pub c_z: f64,
    pub c_zx: Complex64,
    /// `C_z − |B|²C_x`, clamped at zero.
    pub distortion_power: f64,
    /// Set when the raw estimate was negative and clamped.
    pub distortion_clamped: bool,
    #[serde(serialize_with = "serialize_maybe_inf")]
    pub sdr: f64,
    /// `|Ê{η x*}|` over the sample.
    pub orthogonality_residual: f64,
    pub orthogonality_std_error: f64,
    pub gain_std_error: f64,
    pub distortion_std_error: f64,
    pub method: DecompositionMethod,
    pub n_samples: usize,
}

fn check_samples(n: usize, need: usize) -> Result<()> {
    if n < need {
        Err(Error::TooFewSamples { need, got: n })
    } else {
        Ok(())
    }
}

fn check_power(c_x: f64) -> Result<()> {
    if c_x > 0.0 && c_x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidVariance(c_x))
    }
}

/// Gaussian source matching the non-linearity's domain.
pub fn gaussian_source(domain: Domain, c_x: f64) -> SignalSource {
    match domain {
        Domain::Real => SignalSource::RealGaussian { variance: c_x },
        Domain::Complex => SignalSource::ComplexGaussian { variance: c_x },
    }
}

fn source_domain(src: &SignalSource) -> Option<Domain> {
    match src {
        SignalSource::RealGaussian { .. } => Some(Domain::Real),
        _ if src.dim() == 1 => Some(Domain::Complex),
        _ => None,
    }
}

/// Accumulates `K` per-sample statistics over `n` draws from `src`.
fn sample_moments<const K: usize>(
    src: &PreparedSource,
    stream: &RandomStream,
    n: usize,
    stat: impl Fn(Complex64) -> [Complex64; K] + Sync + Send,
) -> [Moments; K] {
    let parts = mc::map_blocks(n, |block, len| {
        let mut buf = Vec::with_capacity(len);
        src.draw_block(stream, block, len, &mut buf);
        let mut acc = [Moments::default(); K];
        for &x in &buf {
            for (m, v) in acc.iter_mut().zip(stat(x)) {
                m.push(v);
            }
        }
        acc
    });
    let mut out = [Moments::default(); K];
    for p in &parts {
        for (o, m) in out.iter_mut().zip(p) {
            o.merge(m);
        }
    }
    out
}

/// Closed-form gain, when the catalog provides one.
pub fn gain_closed_form(u: &Nonlinearity, c_x: f64) -> Result<GainEstimate> {
    Ok(GainEstimate {
        value: u.closed_form_gain(c_x)?,
        method: GainMethod::ClosedForm,
        n_samples: 0,
        std_error: 0.0,
    })
}

/// `B = Ê{U(x) x*} / C_x` over Gaussian draws.
pub fn gain_correlation(u: &Nonlinearity, c_x: f64, stream: &RandomStream, n: usize) -> Result<GainEstimate> {
    check_samples(n, MIN_SAMPLES)?;
    check_power(c_x)?;
    let src = gaussian_source(u.domain(), c_x).prepare()?;
    let [q] = sample_moments(&src, stream, n, |x| [u.eval(x) * x.conj()]);
    let inv = 1.0 / c_x;
    Ok(GainEstimate {
        value: q.mean() * inv,
        method: GainMethod::CorrelationMc,
        n_samples: n,
        std_error: q.std_error() * inv,
    })
}

/// `B = Ê{∂U(x)/∂x}` over Gaussian draws.
pub fn gain_derivative(u: &Nonlinearity, c_x: f64, stream: &RandomStream, n: usize) -> Result<GainEstimate> {
    if !u.capabilities().has_derivative {
        return Err(Error::NoDerivative(u.name().to_string()));
    }
    check_samples(n, MIN_SAMPLES)?;
    check_power(c_x)?;
    let src = gaussian_source(u.domain(), c_x).prepare()?;
    let [d] = sample_moments(&src, stream, n, |x| [u.derivative(x).expect("capability checked")]);
    Ok(GainEstimate {
        value: d.mean(),
        method: GainMethod::DerivativeMc,
        n_samples: n,
        std_error: d.std_error(),
    })
}

/// Monte Carlo decomposition over a Gaussian input of power `c_x`.
pub fn decompose(u: &Nonlinearity, c_x: f64, stream: &RandomStream, n: usize) -> Result<ScalarDecomposition> {
    check_power(c_x)?;
    decompose_with_source(u, &gaussian_source(u.domain(), c_x), stream, n)
}

/// Monte Carlo decomposition over any scalar source; `C_x` is the source's
/// population power. For non-Gaussian sources this is the linear-MMSE split.
pub fn decompose_with_source(
    u: &Nonlinearity,
    source: &SignalSource,
    stream: &RandomStream,
    n: usize,
) -> Result<ScalarDecomposition> {
    check_samples(n, MIN_SAMPLES)?;
    let got = source_domain(source).ok_or_else(|| {
        Error::DimensionMismatch(format!("scalar decomposition needs a scalar source, got dimension {}", source.dim()))
    })?;
    if got != u.domain() {
        return Err(Error::DomainMismatch {
            name: u.name().to_string(),
            expected: u.domain(),
            got,
        });
    }
    let c_x = source.correlation()?[(0, 0)].re;
    let src = source.prepare()?;

    let [q, zz, xx] = sample_moments(&src, stream, n, |x| {
        let z = u.eval(x);
        [z * x.conj(), Complex64::new(z.norm_sqr(), 0.0), Complex64::new(x.norm_sqr(), 0.0)]
    });
    let inv = 1.0 / c_x;
    let c_zx = q.mean();
    let b = c_zx * inv;
    let c_z = zz.mean().re;
    let raw = c_z - b.norm_sqr() * c_x;
    let distortion_power = raw.max(0.0);
    let signal = b.norm_sqr() * c_x;
    let sdr = if distortion_power == 0.0 { f64::INFINITY } else { signal / distortion_power };

    // Ê{ηx*} = Ĉ_zx − B̂·Ĉ_x; to first order its noise is B·(C_x − Ĉ_x).
    let orthogonality_residual = (c_zx - b * xx.mean().re).norm();
    let orthogonality_std_error = b.norm() * xx.std_error();

    // Distortion influence: |U|² − 2·Re(B*·U x*).
    let [h] = sample_moments(&src, stream, n, |x| {
        let z = u.eval(x);
        [Complex64::new(z.norm_sqr() - 2.0 * (b.conj() * z * x.conj()).re, 0.0)]
    });

    Ok(ScalarDecomposition {
        b,
        c_x,
        c_z,
        c_zx,
        distortion_power,
        distortion_clamped: raw < 0.0,
        sdr,
        orthogonality_residual,
        orthogonality_std_error,
        gain_std_error: q.std_error() * inv,
        distortion_std_error: h.std_error(),
        method: DecompositionMethod::MonteCarlo,
        n_samples: n,
    })
}

/// Exact decomposition from the closed-form gain and output power.
pub fn decompose_exact(u: &Nonlinearity, c_x: f64) -> Result<ScalarDecomposition> {
    let b = u.closed_form_gain(c_x)?;
    let c_z = u.closed_form_output_power(c_x)?;
    let signal = b.norm_sqr() * c_x;
    let raw = c_z - signal;
    // Rounding-level negatives (e.g. identity) are exact zeros.
    let distortion_power = if raw.abs() <= 8.0 * f64::EPSILON * c_z { 0.0 } else { raw.max(0.0) };
    let sdr = if distortion_power == 0.0 { f64::INFINITY } else { signal / distortion_power };
    Ok(ScalarDecomposition {
        b,
        c_x,
        c_z,
        c_zx: b * c_x,
        distortion_power,
        distortion_clamped: raw < 0.0 && distortion_power == 0.0 && raw != 0.0,
        sdr,
        orthogonality_residual: 0.0,
        orthogonality_std_error: 0.0,
        gain_std_error: 0.0,
        distortion_std_error: 0.0,
        method: DecompositionMethod::Exact,
        n_samples: 0,
    })
}

/// Signal-to-distortion ratio `|B|²C_x / E{|η|²}`; infinite without distortion.
pub fn sdr(d: &ScalarDecomposition) -> f64 {
    let signal = d.b.norm_sqr() * d.c_x;
    if d.distortion_power == 0.0 {
        f64::INFINITY
    } else {
        signal / d.distortion_power
    }
}

/// Achievable rate (bit per channel use) when `η + w` is treated as
/// independent Gaussian noise: `log2(1 + |B|²C_x / (E{|η|²} + σ²))`.
pub fn rate_lower_bound(d: &ScalarDecomposition, noise_power: f64) -> Result<f64> {
    if noise_power.is_nan() || noise_power <= 0.0 {
        return Err(Error::InvalidNoisePower(noise_power));
    }
    let signal = d.b.norm_sqr() * d.c_x;
    Ok((signal / (d.distortion_power + noise_power)).ln_1p() / std::f64::consts::LN_2)
}

/// Both sides of `C_zy = B·C_xy` estimated from jointly Gaussian draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCorrelationReport {
    pub c_zy_hat: Complex64,
    pub b_hat: Complex64,
    pub c_xy_hat: Complex64,
    /// `B̂·Ĉ_xy`.
    pub rhs: Complex64,
    pub deviation: f64,
    pub std_error: f64,
    /// `deviation < 4·std_error`.
    pub within_tolerance: bool,
    pub n_samples: usize,
}

pub fn verify_cross_correlation_theorem(
    u: &Nonlinearity,
    c_x: f64,
    c_y: f64,
    rho: Complex64,
    stream: &RandomStream,
    n: usize,
) -> Result<CrossCorrelationReport> {
    check_samples(n, MIN_SAMPLES_PROBE)?;
    let pair = match u.domain() {
        Domain::Complex => JointPair::new(c_x, c_y, rho)?,
        Domain::Real => JointPair::new_real(c_x, c_y, rho)?,
    };
    let moments = |stat: &(dyn Fn(Complex64, Complex64) -> [Complex64; 3] + Sync)| {
        let parts = mc::map_blocks(n, |block, len| {
            let mut buf = Vec::with_capacity(len);
            pair.draw_block(stream, block, len, &mut buf);
            let mut acc = [Moments::default(); 3];
            for &(x, y) in &buf {
                for (m, v) in acc.iter_mut().zip(stat(x, y)) {
                    m.push(v);
                }
            }
            acc
        });
        let mut out = [Moments::default(); 3];
        for p in &parts {
            for (o, m) in out.iter_mut().zip(p) {
                o.merge(m);
            }
        }
        out
    };

    let [zy, zx, xy] = moments(&|x, y| {
        let z = u.eval(x);
        [z * y.conj(), z * x.conj(), x * y.conj()]
    });
    let c_zy_hat = zy.mean();
    let b_hat = zx.mean() * (1.0 / c_x);
    let c_xy_hat = xy.mean();
    let rhs = b_hat * c_xy_hat;
    let deviation = (c_zy_hat - rhs).norm();

    let k = c_xy_hat / c_x;
    let [h, _, _] = moments(&|x, y| {
        let z = u.eval(x);
        let zero = Complex64::new(0.0, 0.0);
        [z * y.conj() - k * z * x.conj() - b_hat * x * y.conj(), zero, zero]
    });
    let std_error = h.std_error();
    Ok(CrossCorrelationReport {
        c_zy_hat,
        b_hat,
        c_xy_hat,
        rhs,
        deviation,
        std_error,
        within_tolerance: deviation < 4.0 * std_error,
        n_samples: n,
    })
}

/// Additive quantization noise model check: `(1 − β)` against `B̂` and
/// `Ĉ_zx` against `Ĉ_z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AqnmReport {
    /// `Ê{|x − Q(x)|²} / C_x`.
    pub beta: f64,
    pub one_minus_beta: f64,
    pub b_hat: Complex64,
    pub c_zx_hat: Complex64,
    pub c_z_hat: f64,
    /// `|(1 − β̂) − B̂|`.
    pub gain_gap: f64,
    pub gain_gap_std_error: f64,
    /// `|Ĉ_zx − Ĉ_z|`.
    pub power_gap: f64,
    pub power_gap_std_error: f64,
    pub n_samples: usize,
}

pub fn aqnm_check(q: &Nonlinearity, c_x: f64, stream: &RandomStream, n: usize) -> Result<AqnmReport> {
    check_power(c_x)?;
    if !q.capabilities().satisfies_conditional_mean || !q.conditional_mean_holds_at(c_x) {
        return Err(Error::ConditionalMeanNotSatisfied(q.spec_string()));
    }
    check_samples(n, MIN_SAMPLES)?;
    let src = gaussian_source(q.domain(), c_x).prepare()?;
    let inv = 1.0 / c_x;
    let [err, zx, zz, gap, pgap] = sample_moments(&src, stream, n, |x| {
        let z = q.eval(x);
        let e = (x - z).norm_sqr();
        let zxc = z * x.conj();
        let re = |v: f64| Complex64::new(v, 0.0);
        [re(e), zxc, re(z.norm_sqr()), re(1.0 - e * inv) - zxc * inv, zxc - z.norm_sqr()]
    });
    let beta = err.mean().re * inv;
    let b_hat = zx.mean() * inv;
    Ok(AqnmReport {
        beta,
        one_minus_beta: 1.0 - beta,
        b_hat,
        c_zx_hat: zx.mean(),
        c_z_hat: zz.mean().re,
        gain_gap: (Complex64::new(1.0 - beta, 0.0) - b_hat).norm(),
        gain_gap_std_error: gap.std_error(),
        power_gap: (zx.mean() - zz.mean()).norm(),
        power_gap_std_error: pgap.std_error(),
        n_samples: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniquenessProbe {
    /// `|Ĉ_zx − B_alt·C_x|`.
    pub residual: f64,
    pub c_zx_hat: Complex64,
    pub std_error: f64,
}

/// Residual correlation between `U(x) − B_alt·x` and `x`; vanishes only at the Bussgang gain.
pub fn uniqueness_probe(
    u: &Nonlinearity,
    c_x: f64,
    b_alt: Complex64,
    stream: &RandomStream,
    n: usize,
) -> Result<UniquenessProbe> {
    check_samples(n, MIN_SAMPLES_PROBE)?;
    check_power(c_x)?;
    let src = gaussian_source(u.domain(), c_x).prepare()?;
    let [q] = sample_moments(&src, stream, n, |x| [u.eval(x) * x.conj()]);
    Ok(UniquenessProbe {
        residual: (q.mean() - b_alt * c_x).norm(),
        c_zx_hat: q.mean(),
        std_error: q.std_error(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const N: usize = 1_000_000;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn stream(id: u64) -> RandomStream {
        RandomStream::new(42, id)
    }

    #[test]
    fn correlation_gain_examples() {
        let sign = gain_correlation(&Nonlinearity::sign(), 1.0, &stream(0), N).unwrap();
        assert!((sign.value.re - (2.0 / PI).sqrt()).abs() < 3.0 * sign.std_error, "{sign:?}");
        assert!(sign.std_error > 4e-4 && sign.std_error < 8e-4);

        let third = gain_correlation(&Nonlinearity::third_order(), 1.0, &stream(1), N).unwrap();
        assert!((third.value - c(2.0, 0.0)).norm() < 4.0 * third.std_error, "{third:?}");

        let id = gain_correlation(&Nonlinearity::identity(), 3.0, &stream(2), N).unwrap();
        assert!((id.value - c(1.0, 0.0)).norm() < 4.0 * id.std_error);
    }

    #[test]
    fn derivative_gain_examples() {
        let third = gain_derivative(&Nonlinearity::third_order(), 1.0, &stream(3), N).unwrap();
        assert!((third.value - c(2.0, 0.0)).norm() < 4.0 * third.std_error);

        let a = c(2.0, -1.0);
        let lin = gain_derivative(&Nonlinearity::linear(a), 1.0, &stream(4), 5000).unwrap();
        assert_eq!(lin.value, a);
        assert_eq!(lin.std_error, 0.0);

        assert!(matches!(
            gain_derivative(&Nonlinearity::sign(), 1.0, &stream(0), N),
            Err(Error::NoDerivative(_))
        ));
        assert!(matches!(
            gain_correlation(&Nonlinearity::sign(), 1.0, &stream(0), 10),
            Err(Error::TooFewSamples { .. })
        ));
    }

    /// Soft-clipper gain for CN(0, C): with a = A²/C,
    /// B = 1 − e^{−a} + (A/2)·√(π/C)·erfc(√a). Derived by integrating the
    /// Rayleigh envelope; used only as a test oracle.
    fn soft_clipper_gain_oracle(amax: f64, c_x: f64) -> f64 {
        let a = amax * amax / c_x;
        1.0 - (-a).exp() + 0.5 * amax * (PI / c_x).sqrt() * statrs::function::erf::erfc(a.sqrt())
    }

    #[test]
    fn soft_clipper_estimators_agree() {
        let u = Nonlinearity::soft_clipper(1.0).unwrap();
        let corr = gain_correlation(&u, 1.0, &stream(5), N).unwrap();
        let der = gain_derivative(&u, 1.0, &stream(6), N).unwrap();
        let combined = (corr.std_error.powi(2) + der.std_error.powi(2)).sqrt();
        assert!((corr.value - der.value).norm() < 3.0 * combined);
        let oracle = soft_clipper_gain_oracle(1.0, 1.0);
        assert!((corr.value.re - oracle).abs() < 4.0 * corr.std_error);
        assert!((der.value.re - oracle).abs() < 4.0 * der.std_error);
    }

    #[test]
    fn decomposition_examples() {
        let id = decompose(&Nonlinearity::identity(), 1.0, &stream(7), N).unwrap();
        assert!((id.b - c(1.0, 0.0)).norm() < 4.0 * id.gain_std_error);
        assert!(id.distortion_power < 4.0 * id.distortion_std_error.max(1e-3));

        // E{|x|^6} = 6 for CN(0,1), so C_z = 6 and |B|²C_x = 4.
        let third = decompose(&Nonlinearity::third_order(), 1.0, &stream(8), N).unwrap();
        assert!((third.distortion_power - 2.0).abs() < 4.0 * third.distortion_std_error);
        assert!((third.sdr - 2.0).abs() < 0.05);

        let sign = decompose(&Nonlinearity::sign(), 1.0, &stream(9), N).unwrap();
        assert_eq!(sign.c_z, 1.0);
        assert!((sign.distortion_power - (1.0 - 2.0 / PI)).abs() < 4.0 * sign.distortion_std_error);
        assert!((sdr(&sign) - (2.0 / PI) / (1.0 - 2.0 / PI)).abs() < 0.01);
    }

    #[test]
    fn orthogonality_residual_within_noise() {
        for (i, u) in [
            Nonlinearity::sign(),
            Nonlinearity::third_order(),
            Nonlinearity::identity(),
            Nonlinearity::soft_clipper(0.7).unwrap(),
        ]
        .iter()
        .enumerate()
        {
            let d = decompose(u, 1.0, &stream(20 + i as u64), 200_000).unwrap();
            assert!(d.orthogonality_residual < 4.0 * d.orthogonality_std_error, "{u}: {d:?}");
        }
    }

    #[test]
    fn exact_decompositions() {
        let id = decompose_exact(&Nonlinearity::identity(), 1.0).unwrap();
        assert_eq!(id.distortion_power, 0.0);
        assert!(id.sdr.is_infinite());
        assert_eq!(rate_lower_bound(&id, 1.0).unwrap(), 1.0);

        let third = decompose_exact(&Nonlinearity::third_order(), 1.0).unwrap();
        assert_eq!(third.distortion_power, 2.0);
        assert_eq!(sdr(&third), 2.0);
        let r = rate_lower_bound(&third, 1e-12).unwrap();
        assert!((r - 3f64.log2()).abs() < 1e-9);
        assert!(rate_lower_bound(&third, 1e12).unwrap() < 1e-11);

        let sign = decompose_exact(&Nonlinearity::sign(), 1.0).unwrap();
        assert!((sign.sdr - 1.7519).abs() < 1e-4);
        assert!(matches!(
            decompose_exact(&Nonlinearity::soft_clipper(1.0).unwrap(), 1.0),
            Err(Error::NoClosedForm(_))
        ));
        assert!(matches!(rate_lower_bound(&id, 0.0), Err(Error::InvalidNoisePower(_))));
    }

    #[test]
    fn rate_strictly_decreasing_in_noise() {
        let d = decompose_exact(&Nonlinearity::third_order(), 1.0).unwrap();
        let rates: Vec<f64> = (0..10)
            .map(|k| rate_lower_bound(&d, 10f64.powi(k - 5)).unwrap())
            .collect();
        assert!(rates.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn cross_correlation_theorem_examples() {
        let sign = Nonlinearity::sign();
        let r = verify_cross_correlation_theorem(&sign, 1.0, 1.0, c(0.5, 0.0), &stream(10), N).unwrap();
        assert!((r.c_zy_hat.re - (2.0 / PI).sqrt() * 0.5).abs() < 0.005, "{r:?}");
        assert!(r.within_tolerance);

        let zero = verify_cross_correlation_theorem(&sign, 1.0, 1.0, c(0.0, 0.0), &stream(11), N).unwrap();
        assert!(zero.c_zy_hat.norm() < 0.005 && zero.rhs.norm() < 0.005);

        let third = Nonlinearity::third_order();
        let same = verify_cross_correlation_theorem(&third, 1.0, 1.0, c(1.0, 0.0), &stream(12), N).unwrap();
        assert!(same.within_tolerance, "{same:?}");

        assert!(matches!(
            verify_cross_correlation_theorem(&third, 1.0, 1.0, c(1.5, 0.0), &stream(12), N),
            Err(Error::InvalidCorrelation(_))
        ));
        assert!(verify_cross_correlation_theorem(&sign, 1.0, 1.0, c(0.5, 0.5), &stream(12), N).is_err());
    }

    #[test]
    fn aqnm_examples() {
        let q1 = Nonlinearity::lloyd_max(1, 1.0, Domain::Complex).unwrap();
        let r = aqnm_check(&q1, 1.0, &stream(13), N).unwrap();
        assert!((r.b_hat.re - 2.0 / PI).abs() < 4.0 * r.gain_gap_std_error.max(1e-3));
        assert!(r.gain_gap < 4.0 * r.gain_gap_std_error, "{r:?}");

        let id = aqnm_check(&Nonlinearity::identity(), 1.0, &stream(14), 10_000).unwrap();
        assert_eq!(id.beta, 0.0);
        assert!((id.b_hat.re - 1.0).abs() < 0.05);

        let q3 = Nonlinearity::lloyd_max(3, 1.0, Domain::Complex).unwrap();
        let r3 = aqnm_check(&q3, 1.0, &stream(15), N).unwrap();
        assert!(r3.gain_gap < 4.0 * r3.gain_gap_std_error, "{r3:?}");

        assert!(matches!(
            aqnm_check(&Nonlinearity::third_order(), 1.0, &stream(0), N),
            Err(Error::ConditionalMeanNotSatisfied(_))
        ));
        assert!(matches!(
            aqnm_check(&q3, 2.0, &stream(0), N),
            Err(Error::ConditionalMeanNotSatisfied(_))
        ));
    }

    #[test]
    fn uniqueness_probe_examples() {
        let third = Nonlinearity::third_order();
        let at_b = uniqueness_probe(&third, 1.0, c(2.0, 0.0), &stream(16), N).unwrap();
        assert!(at_b.residual < 4.0 * at_b.std_error);
        let off = uniqueness_probe(&third, 1.0, c(2.1, 0.0), &stream(16), N).unwrap();
        assert!((off.residual - 0.1).abs() < 4.0 * off.std_error);
        let zero = uniqueness_probe(&third, 1.0, c(0.0, 0.0), &stream(16), N).unwrap();
        assert!((zero.residual - 2.0).abs() < 4.0 * zero.std_error);
    }

    #[test]
    fn qpsk_source_through_third_order() {
        // Constant modulus: C_zx = E{|x|⁴} = C_x², so B = C_x rather than 2C_x.
        let src = SignalSource::Qpsk { power: 1.0, dim: 1 };
        let d = decompose_with_source(&Nonlinearity::third_order(), &src, &stream(17), 100_000).unwrap();
        assert!((d.b - c(1.0, 0.0)).norm() < 1e-12);
        assert!(d.orthogonality_residual < 1e-12);
    }
}
