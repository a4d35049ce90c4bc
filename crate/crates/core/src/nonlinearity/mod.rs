//! Catalog of memoryless distortion functions.
//!
//! A [`Nonlinearity`] maps one input sample to one output sample. Complex
//! derivatives follow the Wirtinger convention
//! `∂U/∂x = ½(∂U/∂Re{x} − j·∂U/∂Im{x})`, under which the expected derivative
//! over a circularly symmetric Gaussian input equals the Bussgang gain.

mod quantizer;
mod spec;

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use quantizer::{
    LloydMaxQuantizer, UniformQuantizer, DEFAULT_LLOYD_MAX_ITER, DEFAULT_LLOYD_TOL, MAX_BITS,
};
pub use spec::{parse_complex, NonlinearitySpec};

/// Whether a non-linearity consumes real or complex samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Real,
    Complex,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Real => "real",
            Domain::Complex => "complex",
        })
    }
}

impl Domain {
    /// Variance of one real component of an input with total power `c_x`.
    pub fn component_variance(self, c_x: f64) -> f64 {
        match self {
            Domain::Real => c_x,
            Domain::Complex => c_x / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Capabilities {
    pub has_derivative: bool,
    pub has_closed_form_gain: bool,
    pub satisfies_conditional_mean: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearityKind {
    Identity,
    Linear { a: Complex64 },
    /// `sgn(x)`, real only.
    Sign,
    /// `sgn(Re x) + j·sgn(Im x)`.
    OneBit,
    /// `|x|²·x`.
    ThirdOrder,
    /// Envelope limiter: `x` inside `|x| <= amax`, `amax·x/|x|` outside.
    SoftClipper { amax: f64 },
    /// Widely linear `α·x + β·conj(x)`.
    IqImbalance { alpha: Complex64, beta: Complex64 },
    Uniform(UniformQuantizer),
    LloydMax(LloydMaxQuantizer),
}

/// A memoryless map `U(·)` with its domain and capabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    domain: Domain,
}

#[inline]
fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Nonlinearity {
    pub fn identity() -> Self {
        Nonlinearity {
            kind: NonlinearityKind::Identity,
            domain: Domain::Complex,
        }
    }

    pub fn linear(a: Complex64) -> Self {
        Nonlinearity {
            kind: NonlinearityKind::Linear { a },
            domain: Domain::Complex,
        }
    }

    /// One-bit quantization of a real signal.
    pub fn sign() -> Self {
        Nonlinearity {
            kind: NonlinearityKind::Sign,
            domain: Domain::Real,
        }
    }

    /// One-bit quantization of each of the real and imaginary parts.
    pub fn one_bit() -> Self {
        Nonlinearity {
            kind: NonlinearityKind::OneBit,
            domain: Domain::Complex,
        }
    }

    pub fn third_order() -> Self {
        Nonlinearity {
            kind: NonlinearityKind::ThirdOrder,
            domain: Domain::Complex,
        }
    }

    pub fn soft_clipper(amax: f64) -> Result<Self> {
        if !(amax > 0.0 && amax.is_finite()) {
            return Err(Error::InvalidParameter(format!("amax must be positive, got {amax}")));
        }
        Ok(Nonlinearity {
            kind: NonlinearityKind::SoftClipper { amax },
            domain: Domain::Complex,
        })
    }

    pub fn iq_imbalance(alpha: Complex64, beta: Complex64) -> Self {
        Nonlinearity {
            kind: NonlinearityKind::IqImbalance { alpha, beta },
            domain: Domain::Complex,
        }
    }

    pub fn uniform_quantizer(bits: u32, step: f64, domain: Domain) -> Result<Self> {
        Ok(Nonlinearity {
            kind: NonlinearityKind::Uniform(UniformQuantizer::new(bits, step)?),
            domain,
        })
    }

    /// Uniform quantizer with the ±3σ step for an input of total power `c_x`.
    pub fn uniform_quantizer_for_power(bits: u32, c_x: f64, domain: Domain) -> Result<Self> {
        if !(c_x > 0.0 && c_x.is_finite()) {
            return Err(Error::InvalidVariance(c_x));
        }
        let step = UniformQuantizer::three_sigma_step(bits, domain.component_variance(c_x));
        Self::uniform_quantizer(bits, step, domain)
    }

    /// Lloyd–Max quantizer designed for an input of total power `variance`.
    pub fn lloyd_max(bits: u32, variance: f64, domain: Domain) -> Result<Self> {
        quantizer_design_lloyd_max_in(bits, variance, domain, DEFAULT_LLOYD_MAX_ITER, DEFAULT_LLOYD_TOL)
    }

    /// Re-targets a domain-agnostic map (identity, linear) to `domain`.
    pub fn with_domain(mut self, domain: Domain) -> Result<Self> {
        let agnostic = matches!(
            self.kind,
            NonlinearityKind::Identity | NonlinearityKind::Linear { .. }
        );
        if domain != self.domain && !agnostic {
            return Err(Error::DomainMismatch {
                name: self.name().to_string(),
                expected: self.domain,
                got: domain,
            });
        }
        self.domain = domain;
        Ok(self)
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            NonlinearityKind::Identity => "identity",
            NonlinearityKind::Linear { .. } => "linear",
            NonlinearityKind::Sign => "sign",
            NonlinearityKind::OneBit => "one_bit",
            NonlinearityKind::ThirdOrder => "third_order",
            NonlinearityKind::SoftClipper { .. } => "soft_clipper",
            NonlinearityKind::IqImbalance { .. } => "iq_imbalance",
            NonlinearityKind::Uniform(_) => "uniform_quantizer",
            NonlinearityKind::LloydMax(_) => "lloyd_max",
        }
    }

    /// Canonical spec string with every parameter resolved.
    pub fn spec_string(&self) -> String {
        let fmt_c = spec::format_complex;
        let body = match &self.kind {
            NonlinearityKind::Identity | NonlinearityKind::Sign | NonlinearityKind::OneBit => None,
            NonlinearityKind::ThirdOrder => None,
            NonlinearityKind::Linear { a } => Some(format!("a={}", fmt_c(*a))),
            NonlinearityKind::SoftClipper { amax } => Some(format!("amax={amax}")),
            NonlinearityKind::IqImbalance { alpha, beta } => {
                Some(format!("alpha={},beta={}", fmt_c(*alpha), fmt_c(*beta)))
            }
            NonlinearityKind::Uniform(q) => Some(format!("bits={},step={}", q.bits(), q.step())),
            NonlinearityKind::LloydMax(q) => Some(format!(
                "bits={},variance={}",
                q.bits(),
                q.component_variance() / self.domain.component_variance(1.0)
            )),
        };
        let mut params: Vec<String> = body.into_iter().collect();
        let default_domain = match self.kind {
            NonlinearityKind::Sign => Domain::Real,
            _ => Domain::Complex,
        };
        if self.domain != default_domain {
            params.push(format!("domain={}", self.domain));
        }
        if params.is_empty() {
            self.name().to_string()
        } else {
            format!("{}({})", self.name(), params.join(","))
        }
    }

    pub fn capabilities(&self) -> Capabilities {
        use NonlinearityKind::*;
        let has_derivative = matches!(
            self.kind,
            Identity | Linear { .. } | ThirdOrder | SoftClipper { .. } | IqImbalance { .. }
        );
        let has_closed_form_gain = matches!(
            self.kind,
            Identity | Linear { .. } | Sign | ThirdOrder | IqImbalance { .. } | LloydMax(_)
        );
        let satisfies_conditional_mean = matches!(self.kind, Identity | LloydMax(_));
        Capabilities {
            has_derivative,
            has_closed_form_gain,
            satisfies_conditional_mean,
        }
    }

    /// Raw scalar map. Real-domain maps read only `x.re` and return a real value.
    #[inline]
    pub fn eval(&self, x: Complex64) -> Complex64 {
        if self.domain == Domain::Real {
            return self.eval_real(x.re);
        }
        match &self.kind {
            NonlinearityKind::Identity => x,
            NonlinearityKind::Linear { a } => a * x,
            NonlinearityKind::Sign => Complex64::new(sgn(x.re), 0.0),
            NonlinearityKind::OneBit => Complex64::new(sgn(x.re), sgn(x.im)),
            NonlinearityKind::ThirdOrder => x * x.norm_sqr(),
            NonlinearityKind::SoftClipper { amax } => {
                let r = x.norm();
                if r <= *amax {
                    x
                } else {
                    x * (amax / r)
                }
            }
            NonlinearityKind::IqImbalance { alpha, beta } => alpha * x + beta * x.conj(),
            NonlinearityKind::Uniform(q) => Complex64::new(q.quantize(x.re), q.quantize(x.im)),
            NonlinearityKind::LloydMax(q) => Complex64::new(q.quantize(x.re), q.quantize(x.im)),
        }
    }

    #[inline]
    fn eval_real(&self, x: f64) -> Complex64 {
        match &self.kind {
            NonlinearityKind::Identity => Complex64::new(x, 0.0),
            NonlinearityKind::Linear { a } => a * x,
            NonlinearityKind::Sign => Complex64::new(sgn(x), 0.0),
            NonlinearityKind::Uniform(q) => Complex64::new(q.quantize(x), 0.0),
            NonlinearityKind::LloydMax(q) => Complex64::new(q.quantize(x), 0.0),
            // Construction never pairs these kinds with the real domain.
            _ => unreachable!("complex-only non-linearity in the real domain"),
        }
    }

    fn expect_domain(&self, got: Domain) -> Result<()> {
        if self.domain == got {
            Ok(())
        } else {
            Err(Error::DomainMismatch {
                name: self.name().to_string(),
                expected: self.domain,
                got,
            })
        }
    }

    /// Element-wise application to complex samples.
    pub fn apply_complex(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.expect_domain(Domain::Complex)?;
        Ok(x.iter().map(|&v| self.eval(v)).collect())
    }

    /// Element-wise application to real samples.
    pub fn apply_real(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.expect_domain(Domain::Real)?;
        Ok(x.iter().map(|&v| self.eval_real(v).re).collect())
    }

    /// Wirtinger derivative at `x` (ordinary derivative for real-domain maps).
    pub fn derivative(&self, x: Complex64) -> Result<Complex64> {
        let one = Complex64::new(1.0, 0.0);
        match &self.kind {
            NonlinearityKind::Identity => Ok(one),
            NonlinearityKind::Linear { a } => Ok(*a),
            NonlinearityKind::ThirdOrder => Ok(Complex64::new(2.0 * x.norm_sqr(), 0.0)),
            NonlinearityKind::SoftClipper { amax } => {
                let r = x.norm();
                Ok(if r <= *amax { one } else { Complex64::new(amax / (2.0 * r), 0.0) })
            }
            NonlinearityKind::IqImbalance { alpha, .. } => Ok(*alpha),
            _ => Err(Error::NoDerivative(self.name().to_string())),
        }
    }

    /// Exact Bussgang gain for a Gaussian input of power `c_x`.
    pub fn closed_form_gain(&self, c_x: f64) -> Result<Complex64> {
        check_power(c_x)?;
        let re = |v: f64| Complex64::new(v, 0.0);
        match &self.kind {
            NonlinearityKind::Identity => Ok(re(1.0)),
            NonlinearityKind::Linear { a } => Ok(*a),
            NonlinearityKind::Sign => Ok(re((2.0 / (PI * c_x)).sqrt())),
            NonlinearityKind::ThirdOrder => Ok(re(2.0 * c_x)),
            // conj(x) is uncorrelated with x under circular symmetry.
            NonlinearityKind::IqImbalance { alpha, .. } => Ok(*alpha),
            NonlinearityKind::LloydMax(q) => {
                let var = self.domain.component_variance(c_x);
                Ok(re(q.correlation_with_input(var) / var))
            }
            _ => Err(Error::NoClosedForm(self.name().to_string())),
        }
    }

    /// Exact output power `E{|U(x)|²}` for a Gaussian input of power `c_x`,
    /// available for the same maps as [`Nonlinearity::closed_form_gain`].
    pub fn closed_form_output_power(&self, c_x: f64) -> Result<f64> {
        check_power(c_x)?;
        match &self.kind {
            NonlinearityKind::Identity => Ok(c_x),
            NonlinearityKind::Linear { a } => Ok(a.norm_sqr() * c_x),
            NonlinearityKind::Sign => Ok(1.0),
            // E{|x|⁶} = 3!·C_x³ for circularly symmetric Gaussian x.
            NonlinearityKind::ThirdOrder => Ok(6.0 * c_x.powi(3)),
            NonlinearityKind::IqImbalance { alpha, beta } => Ok((alpha.norm_sqr() + beta.norm_sqr()) * c_x),
            NonlinearityKind::LloydMax(q) => {
                let var = self.domain.component_variance(c_x);
                let per_component = q.output_power(var);
                Ok(match self.domain {
                    Domain::Real => per_component,
                    Domain::Complex => 2.0 * per_component,
                })
            }
            _ => Err(Error::NoClosedForm(self.name().to_string())),
        }
    }

    /// True when `E{x | U(x)} = U(x)` holds for a Gaussian input of power `c_x`.
    pub fn conditional_mean_holds_at(&self, c_x: f64) -> bool {
        match &self.kind {
            NonlinearityKind::Identity => true,
            NonlinearityKind::LloydMax(q) => {
                let var = self.domain.component_variance(c_x);
                (var / q.component_variance() - 1.0).abs() < 1e-9
            }
            _ => false,
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spec_string())
    }
}

impl Serialize for Nonlinearity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.spec_string())
    }
}

fn check_power(c_x: f64) -> Result<()> {
    if c_x > 0.0 && c_x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidVariance(c_x))
    }
}

/// Designs a complex-domain Lloyd–Max quantizer (per real component) for an
/// input of total power `variance`.
pub fn quantizer_design_lloyd_max(bits: u32, variance: f64, max_iter: usize, tol: f64) -> Result<Nonlinearity> {
    quantizer_design_lloyd_max_in(bits, variance, Domain::Complex, max_iter, tol)
}

pub fn quantizer_design_lloyd_max_in(
    bits: u32,
    variance: f64,
    domain: Domain,
    max_iter: usize,
    tol: f64,
) -> Result<Nonlinearity> {
    check_power(variance)?;
    let q = LloydMaxQuantizer::design(bits, domain.component_variance(variance), max_iter, tol)?;
    Ok(Nonlinearity {
        kind: NonlinearityKind::LloydMax(q),
        domain,
    })
}
