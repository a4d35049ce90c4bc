//! Text form of a non-linearity: `name(param=value,...)`.
//!
//! Parameters that depend on the input power (the uniform quantizer step and
//! the Lloyd–Max design variance) may be omitted and are resolved by
//! [`NonlinearitySpec::build`]. The uniform quantizer step also accepts
//! `three_sigma` (the default) and `mse` (minimum mean squared error).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use super::{Domain, Nonlinearity, UniformQuantizer, DEFAULT_LLOYD_MAX_ITER, DEFAULT_LLOYD_TOL};
use crate::error::{Error, Result};

/// A parsed, not yet instantiated non-linearity.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    name: String,
    params: BTreeMap<String, String>,
}

const CATALOG: &[(&str, &[&str])] = &[
    ("identity", &["domain"]),
    ("linear", &["a", "domain"]),
    ("sign", &[]),
    ("one_bit", &[]),
    ("third_order", &[]),
    ("soft_clipper", &["amax"]),
    ("iq_imbalance", &["alpha", "beta"]),
    ("uniform_quantizer", &["bits", "step", "domain"]),
    ("lloyd_max", &["bits", "variance", "domain", "max_iter", "tol"]),
];

impl NonlinearitySpec {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Instantiates the map for an input of total power `c_x`.
    pub fn build(&self, c_x: f64) -> Result<Nonlinearity> {
        let domain = match self.params.get("domain").map(String::as_str) {
            None => None,
            Some("real") => Some(Domain::Real),
            Some("complex") => Some(Domain::Complex),
            Some(other) => return Err(Error::Parse(format!("unknown domain `{other}`"))),
        };
        let nl = match self.name.as_str() {
            "identity" => Nonlinearity::identity(),
            "linear" => Nonlinearity::linear(self.complex("a")?.unwrap_or(Complex64::new(1.0, 0.0))),
            "sign" => Nonlinearity::sign(),
            "one_bit" => Nonlinearity::one_bit(),
            "third_order" => Nonlinearity::third_order(),
            "soft_clipper" => Nonlinearity::soft_clipper(self.real("amax")?.unwrap_or(1.0))?,
            "iq_imbalance" => Nonlinearity::iq_imbalance(
                self.complex("alpha")?.unwrap_or(Complex64::new(1.0, 0.0)),
                self.complex("beta")?.unwrap_or(Complex64::new(0.0, 0.0)),
            ),
            "uniform_quantizer" => {
                let bits = self.required_bits()?;
                let domain = domain.unwrap_or(Domain::Complex);
                match self.params.get("step").map(String::as_str) {
                    None | Some("three_sigma") => Nonlinearity::uniform_quantizer_for_power(bits, c_x, domain)?,
                    Some("mse") => {
                        if !(c_x > 0.0 && c_x.is_finite()) {
                            return Err(Error::InvalidVariance(c_x));
                        }
                        let step = UniformQuantizer::mse_optimal_step(bits, domain.component_variance(c_x))?;
                        Nonlinearity::uniform_quantizer(bits, step, domain)?
                    }
                    Some(_) => {
                        let step = self.real("step")?.expect("present");
                        Nonlinearity::uniform_quantizer(bits, step, domain)?
                    }
                }
            }
            "lloyd_max" => {
                let bits = self.required_bits()?;
                let domain = domain.unwrap_or(Domain::Complex);
                let variance = self.real("variance")?.unwrap_or(c_x);
                let max_iter = match self.params.get("max_iter") {
                    Some(v) => parse_count(v)?,
                    None => DEFAULT_LLOYD_MAX_ITER,
                };
                let tol = self.real("tol")?.unwrap_or(DEFAULT_LLOYD_TOL);
                super::quantizer_design_lloyd_max_in(bits, variance, domain, max_iter, tol)?
            }
            other => return Err(Error::Parse(format!("unknown non-linearity `{other}`"))),
        };
        match domain {
            Some(d) if matches!(self.name.as_str(), "identity" | "linear") => nl.with_domain(d),
            _ => Ok(nl),
        }
    }

    fn real(&self, key: &str) -> Result<Option<f64>> {
        self.params
            .get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("`{key}` expects a real number, got `{v}`")))
            })
            .transpose()
    }

    fn complex(&self, key: &str) -> Result<Option<Complex64>> {
        self.params.get(key).map(|v| parse_complex(v)).transpose()
    }

    fn required_bits(&self) -> Result<u32> {
        let v = self
            .params
            .get("bits")
            .ok_or_else(|| Error::Parse(format!("`{}` requires `bits`", self.name)))?;
        v.parse::<u32>()
            .map_err(|_| Error::Parse(format!("`bits` expects a positive integer, got `{v}`")))
    }
}

fn parse_count(v: &str) -> Result<usize> {
    let f: f64 = v
        .parse()
        .map_err(|_| Error::Parse(format!("expected a count, got `{v}`")))?;
    if f >= 1.0 && f.fract() == 0.0 && f <= 1e15 {
        Ok(f as usize)
    } else {
        Err(Error::Parse(format!("expected a positive integer count, got `{v}`")))
    }
}

impl FromStr for NonlinearitySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, body) = match s.find('(') {
            Some(open) => {
                let rest = s[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| Error::Parse(format!("missing `)` in `{s}`")))?;
                (s[..open].trim(), Some(rest))
            }
            None => (s, None),
        };
        let name = match name {
            "lloyd_max_quantizer" => "lloyd_max",
            n => n,
        };
        let allowed = CATALOG
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, p)| *p)
            .ok_or_else(|| Error::Parse(format!("unknown non-linearity `{name}`")))?;

        let mut params = BTreeMap::new();
        for item in body.unwrap_or("").split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected `key=value`, got `{item}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !allowed.contains(&k) {
                return Err(Error::Parse(format!("`{name}` has no parameter `{k}`")));
            }
            if params.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Parse(format!("duplicate parameter `{k}`")));
            }
        }
        Ok(NonlinearitySpec {
            name: name.to_string(),
            params,
        })
    }
}

impl fmt::Display for NonlinearitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.params.is_empty() {
            return f.write_str(&self.name);
        }
        let body: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{}({})", self.name, body.join(","))
    }
}

/// Parses `1.5`, `-2j`, `0.3+0.1j`, `1e-3-2e-1j`, `j`.
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let err = || Error::Parse(format!("cannot parse complex number `{s}`"));
    let t = s.trim();
    let Some(body) = t.strip_suffix(['j', 'i']) else {
        return t.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| err());
    };
    // Split at the last sign that is neither leading nor part of an exponent.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| matches!(bytes[i], b'+' | b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    let imag = |v: &str| -> Result<f64> {
        match v {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            v => v.parse::<f64>().map_err(|_| err()),
        }
    };
    match split {
        Some(i) => {
            let re = body[..i].parse::<f64>().map_err(|_| err())?;
            Ok(Complex64::new(re, imag(&body[i..])?))
        }
        None => Ok(Complex64::new(0.0, imag(body)?)),
    }
}

pub(crate) fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.re == 0.0 {
        format!("{}j", z.im)
    } else {
        format!("{}{:+}j", z.re, z.im)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_catalog_entries() {
        let spec: NonlinearitySpec = "third_order".parse().unwrap();
        assert_eq!(spec.build(1.0).unwrap(), Nonlinearity::third_order());

        let q = "uniform_quantizer(bits=3)".parse::<NonlinearitySpec>().unwrap().build(2.0).unwrap();
        assert_eq!(q, Nonlinearity::uniform_quantizer_for_power(3, 2.0, Domain::Complex).unwrap());

        let clip = "soft_clipper(amax=1.0)".parse::<NonlinearitySpec>().unwrap().build(1.0).unwrap();
        assert_eq!(clip, Nonlinearity::soft_clipper(1.0).unwrap());

        let iq = " iq_imbalance( alpha = 0.9+0.1j , beta=0.05j ) "
            .parse::<NonlinearitySpec>()
            .unwrap()
            .build(1.0)
            .unwrap();
        assert_eq!(
            iq,
            Nonlinearity::iq_imbalance(Complex64::new(0.9, 0.1), Complex64::new(0.0, 0.05))
        );
        let mse = "uniform_quantizer(bits=3,step=mse)".parse::<NonlinearitySpec>().unwrap().build(2.0).unwrap();
        let step = UniformQuantizer::mse_optimal_step(3, 1.0).unwrap();
        assert_eq!(mse, Nonlinearity::uniform_quantizer(3, step, Domain::Complex).unwrap());
        let three = "uniform_quantizer(bits=3,step=three_sigma)".parse::<NonlinearitySpec>().unwrap();
        assert_eq!(three.build(2.0).unwrap(), q);
        let real_id = "identity(domain=real)".parse::<NonlinearitySpec>().unwrap().build(1.0).unwrap();
        assert_eq!(real_id.domain(), Domain::Real);
    }

    #[test]
    fn rejects_malformed_specs() {
        for bad in [
            "cubic",
            "third_order(",
            "soft_clipper(amax)",
            "soft_clipper(gain=2)",
            "uniform_quantizer(bits=2,bits=3)",
        ] {
            assert!(matches!(bad.parse::<NonlinearitySpec>(), Err(Error::Parse(_))), "{bad}");
        }
        let no_bits: NonlinearitySpec = "uniform_quantizer".parse().unwrap();
        assert!(matches!(no_bits.build(1.0), Err(Error::Parse(_))));
        let bad_step: NonlinearitySpec = "uniform_quantizer(bits=2,step=wide)".parse().unwrap();
        assert!(matches!(bad_step.build(1.0), Err(Error::Parse(_))));
        let bad_num: NonlinearitySpec = "soft_clipper(amax=big)".parse().unwrap();
        assert!(matches!(bad_num.build(1.0), Err(Error::Parse(_))));
        let bad_domain: NonlinearitySpec = "third_order".parse().unwrap();
        assert!(bad_domain.build(1.0).is_ok());
        assert!("linear(domain=quaternion)".parse::<NonlinearitySpec>().unwrap().build(1.0).is_err());
    }

    #[test]
    fn spec_string_round_trips() {
        for s in [
            "identity",
            "sign",
            "linear(a=2+1j)",
            "soft_clipper(amax=0.5)",
            "iq_imbalance(alpha=0.9+0.1j,beta=-0.05j)",
            "uniform_quantizer(bits=4,step=0.25,domain=real)",
            "lloyd_max(bits=2,variance=1)",
        ] {
            let nl = s.parse::<NonlinearitySpec>().unwrap().build(1.0).unwrap();
            let again = nl.spec_string().parse::<NonlinearitySpec>().unwrap().build(7.0).unwrap();
            assert_eq!(nl, again, "{s}");
        }
    }

    #[test]
    fn complex_literals() {
        let cases = [
            ("1.5", (1.5, 0.0)),
            ("-2j", (0.0, -2.0)),
            ("0.3+0.1j", (0.3, 0.1)),
            ("1e-3-2e-1j", (1e-3, -0.2)),
            ("-1e+2+3j", (-100.0, 3.0)),
            ("j", (0.0, 1.0)),
            ("-j", (0.0, -1.0)),
            ("2-j", (2.0, -1.0)),
        ];
        for (s, (re, im)) in cases {
            assert_eq!(parse_complex(s).unwrap(), Complex64::new(re, im), "{s}");
        }
        assert!(parse_complex("1+").is_err());
        assert!(parse_complex("abc").is_err());
    }
}
