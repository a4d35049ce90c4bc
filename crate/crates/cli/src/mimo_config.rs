//! JSON config for the `mimo` subcommand.
//!
//! ```json
//! {
//!   "c_x": [[[1, 0], [0.5, 0]], [[0.5, 0], [1, 0]]],
//!   "nonlinearities": ["uniform_quantizer(bits=3,step=mse)"],
//!   "samples": 100000,
//!   "seed": 42
//! }
//! ```
//!
//! Exactly one of `c_x` and `channel` is required. `channel` describes
//! `x = H·s` with `{"h": matrix, "symbols": "gaussian" | "qpsk", "power": p}`.
//! `nonlinearities` holds one spec per antenna, or a single spec applied to all.
//! An optional `mixing` matrix `K` turns the map into `z_m = U_m((K·x)_m)`.
//! Complex entries are `[re, im]` pairs.

use bussgang::linalg::HERMITIAN_TOL;
use bussgang::mimo::{CorrelationEstimate, ElementwiseDistortion, MixedDistortion, VectorMap};
use bussgang::{ComplexMatrix, NonlinearitySpec, SignalSource};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symbols {
    #[default]
    Gaussian,
    Qpsk,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub h: ComplexMatrix,
    #[serde(default)]
    pub symbols: Symbols,
    /// Per-entry power of `s`.
    #[serde(default = "unit_power")]
    pub power: f64,
}

fn unit_power() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MimoConfig {
    #[serde(default)]
    pub c_x: Option<ComplexMatrix>,
    #[serde(default)]
    pub channel: Option<ChannelSpec>,
    pub nonlinearities: Vec<String>,
    #[serde(default)]
    pub mixing: Option<ComplexMatrix>,
    #[serde(default)]
    pub estimate: Option<CorrelationEstimate>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// The config with every default filled in, echoed in the output.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub source: SignalSource,
    pub c_x: ComplexMatrix,
    pub nonlinearities: Vec<String>,
    pub mixing: Option<ComplexMatrix>,
    pub estimate: CorrelationEstimate,
    pub samples: usize,
    pub seed: u64,
}

pub struct Prepared {
    pub resolved: ResolvedConfig,
    pub map: Box<dyn VectorMap>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// 1-based line of the first occurrence of `"field"` in the source text.
fn field_line(text: &str, field: &str) -> Option<usize> {
    let key = format!("\"{field}\"");
    text.lines().position(|l| l.contains(&key)).map(|i| i + 1)
}

fn field_error(text: &str, field: &str, msg: impl std::fmt::Display) -> ConfigError {
    match field_line(text, field) {
        Some(line) => ConfigError(format!("field `{field}` (line {line}): {msg}")),
        None => ConfigError(format!("field `{field}`: {msg}")),
    }
}

fn check_hermitian(text: &str, field: &str, m: &ComplexMatrix) -> Result<(), ConfigError> {
    if !m.is_square() {
        return Err(field_error(text, field, format!("expected a square matrix, got {}x{}", m.rows(), m.cols())));
    }
    let asym = m.max_asymmetry();
    if asym > HERMITIAN_TOL * m.max_abs() {
        return Err(field_error(text, field, format!("matrix is not Hermitian (max asymmetry {asym:e})")));
    }
    Ok(())
}

pub fn parse(text: &str) -> Result<MimoConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))
}

impl MimoConfig {
    pub fn prepare(self, text: &str, samples: Option<usize>, seed: Option<u64>) -> Result<Prepared, ConfigError> {
        let source = match (self.c_x, self.channel) {
            (Some(c_x), None) => {
                check_hermitian(text, "c_x", &c_x)?;
                SignalSource::ComplexGaussianVector { covariance: c_x }
            }
            (None, Some(ch)) => {
                if !(ch.power > 0.0 && ch.power.is_finite()) {
                    return Err(field_error(text, "power", format!("must be positive, got {}", ch.power)));
                }
                let dim = ch.h.cols();
                let symbols = match ch.symbols {
                    Symbols::Gaussian => SignalSource::ComplexGaussianVector {
                        covariance: ComplexMatrix::from_real_diag(&vec![ch.power; dim]),
                    },
                    Symbols::Qpsk => SignalSource::Qpsk { power: ch.power, dim },
                };
                SignalSource::ChannelProduct {
                    channel: ch.h,
                    symbols: Box::new(symbols),
                }
            }
            (Some(_), Some(_)) => return Err(ConfigError("give exactly one of `c_x` and `channel`, not both".into())),
            (None, None) => return Err(ConfigError("missing input: give `c_x` or `channel`".into())),
        };
        let c_x = source
            .correlation()
            .map_err(|e| field_error(text, "channel", e))?;
        if let Err(e) = source.prepare() {
            let field = if matches!(source, SignalSource::ChannelProduct { .. }) { "channel" } else { "c_x" };
            return Err(field_error(text, field, e));
        }
        let m = c_x.rows();

        // Power seen by each branch non-linearity.
        let branch_power = match &self.mixing {
            Some(k) => {
                if !k.is_square() || k.rows() != m {
                    return Err(field_error(
                        text,
                        "mixing",
                        format!("expected a {m}x{m} matrix, got {}x{}", k.rows(), k.cols()),
                    ));
                }
                k.matmul(&c_x)
                    .and_then(|kc| kc.matmul(&k.adjoint()))
                    .map_err(|e| field_error(text, "mixing", e))?
            }
            None => c_x.clone(),
        };

        let specs = match self.nonlinearities.len() {
            1 => vec![self.nonlinearities[0].clone(); m],
            n if n == m => self.nonlinearities,
            n => {
                return Err(field_error(
                    text,
                    "nonlinearities",
                    format!("expected 1 or {m} entries, got {n}"),
                ))
            }
        };
        let per_antenna = specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let power = branch_power[(i, i)].re;
                s.parse::<NonlinearitySpec>()
                    .and_then(|spec| spec.build(power))
                    .map_err(|e| field_error(text, "nonlinearities", format!("entry {i}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let resolved_specs = per_antenna.iter().map(|u| u.spec_string()).collect();
        let inner = ElementwiseDistortion::new(per_antenna).map_err(|e| field_error(text, "nonlinearities", e))?;
        let map: Box<dyn VectorMap> = match &self.mixing {
            Some(k) => Box::new(MixedDistortion::new(k.clone(), inner).map_err(|e| field_error(text, "mixing", e))?),
            None => Box::new(inner),
        };

        let estimate = self.estimate.unwrap_or(if source.is_gaussian() {
            CorrelationEstimate::Population
        } else {
            CorrelationEstimate::Sample
        });
        Ok(Prepared {
            resolved: ResolvedConfig {
                source,
                c_x,
                nonlinearities: resolved_specs,
                mixing: self.mixing,
                estimate,
                samples: samples.or(self.samples).unwrap_or(DEFAULT_SAMPLES),
                seed: seed.or(self.seed).unwrap_or(DEFAULT_SEED),
            },
            map,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prepare(text: &str) -> Result<Prepared, ConfigError> {
        parse(text)?.prepare(text, None, None)
    }

    #[test]
    fn broadcasts_a_single_spec() {
        let text = r#"{"c_x": [[[2,0],[0.5,0]],[[0.5,0],[1,0]]], "nonlinearities": ["third_order"]}"#;
        let p = prepare(text).unwrap();
        assert_eq!(p.resolved.nonlinearities, vec!["third_order", "third_order"]);
        assert_eq!(p.resolved.estimate, CorrelationEstimate::Population);
        assert_eq!((p.resolved.samples, p.resolved.seed), (DEFAULT_SAMPLES, DEFAULT_SEED));
        assert_eq!(p.map.dim(), 2);
    }

    #[test]
    fn quantizer_steps_follow_branch_power() {
        let text = r#"{"c_x": [[[2,0],[0,0]],[[0,0],[8,0]]], "nonlinearities": ["uniform_quantizer(bits=2)"]}"#;
        let p = prepare(text).unwrap();
        assert_ne!(p.resolved.nonlinearities[0], p.resolved.nonlinearities[1]);
    }

    #[test]
    fn qpsk_channel_defaults_to_sample_estimate() {
        let text = r#"{"channel": {"h": [[[1,0],[0.5,0]],[[0,0.3],[1,0]]], "symbols": "qpsk"}, "nonlinearities": ["one_bit"], "seed": 9}"#;
        let p = parse(text).unwrap().prepare(text, Some(20_000), None).unwrap();
        assert_eq!(p.resolved.estimate, CorrelationEstimate::Sample);
        assert_eq!((p.resolved.samples, p.resolved.seed), (20_000, 9));
    }

    #[test]
    fn errors_name_the_field_and_line() {
        let text = "{\n  \"c_x\": [[[1,0],[0.5,0]],\n          [[0.1,0],[1,0]]],\n  \"nonlinearities\": [\"sign\"]\n}";
        let e = prepare(text).err().unwrap().0;
        assert!(e.contains("`c_x` (line 2)") && e.contains("not Hermitian"), "{e}");

        let text = "{\n  \"c_x\": [[[1,0]]],\n  \"nonlinearity\": [\"sign\"]\n}";
        let e = prepare(text).err().unwrap().0;
        assert!(e.contains("unknown field `nonlinearity`") && e.contains("line 3"), "{e}");

        let text = r#"{"c_x": [[[1,0]]], "nonlinearities": ["sign"]}"#;
        let e = prepare(text).err().unwrap().0;
        assert!(e.contains("`nonlinearities`") && e.contains("expects real input"), "{e}");

        let text = r#"{"c_x": [[[1,0]]], "nonlinearities": ["a","b"]}"#;
        assert!(prepare(text).err().unwrap().0.contains("expected 1 or 1 entries"));

        let text = r#"{"nonlinearities": ["third_order"]}"#;
        assert!(prepare(text).err().unwrap().0.contains("missing input"));
    }
}
