//! Correlation of quantization distortion across receive antennas.
//!
//! Per realization: `H` has i.i.d. `CN(0, 1)` entries, `x = H·s` with
//! `s ~ CN(0, I)`, so conditionally on `H` the input is Gaussian with
//! `C_x = H·Hᴴ`. Each antenna quantizes the real and imaginary parts with
//! identical `b`-bit uniform quantizers; `C_η` of the quantized output gives
//! the correlation coefficients `ρ_ij = [C_η]_ij / √([C_η]_ii [C_η]_jj)`.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::mimo::{self, ElementwiseDistortion, VectorMap};
use crate::nonlinearity::{Domain, Nonlinearity, UniformQuantizer, MAX_BITS};
use crate::sampling::{draw_complex_gaussian, RandomStream};

/// Relative size (against `tr(C_x)/M`) below which a distortion power counts as zero.
pub const DEGENERATE_DIAGONAL_TOL: f64 = 1e-12;

/// ADC resolution: a bit depth, or no quantization at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Resolution {
    Bits(u32),
    Unquantized,
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Bits(b) => write!(f, "{b}"),
            Resolution::Unquantized => f.write_str("inf"),
        }
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "∞" => Ok(Resolution::Unquantized),
            t => t
                .parse::<u32>()
                .map(Resolution::Bits)
                .map_err(|_| Error::InvalidParameter(format!("bit depth must be an integer or `inf`, got `{t}`"))),
        }
    }
}

impl Serialize for Resolution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Resolution::Bits(b) => s.serialize_u32(*b),
            Resolution::Unquantized => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Resolution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Bits(u32),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Bits(b) => Ok(Resolution::Bits(b)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// How the uniform quantizer step is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPolicy {
    /// `2^b` levels spanning ±3 per-component standard deviations of each antenna.
    ThreeSigma,
    /// Per antenna, the uniform step minimizing the mean squared error for its Gaussian component.
    MseOptimal,
    /// The same step on every antenna.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub m_rx: usize,
    pub m_tx: usize,
    pub bits_list: Vec<Resolution>,
    pub realizations: usize,
    pub samples_per_realization: usize,
    pub seed: u64,
    pub quantizer_step_policy: StepPolicy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            m_rx: 4,
            m_tx: 4,
            bits_list: (1..=6).map(Resolution::Bits).collect(),
            realizations: 200,
            samples_per_realization: 100_000,
            seed: 42,
            quantizer_step_policy: StepPolicy::MseOptimal,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.m_rx == 0 || self.m_tx == 0 {
            return bad(format!("antenna counts must be >= 1, got {}x{}", self.m_rx, self.m_tx));
        }
        if self.realizations == 0 {
            return bad("realizations must be >= 1".into());
        }
        if self.bits_list.is_empty() {
            return bad("bits_list must not be empty".into());
        }
        if let Some(b) = self.bits_list.iter().find_map(|r| match r {
            Resolution::Bits(b) if !(1..=MAX_BITS).contains(b) => Some(*b),
            _ => None,
        }) {
            return bad(format!("bit depth must be in 1..={MAX_BITS}, got {b}"));
        }
        if self.samples_per_realization < mimo::MIN_SAMPLES {
            return Err(Error::TooFewSamples {
                need: mimo::MIN_SAMPLES,
                got: self.samples_per_realization,
            });
        }
        if let StepPolicy::Fixed(step) = self.quantizer_step_policy {
            if !(step > 0.0 && step.is_finite()) {
                return bad(format!("fixed quantizer step must be positive, got {step}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfSummary {
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

/// Empirical distribution of `|ρ_ij|` for one resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfSeries {
    pub bits: Resolution,
    /// Ascending.
    pub sorted_values: Vec<f64>,
    /// `None` when no pair survived.
    pub summary: Option<CdfSummary>,
    /// Pairs dropped because a distortion power was degenerate.
    pub skipped_pairs: usize,
    /// `1/√n`: standard error scale of a sample correlation coefficient.
    pub rho_std_error: f64,
}

impl CdfSeries {
    fn new(bits: Resolution, mut values: Vec<f64>, skipped_pairs: usize, samples: usize) -> Self {
        values.sort_by(f64::total_cmp);
        let summary = (!values.is_empty()).then(|| CdfSummary {
            median: quantile(&values, 0.5),
            p90: quantile(&values, 0.9),
            max: *values.last().expect("nonempty"),
        });
        CdfSeries {
            bits,
            sorted_values: values,
            summary,
            skipped_pairs,
            rho_std_error: 1.0 / (samples as f64).sqrt(),
        }
    }

    /// Fraction of values `<= t`.
    pub fn cdf(&self, t: f64) -> f64 {
        if self.sorted_values.is_empty() {
            return f64::NAN;
        }
        self.sorted_values.partition_point(|v| *v <= t) as f64 / self.sorted_values.len() as f64
    }

    /// Nearest-rank quantile; `None` for an empty series.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        (!self.sorted_values.is_empty()).then(|| quantile(&self.sorted_values, q))
    }
}

/// Nearest-rank quantile of an ascending, nonempty slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// `|ρ_ij|` for all `i < j`, and the number of pairs skipped for a degenerate diagonal.
pub fn abs_correlation_coefficients(c_eta: &ComplexMatrix, scale: f64) -> (Vec<f64>, usize) {
    let m = c_eta.rows();
    let floor = DEGENERATE_DIAGONAL_TOL * scale;
    let mut values = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    let mut skipped = 0;
    for i in 0..m {
        for j in (i + 1)..m {
            let (a, b) = (c_eta[(i, i)].re, c_eta[(j, j)].re);
            if a <= floor || b <= floor {
                skipped += 1;
            } else {
                values.push(c_eta[(i, j)].norm() / (a * b).sqrt());
            }
        }
    }
    (values, skipped)
}

fn quantizers(cfg: &ExperimentConfig, bits: u32, c_x: &ComplexMatrix) -> Result<ElementwiseDistortion> {
    let per_antenna = (0..cfg.m_rx)
        .map(|m| match cfg.quantizer_step_policy {
            StepPolicy::ThreeSigma => Nonlinearity::uniform_quantizer_for_power(bits, c_x[(m, m)].re, Domain::Complex),
            StepPolicy::MseOptimal => {
                let comp = Domain::Complex.component_variance(c_x[(m, m)].re);
                Nonlinearity::uniform_quantizer(bits, UniformQuantizer::mse_optimal_step(bits, comp)?, Domain::Complex)
            }
            StepPolicy::Fixed(step) => Nonlinearity::uniform_quantizer(bits, step, Domain::Complex),
        })
        .collect::<Result<Vec<_>>>()?;
    ElementwiseDistortion::new(per_antenna)
}

/// Per-realization `|ρ|` values and skip counts, one entry per `bits_list` item.
fn realization(cfg: &ExperimentConfig, r: usize) -> Result<Vec<(Vec<f64>, usize)>> {
    let base = RandomStream::new(cfg.seed, 0).child(r as u64);
    let h_entries = draw_complex_gaussian(&base.child(0), 1.0, cfg.m_rx * cfg.m_tx)?;
    let h = ComplexMatrix::from_row_major(cfg.m_rx, cfg.m_tx, h_entries)?;
    let c_x = h.matmul(&h.adjoint())?;
    let scale = c_x.trace().re / cfg.m_rx as f64;

    let bit_depths: Vec<u32> = cfg
        .bits_list
        .iter()
        .filter_map(|r| match r {
            Resolution::Bits(b) => Some(*b),
            Resolution::Unquantized => None,
        })
        .collect();
    let maps = bit_depths
        .iter()
        .map(|&b| quantizers(cfg, b, &c_x))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&dyn VectorMap> = maps.iter().map(|m| m as &dyn VectorMap).collect();
    let mut etas = if refs.is_empty() {
        Vec::new()
    } else {
        mimo::distortion_correlation_batch(&refs, &c_x, &base.child(1), cfg.samples_per_realization)?
    }
    .into_iter();

    Ok(cfg
        .bits_list
        .iter()
        .map(|res| {
            let c_eta = match res {
                Resolution::Bits(_) => etas.next().expect("one per bit depth"),
                // Without quantization the output is the input: B = I and η = 0 exactly.
                Resolution::Unquantized => ComplexMatrix::zeros(cfg.m_rx, cfg.m_rx),
            };
            abs_correlation_coefficients(&c_eta, scale)
        })
        .collect())
}

/// Runs every realization (in parallel, each on its own substream) and
/// collects one [`CdfSeries`] per entry of `bits_list`.
pub fn run_fig3(cfg: &ExperimentConfig) -> Result<Vec<CdfSeries>> {
    cfg.validate()?;
    let per_real = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| realization(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(cfg
        .bits_list
        .iter()
        .enumerate()
        .map(|(k, &bits)| {
            let mut values = Vec::new();
            let mut skipped = 0;
            for r in &per_real {
                values.extend_from_slice(&r[k].0);
                skipped += r[k].1;
            }
            CdfSeries::new(bits, values, skipped, cfg.samples_per_realization)
        })
        .collect())
}

/// Writes `bits,abs_rho,cdf` rows, one block per series, `cdf = rank/count`.
pub fn write_cdf_csv<W: Write>(series: &[CdfSeries], mut out: W) -> Result<()> {
    if series.iter().all(|s| s.sorted_values.is_empty()) {
        return Err(Error::EmptySeries);
    }
    writeln!(out, "bits,abs_rho,cdf")?;
    for s in series {
        let count = s.sorted_values.len() as f64;
        for (i, v) in s.sorted_values.iter().enumerate() {
            writeln!(out, "{},{:?},{:?}", s.bits, v, (i + 1) as f64 / count)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn emit_cdf_csv(series: &[CdfSeries], path: &Path) -> Result<()> {
    if series.iter().all(|s| s.sorted_values.is_empty()) {
        return Err(Error::EmptySeries);
    }
    write_cdf_csv(series, BufWriter::new(File::create(path)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesSummary {
    pub bits: Resolution,
    pub count: usize,
    pub skipped_pairs: usize,
    pub median: Option<f64>,
    pub p90: Option<f64>,
    pub max: Option<f64>,
    pub rho_std_error: f64,
}

/// JSON summary: the resolved config and per-resolution statistics.
#[derive(Debug, Clone, Serialize)]
pub struct Fig3Summary {
    pub config: ExperimentConfig,
    pub series: Vec<SeriesSummary>,
}

impl Fig3Summary {
    pub fn new(config: &ExperimentConfig, series: &[CdfSeries]) -> Self {
        Fig3Summary {
            config: config.clone(),
            series: series
                .iter()
                .map(|s| SeriesSummary {
                    bits: s.bits,
                    count: s.sorted_values.len(),
                    skipped_pairs: s.skipped_pairs,
                    median: s.summary.map(|x| x.median),
                    p90: s.summary.map(|x| x.p90),
                    max: s.summary.map(|x| x.max),
                    rho_std_error: s.rho_std_error,
                })
                .collect(),
        }
    }
}
