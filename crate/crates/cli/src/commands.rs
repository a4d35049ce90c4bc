use std::fs;
use std::path::PathBuf;

use bussgang::experiment::{self, ExperimentConfig, Fig3Summary, SeriesSummary, StepPolicy};
use bussgang::mimo::{self, MimoDecomposition};
use bussgang::scalar::{
    self, AqnmReport, CrossCorrelationReport, GainEstimate, GainMethod, ScalarDecomposition, UniquenessProbe,
};
use bussgang::{Complex64, Error, Nonlinearity, NonlinearitySpec, RandomStream};
use serde::Serialize;

use crate::args::{
    AqnmArgs, DecomposeArgs, DecomposeRoute, Fig3Args, GainArgs, GainRoute, MimoArgs, RateArgs, ScalarInput,
    TheoremArgs,
};
use crate::mimo_config::{self, ResolvedConfig};
use crate::CliError;

pub const DEFAULT_SCALAR_SAMPLES: usize = 1_000_000;

// Substream tags, one per estimator, so routes never share draws.
const TAG_CORRELATION: u64 = 1;
const TAG_DERIVATIVE: u64 = 2;
const TAG_DECOMPOSE: u64 = 3;
const TAG_PROBE: u64 = 4;
const TAG_THEOREM: u64 = 5;
const TAG_AQNM: u64 = 6;

/// Every JSON document the CLI prints.
#[derive(Serialize)]
pub struct Output<C: Serialize, R: Serialize> {
    pub command: &'static str,
    pub config: C,
    pub result: R,
}

#[derive(Serialize)]
pub struct ScalarConfig {
    pub nl: String,
    /// Canonical spec with every parameter resolved for `cx`.
    pub nl_resolved: String,
    pub cx: f64,
    pub samples: usize,
    pub seed: u64,
}

fn scalar_setup(input: &ScalarInput, samples: Option<usize>, seed: u64) -> Result<(Nonlinearity, ScalarConfig), CliError> {
    let u = input.nl.parse::<NonlinearitySpec>()?.build(input.cx)?;
    let cfg = ScalarConfig {
        nl: input.nl.clone(),
        nl_resolved: u.spec_string(),
        cx: input.cx,
        samples: samples.unwrap_or(DEFAULT_SCALAR_SAMPLES),
        seed,
    };
    Ok((u, cfg))
}

fn base_stream(seed: u64) -> RandomStream {
    RandomStream::new(seed, 0)
}

fn route_name(r: GainRoute) -> &'static str {
    match r {
        GainRoute::Closed => "closed",
        GainRoute::Correlation => "correlation",
        GainRoute::Derivative => "derivative",
        GainRoute::All => "all",
    }
}

fn decompose_route_name(r: DecomposeRoute) -> &'static str {
    match r {
        DecomposeRoute::Auto => "auto",
        DecomposeRoute::Exact => "exact",
        DecomposeRoute::Mc => "mc",
    }
}

#[derive(Serialize)]
pub struct GainConfig {
    #[serde(flatten)]
    pub scalar: ScalarConfig,
    pub method: &'static str,
}

#[derive(Serialize)]
pub struct Unavailable {
    pub method: GainMethod,
    pub reason: String,
}

/// Pairwise difference between two routes with its combined standard error.
#[derive(Serialize)]
pub struct Agreement {
    pub a: GainMethod,
    pub b: GainMethod,
    pub delta: f64,
    pub std_error: f64,
    /// `delta / std_error`; zero when both routes are exact.
    pub z: f64,
}

#[derive(Serialize)]
pub struct GainResult {
    pub estimates: Vec<GainEstimate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unavailable: Vec<Unavailable>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub agreement: Vec<Agreement>,
}

pub fn gain(a: &GainArgs) -> Result<Output<GainConfig, GainResult>, CliError> {
    let (u, scalar) = scalar_setup(&a.input, a.common.samples, a.common.seed)?;
    let (cx, n, base) = (scalar.cx, scalar.samples, base_stream(scalar.seed));
    let run = |m: GainMethod| match m {
        GainMethod::ClosedForm => scalar::gain_closed_form(&u, cx),
        GainMethod::CorrelationMc => scalar::gain_correlation(&u, cx, &base.child(TAG_CORRELATION), n),
        GainMethod::DerivativeMc => scalar::gain_derivative(&u, cx, &base.child(TAG_DERIVATIVE), n),
    };
    let methods: &[GainMethod] = match a.method {
        GainRoute::Closed => &[GainMethod::ClosedForm],
        GainRoute::Correlation => &[GainMethod::CorrelationMc],
        GainRoute::Derivative => &[GainMethod::DerivativeMc],
        GainRoute::All => &[GainMethod::ClosedForm, GainMethod::CorrelationMc, GainMethod::DerivativeMc],
    };
    let mut result = GainResult {
        estimates: Vec::new(),
        unavailable: Vec::new(),
        agreement: Vec::new(),
    };
    for &m in methods {
        match run(m) {
            Ok(g) => result.estimates.push(g),
            Err(e @ (Error::NoClosedForm(_) | Error::NoDerivative(_))) if a.method == GainRoute::All => {
                result.unavailable.push(Unavailable {
                    method: m,
                    reason: e.to_string(),
                })
            }
            Err(e) => return Err(e.into()),
        }
    }
    for (i, x) in result.estimates.iter().enumerate() {
        for y in &result.estimates[i + 1..] {
            let delta = (x.value - y.value).norm();
            let std_error = x.std_error.hypot(y.std_error);
            result.agreement.push(Agreement {
                a: x.method,
                b: y.method,
                delta,
                std_error,
                z: if std_error > 0.0 { delta / std_error } else { 0.0 },
            });
        }
    }
    Ok(Output {
        command: "gain",
        config: GainConfig {
            scalar,
            method: route_name(a.method),
        },
        result,
    })
}

fn run_decomposition(
    u: &Nonlinearity,
    cfg: &ScalarConfig,
    route: DecomposeRoute,
) -> Result<ScalarDecomposition, CliError> {
    let mc = || scalar::decompose(u, cfg.cx, &base_stream(cfg.seed).child(TAG_DECOMPOSE), cfg.samples);
    let d = match route {
        DecomposeRoute::Exact => scalar::decompose_exact(u, cfg.cx)?,
        DecomposeRoute::Mc => mc()?,
        DecomposeRoute::Auto => match scalar::decompose_exact(u, cfg.cx) {
            Ok(d) => d,
            Err(Error::NoClosedForm(_)) => mc()?,
            Err(e) => return Err(e.into()),
        },
    };
    Ok(d)
}

#[derive(Serialize)]
pub struct DecomposeConfig {
    #[serde(flatten)]
    pub scalar: ScalarConfig,
    pub method: &'static str,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub probe: Vec<f64>,
}

#[derive(Serialize)]
pub struct ProbePoint {
    pub offset: f64,
    pub b_alt: Complex64,
    #[serde(flatten)]
    pub probe: UniquenessProbe,
    /// `|offset|·C_x`: the residual expected at this point.
    pub expected_residual: f64,
    /// Standard error of `residual − expected_residual`, including the centre's uncertainty.
    pub combined_std_error: f64,
}

#[derive(Serialize)]
pub struct DecomposeResult {
    #[serde(flatten)]
    pub decomposition: ScalarDecomposition,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub probe: Vec<ProbePoint>,
}

pub fn decompose(a: &DecomposeArgs) -> Result<Output<DecomposeConfig, DecomposeResult>, CliError> {
    let (u, scalar) = scalar_setup(&a.input, a.common.samples, a.common.seed)?;
    let d = run_decomposition(&u, &scalar, a.method)?;
    let probe_stream = base_stream(scalar.seed).child(TAG_PROBE);
    let probe = a
        .probe
        .iter()
        .map(|&offset| {
            let b_alt = d.b + offset;
            let probe = scalar::uniqueness_probe(&u, scalar.cx, b_alt, &probe_stream, scalar.samples)?;
            Ok(ProbePoint {
                offset,
                b_alt,
                expected_residual: offset.abs() * scalar.cx,
                combined_std_error: probe.std_error.hypot(d.gain_std_error * scalar.cx),
                probe,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(Output {
        command: "decompose",
        config: DecomposeConfig {
            scalar,
            method: decompose_route_name(a.method),
            probe: a.probe.clone(),
        },
        result: DecomposeResult { decomposition: d, probe },
    })
}

#[derive(Serialize)]
pub struct RateConfig {
    #[serde(flatten)]
    pub scalar: ScalarConfig,
    pub method: &'static str,
    pub sigma2: Vec<f64>,
}

#[derive(Serialize)]
pub struct RatePoint {
    pub sigma2: f64,
    /// Bits per channel use.
    pub rate: f64,
}

#[derive(Serialize)]
pub struct RateResult {
    pub decomposition: ScalarDecomposition,
    pub rates: Vec<RatePoint>,
}

pub fn rate(a: &RateArgs) -> Result<Output<RateConfig, RateResult>, CliError> {
    let (u, scalar) = scalar_setup(&a.input, a.common.samples, a.common.seed)?;
    if let Some(&bad) = a.sigma2.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidNoisePower(bad).into());
    }
    let d = run_decomposition(&u, &scalar, a.method)?;
    let rates = a
        .sigma2
        .iter()
        .map(|&sigma2| Ok(RatePoint { sigma2, rate: scalar::rate_lower_bound(&d, sigma2)? }))
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(Output {
        command: "rate",
        config: RateConfig {
            scalar,
            method: decompose_route_name(a.method),
            sigma2: a.sigma2.clone(),
        },
        result: RateResult { decomposition: d, rates },
    })
}

#[derive(Serialize)]
pub struct TheoremConfig {
    #[serde(flatten)]
    pub scalar: ScalarConfig,
    pub cy: f64,
    pub rho: Vec<Complex64>,
}

#[derive(Serialize)]
pub struct TheoremResult {
    pub reports: Vec<CrossCorrelationReport>,
    pub all_within_tolerance: bool,
}

pub fn theorem_check(a: &TheoremArgs) -> Result<Output<TheoremConfig, TheoremResult>, CliError> {
    let (u, scalar) = scalar_setup(&a.input, a.common.samples, a.common.seed)?;
    let stream = base_stream(scalar.seed).child(TAG_THEOREM);
    let reports = a
        .rho
        .iter()
        .enumerate()
        .map(|(k, &rho)| {
            scalar::verify_cross_correlation_theorem(&u, scalar.cx, a.cy, rho, &stream.child(k as u64), scalar.samples)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(Output {
        command: "theorem-check",
        config: TheoremConfig {
            scalar,
            cy: a.cy,
            rho: a.rho.clone(),
        },
        result: TheoremResult {
            all_within_tolerance: reports.iter().all(|r| r.within_tolerance),
            reports,
        },
    })
}

#[derive(Serialize)]
pub struct AqnmResult {
    pub monte_carlo: AqnmReport,
    /// Closed-form decomposition of the same quantizer, when available.
    pub exact: Option<ScalarDecomposition>,
}

pub fn aqnm(a: &AqnmArgs) -> Result<Output<ScalarConfig, AqnmResult>, CliError> {
    let input = ScalarInput {
        nl: a.nl.clone(),
        cx: a.cx,
    };
    let (q, cfg) = scalar_setup(&input, a.common.samples, a.common.seed)?;
    let monte_carlo = scalar::aqnm_check(&q, cfg.cx, &base_stream(cfg.seed).child(TAG_AQNM), cfg.samples)?;
    let exact = match scalar::decompose_exact(&q, cfg.cx) {
        Ok(d) => Some(d),
        Err(Error::NoClosedForm(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(Output {
        command: "aqnm",
        config: cfg,
        result: AqnmResult { monte_carlo, exact },
    })
}

pub fn mimo(a: &MimoArgs) -> Result<Output<ResolvedConfig, MimoDecomposition>, CliError> {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", a.config.display())))?;
    let prepared = mimo_config::parse(&text)?.prepare(&text, a.samples, a.seed)?;
    let cfg = prepared.resolved;
    let result = mimo::decompose_with_source(
        prepared.map.as_ref(),
        &cfg.source,
        cfg.estimate,
        &RandomStream::new(cfg.seed, 0),
        cfg.samples,
    )?;
    Ok(Output {
        command: "mimo",
        config: cfg,
        result,
    })
}

fn parse_step_policy(s: &str) -> Result<StepPolicy, CliError> {
    match s.trim() {
        "three_sigma" => Ok(StepPolicy::ThreeSigma),
        "mse_optimal" => Ok(StepPolicy::MseOptimal),
        other => {
            let step = other
                .strip_prefix("fixed=")
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "step policy must be `mse_optimal`, `three_sigma` or `fixed=<step>`, got `{other}`"
                    ))
                })?;
            Ok(StepPolicy::Fixed(step))
        }
    }
}

pub const FIG3_CSV: &str = "fig3_cdf.csv";
pub const FIG3_SUMMARY: &str = "fig3_summary.json";

#[derive(Serialize)]
pub struct Fig3Result {
    pub series: Vec<SeriesSummary>,
    /// `None` when no correlation coefficient was produced.
    pub csv: Option<PathBuf>,
    pub summary_file: PathBuf,
}

pub fn fig3(a: &Fig3Args) -> Result<Output<ExperimentConfig, Fig3Result>, CliError> {
    let cfg = ExperimentConfig {
        m_rx: a.m_rx,
        m_tx: a.m_tx,
        bits_list: a.bits.0.clone(),
        realizations: a.realizations,
        samples_per_realization: a.samples,
        seed: a.seed,
        quantizer_step_policy: parse_step_policy(&a.step_policy)?,
    };
    cfg.validate()?;
    let series = experiment::run_fig3(&cfg)?;
    for s in series.iter().filter(|s| s.skipped_pairs > 0) {
        eprintln!(
            "warning: b={}: {} pair(s) skipped for a degenerate distortion power",
            s.bits, s.skipped_pairs
        );
    }
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io(format!("cannot create {}: {e}", a.out_dir.display())))?;
    let csv_path = a.out_dir.join(FIG3_CSV);
    let csv = match experiment::emit_cdf_csv(&series, &csv_path) {
        Ok(()) => Some(csv_path),
        Err(Error::EmptySeries) => {
            eprintln!("warning: no correlation coefficients were produced; {FIG3_CSV} not written");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let summary = Fig3Summary::new(&cfg, &series);
    let summary_file = a.out_dir.join(FIG3_SUMMARY);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&summary_file, json + "\n").map_err(|e| Error::Io(format!("cannot write {}: {e}", summary_file.display())))?;
    Ok(Output {
        command: "fig3",
        config: cfg,
        result: Fig3Result {
            series: summary.series,
            csv,
            summary_file,
        },
    })
}
