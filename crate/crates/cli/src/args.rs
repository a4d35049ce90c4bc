use std::path::PathBuf;

use bussgang::experiment::Resolution;
use bussgang::Complex64;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "bussgang",
    version,
    about = "Bussgang decomposition of memoryless non-linearities",
    after_help = "Exit codes: 0 ok, 2 usage, 3 parse, 4 no closed form, 5 no derivative, \
                  6 config, 7 validation, 8 i/o, 9 numerical.\n\
                  BUSSGANG_THREADS sets the worker count; results do not depend on it."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bussgang gain by closed form, correlation, or expected derivative.
    Gain(GainArgs),
    /// Scalar decomposition with SDR and orthogonality diagnostics.
    Decompose(DecomposeArgs),
    /// Achievable-rate lower bound treating distortion as Gaussian noise.
    Rate(RateArgs),
    /// Checks `C_zy = B·C_xy` for jointly Gaussian `(x, y)`.
    TheoremCheck(TheoremArgs),
    /// Compares the additive quantization noise model with the decomposition.
    Aqnm(AqnmArgs),
    /// Vector decomposition from a JSON config file.
    Mimo(MimoArgs),
    /// Distortion correlation experiment over ADC resolutions.
    Fig3(Fig3Args),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Monte Carlo sample count; scientific notation such as `1e6` is accepted.
    #[arg(long, value_parser = parse_count)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ScalarInput {
    /// Non-linearity spec, e.g. `third_order` or `uniform_quantizer(bits=3)`.
    #[arg(long = "nl")]
    pub nl: String,
    /// Input power `C_x`.
    #[arg(long = "cx", default_value_t = 1.0)]
    pub cx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GainRoute {
    Closed,
    Correlation,
    Derivative,
    All,
}

#[derive(Debug, Args)]
pub struct GainArgs {
    #[command(flatten)]
    pub input: ScalarInput,
    #[arg(long, value_enum, default_value_t = GainRoute::All)]
    pub method: GainRoute,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecomposeRoute {
    /// Exact when the catalog has closed forms, Monte Carlo otherwise.
    Auto,
    Exact,
    Mc,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub input: ScalarInput,
    #[arg(long, value_enum, default_value_t = DecomposeRoute::Auto)]
    pub method: DecomposeRoute,
    /// Offsets `δ` at which to probe `B_alt = B̂ + δ`, e.g. `-0.2,-0.1,0,0.1,0.2`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub probe: Vec<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub input: ScalarInput,
    /// Noise power, or a comma-separated list of them.
    #[arg(long = "sigma2", required = true, value_delimiter = ',')]
    pub sigma2: Vec<f64>,
    #[arg(long, value_enum, default_value_t = DecomposeRoute::Auto)]
    pub method: DecomposeRoute,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TheoremArgs {
    #[command(flatten)]
    pub input: ScalarInput,
    /// Power of `y`.
    #[arg(long = "cy", default_value_t = 1.0)]
    pub cy: f64,
    /// Correlation coefficients of `(x, y)`, e.g. `0,0.5,0.3+0.4j`.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,0.9", value_parser = parse_complex_arg, allow_hyphen_values = true)]
    pub rho: Vec<Complex64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct AqnmArgs {
    /// A quantizer satisfying the conditional-mean property, e.g. `lloyd_max(bits=2)`.
    #[arg(long = "nl")]
    pub nl: String,
    #[arg(long = "cx", default_value_t = 1.0)]
    pub cx: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct MimoArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `samples` from the config.
    #[arg(long, value_parser = parse_count)]
    pub samples: Option<usize>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct Fig3Args {
    /// Bit depths, e.g. `1,2,3` or `1-6`; `inf` for no quantization.
    #[arg(long, default_value = "1-6", value_parser = parse_bits)]
    pub bits: BitsList,
    #[arg(long, default_value_t = 200)]
    pub realizations: usize,
    /// Samples per realization.
    #[arg(long, default_value = "1e5", value_parser = parse_count)]
    pub samples: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long = "m-rx", default_value_t = 4)]
    pub m_rx: usize,
    #[arg(long = "m-tx", default_value_t = 4)]
    pub m_tx: usize,
    /// `mse_optimal`, `three_sigma`, or `fixed=<step>`.
    #[arg(long = "step-policy", default_value = "mse_optimal")]
    pub step_policy: String,
    /// Directory receiving `fig3_cdf.csv` and `fig3_summary.json`.
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct BitsList(pub Vec<Resolution>);

pub fn parse_count(s: &str) -> Result<usize, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("expected a count, got `{s}`"))?;
    if v >= 1.0 && v.fract() == 0.0 && v <= 1e15 {
        Ok(v as usize)
    } else {
        Err(format!("expected a positive integer count, got `{s}`"))
    }
}

fn parse_complex_arg(s: &str) -> Result<Complex64, String> {
    bussgang::nonlinearity::parse_complex(s).map_err(|e| e.to_string())
}

fn parse_bits(s: &str) -> Result<BitsList, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim) {
        match item.split_once('-') {
            Some((a, b)) => {
                let bad = || format!("invalid bit range `{item}`");
                let a: u32 = a.trim().parse().map_err(|_| bad())?;
                let b: u32 = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend((a..=b).map(Resolution::Bits));
            }
            None => out.push(item.parse::<Resolution>().map_err(|e| e.to_string())?),
        }
    }
    Ok(BitsList(out))
}
