//! Deterministic, seedable signal generation.
//!
//! Every draw is addressed by `(seed, stream_id, block)`: a ChaCha8 keystream
//! keyed by the seed, selected by the stream id, and positioned at a fixed
//! offset per block of [`BLOCK`] samples. Blocks never depend on each other,
//! so Monte Carlo loops can fan out over blocks and still produce the same
//! sample sequence regardless of worker count.
//!
//! Complex Gaussian convention: `CN(0, C)` has independent real and imaginary
//! parts, each `N(0, C/2)`, and zero pseudo-variance.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_factor_auto, ComplexMatrix};
use crate::mc;

/// Samples per independently addressable block.
pub const BLOCK: usize = 1 << 14;

/// Keystream words reserved for each block (2^40 32-bit words).
const BLOCK_WORD_SHIFT: u32 = 40;

/// Address of an independent random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RandomStream { seed, stream_id }
    }

    /// A substream whose id is derived from this one and `tag`.
    ///
    /// Children with different tags (or of different parents) get unrelated ids.
    pub fn child(&self, tag: u64) -> Self {
        let id = splitmix64(splitmix64(self.stream_id) ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        RandomStream {
            seed: self.seed,
            stream_id: id,
        }
    }

    /// Generator positioned at the start of `block`.
    pub fn block_rng(&self, block: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng.set_word_pos(u128::from(block) << BLOCK_WORD_SHIFT);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub(crate) fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// One `CN(0, 1)` draw.
#[inline]
pub(crate) fn std_complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re = std_normal(rng);
    let im = std_normal(rng);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Description of an input signal distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSource {
    /// Real `N(0, variance)`, carried as complex numbers with zero imaginary part.
    RealGaussian { variance: f64 },
    /// Scalar `CN(0, variance)`.
    ComplexGaussian { variance: f64 },
    /// Vector `CN(0, C_x)`.
    ComplexGaussianVector { covariance: ComplexMatrix },
    /// i.i.d. QPSK symbols of the given per-entry power, `dim` entries per draw.
    Qpsk { power: f64, dim: usize },
    /// `x = H·s` for a fixed channel `H` and symbols `s` from another source.
    ChannelProduct {
        channel: ComplexMatrix,
        symbols: Box<SignalSource>,
    },
}

impl SignalSource {
    pub fn dim(&self) -> usize {
        match self {
            SignalSource::RealGaussian { .. } | SignalSource::ComplexGaussian { .. } => 1,
            SignalSource::ComplexGaussianVector { covariance } => covariance.rows(),
            SignalSource::Qpsk { dim, .. } => *dim,
            SignalSource::ChannelProduct { channel, .. } => channel.rows(),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        match self {
            SignalSource::Qpsk { .. } => false,
            SignalSource::ChannelProduct { symbols, .. } => symbols.is_gaussian(),
            _ => true,
        }
    }

    /// Population correlation matrix `E{x xᴴ}`.
    pub fn correlation(&self) -> Result<ComplexMatrix> {
        match self {
            SignalSource::RealGaussian { variance } | SignalSource::ComplexGaussian { variance } => {
                Ok(ComplexMatrix::from_real_diag(&[*variance]))
            }
            SignalSource::ComplexGaussianVector { covariance } => Ok(covariance.clone()),
            SignalSource::Qpsk { power, dim } => Ok(ComplexMatrix::from_real_diag(&vec![*power; *dim])),
            SignalSource::ChannelProduct { channel, symbols } => {
                let cs = symbols.correlation()?;
                channel.matmul(&cs)?.matmul(&channel.adjoint())
            }
        }
    }

    /// Validates parameters and precomputes factors.
    pub fn prepare(&self) -> Result<PreparedSource> {
        match self {
            SignalSource::RealGaussian { variance } => {
                check_variance(*variance)?;
                Ok(PreparedSource::Real { sd: variance.sqrt() })
            }
            SignalSource::ComplexGaussian { variance } => {
                check_variance(*variance)?;
                SignalSource::ComplexGaussianVector {
                    covariance: ComplexMatrix::from_real_diag(&[*variance]),
                }
                .prepare()
            }
            SignalSource::ComplexGaussianVector { covariance } => {
                let (factor, _) = hermitian_factor_auto(covariance)?;
                Ok(PreparedSource::Gaussian { factor })
            }
            SignalSource::Qpsk { power, dim } => {
                check_power(*power)?;
                if *dim == 0 {
                    return Err(Error::InvalidParameter("QPSK dimension must be >= 1".into()));
                }
                Ok(PreparedSource::Qpsk {
                    amplitude: (power / 2.0).sqrt(),
                    dim: *dim,
                })
            }
            SignalSource::ChannelProduct { channel, symbols } => {
                let inner = symbols.prepare()?;
                if channel.cols() != inner.dim() {
                    return Err(Error::DimensionMismatch(format!(
                        "channel has {} columns but symbols have dimension {}",
                        channel.cols(),
                        inner.dim()
                    )));
                }
                Ok(PreparedSource::Channel {
                    channel: channel.clone(),
                    symbols: Box::new(inner),
                })
            }
        }
    }
}

/// A validated source ready to emit blocks of samples.
#[derive(Debug, Clone)]
pub enum PreparedSource {
    Real { sd: f64 },
    Gaussian { factor: ComplexMatrix },
    Qpsk { amplitude: f64, dim: usize },
    Channel {
        channel: ComplexMatrix,
        symbols: Box<PreparedSource>,
    },
}

impl PreparedSource {
    pub fn dim(&self) -> usize {
        match self {
            PreparedSource::Real { .. } => 1,
            PreparedSource::Gaussian { factor } => factor.rows(),
            PreparedSource::Qpsk { dim, .. } => *dim,
            PreparedSource::Channel { channel, .. } => channel.rows(),
        }
    }

    /// Writes `len` consecutive draws of block `block` into `out` (flattened, `len·dim`).
    pub fn draw_block(&self, stream: &RandomStream, block: u64, len: usize, out: &mut Vec<Complex64>) {
        let mut rng = stream.block_rng(block);
        out.clear();
        out.resize(len * self.dim(), Complex64::new(0.0, 0.0));
        let mut scratch = Vec::new();
        for x in out.chunks_exact_mut(self.dim()) {
            self.draw_one(&mut rng, &mut scratch, x);
        }
    }

    fn draw_one(&self, rng: &mut ChaCha8Rng, scratch: &mut Vec<Complex64>, out: &mut [Complex64]) {
        match self {
            PreparedSource::Real { sd } => out[0] = Complex64::new(sd * std_normal(rng), 0.0),
            PreparedSource::Gaussian { factor } => {
                scratch.clear();
                scratch.extend((0..out.len()).map(|_| std_complex_normal(rng)));
                factor.mul_vec_into(scratch, out);
            }
            PreparedSource::Qpsk { amplitude, .. } => {
                for x in out.iter_mut() {
                    let bits: u32 = rng.random();
                    let re = if bits & 1 == 0 { *amplitude } else { -amplitude };
                    let im = if bits & 2 == 0 { *amplitude } else { -amplitude };
                    *x = Complex64::new(re, im);
                }
            }
            PreparedSource::Channel { channel, symbols } => {
                let mut s = std::mem::take(scratch);
                s.resize(symbols.dim(), Complex64::new(0.0, 0.0));
                let mut inner_scratch = Vec::new();
                symbols.draw_one(rng, &mut inner_scratch, &mut s);
                channel.mul_vec_into(&s, out);
                *scratch = s;
            }
        }
    }

    /// All `n` draws as a flat vector (`n·dim` entries).
    pub fn draw_flat(&self, stream: &RandomStream, n: usize) -> Vec<Complex64> {
        let blocks = mc::map_blocks(n, |block, len| {
            let mut buf = Vec::with_capacity(len * self.dim());
            self.draw_block(stream, block, len, &mut buf);
            buf
        });
        blocks.concat()
    }
}

fn check_variance(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidVariance(v))
    }
}

fn check_power(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidPower(p))
    }
}

/// `n` i.i.d. `N(0, variance)` samples.
pub fn draw_real_gaussian(stream: &RandomStream, variance: f64, n: usize) -> Result<Vec<f64>> {
    let src = SignalSource::RealGaussian { variance }.prepare()?;
    Ok(src.draw_flat(stream, n).into_iter().map(|z| z.re).collect())
}

/// `n` i.i.d. `CN(0, variance)` samples.
pub fn draw_complex_gaussian(stream: &RandomStream, variance: f64, n: usize) -> Result<Vec<Complex64>> {
    let src = SignalSource::ComplexGaussian { variance }.prepare()?;
    Ok(src.draw_flat(stream, n))
}

/// `n` vectors `L·w` with `L` the Hermitian factor of `covariance` and `w ~ CN(0, I)`.
pub fn draw_complex_gaussian_vector(
    stream: &RandomStream,
    covariance: &ComplexMatrix,
    n: usize,
) -> Result<Vec<Vec<Complex64>>> {
    let src = SignalSource::ComplexGaussianVector {
        covariance: covariance.clone(),
    }
    .prepare()?;
    let dim = src.dim();
    Ok(src.draw_flat(stream, n).chunks_exact(dim).map(<[_]>::to_vec).collect())
}

/// `n` i.i.d. QPSK symbols from `{±√(p/2) ± j√(p/2)}`.
pub fn draw_qpsk(stream: &RandomStream, power: f64, n: usize) -> Result<Vec<Complex64>> {
    let src = SignalSource::Qpsk { power, dim: 1 }.prepare()?;
    Ok(src.draw_flat(stream, n))
}

/// Jointly circularly symmetric Gaussian pair with `E{x y*} = rho·√(C_x C_y)`.
///
/// `y = conj(rho)·√(C_y/C_x)·x + √(C_y(1 − |rho|²))·w`, which is the split of
/// `y` into its MMSE estimate from `x` and an independent error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointPair {
    c_x: f64,
    c_y: f64,
    rho: Complex64,
    real: bool,
}

impl JointPair {
    pub fn new(c_x: f64, c_y: f64, rho: Complex64) -> Result<Self> {
        check_variance(c_x)?;
        check_variance(c_y)?;
        let mag = rho.norm();
        if mag.is_nan() || mag > 1.0 + 1e-12 {
            return Err(Error::InvalidCorrelation(mag));
        }
        Ok(JointPair {
            c_x,
            c_y,
            rho,
            real: false,
        })
    }

    /// Real-valued pair: `x ~ N(0, C_x)`, `y ~ N(0, C_y)`, `E{xy} = rho·√(C_x C_y)`.
    /// Samples carry a zero imaginary part.
    pub fn new_real(c_x: f64, c_y: f64, rho: Complex64) -> Result<Self> {
        if rho.im != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "a real-valued pair needs a real correlation coefficient, got {rho}"
            )));
        }
        let mut pair = Self::new(c_x, c_y, rho)?;
        pair.real = true;
        Ok(pair)
    }

    pub fn cross_correlation(&self) -> Complex64 {
        self.rho * (self.c_x * self.c_y).sqrt()
    }

    pub fn draw_block(&self, stream: &RandomStream, block: u64, len: usize, out: &mut Vec<(Complex64, Complex64)>) {
        let mut rng = stream.block_rng(block);
        let sx = self.c_x.sqrt();
        let gain = self.rho.conj() * (self.c_y / self.c_x).sqrt();
        let resid = (self.c_y * (1.0 - self.rho.norm_sqr()).max(0.0)).sqrt();
        out.clear();
        if self.real {
            out.extend((0..len).map(|_| {
                let x = std_normal(&mut rng) * sx;
                let w = std_normal(&mut rng);
                (Complex64::new(x, 0.0), Complex64::new(gain.re * x + w * resid, 0.0))
            }));
        } else {
            out.extend((0..len).map(|_| {
                let x = std_complex_normal(&mut rng) * sx;
                let w = std_complex_normal(&mut rng);
                (x, gain * x + w * resid)
            }));
        }
    }
}

/// `n` draws of a jointly Gaussian pair; see [`JointPair`].
pub fn draw_jointly_gaussian_pair(
    stream: &RandomStream,
    c_x: f64,
    c_y: f64,
    rho: Complex64,
    n: usize,
) -> Result<Vec<(Complex64, Complex64)>> {
    let pair = JointPair::new(c_x, c_y, rho)?;
    let blocks = mc::map_blocks(n, |block, len| {
        let mut buf = Vec::with_capacity(len);
        pair.draw_block(stream, block, len, &mut buf);
        buf
    });
    Ok(blocks.concat())
}
