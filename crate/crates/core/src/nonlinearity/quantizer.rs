//! Per-component scalar quantizers: saturating mid-rise uniform, and
//! Lloyd–Max (conditional-mean levels) for a Gaussian component.

use std::f64::consts::{PI, SQRT_2};

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub const MAX_BITS: u32 = 12;
pub const DEFAULT_LLOYD_MAX_ITER: usize = 1000;
pub const DEFAULT_LLOYD_TOL: f64 = 1e-12;

fn check_bits(bits: u32) -> Result<()> {
    if (1..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "bit depth must be in 1..={MAX_BITS}, got {bits}"
        )))
    }
}

/// Standard normal density.
#[inline]
fn phi(t: f64) -> f64 {
    if t.is_infinite() {
        0.0
    } else {
        (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
    }
}

/// `P(a < w < b)` for `w ~ N(0, 1)`, accurate in both tails.
pub(crate) fn std_normal_mass(a: f64, b: f64) -> f64 {
    let upper = |t: f64| 0.5 * erfc(t / SQRT_2); // P(w > t)
    if a >= 0.0 {
        upper(a) - upper(b)
    } else if b <= 0.0 {
        upper(-b) - upper(-a)
    } else {
        1.0 - upper(-a) - upper(b)
    }
}

/// `E{w · 1[a < w < b]}` for `w ~ N(0, 1)`.
#[inline]
pub(crate) fn std_normal_partial_mean(a: f64, b: f64) -> f64 {
    phi(a) - phi(b)
}

/// Mid-rise uniform quantizer with `2^bits` levels, saturating at `±2^(bits−1)·step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformQuantizer {
    bits: u32,
    step: f64,
}

impl UniformQuantizer {
    pub fn new(bits: u32, step: f64) -> Result<Self> {
        check_bits(bits)?;
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!("quantizer step must be positive, got {step}")));
        }
        Ok(UniformQuantizer { bits, step })
    }

    /// Step covering ±3 standard deviations of a component with the given variance.
    pub fn three_sigma_step(bits: u32, component_variance: f64) -> f64 {
        6.0 * component_variance.sqrt() / f64::from(1u32 << bits)
    }

    /// Step minimizing the mean squared error for a Gaussian component with
    /// the given variance (golden-section search on the unit-variance MSE).
    pub fn mse_optimal_step(bits: u32, component_variance: f64) -> Result<f64> {
        check_bits(bits)?;
        let phi_inv = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (1e-6, 4.0);
        let mse = |d: f64| uniform_mse_unit(bits, d);
        let mut c = b - phi_inv * (b - a);
        let mut d = a + phi_inv * (b - a);
        let (mut fc, mut fd) = (mse(c), mse(d));
        while b - a > 1e-12 * b {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi_inv * (b - a);
                fc = mse(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi_inv * (b - a);
                fd = mse(d);
            }
        }
        Ok(0.5 * (a + b) * component_variance.sqrt())
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    #[inline]
    pub fn quantize(&self, v: f64) -> f64 {
        let half = 1i64 << (self.bits - 1);
        // Cast-based floor: `f64::floor` is a libm call on baseline x86-64.
        // The cast saturates, so huge inputs still land in the outer cells.
        let y = v / self.step;
        let t = y as i64;
        let idx = if (t as f64) > y { t - 1 } else { t };
        self.step * (idx.clamp(-half, half - 1) as f64 + 0.5)
    }

    /// Output levels, ascending.
    pub fn levels(&self) -> Vec<f64> {
        let half = 1i64 << (self.bits - 1);
        (-half..half).map(|k| self.step * (k as f64 + 0.5)).collect()
    }

    /// Interior decision thresholds, ascending.
    pub fn thresholds(&self) -> Vec<f64> {
        let half = 1i64 << (self.bits - 1);
        (-half + 1..half).map(|k| self.step * k as f64).collect()
    }
}

/// `E{(w − Q(w))²}` for `w ~ N(0, 1)` and the mid-rise quantizer with `2^bits` levels and `step`.
pub fn uniform_mse_unit(bits: u32, step: f64) -> f64 {
    let half = 1usize << (bits - 1);
    let mut total = 0.0;
    for k in 0..half {
        let a = k as f64 * step;
        let b = if k + 1 == half { f64::INFINITY } else { (k + 1) as f64 * step };
        let level = (k as f64 + 0.5) * step;
        let p = std_normal_mass(a, b);
        let bphi = if b.is_finite() { b * phi(b) } else { 0.0 };
        let second = p + a * phi(a) - bphi;
        total += second - 2.0 * level * std_normal_partial_mean(a, b) + level * level * p;
    }
    2.0 * total
}

/// Quantizer whose levels are the conditional means of `N(0, σ²)` over its cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LloydMaxQuantizer {
    bits: u32,
    component_variance: f64,
    thresholds: Vec<f64>,
    levels: Vec<f64>,
    iterations: usize,
}

impl LloydMaxQuantizer {
    /// Solves the Lloyd fixed point (thresholds at midpoints of adjacent
    /// levels, levels at cell centroids) on the positive half-line, where the
    /// design is symmetric. Newton steps on the thresholds are used because
    /// the plain alternation slows down roughly fourfold per extra bit; each
    /// iterate is one Newton step, and iteration stops once no level moves by
    /// more than `tol·σ`.
    ///
    /// The returned levels are always exact conditional means of the final
    /// cells, so `E{w | Q(w)} = Q(w)` holds even if the thresholds are not
    /// fully converged.
    pub fn design(bits: u32, component_variance: f64, max_iter: usize, tol: f64) -> Result<Self> {
        check_bits(bits)?;
        if !(component_variance > 0.0 && component_variance.is_finite()) {
            return Err(Error::InvalidVariance(component_variance));
        }
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
        }
        if max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        let sigma = component_variance.sqrt();
        let half = 1usize << (bits - 1);

        // Cells on the unit-variance half line: [u_k, u_{k+1}), u_0 = 0, u_half = ∞.
        // Start from the asymptotically optimal companding point density.
        let compander = Normal::new(0.0, 3f64.sqrt()).expect("valid normal");
        let mut bounds: Vec<f64> = (0..=half)
            .map(|k| match k {
                0 => 0.0,
                k if k == half => f64::INFINITY,
                k => compander.inverse_cdf(0.5 + 0.5 * k as f64 / half as f64),
            })
            .collect();
        let mut levels = cell_means(&bounds);

        let mut iterations = 0;
        loop {
            if iterations == max_iter {
                return Err(Error::NoConvergence("Lloyd-Max design"));
            }
            iterations += 1;
            bounds = newton_step(&bounds, &levels).unwrap_or_else(|| lloyd_step(&bounds, &levels));
            let next = cell_means(&bounds);
            let moved = next
                .iter()
                .zip(&levels)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            levels = next;
            if moved < tol {
                break;
            }
        }

        let thresholds: Vec<f64> = bounds[1..half]
            .iter()
            .rev()
            .map(|u| -u * sigma)
            .chain(std::iter::once(0.0))
            .chain(bounds[1..half].iter().map(|u| u * sigma))
            .collect();
        let full_levels: Vec<f64> = levels
            .iter()
            .rev()
            .map(|v| -v * sigma)
            .chain(levels.iter().map(|v| v * sigma))
            .collect();

        Ok(LloydMaxQuantizer {
            bits,
            component_variance,
            thresholds,
            levels: full_levels,
            iterations,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Component variance the levels were designed for.
    pub fn component_variance(&self) -> f64 {
        self.component_variance
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Interior decision thresholds, ascending (`2^bits − 1` of them).
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    #[inline]
    pub fn quantize(&self, v: f64) -> f64 {
        self.levels[self.thresholds.partition_point(|&t| t <= v)]
    }

    /// Cell probabilities and partial means `E{w·1[cell]}` for `w ~ N(0, σ²)`.
    fn cell_moments(&self, component_variance: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let sigma = component_variance.sqrt();
        let n = self.levels.len();
        (0..n).map(move |i| {
            let a = if i == 0 { f64::NEG_INFINITY } else { self.thresholds[i - 1] / sigma };
            let b = if i + 1 == n { f64::INFINITY } else { self.thresholds[i] / sigma };
            (
                self.levels[i],
                std_normal_mass(a, b),
                sigma * std_normal_partial_mean(a, b),
            )
        })
    }

    /// `E{Q(w)·w}` for `w ~ N(0, σ²)`.
    pub fn correlation_with_input(&self, component_variance: f64) -> f64 {
        self.cell_moments(component_variance).map(|(v, _, m)| v * m).sum()
    }

    /// `E{Q(w)²}` for `w ~ N(0, σ²)`.
    pub fn output_power(&self, component_variance: f64) -> f64 {
        self.cell_moments(component_variance).map(|(v, p, _)| v * v * p).sum()
    }
}

/// Conditional means of `N(0, 1)` over consecutive half-line cells.
/// Plain Lloyd update: thresholds at the midpoints of adjacent levels.
fn lloyd_step(bounds: &[f64], levels: &[f64]) -> Vec<f64> {
    let mut next = bounds.to_vec();
    for k in 1..bounds.len() - 1 {
        next[k] = 0.5 * (levels[k - 1] + levels[k]);
    }
    next
}

/// One damped Newton step on `F_k(u) = u_k − (m_{k−1}(u) + m_k(u))/2` for the
/// interior thresholds. `None` if no step keeps the thresholds ordered and
/// reduces the residual.
fn newton_step(bounds: &[f64], levels: &[f64]) -> Option<Vec<f64>> {
    let n = bounds.len().checked_sub(2).filter(|&n| n > 0)?;
    let residual = |u: &[f64], m: &[f64]| -> Vec<f64> {
        (1..=n).map(|k| u[k] - 0.5 * (m[k - 1] + m[k])).collect()
    };
    let norm = |f: &[f64]| f.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let f = residual(bounds, levels);

    // Centroid sensitivities: ∂m_k/∂u_k = α_k, ∂m_k/∂u_{k+1} = β_k.
    let cells = levels.len();
    let mut alpha = vec![0.0; cells];
    let mut beta = vec![0.0; cells];
    for k in 0..cells {
        let (a, b) = (bounds[k], bounds[k + 1]);
        let p = std_normal_mass(a, b);
        alpha[k] = phi(a) * (levels[k] - a) / p;
        beta[k] = if b.is_finite() { phi(b) * (b - levels[k]) / p } else { 0.0 };
    }
    // Tridiagonal Jacobian rows for unknowns u_1..u_n (index i = k − 1).
    let lower: Vec<f64> = (1..=n).map(|k| -0.5 * alpha[k - 1]).collect();
    let diag: Vec<f64> = (1..=n).map(|k| 1.0 - 0.5 * (beta[k - 1] + alpha[k])).collect();
    let upper: Vec<f64> = (1..=n).map(|k| -0.5 * beta[k]).collect();
    let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
    let delta = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;

    let f0 = norm(&f);
    let mut step = 1.0;
    for _ in 0..40 {
        let mut u = bounds.to_vec();
        for i in 0..n {
            u[i + 1] += step * delta[i];
        }
        if u.windows(2).all(|w| w[0] < w[1]) {
            let m = cell_means(&u);
            if m.iter().all(|v| v.is_finite()) && norm(&residual(&u, &m)) <= f0 {
                return Some(u);
            }
        }
        step *= 0.5;
    }
    None
}

/// Thomas algorithm; `lower[0]` and `upper[n−1]` are ignored.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let denom = diag[i] - if i > 0 { lower[i] * c[i - 1] } else { 0.0 };
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - if i > 0 { lower[i] * d[i - 1] } else { 0.0 }) / denom;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

fn cell_means(bounds: &[f64]) -> Vec<f64> {
    bounds
        .windows(2)
        .map(|w| std_normal_partial_mean(w[0], w[1]) / std_normal_mass(w[0], w[1]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson on [a, b] with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    fn gauss_pdf(x: f64, var: f64) -> f64 {
        (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
    }

    #[test]
    fn uniform_mid_rise_levels_and_saturation() {
        let q = UniformQuantizer::new(2, 1.0).unwrap();
        assert_eq!(q.levels(), vec![-1.5, -0.5, 0.5, 1.5]);
        assert_eq!(q.thresholds(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(q.quantize(0.2), 0.5);
        assert_eq!(q.quantize(-0.2), -0.5);
        assert_eq!(q.quantize(100.0), 1.5);
        assert_eq!(q.quantize(-100.0), -1.5);
        assert_eq!(q.quantize(1.0), 1.5);
        assert!(UniformQuantizer::new(0, 1.0).is_err());
        assert!(UniformQuantizer::new(13, 1.0).is_err());
        assert!(UniformQuantizer::new(3, 0.0).is_err());
    }

    #[test]
    fn three_sigma_step_default() {
        assert_eq!(UniformQuantizer::three_sigma_step(1, 1.0), 3.0);
        assert!((UniformQuantizer::three_sigma_step(3, 0.5) - 6.0 * 0.5f64.sqrt() / 8.0).abs() < 1e-15);
    }

    #[test]
    fn normal_mass_and_partial_mean() {
        assert!((std_normal_mass(f64::NEG_INFINITY, f64::INFINITY) - 1.0).abs() < 1e-15);
        assert!((std_normal_mass(0.0, f64::INFINITY) - 0.5).abs() < 1e-15);
        let tail = std_normal_mass(8.0, 9.0);
        assert!(tail > 0.0 && tail < 1e-14);
        assert!((std_normal_partial_mean(0.0, f64::INFINITY) - (0.5 / PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn one_bit_lloyd_max_is_half_normal_mean() {
        let q = LloydMaxQuantizer::design(1, 1.0, 10, 1e-12).unwrap();
        assert_eq!(q.thresholds(), &[0.0]);
        // Oracle: E{|w|} for w ~ N(0,1) by quadrature.
        let oracle = 2.0 * simpson(|x| x * gauss_pdf(x, 1.0), 0.0, 12.0, 20_000);
        assert!((q.levels()[1] - oracle).abs() < 1e-9);
        assert!((q.levels()[1] - (2.0 / PI).sqrt()).abs() < 1e-15);
        assert_eq!(q.levels()[0], -q.levels()[1]);
    }

    #[test]
    fn known_two_bit_design() {
        // Classical Max (1960) values for 4 levels: ±0.4528, ±1.510; threshold 0.9816.
        let q = LloydMaxQuantizer::design(2, 1.0, 100_000, 1e-13).unwrap();
        assert!((q.levels()[3] - 1.5104).abs() < 1e-4);
        assert!((q.levels()[2] - 0.4528).abs() < 1e-4);
        assert!((q.thresholds()[2] - 0.9816).abs() < 1e-4);
    }

    #[test]
    fn conditional_mean_property_by_quadrature() {
        for bits in 1..=4 {
            let var = 0.5;
            let q = LloydMaxQuantizer::design(bits, var, DEFAULT_LLOYD_MAX_ITER, DEFAULT_LLOYD_TOL).unwrap();
            let sd = var.sqrt();
            let n = q.levels().len();
            for i in 0..n {
                let a = if i == 0 { -12.0 * sd } else { q.thresholds()[i - 1] };
                let b = if i + 1 == n { 12.0 * sd } else { q.thresholds()[i] };
                let mass = simpson(|x| gauss_pdf(x, var), a, b, 4000);
                let first = simpson(|x| x * gauss_pdf(x, var), a, b, 4000);
                assert!((first / mass - q.levels()[i]).abs() < 1e-6, "bits {bits} cell {i}");
            }
        }
    }

    #[test]
    fn symmetry_and_monotonicity() {
        for bits in [1, 3, 5, 8] {
            let q = LloydMaxQuantizer::design(bits, 2.0, DEFAULT_LLOYD_MAX_ITER, DEFAULT_LLOYD_TOL).unwrap();
            let l = q.levels();
            assert_eq!(l.len(), 1 << bits);
            for i in 0..l.len() {
                assert_eq!(l[i], -l[l.len() - 1 - i]);
            }
            assert!(l.windows(2).all(|w| w[0] < w[1]));
            assert!(q.thresholds().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn twelve_bit_design_converges() {
        let q = LloydMaxQuantizer::design(12, 1.0, DEFAULT_LLOYD_MAX_ITER, 1e-9).unwrap();
        assert_eq!(q.levels().len(), 4096);
        // Distortion near the Panter–Dite asymptote √3·π/2 · 2^(−2b).
        let d = 1.0 - q.output_power(1.0);
        let asym = 3f64.sqrt() * PI / 2.0 * 4f64.powi(-12);
        assert!((d / asym - 1.0).abs() < 0.05, "{d} vs {asym}");
    }

    #[test]
    fn closed_form_moments_at_design_variance() {
        let q = LloydMaxQuantizer::design(3, 1.0, DEFAULT_LLOYD_MAX_ITER, DEFAULT_LLOYD_TOL).unwrap();
        // Conditional-mean quantizers satisfy E{Q w} = E{Q²}.
        assert!((q.correlation_with_input(1.0) - q.output_power(1.0)).abs() < 1e-12);
        assert!(LloydMaxQuantizer::design(1, -1.0, 10, 1e-9).is_err());
    }

    #[test]
    fn newton_matches_plain_lloyd_fixed_point() {
        let q = LloydMaxQuantizer::design(4, 1.0, DEFAULT_LLOYD_MAX_ITER, DEFAULT_LLOYD_TOL).unwrap();
        let half = 8;
        let mut bounds: Vec<f64> = (0..=half).map(|k| if k == half { f64::INFINITY } else { 0.3 * k as f64 }).collect();
        let mut levels = cell_means(&bounds);
        for _ in 0..20_000 {
            bounds = lloyd_step(&bounds, &levels);
            levels = cell_means(&bounds);
        }
        for (a, b) in q.levels()[half..].iter().zip(&levels) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn iteration_cap_is_enforced() {
        assert!(matches!(
            LloydMaxQuantizer::design(6, 1.0, 1, 1e-12),
            Err(Error::NoConvergence(_))
        ));
        assert!(LloydMaxQuantizer::design(6, 1.0, 0, 1e-12).is_err());
        assert!(LloydMaxQuantizer::design(13, 1.0, 10, 1e-12).is_err());
    }

    #[test]
    fn tridiagonal_solver() {
        // [[2,1,0],[1,2,1],[0,1,2]] x = [3,4,3] → x = [1,1,1]
        let x = solve_tridiagonal(&[0.0, 1.0, 1.0], &[2.0, 2.0, 2.0], &[1.0, 1.0, 0.0], &[3.0, 4.0, 3.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn mse_optimal_uniform_steps() {
        // Optimum uniform steps for a unit Gaussian: one bit is 2·√(2/π);
        // the rest are the classical tabulated values (Max, 1960).
        let table = [(1, 1.5958), (2, 0.9957), (3, 0.5860), (4, 0.3352)];
        for (bits, step) in table {
            let got = UniformQuantizer::mse_optimal_step(bits, 1.0).unwrap();
            assert!((got - step).abs() < 1e-3, "{bits}: {got}");
        }
        // The minimum is quadratic, so the argmin resolves only to about √ε.
        assert!((UniformQuantizer::mse_optimal_step(1, 1.0).unwrap() - 2.0 * (2.0 / PI).sqrt()).abs() < 1e-6);
        let s4 = UniformQuantizer::mse_optimal_step(3, 4.0).unwrap();
        assert!((s4 - 2.0 * UniformQuantizer::mse_optimal_step(3, 1.0).unwrap()).abs() < 1e-9);
        // MSE by quadrature agrees with the cell-sum formula.
        let q = UniformQuantizer::new(3, 0.6).unwrap();
        let gauss = |w: f64| (-0.5 * w * w).exp() / (2.0 * PI).sqrt();
        let quad = simpson(|w| (w - q.quantize(w)).powi(2) * gauss(w), -12.0, 12.0, 480_000);
        assert!((quad - uniform_mse_unit(3, 0.6)).abs() < 1e-7);
    }
}
