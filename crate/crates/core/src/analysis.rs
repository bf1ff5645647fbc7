//! Closed-form `sinc²` window integrals approximating the `z = 0` probability
//! and half-space weights for linear regression.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Arity;
use crate::grid::DataTable;
use crate::model::ExprModel;
use crate::params::{Half, ParameterSpace};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
const MAX_DEPTH: u32 = 48;
/// Accepted range of `r`. Very negative `r` makes the integrand oscillate too
/// fast to integrate; very positive `r` shrinks the window below precision.
pub const MIN_OFFSET: i32 = -16;
pub const MAX_OFFSET: i32 = 40;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod estimate and its difference from the embedded Gauss rule.
fn gauss_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        k += WGK[i] * pair;
        if i % 2 == 1 {
            g += WG[i / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    let (k, err) = gauss_kronrod(f, a, b);
    if err <= tol.max(f64::EPSILON * k.abs()) {
        return Ok(k);
    }
    if depth == 0 {
        return Err(Error::Domain(format!(
            "quadrature on [{a}, {b}] did not converge (error {err:e})"
        )));
    }
    let m = 0.5 * (a + b);
    Ok(adaptive(f, a, m, tol / 2.0, depth - 1)? + adaptive(f, m, b, tol / 2.0, depth - 1)?)
}

/// Integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a, tol).map(|v| -v);
    }
    adaptive(&f, a, b, tol, MAX_DEPTH)
}

/// `(sin w / w)²`, equal to 1 at `w = 0`.
pub fn sinc_squared(w: f64) -> f64 {
    if w.abs() < 1e-4 {
        let w2 = w * w;
        1.0 - w2 / 3.0 + 2.0 * w2 * w2 / 45.0
    } else {
        let s = w.sin() / w;
        s * s
    }
}

fn check(r: i32, ystar: f64) -> Result<()> {
    if !(-0.5..=0.5).contains(&ystar) {
        return Err(Error::Domain(format!("y* = {ystar} outside [-1/2, 1/2]")));
    }
    if !(MIN_OFFSET..=MAX_OFFSET).contains(&r) {
        return Err(Error::Domain(format!("r = {r} outside {MIN_OFFSET}..={MAX_OFFSET}")));
    }
    Ok(())
}

/// `(2^r/π) ∫ sinc²(w) dw` over `w = (π/2^r)(u - y*)` for `u ∈ [lo, hi]`.
fn window(r: i32, ystar: f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let scale = PI / 2f64.powi(r);
    // Substitute w = scale * (u - y*) so the integrand is sampled in u.
    integrate(|u| sinc_squared(scale * (u - ystar)), lo, hi, tol)
}

/// Approximate `P(z = 0)` for one-dimensional linear regression at `N = L + K + r`.
pub fn p_zero_integral(r: i32, ystar: f64) -> Result<f64> {
    p_zero_integral_tol(r, ystar, DEFAULT_TOLERANCE)
}

pub fn p_zero_integral_tol(r: i32, ystar: f64, tol: f64) -> Result<f64> {
    check(r, ystar)?;
    window(r, ystar, -0.5, 0.5, tol)
}

/// Shares of the `P(z = 0)` window held by the Low, Mid and High halves.
pub fn half_space_weights(r: i32, ystar: f64) -> Result<[f64; 3]> {
    check(r, ystar)?;
    let tol = DEFAULT_TOLERANCE;
    let full = window(r, ystar, -0.5, 0.5, tol)?;
    let low = window(r, ystar, -0.5, 0.0, tol)?;
    let mid = window(r, ystar, -0.25, 0.25, tol)?;
    let high = window(r, ystar, 0.0, 0.5, tol)?;
    Ok([low / full, mid / full, high / full])
}

/// Heaviest half and its weight; ties go to Low, then Mid.
pub fn best_half(weights: [f64; 3]) -> (Half, f64) {
    let mut best = (Half::Low, weights[0]);
    for (h, w) in [(Half::Mid, weights[1]), (Half::High, weights[2])] {
        if w > best.1 {
            best = (h, w);
        }
    }
    best
}

/// Product of the one-dimensional values over coordinates.
pub fn multivariate_p_zero(r: i32, ystars: &[f64]) -> Result<f64> {
    ystars.iter().try_fold(1.0, |acc, &y| Ok(acc * p_zero_integral(r, y)?))
}

/// `N = L + K - 1`.
pub fn recommend_n_linear(domain_bits: u32, param_bits: u32) -> Result<u32> {
    if domain_bits == 0 || param_bits == 0 {
        return Err(Error::Domain("L and K must be at least 1".into()));
    }
    Ok(domain_bits + param_bits - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub r: i32,
    pub ystar: f64,
    pub p_zero: f64,
    pub weights: [f64; 3],
}

impl SurfacePoint {
    pub fn max_weight(&self) -> f64 {
        best_half(self.weights).1
    }
}

/// Evaluate the window integrals on an `(r, y*)` grid, `r` outermost.
pub fn surface(rs: &[i32], ystars: &[f64]) -> Result<Vec<SurfacePoint>> {
    let cells: Vec<(i32, f64)> = rs
        .iter()
        .flat_map(|&r| ystars.iter().map(move |&y| (r, y)))
        .collect();
    cells
        .par_iter()
        .map(|&(r, ystar)| {
            Ok(SurfacePoint {
                r,
                ystar,
                p_zero: p_zero_integral(r, ystar)?,
                weights: half_space_weights(r, ystar)?,
            })
        })
        .collect()
}

/// `y*` grid over `[-1/2, 1/2]` with the given number of intervals.
pub fn ystar_grid(intervals: usize) -> Vec<f64> {
    (0..=intervals)
        .map(|i| -0.5 + i as f64 / intervals as f64)
        .collect()
}

/// Noiseless linear instance `f(x) = Σ_j y'_j x_j` on `{0..2^L-1}^d`, with
/// the matching trial model and a signed `K`-bit space per coordinate.
pub fn linear_instance(
    domain_bits: u32,
    param_bits: u32,
    slopes: &[i64],
) -> Result<(DataTable, ExprModel, ParameterSpace)> {
    let d = slopes.len();
    if d == 0 || domain_bits == 0 || domain_bits > 20 || param_bits == 0 {
        return Err(Error::Domain("linear instance needs d, L, K >= 1 and L <= 20".into()));
    }
    let half = 1i64 << (param_bits - 1);
    if let Some(s) = slopes.iter().find(|&&s| s < -half || s >= half) {
        return Err(Error::Domain(format!("slope {s} outside the {param_bits}-bit signed range")));
    }
    let side = 1usize << domain_bits;
    let dims = vec![side; d];
    let grid = crate::grid::DomainGrid::new(dims.clone())?;
    let values = grid
        .points()
        .map(|x| x.iter().zip(slopes).map(|(a, b)| a * b).sum())
        .collect();
    let f = DataTable::from_values(dims, values)?;
    let source = (1..=d)
        .map(|j| format!("y{j}*x{j}"))
        .collect::<Vec<_>>()
        .join(" + ");
    let g = ExprModel::parse(&source, Arity::new(d, d))?;
    let space = ParameterSpace::signed(&vec![param_bits; d])?;
    Ok((f, g, space))
}
