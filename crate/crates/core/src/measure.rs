//! The shape measure `Q` and quantities derived from it.
//!
//! `Q(f, g_y, M) = |mean_x exp(2πi (f(x) - g_y(x)) / M)|²`. All sums over the
//! domain run in row-major order with Neumaier compensation, and sums over
//! parameter vectors are reduced sequentially in raw-index order, so results
//! do not depend on the number of worker threads.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::DataTable;
use crate::model::TrialModel;
use crate::params::ParameterSpace;

/// Mean probability below which a parameter ratio is considered undefined.
pub const DEGENERATE_MASS: f64 = 1e-15;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for v in iter {
            s.add(v);
        }
        s
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Fractional part with the sign of `a`: `a - floor(a)` for `a >= 0`,
/// `a - ceil(a)` otherwise.
pub fn frac(a: f64) -> f64 {
    if a >= 0.0 {
        a - a.floor()
    } else {
        a - a.ceil()
    }
}

/// `d / modulus` reduced to less than one turn. The remainder is exact in
/// floating point, so large differences keep full phase precision.
fn turns(d: f64, modulus: f64) -> f64 {
    (d % modulus) / modulus
}

/// Sum of unit phasors `exp(2πi t)` over turns `t`.
fn phasor_sum(turns: impl Iterator<Item = f64>) -> Complex64 {
    let mut re = CompensatedSum::default();
    let mut im = CompensatedSum::default();
    for t in turns {
        let (s, c) = (TAU * t.rem_euclid(1.0)).sin_cos();
        re.add(c);
        im.add(s);
    }
    Complex64::new(re.value(), im.value())
}

fn check_modulus(modulus: f64) -> Result<()> {
    if modulus > 0.0 && modulus.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("modulus must be positive and finite, got {modulus}")))
    }
}

/// `Q` for precomputed integer residuals `f(x) - g_y(x)`.
pub fn q_from_residuals(residuals: &[i64], modulus: f64) -> f64 {
    let n = residuals.len() as f64;
    let s = phasor_sum(residuals.iter().map(|&d| turns(d as f64, modulus)));
    (s / n).norm_sqr().min(1.0)
}

/// `Q` for real-valued residuals.
pub fn q_from_real_residuals(residuals: &[f64], modulus: f64) -> f64 {
    let n = residuals.len() as f64;
    let s = phasor_sum(residuals.iter().map(|&d| turns(d, modulus)));
    (s / n).norm_sqr().min(1.0)
}

/// Pointwise `f(x) - g_y(x)` over the grid, in row-major order.
pub fn residuals(f: &DataTable, g: &dyn TrialModel, y: &[i64]) -> Result<Vec<i64>> {
    f.grid()
        .points()
        .zip(f.values())
        .map(|(x, &fx)| {
            let gx = g.eval(&x, y)?;
            fx.checked_sub(gx).ok_or_else(|| Error::Overflow {
                expr: format!("f(x) - g_y(x) = {fx} - {gx}"),
            })
        })
        .collect()
}

pub fn q_measure(f: &DataTable, g: &dyn TrialModel, y: &[i64], modulus: f64) -> Result<f64> {
    check_modulus(modulus)?;
    Ok(q_from_residuals(&residuals(f, g, y)?, modulus))
}

/// Residuals for every parameter vector of a space, computed once and reused
/// across sensitivities.
#[derive(Debug, Clone)]
pub struct ResidualTable {
    points: usize,
    params: usize,
    data: Vec<i64>,
}

impl ResidualTable {
    /// Refuse tables larger than this many entries.
    pub const MAX_ENTRIES: usize = 1 << 28;

    pub fn compute(f: &DataTable, g: &dyn TrialModel, space: &ParameterSpace) -> Result<Self> {
        let points = f.len();
        let params = space.len();
        if g.arity().inputs != f.grid().ndim() || g.arity().params != space.arity() {
            return Err(Error::Precondition(format!(
                "model `{}` takes ({}, {}) arguments but data has {} inputs and the space {} parameters",
                g.describe(),
                g.arity().inputs,
                g.arity().params,
                f.grid().ndim(),
                space.arity()
            )));
        }
        let entries = points
            .checked_mul(params)
            .filter(|&e| e <= Self::MAX_ENTRIES)
            .ok_or_else(|| {
                Error::Domain(format!("{points} x {params} residual table is too large"))
            })?;
        let xs: Vec<Vec<i64>> = f.grid().points().collect();
        let mut data = vec![0i64; entries];
        data.par_chunks_mut(points)
            .enumerate()
            .try_for_each(|(raw, row)| -> Result<()> {
                let mut y = vec![0i64; space.arity()];
                space.decode_into(raw, &mut y);
                for ((slot, x), &fx) in row.iter_mut().zip(&xs).zip(f.values()) {
                    let gx = g.eval(x, &y)?;
                    *slot = fx.checked_sub(gx).ok_or_else(|| Error::Overflow {
                        expr: format!("f(x) - g_y(x) = {fx} - {gx}"),
                    })?;
                }
                Ok(())
            })?;
        Ok(Self { points, params, data })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn params(&self) -> usize {
        self.params
    }

    /// Number of model evaluations spent building the table.
    pub fn evaluations(&self) -> u64 {
        (self.points as u64) * (self.params as u64)
    }

    pub fn row(&self, raw: usize) -> &[i64] {
        &self.data[raw * self.points..(raw + 1) * self.points]
    }

    /// Largest and smallest residual.
    pub fn extent(&self) -> (i64, i64) {
        let lo = self.data.iter().copied().min().unwrap_or(0);
        let hi = self.data.iter().copied().max().unwrap_or(0);
        (lo, hi)
    }

    /// `Q` for every parameter vector, in raw-index order.
    pub fn q_values(&self, modulus: f64) -> Result<Vec<f64>> {
        check_modulus(modulus)?;
        let mut out = vec![0.0; self.params];
        out.par_iter_mut()
            .enumerate()
            .for_each(|(raw, q)| *q = q_from_residuals(self.row(raw), modulus));
        Ok(out)
    }
}

/// Mean of `q` values, i.e. the probability of measuring `z = 0`.
pub fn mean_q(q_values: &[f64]) -> Result<f64> {
    if q_values.is_empty() {
        return Err(Error::Domain("empty parameter space".into()));
    }
    Ok(compensated_sum(q_values.iter().copied()) / q_values.len() as f64)
}

pub fn expected_q(f: &DataTable, g: &dyn TrialModel, space: &ParameterSpace, modulus: f64) -> Result<f64> {
    let table = ResidualTable::compute(f, g, space)?;
    mean_q(&table.q_values(modulus)?)
}

/// Share of total `Q` mass carried by the raw indices selected by `keep`.
pub fn ratio_of(q_values: &[f64], mut keep: impl FnMut(usize) -> bool) -> Result<f64> {
    let total = compensated_sum(q_values.iter().copied());
    if q_values.is_empty() || !(total / q_values.len() as f64 > DEGENERATE_MASS) {
        return Err(Error::DegenerateMeasure(format!(
            "total Q mass {total:e} over {} parameter vectors",
            q_values.len()
        )));
    }
    let part = compensated_sum(
        q_values
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, &q)| q),
    );
    Ok(part / total)
}

/// `r(Y', Y)` with `Y'` given as a predicate on decoded parameter vectors.
pub fn parameter_ratio(
    f: &DataTable,
    g: &dyn TrialModel,
    subset: &dyn Fn(&[i64]) -> bool,
    space: &ParameterSpace,
    modulus: f64,
) -> Result<f64> {
    let q = ResidualTable::compute(f, g, space)?.q_values(modulus)?;
    let mut y = vec![0i64; space.arity()];
    ratio_of(&q, |raw| {
        space.decode_into(raw, &mut y);
        subset(&y)
    })
}

/// `Q* = 1 - sqrt(Q)`.
pub fn q_star(f: &DataTable, g: &dyn TrialModel, y: &[i64], modulus: f64) -> Result<f64> {
    Ok(1.0 - q_measure(f, g, y, modulus)?.sqrt())
}

/// Average normalized absolute difference `Σ|f-g| / (|X| M)`.
pub fn l1_star(f: &DataTable, g: &dyn TrialModel, y: &[i64], modulus: f64) -> Result<f64> {
    check_modulus(modulus)?;
    let r = residuals(f, g, y)?;
    Ok(l1_of(r.iter().map(|&d| d as f64), r.len(), modulus))
}

/// Average normalized squared difference `Σ|f-g|² / (|X| M²)`.
pub fn l2_star(f: &DataTable, g: &dyn TrialModel, y: &[i64], modulus: f64) -> Result<f64> {
    check_modulus(modulus)?;
    let r = residuals(f, g, y)?;
    Ok(l2_of(r.iter().map(|&d| d as f64), r.len(), modulus))
}

fn l1_of(r: impl Iterator<Item = f64>, n: usize, m: f64) -> f64 {
    compensated_sum(r.map(|d| d.abs())) / (n as f64 * m)
}

fn l2_of(r: impl Iterator<Item = f64>, n: usize, m: f64) -> f64 {
    compensated_sum(r.map(|d| d * d)) / (n as f64 * m * m)
}

/// A modulus and vertical shift of `f` under which every normalized
/// difference is at most 1/4 and the phasor walk ends on the positive real
/// axis; under these conditions `Q*` is sandwiched between scaled `L1*` and
/// `L2*`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsCertificate {
    pub final_modulus: f64,
    pub vertical_shifts: Vec<f64>,
    pub iterations: usize,
    /// `f - g` is constant, so `f` and `g` are the same class and no walk is needed.
    pub trivial: bool,
}

/// Tolerance on the imaginary part of the normalized walk endpoint.
pub const ENDPOINT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_CERTIFICATE_ITERATIONS: usize = 64;

impl BoundsCertificate {
    pub fn total_shift(&self) -> f64 {
        compensated_sum(self.vertical_shifts.iter().copied())
    }
}

/// The quantities a certificate is meant to control, measured on shifted data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsCheck {
    pub max_normalized: f64,
    pub endpoint_imag: f64,
    pub q_star: f64,
    pub l1_star: f64,
    pub l2_star: f64,
}

impl BoundsCheck {
    pub fn lower_bound(&self) -> f64 {
        TAU * self.l1_star + (1.0 - PI / 2.0)
    }

    pub fn upper_bound(&self) -> f64 {
        2.0 * PI * PI * self.l2_star
    }

    /// Both certificate postconditions and the sandwich, up to `slack` for rounding.
    pub fn holds(&self, slack: f64) -> bool {
        self.max_normalized <= 0.25 + slack
            && self.endpoint_imag.abs() <= ENDPOINT_TOLERANCE
            && self.lower_bound() <= self.q_star + slack
            && self.q_star <= self.upper_bound() + slack
    }
}

fn walk_endpoint(shifted: &[f64], modulus: f64) -> Complex64 {
    phasor_sum(shifted.iter().map(|&d| turns(d, modulus))) / shifted.len() as f64
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Build the constructive modulus/shift certificate for `(f, g_y)`.
///
/// Start from `M = 4 max|f - g|`, shift `f` vertically so the walk endpoint
/// lies on the positive real axis, and if some normalized difference now
/// exceeds 1/4 recompute `M` from the shifted data and repeat.
pub fn bounds_certificate(
    f: &DataTable,
    g: &dyn TrialModel,
    y: &[i64],
    max_iterations: usize,
) -> Result<BoundsCertificate> {
    let r = residuals(f, g, y)?;
    certificate_for_residuals(&r, max_iterations)
}

pub fn certificate_for_residuals(r: &[i64], max_iterations: usize) -> Result<BoundsCertificate> {
    if r.is_empty() {
        return Err(Error::Domain("empty domain".into()));
    }
    if r.iter().all(|&d| d == r[0]) {
        return Ok(BoundsCertificate {
            final_modulus: 1.0,
            vertical_shifts: Vec::new(),
            iterations: 0,
            trivial: true,
        });
    }
    let mut shifted: Vec<f64> = r.iter().map(|&d| d as f64).collect();
    let mut shifts = Vec::new();
    let mut modulus = 4.0 * max_abs(&shifted);
    for _ in 0..=max_iterations {
        let end = walk_endpoint(&shifted, modulus);
        if end.im.abs() <= ENDPOINT_TOLERANCE && end.re >= -ENDPOINT_TOLERANCE {
            return Ok(BoundsCertificate {
                final_modulus: modulus,
                iterations: shifts.len(),
                vertical_shifts: shifts,
                trivial: false,
            });
        }
        if shifts.len() == max_iterations {
            break;
        }
        let k = -end.arg() * modulus / TAU;
        shifted.iter_mut().for_each(|d| *d += k);
        shifts.push(k);
        let needed = 4.0 * max_abs(&shifted);
        if needed > modulus {
            modulus = needed;
        }
    }
    Err(Error::CertificateFailure {
        iterations: max_iterations,
    })
}

/// Measure the certificate's postconditions and the `Q*` sandwich directly.
pub fn check_certificate(r: &[i64], cert: &BoundsCertificate) -> BoundsCheck {
    if cert.trivial {
        // Same class: the representative with zero difference.
        return BoundsCheck {
            max_normalized: 0.0,
            endpoint_imag: 0.0,
            q_star: 0.0,
            l1_star: 0.0,
            l2_star: 0.0,
        };
    }
    let k = cert.total_shift();
    let m = cert.final_modulus;
    let shifted: Vec<f64> = r.iter().map(|&d| d as f64 + k).collect();
    let n = shifted.len();
    BoundsCheck {
        max_normalized: max_abs(&shifted) / m,
        endpoint_imag: walk_endpoint(&shifted, m).im,
        q_star: 1.0 - q_from_real_residuals(&shifted, m).sqrt(),
        l1_star: l1_of(shifted.iter().copied(), n, m),
        l2_star: l2_of(shifted.iter().copied(), n, m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Arity;
    use crate::model::FnModel;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: plain complex sum with `exp`, no compensation.
    fn direct_q(diffs: &[i64], m: f64) -> f64 {
        let n = diffs.len() as f64;
        let s: Complex64 = diffs
            .iter()
            .map(|&d| (Complex64::i() * 2.0 * PI * d as f64 / m).exp())
            .sum();
        (s / n).norm_sqr()
    }

    /// Data table `f` on a 1-D grid plus a model returning `g` pointwise.
    fn pair(f: Vec<i64>, g: Vec<i64>) -> (DataTable, FnModel) {
        let n = f.len();
        let table = DataTable::from_values(vec![n], f).unwrap();
        let model = FnModel::new("table", Arity::new(1, 0), move |x, _| g[x[0] as usize]);
        (table, model)
    }

    #[test]
    fn identical_functions_give_one() {
        let (f, g) = pair(vec![3, 9, -4, 100], vec![3, 9, -4, 100]);
        for m in [1.0, 7.5, 1024.0] {
            assert_eq!(q_measure(&f, &g, &[], m).unwrap(), 1.0);
        }
    }

    #[test]
    fn half_period_cancels() {
        let (f, g) = pair(vec![0, 8], vec![0, 0]);
        assert!(q_measure(&f, &g, &[], 16.0).unwrap() < 1e-30);
    }

    #[test]
    fn fourth_roots_cancel() {
        let (f, g) = pair(vec![0, 4, 8, 12], vec![0; 4]);
        assert!(q_measure(&f, &g, &[], 16.0).unwrap() < 1e-30);
    }

    #[test]
    fn matches_direct_sum_on_4x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fv: Vec<i64> = (0..16).map(|_| rng.gen_range(-500..500)).collect();
        let gv: Vec<i64> = (0..16).map(|_| rng.gen_range(-500..500)).collect();
        let diffs: Vec<i64> = fv.iter().zip(&gv).map(|(a, b)| a - b).collect();
        let f = DataTable::from_values(vec![4, 4], fv).unwrap();
        let g = FnModel::new("g", Arity::new(2, 0), move |x, _| gv[(x[0] * 4 + x[1]) as usize]);
        for m in [3.0, 64.0, 1000.0] {
            let q = q_measure(&f, &g, &[], m).unwrap();
            assert!((q - direct_q(&diffs, m)).abs() < 1e-12);
        }
    }

    #[test]
    fn frac_examples() {
        assert_eq!(frac(2.75), 0.75);
        assert_eq!(frac(-2.75), -0.75);
        assert_eq!(frac(3.0), 0.0);
    }

    #[test]
    fn q_star_examples() {
        let (f, g) = pair(vec![1, 2, 3], vec![1, 2, 3]);
        assert_eq!(q_star(&f, &g, &[], 8.0).unwrap(), 0.0);
        // Two of four phasors cancel: |(1 + 1 + 1 - 1) / 4|² = 0.25.
        let (f, g) = pair(vec![0, 0, 0, 4], vec![0; 4]);
        assert!((q_star(&f, &g, &[], 8.0).unwrap() - 0.5).abs() < 1e-12);
        let (f, g) = pair(vec![5, -3, 11, 2, 8], vec![1, 1, 0, 0, 7]);
        let d = [4, -4, 11, 2, 1];
        let expected = 1.0 - direct_q(&d, 13.0).sqrt();
        assert!((q_star(&f, &g, &[], 13.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn l_star_examples() {
        let (f, g) = pair(vec![4, 5], vec![4, 5]);
        assert_eq!(l1_star(&f, &g, &[], 3.0).unwrap(), 0.0);
        assert_eq!(l2_star(&f, &g, &[], 3.0).unwrap(), 0.0);
        let (f, g) = pair(vec![7, -7], vec![0, 0]);
        assert_eq!(l1_star(&f, &g, &[], 7.0).unwrap(), 1.0);
        assert_eq!(l2_star(&f, &g, &[], 7.0).unwrap(), 1.0);
        let (f, g) = pair(vec![3, -1, 10], vec![0, 2, 4]);
        let m = 5.0;
        let l1 = (3.0 + 3.0 + 6.0) / (3.0 * m);
        let l2 = (9.0 + 9.0 + 36.0) / (3.0 * m * m);
        assert!((l1_star(&f, &g, &[], m).unwrap() - l1).abs() < 1e-12);
        assert!((l2_star(&f, &g, &[], m).unwrap() - l2).abs() < 1e-12);
    }

    #[test]
    fn ratio_edges_and_degenerate() {
        let q = [0.2, 0.3, 0.5];
        assert_eq!(ratio_of(&q, |_| true).unwrap(), 1.0);
        assert_eq!(ratio_of(&q, |_| false).unwrap(), 0.0);
        assert!(matches!(ratio_of(&[0.0, 0.0], |_| true), Err(Error::DegenerateMeasure(_))));
        assert!(mean_q(&[]).is_err());
    }

    #[test]
    fn certificate_trivial_for_constant_difference() {
        let cert = certificate_for_residuals(&[5, 5, 5], 64).unwrap();
        assert!(cert.trivial);
        assert_eq!(cert.final_modulus, 1.0);
        assert!(cert.vertical_shifts.is_empty());
    }

    #[test]
    fn certificate_symmetric_pair_needs_no_shift() {
        let cert = certificate_for_residuals(&[-1, 1], 64).unwrap();
        assert_eq!(cert.final_modulus, 4.0);
        assert_eq!(cert.iterations, 0);
        let check = check_certificate(&[-1, 1], &cert);
        assert!(check.holds(1e-12), "{check:?}");
    }

    #[test]
    fn certificate_on_random_eight_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let r: Vec<i64> = (0..8).map(|_| rng.gen_range(-1000..1000)).collect();
            let cert = certificate_for_residuals(&r, 64).unwrap();
            let check = check_certificate(&r, &cert);
            assert!(check.max_normalized <= 0.25 + 1e-12, "{check:?}");
            assert!(check.endpoint_imag.abs() <= ENDPOINT_TOLERANCE, "{check:?}");
        }
    }

    proptest! {
        #[test]
        fn translational_invariance(
            fv in proptest::collection::vec(-10_000i64..10_000, 1..40),
            c1 in -1_000_000i64..1_000_000,
            c2 in -1_000_000i64..1_000_000,
            m in 2.0f64..5000.0,
        ) {
            let n = fv.len();
            let gv: Vec<i64> = fv.iter().enumerate().map(|(i, v)| v / 3 + i as i64).collect();
            let base: Vec<i64> = fv.iter().zip(&gv).map(|(a, b)| a - b).collect();
            let moved: Vec<i64> = fv.iter().zip(&gv).map(|(a, b)| (a + c1) - (b + c2)).collect();
            prop_assert_eq!(base.len(), n);
            let q0 = q_from_residuals(&base, m);
            let q1 = q_from_residuals(&moved, m);
            prop_assert!((q0 - q1).abs() <= 1e-12, "{} vs {}", q0, q1);
        }

        #[test]
        fn q_in_unit_interval(d in proptest::collection::vec(-1_000_000i64..1_000_000, 1..64), m in 0.01f64..1e7) {
            let q = q_from_residuals(&d, m);
            prop_assert!((0.0..=1.0).contains(&q));
        }

        #[test]
        fn q_is_one_iff_congruent(base in -100i64..100, ks in proptest::collection::vec(-5i64..5, 2..10), n in 1u32..8) {
            let m = (1u64 << n) as f64;
            let congruent: Vec<i64> = ks.iter().map(|k| base + k * (1i64 << n)).collect();
            prop_assert!((q_from_residuals(&congruent, m) - 1.0).abs() < 1e-12);
            let mut broken = congruent.clone();
            broken[0] += 1;
            prop_assert!(q_from_residuals(&broken, m) < 1.0 - 1e-9);
        }
    }
}
