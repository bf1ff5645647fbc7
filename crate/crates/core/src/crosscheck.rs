//! Randomized agreement checks between the statevector circuit and the direct
//! computation of `P(z = 0)` and the conditional parameter distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::expr::Arity;
use crate::grid::DataTable;
use crate::measure::{ratio_of, ResidualTable};
use crate::model::{FnModel, Sensitivity};
use crate::params::ParameterSpace;
use crate::statevector::simulate;

pub const AGREEMENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub points: usize,
    pub params: usize,
    pub exponent: u32,
    pub p_zero: f64,
    /// `|P_circuit - P_direct|`.
    pub p_error: f64,
    /// Largest per-`y` difference of conditional probabilities.
    pub conditional_error: f64,
}

impl CaseResult {
    pub fn agrees(&self, tol: f64) -> bool {
        self.p_error <= tol && self.conditional_error <= tol
    }
}

/// Compare both computations on one instance.
pub fn compare(f: &DataTable, g: &FnModel, space: &ParameterSpace, exponent: u32) -> Result<CaseResult> {
    let circuit = simulate(f, g, space, exponent)?;
    let q = ResidualTable::compute(f, g, space)?.q_values(Sensitivity::new(exponent)?.modulus())?;
    let direct = crate::measure::mean_q(&q)?;
    let mut conditional_error: f64 = 0.0;
    if let Some(dist) = &circuit.conditional_y_distribution {
        for (raw, (_, p)) in dist.iter().enumerate() {
            let r = ratio_of(&q, |i| i == raw)?;
            conditional_error = conditional_error.max((p - r).abs());
        }
    }
    Ok(CaseResult {
        points: f.len(),
        params: space.len(),
        exponent,
        p_zero: direct,
        p_error: (circuit.z_is_zero_probability - direct).abs(),
        conditional_error,
    })
}

/// A random instance with `|X|, |Y| ≤ 16` and `N ≤ 6`: integer data and a
/// trial model given by an arbitrary integer table.
pub fn random_instance(rng: &mut impl Rng) -> Result<(DataTable, FnModel, ParameterSpace, u32)> {
    let points = 1usize << rng.gen_range(1..=4);
    let space = match rng.gen_range(0..3) {
        0 => ParameterSpace::unsigned(&[rng.gen_range(1..=4)])?,
        1 => ParameterSpace::signed(&[rng.gen_range(1..=4)])?,
        _ => ParameterSpace::unsigned(&[rng.gen_range(1..=2), rng.gen_range(1..=2)])?,
    };
    let values: Vec<i64> = (0..points).map(|_| rng.gen_range(-50..=50)).collect();
    let f = DataTable::from_values(vec![points], values)?;
    let raws = space.len();
    let table: Vec<i64> = (0..points * raws).map(|_| rng.gen_range(-50..=50)).collect();
    let lookup: Vec<(Vec<i64>, usize)> = space.enumerate().enumerate().map(|(i, y)| (y, i)).collect();
    let g = FnModel::new("table", Arity::new(1, space.arity()), move |x, y| {
        let raw = lookup.iter().find(|(v, _)| v.as_slice() == y).map_or(0, |(_, i)| *i);
        table[raw * points + x[0] as usize]
    });
    Ok((f, g, space, rng.gen_range(1..=6)))
}

pub fn run_suite(cases: usize, seed: u64) -> Result<Vec<CaseResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases)
        .map(|_| {
            let (f, g, space, n) = random_instance(&mut rng)?;
            compare(&f, &g, &space, n)
        })
        .collect()
}
