//! Choosing the sensitivity `N` so that the `z = 0` probability lands in a
//! fixed band.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;

use crate::error::{Error, Result};
use crate::grid::DataTable;
use crate::measure::{mean_q, ResidualTable};
use crate::model::{Sensitivity, TrialModel};
use crate::params::ParameterSpace;

/// How the starting exponent is picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialExponent {
    /// `ceil(log2(max f - min f))`: digits needed for the spread of the data.
    DataSpread,
    /// `ceil(log2 max{f, g_y})` over the grid and the whole space.
    DataAndModelMax,
    Fixed(u32),
}

impl fmt::Display for InitialExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialExponent::DataSpread => f.write_str("spread"),
            InitialExponent::DataAndModelMax => f.write_str("max"),
            InitialExponent::Fixed(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for InitialExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" | "spread" => Ok(Self::DataSpread),
            "max" => Ok(Self::DataAndModelMax),
            n => n
                .parse()
                .map(Self::Fixed)
                .map_err(|_| Error::Config(format!("bad initial exponent `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMode {
    Exact,
    Sampled { shots: u64, seed: u64 },
}

impl fmt::Display for EstimationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimationMode::Exact => f.write_str("exact"),
            EstimationMode::Sampled { shots, seed } => write!(f, "sampled:{shots}:{seed}"),
        }
    }
}

/// Hoeffding sample size: `ceil(ln(2/δ) / (2ε²))`.
pub fn min_shots(epsilon: f64, delta: f64) -> u64 {
    ((2.0 / delta).ln() / (2.0 * epsilon * epsilon)).ceil() as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityConfig {
    pub band: (f64, f64),
    pub initial: InitialExponent,
    pub mode: EstimationMode,
    pub epsilon: f64,
    pub delta: f64,
    pub max_adjustments: usize,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            band: (0.1, 0.6),
            initial: InitialExponent::DataSpread,
            mode: EstimationMode::Exact,
            epsilon: 0.02,
            delta: 0.01,
            max_adjustments: 64,
        }
    }
}

impl SensitivityConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.band;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::Config(format!("band [{lo}, {hi}] must satisfy 0 < lo < hi < 1")));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0 && self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config("epsilon and delta must lie in (0, 1)".into()));
        }
        if let EstimationMode::Sampled { shots, .. } = self.mode {
            let need = min_shots(self.epsilon, self.delta);
            if shots < need {
                return Err(Error::Config(format!(
                    "{shots} shots cannot reach epsilon {} at delta {}; need at least {need}",
                    self.epsilon, self.delta
                )));
            }
        }
        if let InitialExponent::Fixed(n) = self.initial {
            Sensitivity::new(n)?;
        }
        Ok(())
    }

    pub fn in_band(&self, p: f64) -> bool {
        self.band.0 <= p && p <= self.band.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Accepted(u32),
    NoSensitivity,
    SpaceCannotImprove,
}

impl Verdict {
    pub fn is_terminal(self) -> bool {
        !matches!(self, Verdict::Accepted(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Accepted(n) => write!(f, "accepted:{n}"),
            Verdict::NoSensitivity => f.write_str("no-sensitivity"),
            Verdict::SpaceCannotImprove => f.write_str("space-cannot-improve"),
        }
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-sensitivity" => Ok(Self::NoSensitivity),
            "space-cannot-improve" => Ok(Self::SpaceCannotImprove),
            _ => s
                .strip_prefix("accepted:")
                .and_then(|n| n.parse().ok())
                .map(Self::Accepted)
                .ok_or_else(|| Error::Report(format!("unknown verdict `{s}`"))),
        }
    }
}

/// What was done after one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Accept,
    /// Estimate below the band; `N` goes up.
    Increase,
    /// Estimate above the band; `N` goes down.
    Decrease,
    /// Above the band at `N = 1`.
    Exhausted,
    /// Violation flipped sides since the previous adjustment.
    Oscillation,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Accept => "accept",
            Decision::Increase => "increase",
            Decision::Decrease => "decrease",
            Decision::Exhausted => "exhausted",
            Decision::Oscillation => "oscillation",
        }
    }
}

impl FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "accept" => Self::Accept,
            "increase" => Self::Increase,
            "decrease" => Self::Decrease,
            "exhausted" => Self::Exhausted,
            "oscillation" => Self::Oscillation,
            _ => return Err(Error::Report(format!("unknown decision `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub exponent: u32,
    pub p_zero: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityOutcome {
    pub verdict: Verdict,
    pub trace: Vec<TraceEntry>,
    /// Sampled mode only: per raw `y`, how many `z = 0` shots landed on it at
    /// the accepted exponent.
    pub retained: Option<Vec<u64>>,
}

impl SensitivityOutcome {
    /// Estimate at the accepted exponent.
    pub fn accepted_p(&self) -> Option<f64> {
        match self.verdict {
            Verdict::Accepted(_) => self.trace.last().map(|t| t.p_zero),
            _ => None,
        }
    }
}

fn ceil_log2_clamped(v: i128) -> u32 {
    if v <= 1 {
        1
    } else {
        (128 - (v - 1).leading_zeros()).max(1)
    }
}

/// Starting exponent for the sensitivity search.
pub fn initial_exponent(
    f: &DataTable,
    g: &dyn TrialModel,
    space: &ParameterSpace,
    rule: InitialExponent,
) -> Result<u32> {
    let n = match rule {
        InitialExponent::Fixed(n) => n,
        InitialExponent::DataSpread => {
            let lo = f.values().iter().copied().min().unwrap_or(0);
            let hi = f.values().iter().copied().max().unwrap_or(0);
            ceil_log2_clamped(i128::from(hi) - i128::from(lo))
        }
        InitialExponent::DataAndModelMax => {
            let mut max = f.values().iter().copied().max().unwrap_or(0);
            for y in space.enumerate() {
                for x in f.grid().points() {
                    max = max.max(g.eval(&x, &y)?);
                }
            }
            ceil_log2_clamped(i128::from(max))
        }
    };
    Ok(n.clamp(1, Sensitivity::MAX_EXPONENT))
}

/// Estimates `P(z = 0)` for one residual table, holding the sampling stream.
pub struct Estimator<'a> {
    table: &'a ResidualTable,
    mode: EstimationMode,
    rng: Option<ChaCha8Rng>,
}

impl<'a> Estimator<'a> {
    pub fn new(table: &'a ResidualTable, mode: EstimationMode) -> Self {
        let rng = match mode {
            EstimationMode::Exact => None,
            EstimationMode::Sampled { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        Self { table, mode, rng }
    }

    pub fn table(&self) -> &ResidualTable {
        self.table
    }

    /// Estimated probability and, in sampled mode, per-`y` counts of the
    /// `z = 0` shots.
    pub fn estimate(&mut self, exponent: u32) -> Result<(f64, Option<Vec<u64>>)> {
        let m = Sensitivity::new(exponent)?.modulus();
        let q = self.table.q_values(m)?;
        let exact = mean_q(&q)?;
        match (self.mode, self.rng.as_mut()) {
            (EstimationMode::Sampled { shots, .. }, Some(rng)) => {
                let hits = Binomial::new(shots, exact.clamp(0.0, 1.0))
                    .map_err(|e| Error::Domain(format!("binomial draw: {e}")))?
                    .sample(rng);
                let mut counts = vec![0u64; q.len()];
                if hits > 0 {
                    let pick = WeightedIndex::new(&q)
                        .map_err(|e| Error::Domain(format!("conditional draw: {e}")))?;
                    for _ in 0..hits {
                        counts[pick.sample(rng)] += 1;
                    }
                }
                Ok((hits as f64 / shots as f64, Some(counts)))
            }
            _ => Ok((exact, None)),
        }
    }

    /// Conditional `y` draws given `z = 0`, for sampled ratio estimates.
    pub fn conditional_draws(&mut self, exponent: u32, draws: u64) -> Result<Vec<u64>> {
        let m = Sensitivity::new(exponent)?.modulus();
        let q = self.table.q_values(m)?;
        let rng = self
            .rng
            .as_mut()
            .ok_or_else(|| Error::Precondition("conditional draws need sampled mode".into()))?;
        let pick = WeightedIndex::new(&q)
            .map_err(|e| Error::DegenerateMeasure(format!("no Q mass to sample: {e}")))?;
        let mut counts = vec![0u64; q.len()];
        for _ in 0..draws {
            counts[pick.sample(rng)] += 1;
        }
        Ok(counts)
    }
}

pub fn estimate_p_zero(
    f: &DataTable,
    g: &dyn TrialModel,
    space: &ParameterSpace,
    exponent: u32,
    config: &SensitivityConfig,
) -> Result<f64> {
    let table = ResidualTable::compute(f, g, space)?;
    Estimator::new(&table, config.mode).estimate(exponent).map(|r| r.0)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Below,
    Above,
}

/// Run the band search from `start`.
pub fn search(estimator: &mut Estimator<'_>, start: u32, config: &SensitivityConfig) -> Result<SensitivityOutcome> {
    config.validate()?;
    let mut n = Sensitivity::new(start)?.exponent();
    let mut trace = Vec::new();
    let mut previous: Option<Side> = None;
    for _ in 0..=config.max_adjustments {
        let (p, counts) = estimator.estimate(n)?;
        let entry = |decision| TraceEntry {
            exponent: n,
            p_zero: p,
            decision,
        };
        if config.in_band(p) {
            trace.push(entry(Decision::Accept));
            return Ok(SensitivityOutcome {
                verdict: Verdict::Accepted(n),
                trace,
                retained: counts,
            });
        }
        let side = if p < config.band.0 { Side::Below } else { Side::Above };
        if previous.is_some_and(|s| s != side) {
            trace.push(entry(Decision::Oscillation));
            return Ok(SensitivityOutcome {
                verdict: Verdict::SpaceCannotImprove,
                trace,
                retained: None,
            });
        }
        previous = Some(side);
        match side {
            Side::Above if n == 1 => {
                trace.push(entry(Decision::Exhausted));
                return Ok(SensitivityOutcome {
                    verdict: Verdict::NoSensitivity,
                    trace,
                    retained: None,
                });
            }
            Side::Above => {
                trace.push(entry(Decision::Decrease));
                n -= 1;
            }
            Side::Below if n == Sensitivity::MAX_EXPONENT => break,
            Side::Below => {
                trace.push(entry(Decision::Increase));
                n += 1;
            }
        }
    }
    Err(Error::NonTermination {
        limit: config.max_adjustments,
    })
}

pub fn choose_sensitivity(
    f: &DataTable,
    g: &dyn TrialModel,
    space: &ParameterSpace,
    config: &SensitivityConfig,
) -> Result<SensitivityOutcome> {
    config.validate()?;
    let start = initial_exponent(f, g, space, config.initial)?;
    let table = ResidualTable::compute(f, g, space)?;
    search(&mut Estimator::new(&table, config.mode), start, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Arity;
    use crate::measure::expected_q;
    use crate::model::{ExprModel, FnModel};

    fn line(values: Vec<i64>) -> DataTable {
        let n = values.len();
        DataTable::from_values(vec![n], values).unwrap()
    }

    #[test]
    fn shot_bound() {
        assert_eq!(min_shots(0.02, 0.01), 6623);
        let mut c = SensitivityConfig {
            mode: EstimationMode::Sampled { shots: 6622, seed: 0 },
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.mode = EstimationMode::Sampled { shots: 6623, seed: 0 };
        c.validate().unwrap();
    }

    #[test]
    fn band_must_be_ordered() {
        let c = SensitivityConfig {
            band: (0.6, 0.1),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn initial_exponent_rules() {
        let g = ExprModel::parse("0", Arity::new(1, 1)).unwrap();
        let space = ParameterSpace::unsigned(&[1]).unwrap();
        let f = line((0..=1000).step_by(125).collect());
        assert_eq!(initial_exponent(&f, &g, &space, InitialExponent::DataSpread).unwrap(), 10);
        assert_eq!(initial_exponent(&f, &g, &space, InitialExponent::DataAndModelMax).unwrap(), 10);
        let zero = line(vec![0; 4]);
        assert_eq!(initial_exponent(&zero, &g, &space, InitialExponent::DataSpread).unwrap(), 1);
        assert_eq!(initial_exponent(&zero, &g, &space, InitialExponent::DataAndModelMax).unwrap(), 1);
        assert_eq!(initial_exponent(&zero, &g, &space, InitialExponent::Fixed(7)).unwrap(), 7);
    }

    #[test]
    fn model_maximum_counts_toward_literal_rule() {
        let g = ExprModel::parse("y1 * 100", Arity::new(1, 1)).unwrap();
        let space = ParameterSpace::unsigned(&[4]).unwrap();
        let f = line(vec![0, 1, 2, 3]);
        assert_eq!(initial_exponent(&f, &g, &space, InitialExponent::DataAndModelMax).unwrap(), 11);
        assert_eq!(initial_exponent(&f, &g, &space, InitialExponent::DataSpread).unwrap(), 2);
    }

    #[test]
    fn exact_estimate_is_expected_q() {
        let f = line(vec![3, 9, -4, 11, 0, 7, 2, 5]);
        let g = ExprModel::parse("y1 * x1", Arity::new(1, 1)).unwrap();
        let space = ParameterSpace::unsigned(&[3]).unwrap();
        for n in 1..8 {
            let a = estimate_p_zero(&f, &g, &space, n, &SensitivityConfig::default()).unwrap();
            let b = expected_q(&f, &g, &space, (1u64 << n) as f64).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn perfect_fit_singleton() {
        let f = line(vec![1, 5, 2, 8]);
        let g = FnModel::new("f", Arity::new(1, 1), |x, _| [1, 5, 2, 8][x[0] as usize]);
        let space = ParameterSpace::new(vec![crate::params::ParamField::from_parts(
            "y1",
            1,
            vec![false],
            0,
            0,
            false,
        )
        .unwrap()])
        .unwrap();
        let p = estimate_p_zero(&f, &g, &space, 4, &SensitivityConfig::default()).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn constant_fit_has_no_sensitivity() {
        let f = line(vec![4; 8]);
        let g = ExprModel::parse("4", Arity::new(1, 1)).unwrap();
        let space = ParameterSpace::unsigned(&[2]).unwrap();
        let c = SensitivityConfig {
            initial: InitialExponent::Fixed(5),
            ..Default::default()
        };
        let out = choose_sensitivity(&f, &g, &space, &c).unwrap();
        assert_eq!(out.verdict, Verdict::NoSensitivity);
        let ns: Vec<u32> = out.trace.iter().map(|t| t.exponent).collect();
        assert_eq!(ns, vec![5, 4, 3, 2, 1]);
        assert_eq!(out.trace.last().unwrap().decision, Decision::Exhausted);
    }

    #[test]
    fn accepted_estimate_lies_in_band() {
        let f = line((0..16).map(|x| 5 * x + (x * 7) % 3).collect());
        let g = ExprModel::parse("y1 * x1", Arity::new(1, 1)).unwrap();
        let space = ParameterSpace::unsigned(&[4]).unwrap();
        let c = SensitivityConfig::default();
        let out = choose_sensitivity(&f, &g, &space, &c).unwrap();
        let Verdict::Accepted(n) = out.verdict else {
            panic!("{:?}", out)
        };
        assert!(c.in_band(out.accepted_p().unwrap()));
        assert_eq!(out.trace.last().unwrap().exponent, n);
    }

    #[test]
    fn sign_flip_stops_the_search() {
        // P jumps from above the band to below it between adjacent exponents.
        let table_values = vec![0, 2, 0, 2, 0, 2, 0, 2];
        let f = line(table_values);
        let g = ExprModel::parse("0", Arity::new(1, 1)).unwrap();
        let space = ParameterSpace::unsigned(&[1]).unwrap();
        let c = SensitivityConfig {
            initial: InitialExponent::Fixed(3),
            ..Default::default()
        };
        // N=3: Q = |(1 + i)/2|^2 = 0.5 (in band). N=2: residual 2 is a half turn, Q = 0.
        let out = choose_sensitivity(&f, &g, &space, &c).unwrap();
        assert_eq!(out.verdict, Verdict::Accepted(3));
        let c = SensitivityConfig {
            initial: InitialExponent::Fixed(3),
            band: (0.55, 0.9),
            ..Default::default()
        };
        // N=3 below (0.5) -> N=4: Q = |(1 + e^{iπ/4})/2|^2 ≈ 0.854 in band.
        assert_eq!(choose_sensitivity(&f, &g, &space, &c).unwrap().verdict, Verdict::Accepted(4));
        let c = SensitivityConfig {
            initial: InitialExponent::Fixed(4),
            band: (0.6, 0.8),
            ..Default::default()
        };
        // N=4 above (0.854) -> N=3 below (0.5): flip.
        let out = choose_sensitivity(&f, &g, &space, &c).unwrap();
        assert_eq!(out.verdict, Verdict::SpaceCannotImprove);
        let d: Vec<Decision> = out.trace.iter().map(|t| t.decision).collect();
        assert_eq!(d, vec![Decision::Decrease, Decision::Oscillation]);
    }

    #[test]
    fn sampled_estimates_track_exact() {
        let f = line(vec![3, 9, -4, 11, 0, 7, 2, 5]);
        let g = ExprModel::parse("y1 * x1", Arity::new(1, 1)).unwrap();
        let space = ParameterSpace::unsigned(&[3]).unwrap();
        let table = ResidualTable::compute(&f, &g, &space).unwrap();
        let exact = Estimator::new(&table, EstimationMode::Exact).estimate(4).unwrap().0;
        let shots = min_shots(0.02, 0.01);
        let mut misses = 0;
        for seed in 0..100 {
            let mut e = Estimator::new(&table, EstimationMode::Sampled { shots, seed });
            let (p, counts) = e.estimate(4).unwrap();
            let counts = counts.unwrap();
            assert_eq!(counts.iter().sum::<u64>(), (p * shots as f64).round() as u64);
            if (p - exact).abs() > 0.02 {
                misses += 1;
            }
        }
        // At δ = 0.01 the expected number of misses is at most 1.
        assert!(misses <= 4, "{misses} misses");
    }

    #[test]
    fn verdict_round_trip() {
        for v in [Verdict::Accepted(9), Verdict::NoSensitivity, Verdict::SpaceCannotImprove] {
            assert_eq!(v.to_string().parse::<Verdict>().unwrap(), v);
        }
    }
}
