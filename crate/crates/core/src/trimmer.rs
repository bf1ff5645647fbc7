//! Narrowing parameter ranges by comparing the `Q` mass of overlapping
//! half-spaces.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::DataTable;
use crate::measure::{compensated_sum, CompensatedSum, ResidualTable, DEGENERATE_MASS};
use crate::model::{Sensitivity, TrialModel};
use crate::params::{Half, ParameterSpace};
use crate::sensitivity::{
    initial_exponent, min_shots, search, Decision, EstimationMode, Estimator, SensitivityConfig,
    SensitivityOutcome, TraceEntry, Verdict,
};

/// How `N` is picked before each trim step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityPolicy {
    /// Band search, starting from the last accepted exponent.
    Adaptive,
    Fixed(u32),
    /// `N = L + K - 1` with `K` the active bits of the field being trimmed.
    Linear { domain_bits: u32 },
}

impl fmt::Display for SensitivityPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SensitivityPolicy::Adaptive => f.write_str("adaptive"),
            SensitivityPolicy::Fixed(n) => write!(f, "fixed:{n}"),
            SensitivityPolicy::Linear { domain_bits } => write!(f, "linear:{domain_bits}"),
        }
    }
}

impl FromStr for SensitivityPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad sensitivity policy `{s}`"));
        match s.split_once(':') {
            None if s == "adaptive" => Ok(Self::Adaptive),
            Some(("fixed", n)) => n.parse().map(Self::Fixed).map_err(|_| bad()),
            Some(("linear", l)) => l
                .parse()
                .map(|domain_bits| Self::Linear { domain_bits })
                .map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrimConfig {
    pub threshold: f64,
    pub sensitivity: SensitivityConfig,
    pub policy: SensitivityPolicy,
    /// Conditional draws per trim step in sampled mode; `None` uses
    /// `4 ln(2/δ) / (2ε²)`.
    pub draws: Option<u64>,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self {
            threshold: 0.60,
            sensitivity: SensitivityConfig::default(),
            policy: SensitivityPolicy::Adaptive,
            draws: None,
        }
    }
}

impl TrimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.5 && self.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "threshold {} must lie in (0.5, 1]",
                self.threshold
            )));
        }
        if let SensitivityPolicy::Fixed(n) = self.policy {
            Sensitivity::new(n)?;
        }
        self.sensitivity.validate()
    }

    fn draws(&self) -> u64 {
        self.draws
            .unwrap_or_else(|| 4 * min_shots(self.sensitivity.epsilon, self.sensitivity.delta))
    }
}

/// Outcome of one trim step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrimChoice {
    Half(Half),
    /// A single-bit field fixed to this bit.
    Bit(bool),
    NoChoice,
}

impl TrimChoice {
    pub fn accepted(self) -> bool {
        self != TrimChoice::NoChoice
    }
}

impl fmt::Display for TrimChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrimChoice::Half(h) => f.write_str(h.as_str()),
            TrimChoice::Bit(b) => write!(f, "bit:{}", u8::from(*b)),
            TrimChoice::NoChoice => f.write_str("none"),
        }
    }
}

impl FromStr for TrimChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::NoChoice),
            "bit:0" => Ok(Self::Bit(false)),
            "bit:1" => Ok(Self::Bit(true)),
            h => h.parse().map(Self::Half),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrimStepReport {
    pub parameter: usize,
    pub exponent: u32,
    pub p_zero: f64,
    /// Four quarter ratios, or two bit ratios for a single-bit field.
    pub probabilities: Vec<f64>,
    pub choice: TrimChoice,
    pub active_bits_after: u32,
    pub range_after: (i64, i64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    /// A full pass trimmed nothing.
    Converged,
    Sensitivity(Verdict),
    /// A recoverable failure, e.g. a degenerate measure or a runaway search.
    Failed(String),
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Converged => f.write_str("converged"),
            Termination::Sensitivity(v) => write!(f, "sensitivity {v}"),
            Termination::Failed(m) => write!(f, "failed {m}"),
        }
    }
}

impl FromStr for Termination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "converged" {
            return Ok(Self::Converged);
        }
        if let Some(v) = s.strip_prefix("sensitivity ") {
            return v.parse().map(Self::Sensitivity);
        }
        s.strip_prefix("failed ")
            .map(|m| Self::Failed(m.to_string()))
            .ok_or_else(|| Error::Report(format!("unknown termination `{s}`")))
    }
}

/// One sensitivity decision, optionally followed by a trim.
#[derive(Debug, Clone, PartialEq)]
pub struct FitStep {
    pub parameter: usize,
    pub verdict: Verdict,
    pub trace: Vec<TraceEntry>,
    pub trim: Option<TrimStepReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub initial_space: ParameterSpace,
    pub steps: Vec<FitStep>,
    pub final_space: ParameterSpace,
    pub termination: Termination,
    /// Model evaluations spent, one per `(x, y)` pair per step.
    pub evaluations: u64,
}

impl FitReport {
    /// Reapply the recorded trim choices to the initial space.
    pub fn replay(&self) -> Result<ParameterSpace> {
        let mut space = self.initial_space.clone();
        for trim in self.steps.iter().filter_map(|s| s.trim.as_ref()) {
            apply_choice(&mut space, trim.parameter, trim.choice)?;
        }
        Ok(space)
    }

    pub fn accepted_trims(&self) -> usize {
        self.steps
            .iter()
            .filter_map(|s| s.trim.as_ref())
            .filter(|t| t.choice.accepted())
            .count()
    }
}

/// Pick the heaviest of Low = q0+q1, Mid = q1+q2, High = q2+q3 if it reaches
/// `threshold`. Ties go to Low, then Mid.
pub fn select_half(quarters: [f64; 4], threshold: f64) -> Option<(Half, f64)> {
    let candidates = [
        (Half::Low, quarters[0] + quarters[1]),
        (Half::Mid, quarters[1] + quarters[2]),
        (Half::High, quarters[2] + quarters[3]),
    ];
    let mut best = candidates[0];
    for c in &candidates[1..] {
        if c.1 > best.1 {
            best = *c;
        }
    }
    (best.1 >= threshold).then_some(best)
}

/// Narrow field `index` to `half`.
pub fn apply_half(space: &ParameterSpace, index: usize, half: Half) -> Result<ParameterSpace> {
    let field = space.field(index)?;
    if field.active_bits() < 2 {
        return Err(Error::Precondition(format!(
            "field `{}` has {} active bits; half-space trims need 2",
            field.name(),
            field.active_bits()
        )));
    }
    let mut out = space.clone();
    out.apply_half(index, half)?;
    Ok(out)
}

/// Record a trim outcome on the space. An accepted trim re-opens fields that an
/// earlier failed trim closed, since the tightened space may now separate them.
fn apply_choice(space: &mut ParameterSpace, index: usize, choice: TrimChoice) -> Result<()> {
    match choice {
        TrimChoice::NoChoice => {
            space.field_mut(index)?.set_finished(true);
            return Ok(());
        }
        TrimChoice::Half(h) => space.apply_half(index, h)?,
        TrimChoice::Bit(b) => {
            let field = space.field(index)?;
            if field.active_bits() != 1 {
                return Err(Error::Precondition(format!(
                    "field `{}` has {} active bits; a bit fix needs 1",
                    field.name(),
                    field.active_bits()
                )));
            }
            space.apply_half(index, if b { Half::High } else { Half::Low })?;
        }
    }
    for j in 0..space.arity() {
        if j != index {
            let f = space.field_mut(j)?;
            if f.active_bits() > 0 {
                f.set_finished(false);
            }
        }
    }
    Ok(())
}

fn bins_from_q(q: &[f64], bins: usize, bin_of: impl Fn(usize) -> usize) -> Result<Vec<f64>> {
    let mut sums = vec![CompensatedSum::default(); bins];
    for (raw, &v) in q.iter().enumerate() {
        sums[bin_of(raw)].add(v);
    }
    let total = compensated_sum(q.iter().copied());
    if q.is_empty() || !(total / q.len() as f64 > DEGENERATE_MASS) {
        return Err(Error::DegenerateMeasure(format!(
            "total Q mass {total:e} over {} parameter vectors",
            q.len()
        )));
    }
    Ok(sums.iter().map(|s| s.value() / total).collect())
}

fn bins_from_counts(counts: &[u64], bins: usize, bin_of: impl Fn(usize) -> usize) -> Result<Vec<f64>> {
    let mut out = vec![0u64; bins];
    for (raw, &c) in counts.iter().enumerate() {
        out[bin_of(raw)] += c;
    }
    let total: u64 = out.iter().sum();
    if total == 0 {
        return Err(Error::DegenerateMeasure("no z = 0 shots to condition on".into()));
    }
    Ok(out.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Bin of a raw index by the top `bits` active bits of field `index`.
fn top_bits(space: &ParameterSpace, index: usize, bits: u32) -> Result<impl Fn(usize) -> usize + '_> {
    let active = space.field(index)?.active_bits();
    if active < bits {
        return Err(Error::Precondition(format!(
            "field {index} has {active} active bits, need {bits}"
        )));
    }
    Ok(move |raw| (space.field_raw(raw, index) >> (active - bits)) as usize)
}

/// `r(Y_ij, Y)` for the four quarters of field `index`, by direct computation.
pub fn quarter_probabilities(
    f: &DataTable,
    g: &dyn TrialModel,
    space: &ParameterSpace,
    index: usize,
    exponent: u32,
) -> Result<[f64; 4]> {
    if space.field(index)?.finished() {
        return Err(Error::Precondition(format!("field {index} is finished")));
    }
    let table = ResidualTable::compute(f, g, space)?;
    let q = table.q_values(Sensitivity::new(exponent)?.modulus())?;
    let v = bins_from_q(&q, 4, top_bits(space, index, 2)?)?;
    Ok([v[0], v[1], v[2], v[3]])
}

struct StepInputs<'a> {
    space: &'a ParameterSpace,
    index: usize,
    exponent: u32,
    p_zero: f64,
    retained: Option<Vec<u64>>,
}

fn trim_with(estimator: &mut Estimator<'_>, step: StepInputs<'_>, config: &TrimConfig) -> Result<TrimStepReport> {
    let StepInputs {
        space,
        index,
        exponent,
        p_zero,
        retained,
    } = step;
    let active = space.field(index)?.active_bits();
    let bits = if active >= 2 { 2 } else { 1 };
    let bin_of = top_bits(space, index, bits)?;
    let probabilities = match config.sensitivity.mode {
        EstimationMode::Exact => {
            let q = estimator.table().q_values(Sensitivity::new(exponent)?.modulus())?;
            bins_from_q(&q, 1 << bits, bin_of)?
        }
        EstimationMode::Sampled { .. } => {
            let mut counts = estimator.conditional_draws(exponent, config.draws())?;
            if let Some(r) = retained {
                counts.iter_mut().zip(r).for_each(|(c, r)| *c += r);
            }
            bins_from_counts(&counts, 1 << bits, bin_of)?
        }
    };
    let choice = if bits == 2 {
        let quarters = [probabilities[0], probabilities[1], probabilities[2], probabilities[3]];
        match select_half(quarters, config.threshold) {
            Some((h, _)) => TrimChoice::Half(h),
            None => TrimChoice::NoChoice,
        }
    } else if probabilities[0] >= config.threshold {
        TrimChoice::Bit(false)
    } else if probabilities[1] >= config.threshold {
        TrimChoice::Bit(true)
    } else {
        TrimChoice::NoChoice
    };
    let mut after = space.clone();
    apply_choice(&mut after, index, choice)?;
    let field = after.field(index)?;
    Ok(TrimStepReport {
        parameter: index,
        exponent,
        p_zero,
        probabilities,
        choice,
        active_bits_after: field.active_bits(),
        range_after: (field.low(), field.high()),
    })
}

/// Two-way split of a field with one active bit.
pub fn trim_single_bit(
    f: &DataTable,
    g: &dyn TrialModel,
    space: &ParameterSpace,
    index: usize,
    exponent: u32,
    config: &TrimConfig,
) -> Result<TrimStepReport> {
    config.validate()?;
    if space.field(index)?.active_bits() != 1 {
        return Err(Error::Precondition(format!("field {index} must have exactly 1 active bit")));
    }
    let table = ResidualTable::compute(f, g, space)?;
    let mut estimator = Estimator::new(&table, config.sensitivity.mode);
    let p_zero = estimator.estimate(exponent)?.0;
    trim_with(
        &mut estimator,
        StepInputs {
            space,
            index,
            exponent,
            p_zero,
            retained: None,
        },
        config,
    )
}

fn step_mode(mode: EstimationMode, step: u64) -> EstimationMode {
    match mode {
        EstimationMode::Exact => EstimationMode::Exact,
        EstimationMode::Sampled { shots, seed } => EstimationMode::Sampled {
            shots,
            seed: seed.wrapping_add(step.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        },
    }
}

fn pinned(estimator: &mut Estimator<'_>, exponent: u32) -> Result<SensitivityOutcome> {
    let (p, retained) = estimator.estimate(exponent)?;
    Ok(SensitivityOutcome {
        verdict: Verdict::Accepted(exponent),
        trace: vec![TraceEntry {
            exponent,
            p_zero: p,
            decision: Decision::Accept,
        }],
        retained,
    })
}

fn recoverable(e: &Error) -> bool {
    matches!(e, Error::DegenerateMeasure(_) | Error::NonTermination { .. })
}

/// Trim parameters in declaration order until a full pass changes nothing or
/// the sensitivity search gives up.
pub fn run_fit(
    f: &DataTable,
    g: &dyn TrialModel,
    initial: &ParameterSpace,
    config: &TrimConfig,
) -> Result<FitReport> {
    config.validate()?;
    let mut space = initial.clone();
    let mut steps = Vec::new();
    let mut evaluations = 0u64;
    let mut last_exponent: Option<u32> = None;
    let termination = 'fit: loop {
        let mut trimmed = false;
        for index in 0..space.arity() {
            if space.field(index)?.finished() {
                continue;
            }
            let table = ResidualTable::compute(f, g, &space)?;
            evaluations += table.evaluations();
            let mut estimator =
                Estimator::new(&table, step_mode(config.sensitivity.mode, steps.len() as u64));
            let outcome = match config.policy {
                SensitivityPolicy::Adaptive => {
                    let start = match last_exponent {
                        Some(n) => n,
                        None => initial_exponent(f, g, &space, config.sensitivity.initial)?,
                    };
                    search(&mut estimator, start, &config.sensitivity)
                }
                SensitivityPolicy::Fixed(n) => pinned(&mut estimator, n),
                SensitivityPolicy::Linear { domain_bits } => {
                    let k = space.field(index)?.active_bits();
                    pinned(&mut estimator, (domain_bits + k).saturating_sub(1).max(1))
                }
            };
            let outcome = match outcome {
                Ok(o) => o,
                Err(e) if recoverable(&e) => break 'fit Termination::Failed(e.to_string()),
                Err(e) => return Err(e),
            };
            let mut step = FitStep {
                parameter: index,
                verdict: outcome.verdict,
                trace: outcome.trace.clone(),
                trim: None,
            };
            let Verdict::Accepted(n) = outcome.verdict else {
                steps.push(step);
                break 'fit Termination::Sensitivity(outcome.verdict);
            };
            last_exponent = Some(n);
            let inputs = StepInputs {
                space: &space,
                index,
                exponent: n,
                p_zero: outcome.accepted_p().unwrap_or(0.0),
                retained: outcome.retained,
            };
            let report = match trim_with(&mut estimator, inputs, config) {
                Ok(r) => r,
                Err(e) if recoverable(&e) => {
                    steps.push(step);
                    break 'fit Termination::Failed(e.to_string());
                }
                Err(e) => return Err(e),
            };
            apply_choice(&mut space, index, report.choice)?;
            let accepted = report.choice.accepted();
            step.trim = Some(report);
            steps.push(step);
            if accepted {
                trimmed = true;
                break;
            }
        }
        if !trimmed {
            break Termination::Converged;
        }
    };
    Ok(FitReport {
        initial_space: initial.clone(),
        steps,
        final_space: space,
        termination,
        evaluations,
    })
}
