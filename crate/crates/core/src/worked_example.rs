//! The two-parameter nonlinear fit `g = y1*x1^2 + y2*x2` against noisy
//! samples of `x1^2 + 16*x2` on a 32×32 grid, with the reference trace it is
//! compared to.

use rayon::prelude::*;

use crate::data::generate;
use crate::error::Result;
use crate::expr::Arity;
use crate::grid::{DataTable, NoiseKind, NoiseSpec};
use crate::model::ExprModel;
use crate::params::{Half, ParameterSpace};
use crate::trimmer::{run_fit, FitReport, TrimChoice, TrimConfig};

pub const DATA_EXPRESSION: &str = "x1^2 + 16*x2";
pub const TRIAL_EXPRESSION: &str = "y1*x1^2 + y2*x2";
pub const NOISE_HALF_WIDTH: i64 = 30;
pub const SIDE: usize = 32;
pub const PARAM_BITS: [u32; 2] = [3, 5];

/// One step of the reference run: accepted `P(z = 0)`, the split
/// probabilities and the decision taken.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceStep {
    pub parameter: usize,
    pub p_zero: f64,
    pub probabilities: &'static [f64],
    pub choice: TrimChoice,
}

/// A single-seed reference run. Its decimals depend on an unknown noise draw,
/// so comparisons are on decisions and on average deviations.
pub const REFERENCE_TRACE: [ReferenceStep; 8] = [
    ReferenceStep {
        parameter: 0,
        p_zero: 0.265781,
        probabilities: &[0.643622, 0.230168, 0.0778675, 0.0483422],
        choice: TrimChoice::Half(Half::Low),
    },
    ReferenceStep {
        parameter: 0,
        p_zero: 0.448745,
        probabilities: &[0.217404, 0.519182, 0.217218, 0.046196],
        choice: TrimChoice::Half(Half::Low),
    },
    ReferenceStep {
        parameter: 0,
        p_zero: 0.448745,
        probabilities: &[0.295151, 0.704849],
        choice: TrimChoice::Bit(true),
    },
    ReferenceStep {
        parameter: 1,
        p_zero: 0.431486,
        probabilities: &[0.0546121, 0.40125, 0.453112, 0.0910255],
        choice: TrimChoice::Half(Half::Mid),
    },
    ReferenceStep {
        parameter: 1,
        p_zero: 0.375476,
        probabilities: &[0.0398828, 0.371314, 0.475369, 0.113435],
        choice: TrimChoice::Half(Half::Mid),
    },
    ReferenceStep {
        parameter: 1,
        p_zero: 0.206041,
        probabilities: &[0.0170483, 0.300177, 0.511306, 0.171468],
        choice: TrimChoice::Half(Half::Mid),
    },
    ReferenceStep {
        parameter: 1,
        p_zero: 0.334398,
        probabilities: &[0.115462, 0.254449, 0.336552, 0.293536],
        choice: TrimChoice::Half(Half::High),
    },
    ReferenceStep {
        parameter: 1,
        p_zero: 0.334398,
        probabilities: &[0.534135, 0.465865],
        choice: TrimChoice::NoChoice,
    },
];

pub fn data(seed: u64, constant: i64) -> Result<DataTable> {
    let expression = if constant == 0 {
        DATA_EXPRESSION.to_string()
    } else {
        format!("{DATA_EXPRESSION} + ({constant})")
    };
    generate(
        &expression,
        &[SIDE, SIDE],
        &NoiseSpec {
            kind: NoiseKind::Uniform {
                half_width: NOISE_HALF_WIDTH,
            },
            seed,
        },
    )
}

pub fn model() -> Result<ExprModel> {
    ExprModel::parse(TRIAL_EXPRESSION, Arity::new(2, 2))
}

pub fn space() -> Result<ParameterSpace> {
    ParameterSpace::unsigned(&PARAM_BITS)
}

#[derive(Debug, Clone)]
pub struct ExampleRun {
    pub seed: u64,
    pub report: FitReport,
    /// Final `y1 = 1`, `y2` range contains 16 and spans at most 4 values.
    pub success: bool,
    /// Final `y2` range is inside `[15, 18]` and contains 16.
    pub within_15_18: bool,
    /// Whether each trim decision matches the reference, in order.
    pub decisions_match: bool,
    /// Absolute deviations from the reference per trim step: `P(z = 0)` and
    /// the mean over split probabilities. `None` where the split kinds differ.
    pub step_deviations: Vec<Option<(f64, f64)>>,
}

impl ExampleRun {
    /// Mean absolute deviation over every aligned number (`P` and splits).
    pub fn mean_deviation(&self) -> Option<f64> {
        let (sum, n) = self.deviation_terms();
        (n > 0).then(|| sum / n as f64)
    }

    fn deviation_terms(&self) -> (f64, usize) {
        let mut sum = 0.0;
        let mut n = 0;
        for (t, r) in self.trims().zip(REFERENCE_TRACE.iter()) {
            if t.probabilities.len() != r.probabilities.len() {
                continue;
            }
            sum += (t.p_zero - r.p_zero).abs();
            sum += t
                .probabilities
                .iter()
                .zip(r.probabilities)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
            n += 1 + r.probabilities.len();
        }
        (sum, n)
    }

    pub fn trims(&self) -> impl Iterator<Item = &crate::trimmer::TrimStepReport> {
        self.report.steps.iter().filter_map(|s| s.trim.as_ref())
    }
}

pub fn run(seed: u64, constant: i64, config: &TrimConfig) -> Result<ExampleRun> {
    let f = data(seed, constant)?;
    let g = model()?;
    let report = run_fit(&f, &g, &space()?, config)?;
    let y1 = &report.final_space.fields()[0];
    let y2 = &report.final_space.fields()[1];
    let y2_holds_16 = y2.low() <= 16 && 16 <= y2.high();
    let success = y1.low() == 1 && y1.high() == 1 && y2_holds_16 && y2.high() - y2.low() < 4;
    let within_15_18 = y2_holds_16 && y2.low() >= 15 && y2.high() <= 18;
    let mut run = ExampleRun {
        seed,
        report,
        success,
        within_15_18,
        decisions_match: false,
        step_deviations: Vec::new(),
    };
    let trims: Vec<_> = run.trims().cloned().collect();
    run.decisions_match = trims.len() == REFERENCE_TRACE.len()
        && trims
            .iter()
            .zip(REFERENCE_TRACE.iter())
            .all(|(t, r)| t.choice == r.choice && t.parameter == r.parameter);
    run.step_deviations = trims
        .iter()
        .zip(REFERENCE_TRACE.iter())
        .map(|(t, r)| {
            if t.probabilities.len() != r.probabilities.len() {
                return None;
            }
            let split = t
                .probabilities
                .iter()
                .zip(r.probabilities)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / r.probabilities.len() as f64;
            Some(((t.p_zero - r.p_zero).abs(), split))
        })
        .collect();
    Ok(run)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub runs: usize,
    pub success_rate: f64,
    pub within_15_18_rate: f64,
    pub decision_match_rate: f64,
    /// Mean absolute deviation over all aligned numbers of all runs.
    pub mean_deviation: f64,
    /// Per reference step: mean `|ΔP|` and mean split deviation across runs.
    pub per_step: Vec<(f64, f64)>,
}

pub fn summarize(runs: &[ExampleRun]) -> Summary {
    let n = runs.len().max(1) as f64;
    let rate = |pred: fn(&ExampleRun) -> bool| runs.iter().filter(|r| pred(r)).count() as f64 / n;
    let (sum, count) = runs
        .iter()
        .map(ExampleRun::deviation_terms)
        .fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let per_step = (0..REFERENCE_TRACE.len())
        .map(|i| {
            let vals: Vec<(f64, f64)> = runs.iter().filter_map(|r| r.step_deviations.get(i).copied().flatten()).collect();
            let m = vals.len().max(1) as f64;
            (
                vals.iter().map(|v| v.0).sum::<f64>() / m,
                vals.iter().map(|v| v.1).sum::<f64>() / m,
            )
        })
        .collect();
    Summary {
        runs: runs.len(),
        success_rate: rate(|r| r.success),
        within_15_18_rate: rate(|r| r.within_15_18),
        decision_match_rate: rate(|r| r.decisions_match),
        mean_deviation: if count == 0 { f64::NAN } else { sum / count as f64 },
        per_step,
    }
}

/// Run the example for seeds `0..seeds`, in parallel across seeds.
pub fn run_many(seeds: u64, constant: i64, config: &TrimConfig) -> Result<Vec<ExampleRun>> {
    (0..seeds).into_par_iter().map(|s| run(s, constant, config)).collect()
}
