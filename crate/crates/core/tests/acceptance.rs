//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints a PASS/FAIL line in the normal `cargo test` output.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qmodel::analysis::{
    best_half, half_space_weights, linear_instance, multivariate_p_zero, p_zero_integral, ystar_grid,
};
use qmodel::cli::fit_document;
use qmodel::config::FileConfig;
use qmodel::crosscheck::run_suite;
use qmodel::measure::{
    certificate_for_residuals, check_certificate, expected_q, q_from_residuals, DEFAULT_CERTIFICATE_ITERATIONS,
};
use qmodel::report::without_timing;
use qmodel::trimmer::{quarter_probabilities, run_fit, select_half, SensitivityPolicy, Termination, TrimConfig};
use qmodel::worked_example::{run_many, summarize};
use qmodel::{Arity, DataTable, FnModel, Half, ParameterSpace};

// Tolerances and sizes fixed by the acceptance criteria.
const ORACLE_TOLERANCE: f64 = 1e-9;
const ORACLE_MIN_CASES: usize = 100;
const INVARIANCE_TOLERANCE: f64 = 1e-12;
const LARGE_MODULUS_FLOOR: f64 = 1.0 - 1e-4;
const SMALL_MODULUS_PAIRS: usize = 200;
const SMALL_MODULUS_SIGMAS: f64 = 3.0;
const SANDWICH_PAIRS: usize = 200;
const SANDWICH_MAX_POINTS: usize = 64;
const SANDWICH_SLACK: f64 = 1e-12;
const LINEAR_P_FLOOR: f64 = 0.20;
const LINEAR_WEIGHT_FLOOR: f64 = 0.70;
const LINEAR_REL_TOLERANCE: f64 = 0.03;
const LINEAR_WEIGHT_ABS_TOLERANCE: f64 = 0.03;
const MULTI_REL_TOLERANCE: f64 = 0.05;
const EXAMPLE_SEEDS: u64 = 50;
const EXAMPLE_SUCCESS_RATE: f64 = 0.90;
const EXAMPLE_MEAN_DEVIATION: f64 = 0.05;
const DELTA_SIDE: usize = 64;
const DELTA_BITS: u32 = 6;
const DELTA_UNIFORMITY: f64 = 0.02;
const TRIM_THRESHOLD: f64 = 0.60;
const ONE_MINUTE: Duration = Duration::from_secs(60);
const FIVE_MINUTES: Duration = Duration::from_secs(300);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < budget, || format!("took {t:.1?}, budget {budget:?}"))?;
    Ok(t)
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

/// Statevector circuit against the direct computation.
fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let cases = run_suite(ORACLE_MIN_CASES + 50, 0xACCE55).map_err(e)?;
    let worst = cases.iter().fold(0.0f64, |m, c| m.max(c.p_error).max(c.conditional_error));
    let bad = cases.iter().filter(|c| !c.agrees(ORACLE_TOLERANCE)).count();
    ensure(cases.iter().all(|c| c.points <= 16 && c.params <= 16 && c.exponent <= 6), || {
        "instance outside |X|,|Y| <= 16, N <= 6".into()
    })?;
    ensure(bad == 0, || format!("{bad} of {} cases disagree, worst {worst:e}", cases.len()))?;
    let t = within_budget(start, ONE_MINUTE)?;
    Ok(format!("{} cases, worst difference {worst:.2e}, {t:.1?}", cases.len()))
}

fn random_values(rng: &mut ChaCha8Rng, n: usize, bound: i64) -> Vec<i64> {
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

fn shape_measure_limits() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    let mut worst_shift = 0.0f64;
    for _ in 0..500 {
        let n = rng.gen_range(1..=64);
        let f = random_values(&mut rng, n, 100_000);
        let g = random_values(&mut rng, n, 100_000);
        let c = rng.gen_range(-1_000_000_000i64..=1_000_000_000);
        let m = 2f64.powi(rng.gen_range(1..=30));
        let base: Vec<i64> = f.iter().zip(&g).map(|(a, b)| a - b).collect();
        let moved: Vec<i64> = f.iter().zip(&g).map(|(a, b)| (a + c) - b).collect();
        worst_shift = worst_shift.max((q_from_residuals(&base, m) - q_from_residuals(&moved, m)).abs());
    }
    ensure(worst_shift <= INVARIANCE_TOLERANCE, || format!("shift changed Q by {worst_shift:e}"))?;

    let big = 2f64.powi(40);
    let mut least_big = 1.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(1..=64);
        let d: Vec<i64> = random_values(&mut rng, n, 1_000_000);
        least_big = least_big.min(q_from_residuals(&d, big));
    }
    ensure(least_big >= LARGE_MODULUS_FLOOR, || format!("Q at M=2^40 fell to {least_big}"))?;

    // An irrational modulus far below 1 spreads integer differences over the
    // circle, so Q behaves like the squared mean of random unit phasors.
    let small = std::f64::consts::SQRT_2 / 1000.0;
    let points = 32usize;
    let qs: Vec<f64> = (0..SMALL_MODULUS_PAIRS)
        .map(|_| {
            let d = random_values(&mut rng, points, 1_000_000);
            q_from_residuals(&d, small)
        })
        .collect();
    let n = qs.len() as f64;
    let mean = qs.iter().sum::<f64>() / n;
    let var = qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let target = 1.0 / points as f64;
    ensure((mean - target).abs() <= SMALL_MODULUS_SIGMAS * se, || {
        format!("small-M mean Q {mean:.5} vs {target:.5}, SE {se:.5}")
    })?;

    let t = within_budget(start, ONE_MINUTE)?;
    Ok(format!(
        "shift {worst_shift:.1e}, min Q(2^40) {least_big:.8}, small-M mean {mean:.4} vs {target:.4} (SE {se:.4}), {t:.1?}"
    ))
}

fn bound_sandwich() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = Vec::new();
    let mut worst_ratio = 0.0f64;
    for case in 0..SANDWICH_PAIRS {
        let n = rng.gen_range(2..=SANDWICH_MAX_POINTS);
        let bound = [10, 1_000, 1_000_000][case % 3];
        let f = random_values(&mut rng, n, bound);
        let g = random_values(&mut rng, n, bound);
        let r: Vec<i64> = f.iter().zip(&g).map(|(a, b)| a - b).collect();
        match certificate_for_residuals(&r, DEFAULT_CERTIFICATE_ITERATIONS) {
            Ok(cert) => {
                let check = check_certificate(&r, &cert);
                worst_ratio = worst_ratio.max(check.max_normalized);
                if !check.holds(SANDWICH_SLACK) {
                    violations.push(format!("case {case}: {check:?}"));
                }
            }
            Err(err) => violations.push(format!("case {case}: {err}")),
        }
    }
    ensure(violations.is_empty(), || format!("{} violations, first {}", violations.len(), violations[0]))?;
    Ok(format!("{SANDWICH_PAIRS} pairs, max |d|/M {worst_ratio:.4}, zero violations"))
}

/// Relative error of the window integral against the exact engine on the
/// noiseless line `f(x) = y' x`.
fn linear_error(domain_bits: u32, param_bits: u32, slope: i64) -> Result<(f64, f64, [f64; 4]), String> {
    let (f, g, space) = linear_instance(domain_bits, param_bits, &[slope]).map_err(e)?;
    let n = domain_bits + param_bits - 1;
    let exact = expected_q(&f, &g, &space, 2f64.powi(n as i32)).map_err(e)?;
    let ystar = slope as f64 / (1i64 << param_bits) as f64;
    let analytic = p_zero_integral(-1, ystar).map_err(e)?;
    let quarters = quarter_probabilities(&f, &g, &space, 0, n).map_err(e)?;
    Ok(((exact - analytic).abs() / analytic, exact, quarters))
}

fn linear_claims() -> Outcome {
    let mut min_p = f64::INFINITY;
    let mut min_w = f64::INFINITY;
    for y in ystar_grid(100) {
        min_p = min_p.min(p_zero_integral(-1, y).map_err(e)?);
        min_w = min_w.min(best_half(half_space_weights(-1, y).map_err(e)?).1);
    }
    ensure(min_p > LINEAR_P_FLOOR, || format!("min P {min_p} at r=-1"))?;
    ensure(min_w >= LINEAR_WEIGHT_FLOOR, || format!("min max-weight {min_w} at r=-1"))?;

    // y* in {0, ±1/8, ±1/4} with K = 5.
    let mut worst_rel = 0.0f64;
    for slope in [0, 4, -4, 8, -8] {
        let (rel, _, _) = linear_error(8, 5, slope)?;
        worst_rel = worst_rel.max(rel);
    }
    ensure(worst_rel <= LINEAR_REL_TOLERANCE, || format!("L=8 relative error {worst_rel}"))?;

    let (_, _, quarters) = linear_error(8, 5, 8)?;
    let halves = [quarters[0] + quarters[1], quarters[1] + quarters[2], quarters[2] + quarters[3]];
    let weights = half_space_weights(-1, 0.25).map_err(e)?;
    let weight_gap = halves.iter().zip(&weights).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    ensure(weight_gap <= LINEAR_WEIGHT_ABS_TOLERANCE, || format!("half weights differ by {weight_gap}"))?;
    ensure(best_half(halves).0 == best_half(weights).0, || "heaviest half differs".into())?;
    ensure(select_half(quarters, TRIM_THRESHOLD).map(|h| h.0) == Some(Half::High), || {
        "exact engine does not pick High at y*=1/4".into()
    })?;

    let (at8, _, _) = linear_error(8, 5, 0)?;
    let (at10, _, _) = linear_error(10, 5, 0)?;
    ensure(at10 < at8, || format!("no improvement: L=8 {at8:e}, L=10 {at10:e}"))?;

    Ok(format!(
        "min P {min_p:.4}, min weight {min_w:.4}, L=8 worst rel {worst_rel:.4}, y*=0 rel {at8:.1e} -> {at10:.1e} at L=10"
    ))
}

fn multivariate() -> Outcome {
    let mut worst = 0.0f64;
    for slopes in [[0i64, 0], [2, -3], [-4, 1]] {
        let (f, g, space) = linear_instance(6, 4, &slopes).map_err(e)?;
        let exact = expected_q(&f, &g, &space, 2f64.powi(6 + 4 - 1)).map_err(e)?;
        let ystars: Vec<f64> = slopes.iter().map(|&s| s as f64 / 16.0).collect();
        let analytic = multivariate_p_zero(-1, &ystars).map_err(e)?;
        worst = worst.max((exact - analytic).abs() / analytic);
    }
    ensure(worst <= MULTI_REL_TOLERANCE, || format!("d=2 relative error {worst}"))?;

    let one = p_zero_integral(-1, 0.0).map_err(e)?;
    for d in 1..=6 {
        let prod = multivariate_p_zero(-1, &vec![0.0; d]).map_err(e)?;
        let power = one.powi(d as i32);
        ensure((prod - power).abs() <= 1e-12 * power, || format!("d={d}: {prod} vs {power}"))?;
    }

    // The exact engine factorizes the same way on separable data.
    let exact_at = |d: usize| -> Result<f64, String> {
        let (f, g, space) = linear_instance(3, 3, &vec![0; d]).map_err(e)?;
        expected_q(&f, &g, &space, 2f64.powi(5)).map_err(e)
    };
    let base = exact_at(1)?;
    for d in 2..=3 {
        let v = exact_at(d)?;
        let power = base.powi(d as i32);
        ensure((v - power).abs() <= 1e-9 * power, || format!("exact d={d}: {v} vs {power}"))?;
    }
    Ok(format!("d=2 worst rel {worst:.4}, P_d = P_1^d for d <= 6 (exact engine d <= 3)"))
}

fn worked_example() -> Outcome {
    let start = Instant::now();
    let runs = run_many(EXAMPLE_SEEDS, 0, &TrimConfig::default()).map_err(e)?;
    let s = summarize(&runs);
    ensure(s.success_rate >= EXAMPLE_SUCCESS_RATE, || format!("success rate {}", s.success_rate))?;
    ensure(s.mean_deviation <= EXAMPLE_MEAN_DEVIATION, || format!("mean deviation {}", s.mean_deviation))?;
    let t = within_budget(start, FIVE_MINUTES)?;
    Ok(format!(
        "{} seeds, success {:.2}, mean deviation {:.4}, {t:.1?}",
        s.runs, s.success_rate, s.mean_deviation
    ))
}

fn delta_instance() -> Result<(DataTable, FnModel, ParameterSpace), String> {
    let target = 37i64;
    let values = (0..DELTA_SIDE as i64).map(|x| i64::from(x == target)).collect();
    let f = DataTable::from_values(vec![DELTA_SIDE], values).map_err(e)?;
    let g = FnModel::new("indicator", Arity::new(1, 1), |x, y| i64::from(x[0] == y[0]));
    let space = ParameterSpace::unsigned(&[DELTA_BITS]).map_err(e)?;
    Ok((f, g, space))
}

fn delta_function() -> Outcome {
    let (f, g, space) = delta_instance()?;
    let mut worst = 0.0f64;
    for n in 1..=12 {
        let q = quarter_probabilities(&f, &g, &space, 0, n).map_err(e)?;
        worst = q.iter().fold(worst, |m, p| m.max((p - 0.25).abs()));
    }
    ensure(worst <= DELTA_UNIFORMITY, || format!("quarter deviates {worst} from 1/4"))?;

    let mut verdicts = Vec::new();
    let policies = [SensitivityPolicy::Adaptive]
        .into_iter()
        .chain((1..=12).map(SensitivityPolicy::Fixed));
    for policy in policies {
        let config = TrimConfig {
            threshold: TRIM_THRESHOLD,
            policy,
            ..Default::default()
        };
        let report = run_fit(&f, &g, &space, &config).map_err(e)?;
        ensure(report.accepted_trims() == 0, || format!("{policy:?} accepted a trim"))?;
        ensure(report.final_space.describe() == space.describe(), || format!("{policy:?} changed the space"))?;
        if matches!(policy, SensitivityPolicy::Adaptive) {
            ensure(!matches!(report.termination, Termination::Failed(_)), || {
                format!("adaptive run failed: {}", report.termination)
            })?;
            verdicts.push(report.termination.to_string());
        }
    }
    Ok(format!("max |quarter - 1/4| {worst:.4}, no trims (adaptive: {})", verdicts.join(",")))
}

fn determinism() -> Outcome {
    let config = FileConfig {
        expr: Some("x1^2 + 16*x2".into()),
        dims: Some("32x32".into()),
        noise: Some("uniform:30".into()),
        trial: Some("y1*x1^2 + y2*x2".into()),
        bits: Some("y1:3,y2:5".into()),
        seed: Some(11),
        ..Default::default()
    }
    .resolve()
    .map_err(e)?;
    let render = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(e)?;
        let doc = pool.install(|| fit_document(&config)).map_err(e)?;
        Ok(without_timing(&doc.to_text()))
    };
    let one = render(1)?;
    let again = render(1)?;
    let eight = render(8)?;
    ensure(one == again, || "repeat run at 1 thread differs".into())?;
    ensure(one == eight, || "1 and 8 threads differ".into())?;
    Ok(format!("{} bytes identical at 1 and 8 threads", one.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("shape measure invariance and limits", shape_measure_limits),
        ("bound sandwich", bound_sandwich),
        ("linear regression claims", linear_claims),
        ("multivariate product form", multivariate),
        ("worked nonlinear example", worked_example),
        ("delta-function negative case", delta_function),
        ("determinism across threads", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
