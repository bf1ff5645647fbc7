//! Line-based text serialization of fit reports.
//!
//! ```text
//! qmodel-report v1
//! [config]
//! key = value
//! [initial-space]
//! field name=y1 bits=3 prefix=- offset=0 signed_offset=0 finished=0
//! [steps]
//! step parameter=0 verdict=accepted:11
//! trace exponent=11 p=0.2567 decision=accept
//! trim parameter=0 exponent=11 p=0.2567 probabilities=0.64,0.23,0.08,0.05 choice=low active_after=2 range=0..3
//! [final-space]
//! field ...
//! [result]
//! termination = converged
//! final = y1=1 y2=16..17
//! [telemetry]
//! evaluations = 1234
//! wall_clock_ms = 56
//! ```
//!
//! Reals are written in shortest round-trip form, so parsing a report gives
//! back exactly the values that were written. `wall_clock_ms` is the only
//! line that varies between identical runs.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::params::{ParamField, ParameterSpace};
use crate::sensitivity::{Decision, TraceEntry, Verdict};
use crate::trimmer::{FitReport, FitStep, Termination, TrimStepReport};

pub const SCHEMA: &str = "qmodel-report v1";
pub const TIMING_KEY: &str = "wall_clock_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct Telemetry {
    pub evaluations: u64,
    pub wall_clock_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportDocument {
    pub config: Vec<(String, String)>,
    pub fit: FitReport,
    pub telemetry: Telemetry,
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

fn write_space(out: &mut String, space: &ParameterSpace) {
    for f in space.fields() {
        let prefix: String = if f.fixed_prefix().is_empty() {
            "-".into()
        } else {
            f.fixed_prefix().iter().map(|&b| if b { '1' } else { '0' }).collect()
        };
        let _ = writeln!(
            out,
            "field name={} bits={} prefix={} offset={} signed_offset={} finished={}",
            f.name(),
            f.total_bits(),
            prefix,
            f.pre_eval_offset(),
            f.signed_offset(),
            u8::from(f.marked_finished())
        );
    }
}

fn join_reals(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl ReportDocument {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(SCHEMA);
        out.push('\n');
        out.push_str("[config]\n");
        for (k, v) in &self.config {
            let _ = writeln!(out, "{k} = {}", one_line(v));
        }
        out.push_str("[initial-space]\n");
        write_space(&mut out, &self.fit.initial_space);
        out.push_str("[steps]\n");
        for step in &self.fit.steps {
            let _ = writeln!(out, "step parameter={} verdict={}", step.parameter, step.verdict);
            for t in &step.trace {
                let _ = writeln!(
                    out,
                    "trace exponent={} p={} decision={}",
                    t.exponent,
                    t.p_zero,
                    t.decision.as_str()
                );
            }
            if let Some(t) = &step.trim {
                let _ = writeln!(
                    out,
                    "trim parameter={} exponent={} p={} probabilities={} choice={} active_after={} range={}..{}",
                    t.parameter,
                    t.exponent,
                    t.p_zero,
                    join_reals(&t.probabilities),
                    t.choice,
                    t.active_bits_after,
                    t.range_after.0,
                    t.range_after.1
                );
            }
        }
        out.push_str("[final-space]\n");
        write_space(&mut out, &self.fit.final_space);
        out.push_str("[result]\n");
        let _ = writeln!(out, "termination = {}", one_line(&self.fit.termination.to_string()));
        let _ = writeln!(out, "final = {}", self.fit.final_space.describe());
        let _ = writeln!(out, "evaluations = {}", self.fit.evaluations);
        out.push_str("[telemetry]\n");
        let _ = writeln!(out, "evaluations = {}", self.telemetry.evaluations);
        let _ = writeln!(out, "{TIMING_KEY} = {}", self.telemetry.wall_clock_ms);
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).document()
    }
}

/// The report text with timing lines removed, for determinism comparisons.
pub fn without_timing(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with(TIMING_KEY))
        .flat_map(|l| [l, "\n"])
        .collect()
}

struct Parser<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

fn err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Report(format!("line {}: {msg}", line + 1))
}

/// `key=value` tokens after a leading tag word.
fn tokens(line: usize, rest: &str) -> Result<HashMap<&str, &str>> {
    rest.split_whitespace()
        .map(|t| t.split_once('=').ok_or_else(|| err(line, format!("expected key=value, found `{t}`"))))
        .collect()
}

fn get<T: std::str::FromStr>(line: usize, map: &HashMap<&str, &str>, key: &str) -> Result<T> {
    let v = map.get(key).ok_or_else(|| err(line, format!("missing `{key}`")))?;
    v.parse().map_err(|_| err(line, format!("bad `{key}` value `{v}`")))
}

fn parse_field(line: usize, rest: &str) -> Result<ParamField> {
    let m = tokens(line, rest)?;
    let name: String = get(line, &m, "name")?;
    let prefix: String = get(line, &m, "prefix")?;
    let bits = if prefix == "-" {
        Vec::new()
    } else {
        prefix
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(err(line, "prefix must be binary")),
            })
            .collect::<Result<_>>()?
    };
    let finished: u8 = get(line, &m, "finished")?;
    ParamField::from_parts(
        name,
        get(line, &m, "bits")?,
        bits,
        get(line, &m, "offset")?,
        get(line, &m, "signed_offset")?,
        finished == 1,
    )
    .map_err(|e| err(line, e))
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate().peekable(),
        }
    }

    fn expect(&mut self, want: &str) -> Result<usize> {
        match self.lines.next() {
            Some((i, l)) if l == want => Ok(i),
            Some((i, l)) => Err(err(i, format!("expected `{want}`, found `{l}`"))),
            None => Err(Error::Report(format!("unexpected end of report, expected `{want}`"))),
        }
    }

    /// Lines up to the next section header.
    fn body(&mut self) -> Vec<(usize, &'a str)> {
        let mut out = Vec::new();
        while let Some(&(i, l)) = self.lines.peek() {
            if l.starts_with('[') {
                break;
            }
            self.lines.next();
            if !l.trim().is_empty() {
                out.push((i, l));
            }
        }
        out
    }

    fn pairs(&mut self) -> Result<Vec<(usize, String, String)>> {
        self.body()
            .into_iter()
            .map(|(i, l)| {
                l.split_once(" = ")
                    .map(|(k, v)| (i, k.to_string(), v.to_string()))
                    .ok_or_else(|| err(i, format!("expected `key = value`, found `{l}`")))
            })
            .collect()
    }

    fn space(&mut self) -> Result<ParameterSpace> {
        let fields = self
            .body()
            .into_iter()
            .map(|(i, l)| match l.strip_prefix("field ") {
                Some(rest) => parse_field(i, rest),
                None => Err(err(i, "expected a field line")),
            })
            .collect::<Result<Vec<_>>>()?;
        ParameterSpace::new(fields)
    }

    fn steps(&mut self) -> Result<Vec<FitStep>> {
        let mut steps: Vec<FitStep> = Vec::new();
        for (i, l) in self.body() {
            let (tag, rest) = l.split_once(' ').unwrap_or((l, ""));
            let m = tokens(i, rest)?;
            match tag {
                "step" => steps.push(FitStep {
                    parameter: get(i, &m, "parameter")?,
                    verdict: get::<Verdict>(i, &m, "verdict")?,
                    trace: Vec::new(),
                    trim: None,
                }),
                "trace" => {
                    let step = steps.last_mut().ok_or_else(|| err(i, "trace before any step"))?;
                    step.trace.push(TraceEntry {
                        exponent: get(i, &m, "exponent")?,
                        p_zero: get(i, &m, "p")?,
                        decision: get::<Decision>(i, &m, "decision")?,
                    });
                }
                "trim" => {
                    let step = steps.last_mut().ok_or_else(|| err(i, "trim before any step"))?;
                    let probs: String = get(i, &m, "probabilities")?;
                    let range: String = get(i, &m, "range")?;
                    let (lo, hi) = range.split_once("..").ok_or_else(|| err(i, "bad range"))?;
                    step.trim = Some(TrimStepReport {
                        parameter: get(i, &m, "parameter")?,
                        exponent: get(i, &m, "exponent")?,
                        p_zero: get(i, &m, "p")?,
                        probabilities: probs
                            .split(',')
                            .map(|p| p.parse().map_err(|_| err(i, format!("bad probability `{p}`"))))
                            .collect::<Result<_>>()?,
                        choice: get(i, &m, "choice")?,
                        active_bits_after: get(i, &m, "active_after")?,
                        range_after: (
                            lo.parse().map_err(|_| err(i, "bad range"))?,
                            hi.parse().map_err(|_| err(i, "bad range"))?,
                        ),
                    });
                }
                _ => return Err(err(i, format!("unknown step line `{tag}`"))),
            }
        }
        Ok(steps)
    }

    fn document(&mut self) -> Result<ReportDocument> {
        self.expect(SCHEMA)?;
        self.expect("[config]")?;
        let config = self.pairs()?.into_iter().map(|(_, k, v)| (k, v)).collect();
        self.expect("[initial-space]")?;
        let initial_space = self.space()?;
        self.expect("[steps]")?;
        let steps = self.steps()?;
        self.expect("[final-space]")?;
        let final_space = self.space()?;
        let at = self.expect("[result]")?;
        let result: HashMap<String, String> = self.pairs()?.into_iter().map(|(_, k, v)| (k, v)).collect();
        let termination: Termination = result
            .get("termination")
            .ok_or_else(|| err(at, "missing termination"))?
            .parse()?;
        let evaluations = result
            .get("evaluations")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(at, "missing or bad evaluations"))?;
        let at = self.expect("[telemetry]")?;
        let tele: HashMap<String, String> = self.pairs()?.into_iter().map(|(_, k, v)| (k, v)).collect();
        let num = |k: &str| -> Result<u64> {
            tele.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| err(at, format!("missing or bad `{k}`")))
        };
        let telemetry = Telemetry {
            evaluations: num("evaluations")?,
            wall_clock_ms: num(TIMING_KEY)?,
        };
        if let Some((i, l)) = self.lines.next() {
            return Err(err(i, format!("unexpected trailing line `{l}`")));
        }
        Ok(ReportDocument {
            config,
            fit: FitReport {
                initial_space,
                steps,
                final_space,
                termination,
                evaluations,
            },
            telemetry,
        })
    }
}
