//! Run configuration assembled from a TOML file and command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::{generate, read_csv};
use crate::error::{Error, Result};
use crate::expr::Arity;
use crate::grid::{DataTable, NoiseKind, NoiseSpec};
use crate::model::ExprModel;
use crate::params::{ParamField, ParameterSpace};
use crate::sensitivity::{EstimationMode, InitialExponent};
use crate::trimmer::TrimConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Generated {
        expression: String,
        dims: Vec<usize>,
        noise: NoiseSpec,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<DataTable> {
        match self {
            DataSource::Csv(p) => read_csv(p),
            DataSource::Generated {
                expression,
                dims,
                noise,
            } => generate(expression, dims, noise),
        }
    }

    fn describe(&self) -> String {
        match self {
            DataSource::Csv(p) => format!("csv:{}", p.display()),
            DataSource::Generated {
                expression,
                dims,
                noise,
            } => format!(
                "generated:{expression}|{}|{}|{}",
                join_dims(dims),
                noise.kind,
                noise.seed
            ),
        }
    }
}

fn join_dims(dims: &[usize]) -> String {
    dims.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

pub fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split(['x', ','])
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::Config(format!("bad dimension `{p}` in `{s}`")))
        })
        .collect()
}

/// One declared parameter: `name:count[:signed]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitSpec {
    pub name: String,
    pub bits: u32,
    pub signed: bool,
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn parse_bits(s: &str) -> Result<Vec<BitSpec>> {
    s.split(',')
        .map(|item| {
            let parts: Vec<&str> = item.trim().split(':').collect();
            let bad = || Error::Config(format!("bad parameter declaration `{item}`; expected name:count[:signed]"));
            let (name, count, signed) = match parts.as_slice() {
                [n, c] => (*n, *c, false),
                [n, c, "signed"] => (*n, *c, true),
                [n, c, "unsigned"] => (*n, *c, false),
                _ => return Err(bad()),
            };
            if !valid_name(name) {
                return Err(bad());
            }
            let bits: u32 = count.parse().map_err(|_| bad())?;
            if bits == 0 {
                return Err(Error::Config(format!("parameter `{name}` needs at least one bit")));
            }
            Ok(BitSpec {
                name: name.to_string(),
                bits,
                signed,
            })
        })
        .collect()
}

pub fn space_from_bits(bits: &[BitSpec]) -> Result<ParameterSpace> {
    let fields = bits
        .iter()
        .map(|b| {
            if b.signed {
                ParamField::signed(b.name.clone(), b.bits)
            } else {
                ParamField::unsigned(b.name.clone(), b.bits)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    ParameterSpace::new(fields)
}

pub fn parse_band(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("band `{s}`: expected lo:hi")))?;
    let p = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("band `{s}`: `{v}` is not a number")))
    };
    Ok((p(lo)?, p(hi)?))
}

/// Everything needed to run a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub trial: String,
    pub bits: Vec<BitSpec>,
    pub trim: TrimConfig,
    pub seed: u64,
    pub report: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bits.is_empty() {
            return Err(Error::Config("no parameters declared".into()));
        }
        for (i, b) in self.bits.iter().enumerate() {
            if self.bits[..i].iter().any(|o| o.name == b.name) {
                return Err(Error::Config(format!("parameter `{}` declared twice", b.name)));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        self.trim.validate()
    }

    pub fn space(&self) -> Result<ParameterSpace> {
        space_from_bits(&self.bits)
    }

    pub fn model(&self, inputs: usize) -> Result<ExprModel> {
        ExprModel::parse(&self.trial, Arity::new(inputs, self.bits.len()))
    }

    /// Ordered key/value echo written into reports.
    pub fn echo(&self) -> Vec<(String, String)> {
        let s = &self.trim.sensitivity;
        let bits = self
            .bits
            .iter()
            .map(|b| format!("{}:{}{}", b.name, b.bits, if b.signed { ":signed" } else { "" }))
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("data".into(), self.data.describe()),
            ("trial".into(), self.trial.clone()),
            ("bits".into(), bits),
            ("threshold".into(), self.trim.threshold.to_string()),
            ("z_band".into(), format!("{}:{}", s.band.0, s.band.1)),
            ("initial".into(), s.initial.to_string()),
            ("mode".into(), s.mode.to_string()),
            ("epsilon".into(), s.epsilon.to_string()),
            ("delta".into(), s.delta.to_string()),
            ("max_adjustments".into(), s.max_adjustments.to_string()),
            ("policy".into(), self.trim.policy.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

/// The TOML file layout. Every key is optional; flags override file values.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub expr: Option<String>,
    pub dims: Option<String>,
    pub noise: Option<String>,
    pub trial: Option<String>,
    pub bits: Option<String>,
    pub threshold: Option<f64>,
    pub z_band: Option<String>,
    pub initial: Option<String>,
    pub mode: Option<String>,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub policy: Option<String>,
    pub report: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fill unset fields of `self` from `fallback`.
    pub fn or(self, fallback: FileConfig) -> FileConfig {
        FileConfig {
            data: self.data.or(fallback.data),
            expr: self.expr.or(fallback.expr),
            dims: self.dims.or(fallback.dims),
            noise: self.noise.or(fallback.noise),
            trial: self.trial.or(fallback.trial),
            bits: self.bits.or(fallback.bits),
            threshold: self.threshold.or(fallback.threshold),
            z_band: self.z_band.or(fallback.z_band),
            initial: self.initial.or(fallback.initial),
            mode: self.mode.or(fallback.mode),
            shots: self.shots.or(fallback.shots),
            seed: self.seed.or(fallback.seed),
            threads: self.threads.or(fallback.threads),
            policy: self.policy.or(fallback.policy),
            report: self.report.or(fallback.report),
            out: self.out.or(fallback.out),
        }
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let seed = self.seed.unwrap_or(0);
        let data = match (self.data, self.expr) {
            (Some(p), None) => DataSource::Csv(p),
            (None, Some(expression)) => {
                let dims = parse_dims(
                    self.dims
                        .as_deref()
                        .ok_or_else(|| Error::Config("generated data needs dims".into()))?,
                )?;
                let kind: NoiseKind = self.noise.as_deref().unwrap_or("none").parse()?;
                DataSource::Generated {
                    expression,
                    dims,
                    noise: NoiseSpec { kind, seed },
                }
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either a data file or a generator expression, not both".into()))
            }
            (None, None) => return Err(Error::Config("no data source given".into())),
        };
        let trial = self
            .trial
            .ok_or_else(|| Error::Config("no trial expression given".into()))?;
        let bits = parse_bits(
            self.bits
                .as_deref()
                .ok_or_else(|| Error::Config("no parameter bits declared".into()))?,
        )?;
        let mut trim = TrimConfig::default();
        if let Some(t) = self.threshold {
            trim.threshold = t;
        }
        if let Some(b) = self.z_band {
            trim.sensitivity.band = parse_band(&b)?;
        }
        if let Some(i) = self.initial {
            trim.sensitivity.initial = i.parse::<InitialExponent>()?;
        }
        if let Some(p) = self.policy {
            trim.policy = p.parse()?;
        }
        trim.sensitivity.mode = match self.mode.as_deref().unwrap_or("exact") {
            "exact" => EstimationMode::Exact,
            "sampled" => EstimationMode::Sampled {
                shots: self.shots.unwrap_or_else(|| {
                    crate::sensitivity::min_shots(trim.sensitivity.epsilon, trim.sensitivity.delta)
                }),
                seed,
            },
            m => return Err(Error::Config(format!("unknown mode `{m}`; expected exact or sampled"))),
        };
        let config = RunConfig {
            data,
            trial,
            bits,
            trim,
            seed,
            report: self.report,
            out: self.out,
            threads: self.threads,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bits_parse() {
        let b = parse_bits("y1:3, y2:5:signed").unwrap();
        assert_eq!(b[0], BitSpec { name: "y1".into(), bits: 3, signed: false });
        assert!(b[1].signed);
        assert!(parse_bits("y1").is_err());
        assert!(parse_bits("y1:0").is_err());
        assert!(parse_bits("1y:3").is_err());
    }

    #[test]
    fn dims_parse() {
        assert_eq!(parse_dims("32x32").unwrap(), vec![32, 32]);
        assert_eq!(parse_dims("8,4").unwrap(), vec![8, 4]);
        assert!(parse_dims("0x4").is_err());
    }

    #[test]
    fn toml_file_with_flag_override() {
        let file: FileConfig = toml::from_str(
            r#"
            expr = "x1^2 + 16*x2"
            dims = "32x32"
            noise = "uniform:30"
            trial = "y1*x1^2 + y2*x2"
            bits = "y1:3,y2:5"
            threshold = 0.7
            seed = 4
            "#,
        )
        .unwrap();
        let flags = FileConfig {
            threshold: Some(0.6),
            ..Default::default()
        };
        let c = flags.or(file).resolve().unwrap();
        assert_eq!(c.trim.threshold, 0.6);
        assert_eq!(c.seed, 4);
        match c.data {
            DataSource::Generated { noise, .. } => assert_eq!(noise.seed, 4),
            _ => panic!(),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("tresh = 0.6").is_err());
    }

    #[test]
    fn missing_pieces_are_reported() {
        assert!(FileConfig::default().resolve().is_err());
        let c = FileConfig {
            expr: Some("x1".into()),
            dims: Some("4".into()),
            trial: Some("y1*x1".into()),
            bits: Some("a:2,a:3".into()),
            ..Default::default()
        };
        assert!(c.resolve().is_err());
    }

    #[test]
    fn sampled_mode_defaults_to_enough_shots() {
        let c = FileConfig {
            expr: Some("x1".into()),
            dims: Some("4".into()),
            trial: Some("y1*x1".into()),
            bits: Some("a:2".into()),
            mode: Some("sampled".into()),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(c.trim.sensitivity.mode, EstimationMode::Sampled { shots: 6623, seed: 0 });
    }
}
