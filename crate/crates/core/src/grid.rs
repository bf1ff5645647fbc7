//! The experiment: a complete integer grid of samples over the domain.

use crate::error::{Error, Result};

/// A rectangular grid `[0, d1) x ... x [0, dk)`, enumerated row-major
/// (last coordinate varies fastest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainGrid {
    dims: Vec<usize>,
    total: usize,
}

impl DomainGrid {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Shape("grid needs at least one dimension".into()));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Shape(format!("dimension {} has size 0", pos + 1)));
        }
        let total = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Shape("grid size overflows".into()))?;
        Ok(Self { dims, total })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn is_power_of_two(&self) -> bool {
        self.total.is_power_of_two()
    }

    /// Coordinates of the point with row-major index `index`.
    pub fn point(&self, mut index: usize) -> Vec<i64> {
        debug_assert!(index < self.total);
        let mut out = vec![0i64; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = (index % d) as i64;
            index /= d;
        }
        out
    }

    /// Row-major index of `coords`, or `None` when outside the grid.
    pub fn index_of(&self, coords: &[i64]) -> Option<usize> {
        if coords.len() != self.dims.len() {
            return None;
        }
        let mut index = 0usize;
        for (&c, &d) in coords.iter().zip(&self.dims) {
            if c < 0 || c as usize >= d {
                return None;
            }
            index = index * d + c as usize;
        }
        Some(index)
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.total).map(move |i| self.point(i))
    }
}

/// Noise added by the data generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    None,
    /// Integer drawn uniformly from `[-half_width, half_width]`.
    Uniform { half_width: i64 },
    /// Gaussian with standard deviation `sigma`, rounded to the nearest integer.
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NoiseKind::Uniform { half_width } if half_width < 0 => Err(Error::Config(format!(
                "uniform noise half-width must be >= 0, got {half_width}"
            ))),
            NoiseKind::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => Err(
                Error::Config(format!("gaussian sigma must be finite and >= 0, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseKind::None => write!(f, "none"),
            NoiseKind::Uniform { half_width } => write!(f, "uniform:{half_width}"),
            NoiseKind::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(NoiseKind::None);
        }
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("noise `{s}`: expected none|uniform:W|gaussian:S")))?;
        let bad = |_| Error::Config(format!("noise `{s}`: bad parameter"));
        let parsed = match kind {
            "uniform" => NoiseKind::Uniform {
                half_width: arg.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            },
            "gaussian" => NoiseKind::Gaussian {
                sigma: arg.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
            },
            _ => return Err(Error::Config(format!("unknown noise kind `{kind}`"))),
        };
        NoiseSpec { kind: parsed, seed: 0 }.validate()?;
        Ok(parsed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Generated { expression: String, noise: NoiseSpec },
    Ingested,
}

/// Integer samples `f(x)`, one per grid point in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    grid: DomainGrid,
    values: Vec<i64>,
    provenance: Provenance,
}

impl DataTable {
    pub fn new(grid: DomainGrid, values: Vec<i64>, provenance: Provenance) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            provenance,
        })
    }

    pub fn from_values(dims: Vec<usize>, values: Vec<i64>) -> Result<Self> {
        Self::new(DomainGrid::new(dims)?, values, Provenance::Ingested)
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The same samples shifted by a constant, used to exercise translational invariance.
    pub fn shifted(&self, constant: i64) -> Result<Self> {
        let values = self
            .values
            .iter()
            .map(|v| {
                v.checked_add(constant).ok_or_else(|| Error::Overflow {
                    expr: format!("{v} + {constant}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: self.grid.clone(),
            values,
            provenance: self.provenance.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_order() {
        let g = DomainGrid::new(vec![2, 3]).unwrap();
        let pts: Vec<_> = g.points().collect();
        assert_eq!(pts[0], vec![0, 0]);
        assert_eq!(pts[1], vec![0, 1]);
        assert_eq!(pts[3], vec![1, 0]);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(g.index_of(p), Some(i));
        }
        assert_eq!(g.len(), 6);
        assert!(!g.is_power_of_two());
    }

    #[test]
    fn rejects_empty_dims() {
        assert!(DomainGrid::new(vec![]).is_err());
        assert!(DomainGrid::new(vec![4, 0]).is_err());
    }

    #[test]
    fn value_count_must_match() {
        assert!(DataTable::from_values(vec![2, 2], vec![1, 2, 3]).is_err());
        assert!(DataTable::from_values(vec![2, 2], vec![1, 2, 3, 4]).is_ok());
    }

    #[test]
    fn noise_parsing() {
        assert_eq!("uniform:30".parse::<NoiseKind>().unwrap(), NoiseKind::Uniform { half_width: 30 });
        assert_eq!("none".parse::<NoiseKind>().unwrap(), NoiseKind::None);
        assert!("uniform:-1".parse::<NoiseKind>().is_err());
        assert!("gaussian:-0.5".parse::<NoiseKind>().is_err());
    }
}
