//! Parameter fields and the parameter space they span.
//!
//! Each field is a `total_bits`-wide unsigned counter. Trimming freezes its
//! high-order bits one at a time into `fixed_prefix`; the low `active_bits`
//! remain free and are enumerated. A decoded value is
//!
//! ```text
//! signed_offset + pre_eval_offset + (fixed_prefix ∘ raw)
//! ```
//!
//! Signed ranges use offset binary (`signed_offset = -2^(b-1)`) so that the
//! two most significant raw bits always select a contiguous quarter of the
//! numeric range.

use crate::error::{Error, Result};

/// Largest parameter space that may be enumerated, in bits.
pub const MAX_SPACE_BITS: u32 = 40;

/// The three overlapping half-spaces considered by a trim, built from the
/// quarters `Y0..Y3` of one field. For a one-bit field only `Low` (bit 0)
/// and `High` (bit 1) are meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Half {
    Low,
    Mid,
    High,
}

impl Half {
    pub fn as_str(self) -> &'static str {
        match self {
            Half::Low => "low",
            Half::Mid => "mid",
            Half::High => "high",
        }
    }
}

impl std::str::FromStr for Half {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Half::Low),
            "mid" => Ok(Half::Mid),
            "high" => Ok(Half::High),
            _ => Err(Error::Report(format!("unknown half `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamField {
    name: String,
    total_bits: u32,
    active_bits: u32,
    /// Frozen high-order bits, most significant first.
    fixed_prefix: Vec<bool>,
    pre_eval_offset: i64,
    signed_offset: i64,
    finished: bool,
}

impl ParamField {
    /// An unsigned field covering `[0, 2^bits - 1]`.
    pub fn unsigned(name: impl Into<String>, bits: u32) -> Result<Self> {
        Self::with_offset(name, bits, 0)
    }

    /// A signed field covering `[-2^(bits-1), 2^(bits-1) - 1]`.
    pub fn signed(name: impl Into<String>, bits: u32) -> Result<Self> {
        if bits == 0 || bits > 62 {
            return Err(Error::Config(format!("parameter bits must be in 1..=62, got {bits}")));
        }
        Self::with_offset(name, bits, -(1i64 << (bits - 1)))
    }

    fn with_offset(name: impl Into<String>, bits: u32, signed_offset: i64) -> Result<Self> {
        if bits == 0 || bits > 62 {
            return Err(Error::Config(format!("parameter bits must be in 1..=62, got {bits}")));
        }
        Ok(Self {
            name: name.into(),
            total_bits: bits,
            active_bits: bits,
            fixed_prefix: Vec::new(),
            pre_eval_offset: 0,
            signed_offset,
            finished: false,
        })
    }

    /// Rebuild a field from its raw components, checking every invariant.
    pub fn from_parts(
        name: impl Into<String>,
        total_bits: u32,
        fixed_prefix: Vec<bool>,
        pre_eval_offset: i64,
        signed_offset: i64,
        finished: bool,
    ) -> Result<Self> {
        if total_bits == 0 || total_bits > 62 {
            return Err(Error::Config(format!(
                "parameter bits must be in 1..=62, got {total_bits}"
            )));
        }
        if fixed_prefix.len() > total_bits as usize {
            return Err(Error::Config("fixed prefix longer than the field".into()));
        }
        let field = Self {
            name: name.into(),
            total_bits,
            active_bits: total_bits - fixed_prefix.len() as u32,
            fixed_prefix,
            pre_eval_offset,
            signed_offset,
            finished,
        };
        if pre_eval_offset < 0 || field.prefix_value() + pre_eval_offset + field.width() > 1i64 << total_bits {
            return Err(Error::Config(format!(
                "field `{}`: offset {pre_eval_offset} leaves the original range",
                field.name
            )));
        }
        Ok(field)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn active_bits(&self) -> u32 {
        self.active_bits
    }

    pub fn fixed_prefix(&self) -> &[bool] {
        &self.fixed_prefix
    }

    pub fn pre_eval_offset(&self) -> i64 {
        self.pre_eval_offset
    }

    pub fn signed_offset(&self) -> i64 {
        self.signed_offset
    }

    pub fn is_signed(&self) -> bool {
        self.signed_offset != 0
    }

    pub fn finished(&self) -> bool {
        self.finished || self.active_bits == 0
    }

    /// The explicit finished flag, ignoring exhausted bits.
    pub fn marked_finished(&self) -> bool {
        self.finished
    }

    pub fn set_finished(&mut self, finished: bool) {
        self.finished = finished;
    }

    /// Number of raw values, `2^active_bits`.
    pub fn width(&self) -> i64 {
        1i64 << self.active_bits
    }

    fn prefix_value(&self) -> i64 {
        let prefix = self
            .fixed_prefix
            .iter()
            .fold(0i64, |acc, &bit| (acc << 1) | i64::from(bit));
        prefix << self.active_bits
    }

    /// Smallest decoded value.
    pub fn low(&self) -> i64 {
        self.signed_offset + self.pre_eval_offset + self.prefix_value()
    }

    /// Largest decoded value.
    pub fn high(&self) -> i64 {
        self.low() + self.width() - 1
    }

    /// Lowest and highest value of the field before any trimming.
    pub fn original_range(&self) -> (i64, i64) {
        (self.signed_offset, self.signed_offset + (1i64 << self.total_bits) - 1)
    }

    pub fn decode(&self, raw: u64) -> Result<i64> {
        if raw >= self.width() as u64 {
            return Err(Error::Range {
                what: format!(
                    "raw value for `{}` must be below 2^{}",
                    self.name, self.active_bits
                ),
                value: i128::from(raw),
            });
        }
        Ok(self.low() + raw as i64)
    }

    /// Restrict the field to one half of its current range.
    ///
    /// `Low`/`High` freeze the next bit to 0/1. `Mid` freezes a 0 and adds
    /// `2^(active_bits - 2)` before evaluation, so the new range is exactly
    /// the union of the two middle quarters.
    pub fn apply_half(&mut self, half: Half) -> Result<()> {
        match (half, self.active_bits) {
            (_, 0) => {
                return Err(Error::Precondition(format!(
                    "field `{}` has no active bits left",
                    self.name
                )))
            }
            (Half::Mid, 1) => {
                return Err(Error::Precondition(format!(
                    "field `{}` has a single bit; the middle half is undefined",
                    self.name
                )))
            }
            _ => {}
        }
        let quarter = if self.active_bits >= 2 {
            1i64 << (self.active_bits - 2)
        } else {
            0
        };
        match half {
            Half::Low => self.fixed_prefix.push(false),
            Half::High => self.fixed_prefix.push(true),
            Half::Mid => {
                self.fixed_prefix.push(false);
                self.pre_eval_offset += quarter;
            }
        }
        self.active_bits -= 1;
        Ok(())
    }
}

/// An ordered list of parameter fields. The raw index of a parameter vector
/// concatenates the fields' raw values, first field most significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterSpace {
    fields: Vec<ParamField>,
}

impl ParameterSpace {
    pub fn new(fields: Vec<ParamField>) -> Result<Self> {
        let space = Self { fields };
        if space.active_bits() > MAX_SPACE_BITS {
            return Err(Error::Config(format!(
                "parameter space of 2^{} points is too large",
                space.active_bits()
            )));
        }
        Ok(space)
    }

    /// Unsigned fields named `y1..yk` with the given bit counts.
    pub fn unsigned(bits: &[u32]) -> Result<Self> {
        let fields = bits
            .iter()
            .enumerate()
            .map(|(i, &b)| ParamField::unsigned(format!("y{}", i + 1), b))
            .collect::<Result<Vec<_>>>()?;
        Self::new(fields)
    }

    /// Signed fields named `y1..yk` with the given bit counts.
    pub fn signed(bits: &[u32]) -> Result<Self> {
        let fields = bits
            .iter()
            .enumerate()
            .map(|(i, &b)| ParamField::signed(format!("y{}", i + 1), b))
            .collect::<Result<Vec<_>>>()?;
        Self::new(fields)
    }

    pub fn fields(&self) -> &[ParamField] {
        &self.fields
    }

    pub fn field(&self, index: usize) -> Result<&ParamField> {
        self.fields
            .get(index)
            .ok_or_else(|| Error::Precondition(format!("no parameter with index {index}")))
    }

    pub fn field_mut(&mut self, index: usize) -> Result<&mut ParamField> {
        self.fields
            .get_mut(index)
            .ok_or_else(|| Error::Precondition(format!("no parameter with index {index}")))
    }

    pub fn arity(&self) -> usize {
        self.fields.len()
    }

    pub fn active_bits(&self) -> u32 {
        self.fields.iter().map(|f| f.active_bits).sum()
    }

    /// Current `|Y|`.
    pub fn len(&self) -> usize {
        1usize << self.active_bits()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bit position of field `index`'s raw value inside a raw index.
    pub fn shift_of(&self, index: usize) -> u32 {
        self.fields[index + 1..].iter().map(|f| f.active_bits).sum()
    }

    /// Raw value of field `index` inside raw index `raw`.
    pub fn field_raw(&self, raw: usize, index: usize) -> u64 {
        let f = &self.fields[index];
        ((raw >> self.shift_of(index)) as u64) & ((1u64 << f.active_bits) - 1)
    }

    /// Decode the parameter vector at raw index `raw`.
    pub fn decode(&self, raw: usize) -> Result<Vec<i64>> {
        if raw >= self.len() {
            return Err(Error::Range {
                what: format!("raw parameter index must be below {}", self.len()),
                value: raw as i128,
            });
        }
        let mut out = Vec::with_capacity(self.fields.len());
        let mut shift = self.active_bits();
        for f in &self.fields {
            shift -= f.active_bits;
            let part = ((raw >> shift) as u64) & ((1u64 << f.active_bits) - 1);
            out.push(f.decode(part)?);
        }
        Ok(out)
    }

    /// Decode into a caller-provided buffer without range checks.
    pub(crate) fn decode_into(&self, raw: usize, out: &mut [i64]) {
        let mut shift = self.active_bits();
        for (slot, f) in out.iter_mut().zip(&self.fields) {
            shift -= f.active_bits;
            let part = ((raw >> shift) as i64) & ((1i64 << f.active_bits) - 1);
            *slot = f.low() + part;
        }
    }

    /// All parameter vectors in raw-index order.
    pub fn enumerate(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(move |raw| {
            let mut v = vec![0; self.fields.len()];
            self.decode_into(raw, &mut v);
            v
        })
    }

    pub fn apply_half(&mut self, index: usize, half: Half) -> Result<()> {
        self.field_mut(index)?.apply_half(half)
    }

    /// Human-readable ranges, e.g. `y1=1 y2=16..17`.
    pub fn describe(&self) -> String {
        self.fields
            .iter()
            .map(|f| {
                if f.low() == f.high() {
                    format!("{}={}", f.name, f.low())
                } else {
                    format!("{}={}..{}", f.name, f.low(), f.high())
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// `decode_parameter` on a standalone field.
pub fn decode_parameter(field: &ParamField, raw: u64) -> Result<i64> {
    field.decode(raw)
}

/// `enumerate_parameters` as an owned list.
pub fn enumerate_parameters(space: &ParameterSpace) -> Vec<Vec<i64>> {
    space.enumerate().collect()
}
