//! Trial models `g_y(x)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{self, Arity, Expr};

/// A deterministic integer-valued function of inputs `x` and parameters `y`.
pub trait TrialModel: Send + Sync {
    fn arity(&self) -> Arity;

    fn eval(&self, x: &[i64], y: &[i64]) -> Result<i64>;

    fn describe(&self) -> String;
}

/// A trial model backed by a parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprModel {
    source: String,
    ast: Expr,
    arity: Arity,
}

impl ExprModel {
    pub fn parse(source: &str, arity: Arity) -> Result<Self> {
        let ast = expr::parse(source, arity)?;
        Ok(Self {
            source: source.trim().to_string(),
            ast,
            arity,
        })
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl TrialModel for ExprModel {
    fn arity(&self) -> Arity {
        self.arity
    }

    fn eval(&self, x: &[i64], y: &[i64]) -> Result<i64> {
        self.ast.evaluate(x, y)
    }

    fn describe(&self) -> String {
        self.source.clone()
    }
}

type EvalFn = dyn Fn(&[i64], &[i64]) -> i64 + Send + Sync;

/// A trial model given as a Rust closure, for constructions the expression
/// language cannot express (e.g. indicator functions).
#[derive(Clone)]
pub struct FnModel {
    name: String,
    arity: Arity,
    f: Arc<EvalFn>,
}

impl FnModel {
    pub fn new(
        name: impl Into<String>,
        arity: Arity,
        f: impl Fn(&[i64], &[i64]) -> i64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            arity,
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for FnModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnModel")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .finish()
    }
}

impl TrialModel for FnModel {
    fn arity(&self) -> Arity {
        self.arity
    }

    fn eval(&self, x: &[i64], y: &[i64]) -> Result<i64> {
        if x.len() != self.arity.inputs || y.len() != self.arity.params {
            return Err(Error::Precondition(format!(
                "{} expects ({}, {}) arguments, got ({}, {})",
                self.name,
                self.arity.inputs,
                self.arity.params,
                x.len(),
                y.len()
            )));
        }
        Ok((self.f)(x, y))
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}

/// The phase modulus `M = 2^N` of the shape measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sensitivity {
    exponent: u32,
}

impl Sensitivity {
    pub const MAX_EXPONENT: u32 = 62;

    pub fn new(exponent: u32) -> Result<Self> {
        if exponent == 0 || exponent > Self::MAX_EXPONENT {
            return Err(Error::Range {
                what: format!("sensitivity exponent must be in 1..={}", Self::MAX_EXPONENT),
                value: i128::from(exponent),
            });
        }
        Ok(Self { exponent })
    }

    pub fn exponent(self) -> u32 {
        self.exponent
    }

    pub fn modulus(self) -> f64 {
        (1u64 << self.exponent) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensitivity_modulus() {
        let s = Sensitivity::new(11).unwrap();
        assert_eq!(s.modulus(), 2048.0);
        assert!(Sensitivity::new(0).is_err());
    }

    #[test]
    fn expr_model_is_deterministic() {
        let m = ExprModel::parse("y1*x1^2 + y2*x2", Arity::new(2, 2)).unwrap();
        assert_eq!(m.eval(&[3, 2], &[1, 16]).unwrap(), 41);
        assert_eq!(m.eval(&[3, 2], &[1, 16]).unwrap(), 41);
        assert_eq!(m.describe(), "y1*x1^2 + y2*x2");
    }

    #[test]
    fn fn_model_checks_arity() {
        let m = FnModel::new("delta", Arity::new(1, 1), |x, y| i64::from(x[0] == y[0]));
        assert_eq!(m.eval(&[3], &[3]).unwrap(), 1);
        assert!(m.eval(&[3, 4], &[3]).is_err());
    }
}
