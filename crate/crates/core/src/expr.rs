//! A small arithmetic language for generators `f(x)` and trial models `g_y(x)`.
//!
//! Variables are `x1..xd` (inputs) and `y1..yk` (parameters). Supported
//! operators, tightest first: `^` (literal exponent), unary `-`, `*` and `/`
//! (divisor must be a positive integer literal), `+` and `-`.
//!
//! Evaluation is exact: intermediate values are rationals, and the final
//! result is rounded half-to-even to an integer. No floating point is used.

use std::fmt;

use crate::error::{Error, ParseErrorKind, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    /// Input variable, zero-based (`x1` is `Var(0)`).
    Var(usize),
    /// Parameter, zero-based (`y1` is `Param(0)`).
    Param(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    /// `node * numerator / denominator`, kept exact until the final rounding.
    Scale {
        node: Box<Expr>,
        numerator: i64,
        denominator: i64,
    },
}

/// Declared number of inputs and parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arity {
    pub inputs: usize,
    pub params: usize,
}

impl Arity {
    pub fn new(inputs: usize, params: usize) -> Self {
        Self { inputs, params }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn parse_err(kind: ParseErrorKind, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        kind,
        line,
        column,
        message: message.into(),
    }
}

fn lex(source: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut chars = source.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);
    while let Some(&c) = chars.peek() {
        let (tl, tc) = (line, column);
        if c == '\n' {
            chars.next();
            line += 1;
            column = 1;
            continue;
        }
        if c.is_whitespace() {
            chars.next();
            column += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let mut text = String::new();
            while let Some(&d) = chars.peek() {
                if !d.is_ascii_digit() {
                    break;
                }
                text.push(d);
                chars.next();
                column += 1;
            }
            let value = text.parse::<i64>().map_err(|_| {
                parse_err(ParseErrorKind::Syntax, tl, tc, format!("integer literal `{text}` too large"))
            })?;
            out.push(Token { tok: Tok::Int(value), line: tl, column: tc });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut text = String::new();
            while let Some(&d) = chars.peek() {
                if !(d.is_ascii_alphanumeric() || d == '_') {
                    break;
                }
                text.push(d);
                chars.next();
                column += 1;
            }
            out.push(Token { tok: Tok::Ident(text), line: tl, column: tc });
            continue;
        }
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            other => {
                return Err(parse_err(
                    ParseErrorKind::Syntax,
                    tl,
                    tc,
                    format!("unexpected character `{other}`"),
                ))
            }
        };
        chars.next();
        column += 1;
        out.push(Token { tok, line: tl, column: tc });
    }
    out.push(Token { tok: Tok::End, line, column });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    arity: Arity,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax(&self, t: &Token, message: impl Into<String>) -> Error {
        parse_err(ParseErrorKind::Syntax, t.line, t.column, message)
    }

    fn additive(&mut self) -> Result<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.next();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.multiplicative()?));
                }
                Tok::Minus => {
                    self.next();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.multiplicative()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn multiplicative(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.next();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.next();
                    let t = self.next();
                    match t.tok {
                        Tok::Int(d) if d > 0 => {
                            lhs = Expr::Scale {
                                node: Box::new(lhs),
                                numerator: 1,
                                denominator: d,
                            }
                        }
                        _ => return Err(self.syntax(&t, "divisor must be a positive integer literal")),
                    }
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek().tok == Tok::Minus {
            self.next();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.peek().tok != Tok::Caret {
            return Ok(base);
        }
        self.next();
        let t = self.next();
        let exp = match t.tok {
            Tok::Int(e) => u32::try_from(e).map_err(|_| self.syntax(&t, "exponent too large"))?,
            _ => return Err(self.syntax(&t, "exponent must be a nonnegative integer literal")),
        };
        if self.peek().tok == Tok::Caret {
            let t = self.peek().clone();
            return Err(self.syntax(&t, "chained exponents need parentheses"));
        }
        Ok(Expr::Pow(Box::new(base), exp))
    }

    fn primary(&mut self) -> Result<Expr> {
        let t = self.next();
        match t.tok {
            Tok::Int(v) => Ok(Expr::Int(v)),
            Tok::Ident(ref name) => self.variable(name, &t),
            Tok::LParen => {
                let inner = self.additive()?;
                let close = self.next();
                if close.tok != Tok::RParen {
                    return Err(self.syntax(&close, "expected `)`"));
                }
                Ok(inner)
            }
            Tok::End => Err(self.syntax(&t, "unexpected end of input")),
            _ => Err(self.syntax(&t, "expected a number, variable or `(`")),
        }
    }

    fn variable(&self, name: &str, t: &Token) -> Result<Expr> {
        let unknown = || {
            parse_err(
                ParseErrorKind::UnknownIdentifier,
                t.line,
                t.column,
                format!(
                    "`{name}` is not one of x1..x{} or y1..y{}",
                    self.arity.inputs, self.arity.params
                ),
            )
        };
        let (kind, digits) = name.split_at(1);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(unknown());
        }
        let index: usize = digits.parse().map_err(|_| unknown())?;
        if index == 0 {
            return Err(parse_err(
                ParseErrorKind::Arity,
                t.line,
                t.column,
                format!("`{name}`: variables are numbered from 1"),
            ));
        }
        match kind {
            "x" if index <= self.arity.inputs => Ok(Expr::Var(index - 1)),
            "y" if index <= self.arity.params => Ok(Expr::Param(index - 1)),
            _ => Err(unknown()),
        }
    }
}

/// Parse `source` against the declared arity.
pub fn parse(source: &str, arity: Arity) -> Result<Expr> {
    if source.trim().is_empty() {
        return Err(parse_err(ParseErrorKind::Syntax, 1, 1, "empty expression"));
    }
    let mut p = Parser {
        tokens: lex(source)?,
        pos: 0,
        arity,
    };
    let ast = p.additive()?;
    let t = p.peek().clone();
    if t.tok != Tok::End {
        return Err(p.syntax(&t, "unexpected trailing input"));
    }
    Ok(ast)
}

/// Exact rational with positive denominator, always in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Ratio {
    num: i128,
    den: i128,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Ratio {
    fn int(v: i64) -> Self {
        Self { num: v as i128, den: 1 }
    }

    fn normalized(num: i128, den: i128) -> Option<Self> {
        if den == 1 {
            return Some(Self { num, den });
        }
        let g = gcd(num, den).max(1);
        let (num, den) = (num / g, den / g);
        Some(if den < 0 { Self { num: -num, den: -den } } else { Self { num, den } })
    }

    fn fits(self) -> bool {
        // |num / den| must stay within 63 bits.
        self.num.unsigned_abs() <= (i64::MAX as u128).saturating_mul(self.den as u128)
    }

    fn add(self, o: Self) -> Option<Self> {
        if self.den == 1 && o.den == 1 {
            return Some(Self { num: self.num.checked_add(o.num)?, den: 1 });
        }
        let num = self.num.checked_mul(o.den)?.checked_add(o.num.checked_mul(self.den)?)?;
        Self::normalized(num, self.den.checked_mul(o.den)?)
    }

    fn neg(self) -> Self {
        Self { num: -self.num, den: self.den }
    }

    fn mul(self, o: Self) -> Option<Self> {
        if self.den == 1 && o.den == 1 {
            return Some(Self { num: self.num.checked_mul(o.num)?, den: 1 });
        }
        Self::normalized(self.num.checked_mul(o.num)?, self.den.checked_mul(o.den)?)
    }

    /// Round half to even.
    fn round(self) -> i128 {
        let q = self.num.div_euclid(self.den);
        let r = self.num.rem_euclid(self.den);
        match (2 * r).cmp(&self.den) {
            std::cmp::Ordering::Less => q,
            std::cmp::Ordering::Greater => q + 1,
            std::cmp::Ordering::Equal => {
                if q % 2 == 0 {
                    q
                } else {
                    q + 1
                }
            }
        }
    }
}

impl Expr {
    /// Evaluate at integer inputs `x` and parameters `y`.
    pub fn evaluate(&self, x: &[i64], y: &[i64]) -> Result<i64> {
        let v = self.eval_ratio(x, y)?;
        let rounded = v.round();
        i64::try_from(rounded).map_err(|_| Error::Overflow { expr: self.to_string() })
    }

    fn eval_ratio(&self, x: &[i64], y: &[i64]) -> Result<Ratio> {
        let overflow = || Error::Overflow { expr: self.to_string() };
        let checked = |r: Option<Ratio>| match r {
            Some(v) if v.fits() => Ok(v),
            _ => Err(overflow()),
        };
        match self {
            Expr::Int(v) => Ok(Ratio::int(*v)),
            Expr::Var(i) => x.get(*i).map(|&v| Ratio::int(v)).ok_or_else(|| {
                Error::Precondition(format!("input x{} missing ({} given)", i + 1, x.len()))
            }),
            Expr::Param(i) => y.get(*i).map(|&v| Ratio::int(v)).ok_or_else(|| {
                Error::Precondition(format!("parameter y{} missing ({} given)", i + 1, y.len()))
            }),
            Expr::Neg(e) => Ok(e.eval_ratio(x, y)?.neg()),
            Expr::Add(a, b) => checked(a.eval_ratio(x, y)?.add(b.eval_ratio(x, y)?)),
            Expr::Sub(a, b) => checked(a.eval_ratio(x, y)?.add(b.eval_ratio(x, y)?.neg())),
            Expr::Mul(a, b) => checked(a.eval_ratio(x, y)?.mul(b.eval_ratio(x, y)?)),
            Expr::Pow(base, exp) => {
                let b = base.eval_ratio(x, y)?;
                let mut acc = Ratio::int(1);
                for _ in 0..*exp {
                    acc = checked(acc.mul(b))?;
                }
                Ok(acc)
            }
            Expr::Scale {
                node,
                numerator,
                denominator,
            } => {
                let v = node.eval_ratio(x, y)?;
                let s = Ratio::normalized(*numerator as i128, *denominator as i128).ok_or_else(overflow)?;
                checked(v.mul(s))
            }
        }
    }

    /// Largest input and parameter index referenced, as counts.
    pub fn used_arity(&self) -> Arity {
        fn walk(e: &Expr, a: &mut Arity) {
            match e {
                Expr::Int(_) => {}
                Expr::Var(i) => a.inputs = a.inputs.max(i + 1),
                Expr::Param(i) => a.params = a.params.max(i + 1),
                Expr::Neg(e) | Expr::Pow(e, _) => walk(e, a),
                Expr::Scale { node, .. } => walk(node, a),
                Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) => {
                    walk(l, a);
                    walk(r, a);
                }
            }
        }
        let mut a = Arity::new(0, 0);
        walk(self, &mut a);
        a
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(v) if *v < 0 => write!(f, "(-{})", v.unsigned_abs()),
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Param(i) => write!(f, "y{}", i + 1),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Pow(b, e) => write!(f, "({b}^{e})"),
            Expr::Scale {
                node,
                numerator: 1,
                denominator,
            } => write!(f, "({node} / {denominator})"),
            Expr::Scale {
                node,
                numerator,
                denominator,
            } => write!(f, "(({node} * {numerator}) / {denominator})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str, d: usize, k: usize) -> Expr {
        parse(s, Arity::new(d, k)).unwrap()
    }

    #[test]
    fn worked_example_trial_function() {
        let e = p("y1*x1^2 + y2*x2", 2, 2);
        let expected = Expr::Add(
            Box::new(Expr::Mul(
                Box::new(Expr::Param(0)),
                Box::new(Expr::Pow(Box::new(Expr::Var(0)), 2)),
            )),
            Box::new(Expr::Mul(Box::new(Expr::Param(1)), Box::new(Expr::Var(1)))),
        );
        assert_eq!(e, expected);
        assert_eq!(e.evaluate(&[3, 2], &[1, 16]).unwrap(), 41);
    }

    #[test]
    fn unknown_identifier_has_position() {
        let err = parse("x1 + x3", Arity::new(2, 0)).unwrap_err();
        match err {
            Error::Parse { kind, line, column, .. } => {
                assert_eq!(kind, ParseErrorKind::UnknownIdentifier);
                assert_eq!((line, column), (1, 6));
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse("x1 +\n  z", Arity::new(1, 0)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, column: 3, .. }));
    }

    #[test]
    fn zero_index_is_arity_error() {
        let err = parse("x0", Arity::new(1, 0)).unwrap_err();
        assert!(matches!(err, Error::Parse { kind: ParseErrorKind::Arity, .. }));
    }

    #[test]
    fn rational_scale_node() {
        let e = p("(y1/4)*x1 + y2*x2", 2, 2);
        match &e {
            Expr::Add(lhs, _) => match lhs.as_ref() {
                Expr::Mul(s, _) => assert!(matches!(
                    s.as_ref(),
                    Expr::Scale { numerator: 1, denominator: 4, .. }
                )),
                other => panic!("unexpected {other:?}"),
            },
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scale_rounds_half_to_even() {
        // 21 * 2 / 4 = 10.5 -> 10
        assert_eq!(p("(y1/4)*x1", 1, 1).evaluate(&[2], &[21]).unwrap(), 10);
        // 22 * 3 / 4 = 16.5 -> 16 ; 23 * 3 / 4 = 17.25 -> 17 ; 5/2 -> 2 ; 7/2 -> 4
        assert_eq!(p("(y1/4)*x1", 1, 1).evaluate(&[3], &[22]).unwrap(), 16);
        assert_eq!(p("(y1/4)*x1", 1, 1).evaluate(&[3], &[23]).unwrap(), 17);
        assert_eq!(p("x1/2", 1, 0).evaluate(&[5], &[]).unwrap(), 2);
        assert_eq!(p("x1/2", 1, 0).evaluate(&[7], &[]).unwrap(), 4);
        assert_eq!(p("-x1/2", 1, 0).evaluate(&[5], &[]).unwrap(), -2);
        assert_eq!(p("-x1/2", 1, 0).evaluate(&[7], &[]).unwrap(), -4);
    }

    #[test]
    fn precedence() {
        assert_eq!(p("-x1^2", 1, 0).evaluate(&[3], &[]).unwrap(), -9);
        assert_eq!(p("2+3*x1", 1, 0).evaluate(&[4], &[]).unwrap(), 14);
        assert_eq!(p("(2+3)*x1", 1, 0).evaluate(&[4], &[]).unwrap(), 20);
        assert_eq!(p("x1 - 2 - 3", 1, 0).evaluate(&[10], &[]).unwrap(), 5);
        assert_eq!(p("(x1+1)^3", 1, 0).evaluate(&[1], &[]).unwrap(), 8);
        assert_eq!(p("2*-x1", 1, 0).evaluate(&[4], &[]).unwrap(), -8);
    }

    #[test]
    fn zero_vectors_give_zero() {
        let e = p("y1*x1^2 + y2*x2 - x1*y2", 2, 2);
        assert_eq!(e.evaluate(&[0, 0], &[0, 0]).unwrap(), 0);
    }

    #[test]
    fn syntax_errors() {
        for bad in ["", "x1 +", "(x1", "x1 ^ y1", "x1 / 0", "x1 / x1", "x1 ^ 2 ^ 3", "3 $ 4", "x1 x1"] {
            assert!(parse(bad, Arity::new(1, 1)).is_err(), "{bad} should fail");
        }
    }

    #[test]
    fn overflow_is_an_error() {
        let e = p("x1^5", 1, 0);
        assert!(matches!(e.evaluate(&[1 << 20], &[]), Err(Error::Overflow { .. })));
        let e = p("x1 * x1", 1, 0);
        assert!(matches!(e.evaluate(&[i64::MAX], &[]), Err(Error::Overflow { .. })));
        assert!(parse("99999999999999999999", Arity::new(0, 0)).is_err());
    }

    /// Tree-walking oracle over i128 with no rationals, for integer-only ASTs.
    fn naive(e: &Expr, x: &[i64], y: &[i64]) -> i128 {
        match e {
            Expr::Int(v) => *v as i128,
            Expr::Var(i) => x[*i] as i128,
            Expr::Param(i) => y[*i] as i128,
            Expr::Neg(a) => -naive(a, x, y),
            Expr::Add(a, b) => naive(a, x, y) + naive(b, x, y),
            Expr::Sub(a, b) => naive(a, x, y) - naive(b, x, y),
            Expr::Mul(a, b) => naive(a, x, y) * naive(b, x, y),
            Expr::Pow(a, n) => naive(a, x, y).pow(*n),
            Expr::Scale { .. } => unreachable!(),
        }
    }

    fn int_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0i64..20).prop_map(Expr::Int),
            (0usize..2).prop_map(Expr::Var),
            (0usize..2).prop_map(Expr::Param),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner, 0u32..3).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
            ]
        })
    }

    fn any_expr() -> impl Strategy<Value = Expr> {
        int_expr().prop_recursive(2, 8, 2, |inner| {
            prop_oneof![
                (inner.clone(), 1i64..9).prop_map(|(a, d)| Expr::Scale {
                    node: Box::new(a),
                    numerator: 1,
                    denominator: d
                }),
                (inner.clone(), inner).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_fixed_point(e in any_expr()) {
            let printed = e.to_string();
            let reparsed = parse(&printed, Arity::new(2, 2)).unwrap();
            prop_assert_eq!(&reparsed, &e);
            prop_assert_eq!(reparsed.to_string(), printed);
        }

        #[test]
        fn integer_ast_matches_naive_oracle(
            e in int_expr(),
            x in proptest::collection::vec(-50i64..50, 2),
            y in proptest::collection::vec(-50i64..50, 2),
        ) {
            // Only consult the oracle once every intermediate is known to fit.
            match e.evaluate(&x, &y) {
                Ok(v) => prop_assert_eq!(v as i128, naive(&e, &x, &y)),
                Err(Error::Overflow { .. }) => {}
                Err(other) => prop_assert!(false, "unexpected error {other}"),
            }
            // Pure: a second evaluation gives the same answer.
            prop_assert_eq!(e.evaluate(&x, &y).ok(), e.evaluate(&x, &y).ok());
        }
    }
}
