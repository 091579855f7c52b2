//! Expression trees for potentials in one variable `x`.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := base ('^' unary)?          right associative
//! base   := number | 'x' | '(' expr ')' | func '(' expr ')'
//! func   := exp | log | abs | cosh
//! ```
//!
//! Exponents must be constant. A non-integer exponent is only accepted on a
//! base that is nonnegative by construction.

use std::fmt;

use crate::error::{EqmError, Result};

/// Integer exponents up to this magnitude are evaluated by repeated
/// multiplication.
const MAX_EXPANDED_POWER: i64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Abs,
    Cosh,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Cosh => "cosh",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "abs" => Some(Func::Abs),
            "cosh" => Some(Func::Cosh),
            _ => None,
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Abs => v.abs(),
            Func::Cosh => v.cosh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    X,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
    /// `sign(e)`; only produced by differentiation of `abs`.
    Sign(Box<Expr>),
    /// `sinh(e)`; only produced by differentiation of `cosh`.
    Sinh(Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.error(format!("unexpected '{}'", p.src[p.pos] as char)));
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X => x,
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, p) => pow(a.eval(x), *p),
            Expr::Call(f, a) => f.apply(a.eval(x)),
            Expr::Sign(a) => {
                let v = a.eval(x);
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Expr::Sinh(a) => a.eval(x).sinh(),
        }
    }

    fn constant(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Symbolic derivative with respect to `x`.
    pub fn derivative(&self) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            X => Const(1.0),
            Neg(a) => neg(a.derivative()),
            Add(a, b) => add(a.derivative(), b.derivative()),
            Sub(a, b) => sub(a.derivative(), b.derivative()),
            Mul(a, b) => add(
                mul(a.derivative(), (**b).clone()),
                mul((**a).clone(), b.derivative()),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.derivative(), (**b).clone()),
                    mul((**a).clone(), b.derivative()),
                ),
                power((**b).clone(), 2.0),
            ),
            Pow(a, p) => mul(
                mul(Const(*p), power((**a).clone(), p - 1.0)),
                a.derivative(),
            ),
            Call(f, a) => {
                let inner = a.derivative();
                let outer = match f {
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Log => div(Const(1.0), (**a).clone()),
                    Func::Abs => Sign(a.clone()),
                    Func::Cosh => Sinh(a.clone()),
                };
                mul(outer, inner)
            }
            // Piecewise constant away from zero.
            Sign(_) => Const(0.0),
            Sinh(a) => mul(Call(Func::Cosh, a.clone()), a.derivative()),
        }
    }

    /// True when the expression is nonnegative for every real `x`.
    pub fn provably_nonnegative(&self) -> bool {
        use Expr::*;
        match self {
            Const(c) => *c >= 0.0,
            X | Neg(_) | Sub(..) | Sign(_) | Sinh(_) => false,
            Add(a, b) | Mul(a, b) | Div(a, b) => {
                a.provably_nonnegative() && b.provably_nonnegative()
            }
            Pow(a, p) => is_even_integer(*p) || a.provably_nonnegative(),
            Call(Func::Exp | Func::Abs | Func::Cosh, _) => true,
            Call(Func::Log, _) => false,
        }
    }
}

fn is_even_integer(p: f64) -> bool {
    p.fract() == 0.0 && (p as i64) % 2 == 0
}

fn pow(base: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() <= MAX_EXPANDED_POWER as f64 {
        let k = p as i64;
        let mut acc = 1.0;
        for _ in 0..k.abs() {
            acc *= base;
        }
        if k < 0 {
            1.0 / acc
        } else {
            acc
        }
    } else {
        base.powf(p)
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a.constant(), b.constant()) {
        (Some(x), Some(y)) => Expr::Const(x + y),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a.constant(), b.constant()) {
        (Some(x), Some(y)) => Expr::Const(x - y),
        (Some(0.0), _) => neg(b),
        (_, Some(0.0)) => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a.constant(), b.constant()) {
        (Some(x), Some(y)) => Expr::Const(x * y),
        (Some(0.0), _) | (_, Some(0.0)) => Expr::Const(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a.constant(), b.constant()) {
        (Some(x), Some(y)) => Expr::Const(x / y),
        (Some(0.0), _) => Expr::Const(0.0),
        (_, Some(1.0)) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn power(a: Expr, p: f64) -> Expr {
    if p == 0.0 {
        return Expr::Const(1.0);
    }
    if p == 1.0 {
        return a;
    }
    match a {
        Expr::Const(c) => Expr::Const(pow(c, p)),
        other => Expr::Pow(Box::new(other), p),
    }
}

/// Shortest round-trip representation of a constant.
fn fmt_const(c: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c < 0.0 {
        write!(f, "(-{:?})", -c)
    } else {
        write!(f, "{c:?}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => fmt_const(*c, f),
            Expr::X => write!(f, "x"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, p) => {
                write!(f, "({a}^")?;
                fmt_const(*p, f)?;
                write!(f, ")")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            // Not part of the input grammar; written in an equivalent form.
            Expr::Sign(a) => write!(f, "({a} / abs({a}))"),
            Expr::Sinh(a) => write!(f, "((exp({a}) - exp((-{a}))) / 2.0)"),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: String) -> EqmError {
        EqmError::Parse {
            offset: self.pos,
            message,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            Ok(neg_node(self.unary()?))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.base()?;
        self.skip_ws();
        let caret = self.pos;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let exponent_start = self.pos;
        let exponent = self.unary()?;
        let Some(p) = fold_constant(&exponent) else {
            return Err(EqmError::Parse {
                offset: exponent_start,
                message: "exponent must be a constant".into(),
            });
        };
        if !p.is_finite() {
            return Err(EqmError::Parse {
                offset: exponent_start,
                message: format!("exponent evaluates to {p}"),
            });
        }
        if p.fract() != 0.0 && !base.provably_nonnegative() {
            return Err(EqmError::Parse {
                offset: caret,
                message: format!(
                    "non-integer exponent {p} needs a nonnegative base, e.g. abs(...)"
                ),
            });
        }
        Ok(Expr::Pow(Box::new(base), p))
    }

    fn base(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input".into())),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'".into()));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                if name == "x" {
                    return Ok(Expr::X);
                }
                let Some(func) = Func::from_name(name) else {
                    return Err(EqmError::Parse {
                        offset: start,
                        message: format!("unknown identifier '{name}'"),
                    });
                };
                if !self.eat(b'(') {
                    return Err(self.error(format!("expected '(' after {name}")));
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'".into()));
                }
                Ok(Expr::Call(func, Box::new(arg)))
            }
            Some(c) => Err(self.error(format!("unexpected '{}'", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < s.len() && s[self.pos].is_ascii_digit() {
                while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap_or("");
        text.parse::<f64>().map(Expr::Const).map_err(|_| EqmError::Parse {
            offset: start,
            message: format!("invalid number '{text}'"),
        })
    }
}

fn neg_node(e: Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(-c),
        other => Expr::Neg(Box::new(other)),
    }
}

fn fold_constant(e: &Expr) -> Option<f64> {
    use Expr::*;
    Some(match e {
        Const(c) => *c,
        X => return None,
        Neg(a) => -fold_constant(a)?,
        Add(a, b) => fold_constant(a)? + fold_constant(b)?,
        Sub(a, b) => fold_constant(a)? - fold_constant(b)?,
        Mul(a, b) => fold_constant(a)? * fold_constant(b)?,
        Div(a, b) => fold_constant(a)? / fold_constant(b)?,
        Pow(a, p) => pow(fold_constant(a)?, *p),
        Call(f, a) => f.apply(fold_constant(a)?),
        Sign(_) | Sinh(_) => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn value(text: &str, x: f64) -> f64 {
        Expr::parse(text).unwrap().eval(x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(value("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(value("2^3^2", 0.0), 512.0);
        assert_eq!(value("-x^2", 3.0), -9.0);
        assert_eq!(value("8 / 4 / 2", 0.0), 1.0);
        assert_eq!(value("2^-1", 0.0), 0.5);
        assert_eq!(value("1.5e1 - x", 5.0), 10.0);
        assert!((value("cosh(0) + exp(1) + log(exp(2))", 0.0) - (3.0 + std::f64::consts::E)).abs() < 1e-15);
    }

    #[test]
    fn simple_potentials_and_derivatives() {
        let e = Expr::parse("x^2").unwrap();
        assert_eq!(e.eval(2.0), 4.0);
        assert_eq!(e.derivative().eval(2.0), 4.0);
        let e = Expr::parse("x^4/4 - x^2").unwrap();
        assert_eq!(e.eval(1.0), -0.75);
        assert_eq!(e.derivative().eval(1.0), -1.0);
    }

    #[test]
    fn errors_carry_offsets() {
        match Expr::parse("x^") {
            Err(EqmError::Parse { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
        match Expr::parse("x + sin(x)") {
            Err(EqmError::Parse { offset, message }) => {
                assert_eq!(offset, 4);
                assert!(message.contains("sin"));
            }
            other => panic!("{other:?}"),
        }
        match Expr::parse("x^0.5") {
            Err(EqmError::Parse { offset, .. }) => assert_eq!(offset, 1),
            other => panic!("{other:?}"),
        }
        assert!(Expr::parse("abs(x)^0.5").is_ok());
        assert!(Expr::parse("(x^2 + 1)^1.5").is_ok());
        assert!(Expr::parse("x^x").is_err());
        assert!(Expr::parse("(x + 1").is_err());
        assert!(Expr::parse("x 2").is_err());
    }

    fn central_difference(e: &Expr, x: f64) -> f64 {
        let h = 1e-5 * (1.0 + x.abs());
        (e.eval(x + h) - e.eval(x - h)) / (2.0 * h)
    }

    const SAMPLES: [&str; 6] = [
        "x^4 - x^2",
        "cosh(x) + 0.3*x^3",
        "abs(x)^1.5 + exp(-x^2)",
        "log(1 + x^2) * (x - 2) / (3 + x^2)",
        "0.5*x^6 - 2*x^2 + x",
        "-(x - 1)^3 + (x^2+2)^0.5",
    ];

    proptest! {
        #[test]
        fn derivative_matches_central_difference(x in -3.0f64..3.0, k in 0usize..SAMPLES.len()) {
            let e = Expr::parse(SAMPLES[k]).unwrap();
            let exact = e.derivative().eval(x);
            let fd = central_difference(&e, x);
            let scale = exact.abs().max(1.0);
            prop_assert!((exact - fd).abs() <= 1e-6 * scale, "{} at {}: {} vs {}", SAMPLES[k], x, exact, fd);
        }

        #[test]
        fn printed_form_reparses_to_same_values(x in -4.0f64..4.0, k in 0usize..SAMPLES.len()) {
            let e = Expr::parse(SAMPLES[k]).unwrap();
            let again = Expr::parse(&e.to_string()).unwrap();
            let (a, b) = (e.eval(x), again.eval(x));
            prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
            let d = e.derivative();
            let d_again = Expr::parse(&d.to_string()).unwrap();
            if x.abs() > 1e-9 {
                prop_assert!((d.eval(x) - d_again.eval(x)).abs() <= 1e-12 * d.eval(x).abs().max(1.0));
            }
        }
    }
}
