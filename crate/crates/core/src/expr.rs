//! Expression trees for mode update maps.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' INTEGER)*
//! atom    := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')'
//! VAR     := 'x' INTEGER            (1-based, x1 .. xn)
//! FUNC    := sin | cos | tan | exp | log | sqrt | abs
//! NUMBER  := decimal literal with optional exponent, e.g. 0.5, 3, 1e-3, 2.5E+2
//! ```
//!
//! `^` binds tighter than unary minus, so `-x1^2` is `-(x1^2)`. The exponent
//! must be a non-negative integer literal.

use std::fmt;

use thiserror::Error;

use crate::interval::{Interval, IntervalBox, IntervalError, Rounding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }

    fn from_name(s: &str) -> Option<UnaryOp> {
        Some(match s {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tan" => UnaryOp::Tan,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based state index; printed and parsed as `x{index+1}`.
    Var(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    PowInt(Box<Expr>, u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDiagnostic {
    /// Character offset into the source.
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at offset {}: {}", self.position, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error {0}")]
    Syntax(ParseDiagnostic),
    #[error("unknown variable {name} at offset {position} (state dimension is {dim})")]
    UnknownVariable {
        name: String,
        position: usize,
        dim: usize,
    },
    #[error("exponent at offset {position} must be a non-negative integer literal")]
    NonIntegerExponent { position: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("expression is not differentiable ({0})")]
    NonDifferentiable(String),
    #[error("point has dimension {got}, expected at least {expected}")]
    Dimension { expected: usize, got: usize },
}

impl From<IntervalError> for ExprError {
    fn from(e: IntervalError) -> Self {
        match e {
            IntervalError::Domain(m) => ExprError::Domain(m),
            other => ExprError::Domain(other.to_string()),
        }
    }
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Expr {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Add, a, b)
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Mul, a, b)
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Div, a, b)
    }

    pub fn powi(a: Expr, k: u32) -> Expr {
        Expr::PowInt(Box::new(a), k)
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Unary(_, a) | Expr::PowInt(a, _) => a.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn contains_abs(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Unary(UnaryOp::Abs, _) => true,
            Expr::Unary(_, a) | Expr::PowInt(a, _) => a.contains_abs(),
            Expr::Binary(_, a, b) => a.contains_abs() || b.contains_abs(),
        }
    }

    pub fn eval_real(&self, x: &[f64]) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => *x.get(*i).ok_or(ExprError::Dimension {
                expected: i + 1,
                got: x.len(),
            })?,
            Expr::Unary(op, a) => {
                let a = a.eval_real(x)?;
                match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Tan => {
                        if a.cos() == 0.0 {
                            return Err(ExprError::Domain(format!("tan at pole {a}")));
                        }
                        a.tan()
                    }
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Log => {
                        if a <= 0.0 {
                            return Err(ExprError::Domain(format!("log of {a}")));
                        }
                        a.ln()
                    }
                    UnaryOp::Sqrt => {
                        if a < 0.0 {
                            return Err(ExprError::Domain(format!("sqrt of {a}")));
                        }
                        a.sqrt()
                    }
                    UnaryOp::Abs => a.abs(),
                }
            }
            Expr::Binary(op, a, b) => {
                let a = a.eval_real(x)?;
                let b = b.eval_real(x)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(ExprError::Domain(format!("division of {a} by zero")));
                        }
                        a / b
                    }
                }
            }
            Expr::PowInt(a, k) => a.eval_real(x)?.powi(*k as i32),
        };
        if v.is_nan() {
            return Err(ExprError::Domain(format!("{self} evaluated to NaN")));
        }
        Ok(v)
    }

    /// Natural interval extension over `b`.
    pub fn eval_interval(&self, b: &IntervalBox, r: Rounding) -> Result<Interval, ExprError> {
        Ok(match self {
            Expr::Const(c) => Interval::point(*c),
            Expr::Var(i) => {
                if *i >= b.dim() {
                    return Err(ExprError::Dimension {
                        expected: i + 1,
                        got: b.dim(),
                    });
                }
                *b.get(*i)
            }
            Expr::Unary(op, a) => {
                let a = a.eval_interval(b, r)?;
                match op {
                    UnaryOp::Neg => a.neg(),
                    UnaryOp::Sin => a.sin(r)?,
                    UnaryOp::Cos => a.cos(r)?,
                    UnaryOp::Tan => a.tan(r)?,
                    UnaryOp::Exp => a.exp(r)?,
                    UnaryOp::Log => a.log(r)?,
                    UnaryOp::Sqrt => a.sqrt(r)?,
                    UnaryOp::Abs => a.abs(),
                }
            }
            Expr::Binary(op, x, y) => {
                let x = x.eval_interval(b, r)?;
                let y = y.eval_interval(b, r)?;
                match op {
                    BinaryOp::Add => x.add(&y, r)?,
                    BinaryOp::Sub => x.sub(&y, r)?,
                    BinaryOp::Mul => x.mul(&y, r)?,
                    BinaryOp::Div => x.div(&y, r)?,
                }
            }
            Expr::PowInt(a, k) => a.eval_interval(b, r)?.pow_int(*k, r)?,
        })
    }

    /// Symbolic partial derivative with respect to variable `i` (zero-based),
    /// simplified afterwards.
    pub fn differentiate(&self, i: usize) -> Result<Expr, ExprError> {
        Ok(self.diff_raw(i)?.simplify())
    }

    fn diff_raw(&self, i: usize) -> Result<Expr, ExprError> {
        use Expr as E;
        Ok(match self {
            E::Const(_) => E::Const(0.0),
            E::Var(j) => E::Const(if *j == i { 1.0 } else { 0.0 }),
            E::Unary(op, a) => {
                let da = a.diff_raw(i)?;
                let a = (**a).clone();
                let outer = match op {
                    UnaryOp::Neg => return Ok(E::unary(UnaryOp::Neg, da)),
                    UnaryOp::Sin => E::unary(UnaryOp::Cos, a),
                    UnaryOp::Cos => E::unary(UnaryOp::Neg, E::unary(UnaryOp::Sin, a)),
                    // d tan = 1 + tan^2
                    UnaryOp::Tan => E::add(E::Const(1.0), E::powi(E::unary(UnaryOp::Tan, a), 2)),
                    UnaryOp::Exp => E::unary(UnaryOp::Exp, a),
                    UnaryOp::Log => E::div(E::Const(1.0), a),
                    UnaryOp::Sqrt => E::div(E::Const(0.5), E::unary(UnaryOp::Sqrt, a)),
                    UnaryOp::Abs => {
                        return Err(ExprError::NonDifferentiable(format!("abs({a})")));
                    }
                };
                E::mul(outer, da)
            }
            E::Binary(op, a, b) => {
                let da = a.diff_raw(i)?;
                let db = b.diff_raw(i)?;
                match op {
                    BinaryOp::Add => E::add(da, db),
                    BinaryOp::Sub => E::sub(da, db),
                    BinaryOp::Mul => E::add(
                        E::mul(da, (**b).clone()),
                        E::mul((**a).clone(), db),
                    ),
                    BinaryOp::Div => E::div(
                        E::sub(E::mul(da, (**b).clone()), E::mul((**a).clone(), db)),
                        E::powi((**b).clone(), 2),
                    ),
                }
            }
            E::PowInt(a, k) => match k {
                0 => E::Const(0.0),
                1 => a.diff_raw(i)?,
                _ => E::mul(
                    E::mul(E::Const(*k as f64), E::powi((**a).clone(), k - 1)),
                    a.diff_raw(i)?,
                ),
            },
        })
    }

    /// Constant folding plus removal of additive zeros and multiplicative
    /// ones. Not a general algebraic simplifier.
    pub fn simplify(&self) -> Expr {
        use Expr as E;
        match self {
            E::Const(_) | E::Var(_) => self.clone(),
            E::Unary(op, a) => {
                let a = a.simplify();
                match (op, &a) {
                    (UnaryOp::Neg, E::Const(c)) => E::Const(-c),
                    (UnaryOp::Neg, E::Unary(UnaryOp::Neg, inner)) => (**inner).clone(),
                    (_, E::Const(c)) => match E::unary(*op, E::Const(*c)).eval_real(&[]) {
                        Ok(v) if v.is_finite() => E::Const(v),
                        _ => E::unary(*op, a),
                    },
                    _ => E::unary(*op, a),
                }
            }
            E::PowInt(a, k) => {
                let a = a.simplify();
                match (&a, k) {
                    (_, 0) => E::Const(1.0),
                    (_, 1) => a,
                    (E::Const(c), _) => E::Const(c.powi(*k as i32)),
                    // (a^j)^k = a^(jk)
                    (E::PowInt(inner, j), _) => E::PowInt(inner.clone(), j * k),
                    _ => E::powi(a, *k),
                }
            }
            E::Binary(op, a, b) => {
                let a = a.simplify();
                let b = b.simplify();
                match (op, &a, &b) {
                    (BinaryOp::Div, _, E::Const(y)) if *y == 0.0 => E::div(a, b),
                    (_, E::Const(x), E::Const(y)) => E::Const(match op {
                        BinaryOp::Add => x + y,
                        BinaryOp::Sub => x - y,
                        BinaryOp::Mul => x * y,
                        BinaryOp::Div => x / y,
                    }),
                    (BinaryOp::Add, E::Const(z), _) if *z == 0.0 => b,
                    (BinaryOp::Add | BinaryOp::Sub, _, E::Const(z)) if *z == 0.0 => a,
                    (BinaryOp::Sub, E::Const(z), _) if *z == 0.0 => E::unary(UnaryOp::Neg, b).simplify(),
                    (BinaryOp::Mul, E::Const(z), _) | (BinaryOp::Mul, _, E::Const(z))
                        if *z == 0.0 =>
                    {
                        E::Const(0.0)
                    }
                    (BinaryOp::Div, E::Const(z), _) if *z == 0.0 => E::Const(0.0),
                    (BinaryOp::Mul, E::Const(o), _) if *o == 1.0 => b,
                    (BinaryOp::Mul | BinaryOp::Div, _, E::Const(o)) if *o == 1.0 => a,
                    // c1 * (c2 * e) = (c1 c2) * e
                    (BinaryOp::Mul, E::Const(c1), E::Binary(BinaryOp::Mul, inner_a, inner_b))
                        if matches!(**inner_a, E::Const(_)) =>
                    {
                        let E::Const(c2) = **inner_a else {
                            unreachable!()
                        };
                        E::mul(E::Const(c1 * c2), (**inner_b).clone())
                    }
                    // (c1 * e) * c2 = (c1 c2) * e
                    (BinaryOp::Mul, E::Binary(BinaryOp::Mul, inner_a, inner_b), E::Const(c2))
                        if matches!(**inner_a, E::Const(_)) =>
                    {
                        let E::Const(c1) = **inner_a else {
                            unreachable!()
                        };
                        E::mul(E::Const(c1 * c2), (**inner_b).clone())
                    }
                    // e * c = c * e
                    (BinaryOp::Mul, _, E::Const(c)) => E::mul(E::Const(*c), a),
                    _ => E::binary(*op, a, b),
                }
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, _, _) => 1,
            Expr::Binary(BinaryOp::Mul | BinaryOp::Div, _, _) => 2,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Const(c) if c.is_sign_negative() => 3,
            Expr::PowInt(_, _) => 4,
            _ => 5,
        }
    }
}

fn fmt_const(c: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    // `{:?}` keeps a decimal point or exponent so the literal round-trips.
    if c == 0.0 && c.is_sign_negative() {
        write!(f, "-0")
    } else {
        write!(f, "{c:?}")
    }
}

fn fmt_child(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => fmt_const(*c, f),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Unary(UnaryOp::Neg, a) => {
                write!(f, "-")?;
                // a bare literal child would fold on re-parse
                if matches!(**a, Expr::Const(_)) {
                    write!(f, "({a})")
                } else {
                    fmt_child(a, 3, f)
                }
            }
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => {
                let p = self.precedence();
                fmt_child(a, p, f)?;
                write!(f, "{}", op.symbol())?;
                // right operand of a left-associative op needs strictly higher
                // precedence
                fmt_child(b, p + 1, f)
            }
            Expr::PowInt(a, k) => {
                fmt_child(a, 5, f)?;
                write!(f, "^{k}")
            }
        }
    }
}

/// Parses an expression over the state variables `x1 .. xn`.
pub fn parse(src: &str, n: usize) -> Result<Expr, ExprError> {
    let mut p = Parser {
        chars: src.chars().collect(),
        pos: 0,
        n,
    };
    p.skip_ws();
    if p.at_end() {
        return Err(p.syntax("empty expression"));
    }
    let e = p.expr()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.syntax(&format!("unexpected character {:?}", p.chars[p.pos])));
    }
    Ok(e)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    n: usize,
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn syntax(&self, msg: &str) -> ExprError {
        ExprError::Syntax(ParseDiagnostic {
            position: self.pos.min(self.chars.len().saturating_sub(1)),
            message: msg.to_string(),
        })
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::add(lhs, self.term()?);
            } else if self.eat('-') {
                lhs = Expr::sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::mul(lhs, self.unary()?);
            } else if self.eat('/') {
                lhs = Expr::div(lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            self.skip_ws();
            let literal = self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.');
            let inner = self.unary()?;
            // negative literals are stored as constants, `-(c)` stays a negation
            return Ok(match inner {
                Expr::Const(c) if literal => Expr::Const(-c),
                other => Expr::unary(UnaryOp::Neg, other),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let mut base = self.atom()?;
        while self.eat('^') {
            self.skip_ws();
            let start = self.pos;
            let digits = self.take_while(|c| c.is_ascii_digit());
            // anything number-like or symbolic right after the digits means the
            // exponent is not a plain integer literal
            let trailing = self
                .peek()
                .is_some_and(|c| c == '.' || c.is_ascii_alphanumeric() || c == '_');
            if digits.is_empty() || trailing {
                self.pos = start;
                return Err(ExprError::NonIntegerExponent { position: start });
            }
            let k: u32 = digits
                .parse()
                .map_err(|_| ExprError::NonIntegerExponent { position: start })?;
            base = Expr::powi(base, k);
        }
        Ok(base)
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> String {
        let start = self.pos;
        while self.peek().is_some_and(&pred) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.syntax("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let ident = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
                if let Some(op) = UnaryOp::from_name(&ident) {
                    if !self.eat('(') {
                        return Err(self.syntax(&format!("expected '(' after {ident}")));
                    }
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err(self.syntax("expected ')'"));
                    }
                    return Ok(Expr::unary(op, arg));
                }
                if let Some(idx) = ident.strip_prefix('x') {
                    if let Ok(k) = idx.parse::<usize>() {
                        if k >= 1 && k <= self.n && !idx.starts_with('0') {
                            return Ok(Expr::Var(k - 1));
                        }
                    }
                }
                Err(ExprError::UnknownVariable {
                    name: ident,
                    position: start,
                    dim: self.n,
                })
            }
            Some(c) => Err(self.syntax(&format!("unexpected character {c:?}"))),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let mut text = self.take_while(|c| c.is_ascii_digit() || c == '.');
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            let mut exp = String::from("e");
            self.pos += 1;
            if let Some(s @ ('+' | '-')) = self.peek() {
                exp.push(s);
                self.pos += 1;
            }
            let digits = self.take_while(|c| c.is_ascii_digit());
            if digits.is_empty() {
                self.pos = save;
                return Err(self.syntax("malformed exponent in numeric literal"));
            }
            exp.push_str(&digits);
            text.push_str(&exp);
        }
        text.parse::<f64>().map(Expr::Const).map_err(|_| {
            ExprError::Syntax(ParseDiagnostic {
                position: start,
                message: format!("malformed number {text:?}"),
            })
        })
    }
}
