//! Expression trees over the jet primitives, with a recursive-descent parser
//! and a printer whose output parses back to an equivalent tree.
//!
//! ```text
//! expr   := term (("+"|"-") term)*
//! term   := factor (("*"|"/") factor)*
//! factor := "-" factor | power
//! power  := atom ("^" "-"? number)?
//! atom   := number | var | func "(" expr ")" | "(" expr ")"
//! func   := "exp" | "log" | "cosh" | "sqrt"
//! spec   := expr ("where" expr ">" "0")?
//! ```
//!
//! Unary minus binds looser than `^`, so `-u1^2` is `-(u1^2)`.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::jets::{Jet4, DIV_MARGIN, DOMAIN_MARGIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Cosh,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Cosh => "cosh",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "cosh" => Func::Cosh,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based variable slot.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

/// Arithmetic an expression can be evaluated over.
pub trait Scalar: Clone {
    fn lift_const(&self, c: f64) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn div(&self, o: &Self) -> Result<Self>;
    fn powf(&self, k: f64) -> Result<Self>;
    fn exp(&self) -> Self;
    fn ln(&self) -> Result<Self>;
    fn cosh(&self) -> Self;
    fn sqrt(&self) -> Result<Self>;
}

impl Scalar for f64 {
    fn lift_const(&self, c: f64) -> Self {
        c
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn div(&self, o: &Self) -> Result<Self> {
        if !(o.abs() >= DIV_MARGIN) {
            return Err(Error::NumericalDomain {
                primitive: "div",
                value: *o,
            });
        }
        Ok(self / o)
    }
    fn powf(&self, k: f64) -> Result<Self> {
        if k.fract() == 0.0 {
            if k < 0.0 && !(self.abs() >= DIV_MARGIN) {
                return Err(Error::NumericalDomain {
                    primitive: "pow_const",
                    value: *self,
                });
            }
            return Ok(f64::powi(*self, k as i32));
        }
        if !(*self >= DOMAIN_MARGIN) {
            return Err(Error::NumericalDomain {
                primitive: "pow_const",
                value: *self,
            });
        }
        Ok(f64::powf(*self, k))
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Result<Self> {
        if !(*self >= DOMAIN_MARGIN) {
            return Err(Error::NumericalDomain {
                primitive: "log",
                value: *self,
            });
        }
        Ok(f64::ln(*self))
    }
    fn cosh(&self) -> Self {
        f64::cosh(*self)
    }
    fn sqrt(&self) -> Result<Self> {
        if !(*self >= DOMAIN_MARGIN) {
            return Err(Error::NumericalDomain {
                primitive: "sqrt",
                value: *self,
            });
        }
        Ok(f64::sqrt(*self))
    }
}

impl Scalar for Jet4 {
    fn lift_const(&self, c: f64) -> Self {
        self.constant_like(c)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn div(&self, o: &Self) -> Result<Self> {
        Jet4::div(self, o)
    }
    fn powf(&self, k: f64) -> Result<Self> {
        Jet4::powf(self, k)
    }
    fn exp(&self) -> Self {
        Jet4::exp(self)
    }
    fn ln(&self) -> Result<Self> {
        Jet4::ln(self)
    }
    fn cosh(&self) -> Self {
        Jet4::cosh(self)
    }
    fn sqrt(&self) -> Result<Self> {
        Jet4::sqrt(self)
    }
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn num(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn exp(self) -> Expr {
        Expr::Call(Func::Exp, Box::new(self))
    }

    pub fn ln(self) -> Expr {
        Expr::Call(Func::Log, Box::new(self))
    }

    pub fn cosh(self) -> Expr {
        Expr::Call(Func::Cosh, Box::new(self))
    }

    pub fn sqrt(self) -> Expr {
        Expr::Call(Func::Sqrt, Box::new(self))
    }

    pub fn pow(self, k: f64) -> Expr {
        Expr::Pow(Box::new(self), k)
    }

    /// Evaluate over any [`Scalar`]; `vars` must cover every variable slot.
    pub fn eval<S: Scalar>(&self, vars: &[S]) -> Result<S> {
        let proto = vars
            .first()
            .ok_or_else(|| Error::Dimension("expression evaluated with no variables".into()))?;
        self.eval_with(vars, proto)
    }

    fn eval_with<S: Scalar>(&self, vars: &[S], proto: &S) -> Result<S> {
        Ok(match self {
            Expr::Const(c) => proto.lift_const(*c),
            Expr::Var(i) => vars
                .get(*i)
                .cloned()
                .ok_or_else(|| Error::Dimension(format!("variable slot {i} out of range")))?,
            Expr::Neg(a) => a.eval_with(vars, proto)?.neg(),
            Expr::Add(a, b) => a.eval_with(vars, proto)?.add(&b.eval_with(vars, proto)?),
            Expr::Sub(a, b) => a.eval_with(vars, proto)?.sub(&b.eval_with(vars, proto)?),
            Expr::Mul(a, b) => a.eval_with(vars, proto)?.mul(&b.eval_with(vars, proto)?),
            Expr::Div(a, b) => a.eval_with(vars, proto)?.div(&b.eval_with(vars, proto)?)?,
            Expr::Pow(a, k) => a.eval_with(vars, proto)?.powf(*k)?,
            Expr::Call(f, a) => {
                let x = a.eval_with(vars, proto)?;
                match f {
                    Func::Exp => x.exp(),
                    Func::Log => x.ln()?,
                    Func::Cosh => x.cosh(),
                    Func::Sqrt => x.sqrt()?,
                }
            }
        })
    }

    /// One past the largest variable slot used (0 for constants).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.arity(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.arity().max(b.arity())
            }
        }
    }

    pub fn map_vars(&self, f: &impl Fn(usize) -> usize) -> Expr {
        let bx = |e: &Expr| Box::new(e.map_vars(f));
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => Expr::Var(f(*i)),
            Expr::Neg(a) => Expr::Neg(bx(a)),
            Expr::Add(a, b) => Expr::Add(bx(a), bx(b)),
            Expr::Sub(a, b) => Expr::Sub(bx(a), bx(b)),
            Expr::Mul(a, b) => Expr::Mul(bx(a), bx(b)),
            Expr::Div(a, b) => Expr::Div(bx(a), bx(b)),
            Expr::Pow(a, k) => Expr::Pow(bx(a), *k),
            Expr::Call(g, a) => Expr::Call(*g, bx(a)),
        }
    }

    /// Render with the given variable naming.
    pub fn display_with(&self, name: &dyn Fn(usize) -> String) -> String {
        Printer { expr: self, name }.to_string()
    }
}

struct Printer<'a> {
    expr: &'a Expr,
    name: &'a dyn Fn(usize) -> String,
}

fn fmt_num(c: f64) -> String {
    // `{:?}` is the shortest representation that round-trips exactly.
    format!("{c:?}")
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |e: &'_ Expr| Printer {
            expr: e,
            name: self.name,
        }
        .to_string();
        match self.expr {
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "(-{})", fmt_num(-c))
            }
            Expr::Const(c) => write!(f, "{}", fmt_num(*c)),
            Expr::Var(i) => write!(f, "{}", (self.name)(*i)),
            Expr::Neg(a) => write!(f, "(-{})", sub(a)),
            Expr::Add(a, b) => write!(f, "({} + {})", sub(a), sub(b)),
            Expr::Sub(a, b) => write!(f, "({} - {})", sub(a), sub(b)),
            Expr::Mul(a, b) => write!(f, "({} * {})", sub(a), sub(b)),
            Expr::Div(a, b) => write!(f, "({} / {})", sub(a), sub(b)),
            Expr::Pow(a, k) => write!(f, "({})^{}", sub(a), fmt_num(*k)),
            Expr::Call(g, a) => write!(f, "{}({})", g.name(), sub(a)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |i: usize| format!("u{}", i + 1);
        write!(f, "{}", self.display_with(&name))
    }
}

macro_rules! expr_binop {
    ($tr:ident, $m:ident, $v:ident) => {
        impl $tr for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                Expr::$v(Box::new(self), Box::new(rhs))
            }
        }
        impl $tr<f64> for Expr {
            type Output = Expr;
            fn $m(self, rhs: f64) -> Expr {
                Expr::$v(Box::new(self), Box::new(Expr::Const(rhs)))
            }
        }
        impl $tr<Expr> for f64 {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                Expr::$v(Box::new(Expr::Const(self)), Box::new(rhs))
            }
        }
    };
}
expr_binop!(Add, add, Add);
expr_binop!(Sub, sub, Sub);
expr_binop!(Mul, mul, Mul);
expr_binop!(Div, div, Div);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Gt,
    End,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'>' => Tok::Gt,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // optional exponent
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let s = &text[start..i];
                let v: f64 = s.parse().map_err(|_| Error::Syntax {
                    offset: start,
                    message: format!("malformed number `{s}`"),
                })?;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                return Err(Error::Syntax {
                    offset: start,
                    message: format!("unexpected character `{}`", text[start..].chars().next().unwrap_or('?')),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

/// Maps a variable name (letter, 1-based index) to a slot.
type VarResolver<'a> = &'a dyn Fn(char, usize) -> Option<usize>;

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    resolve: VarResolver<'a>,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = lhs + self.term()?;
                }
                Tok::Minus => {
                    self.bump();
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = lhs * self.factor()?;
                }
                Tok::Slash => {
                    self.bump();
                    lhs = lhs / self.factor()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(-self.factor()?);
        }
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let neg = if *self.peek() == Tok::Minus {
                self.bump();
                true
            } else {
                false
            };
            match self.bump() {
                Tok::Num(k) => return Ok(base.pow(if neg { -k } else { k })),
                _ => {
                    self.pos -= 1;
                    return self.err("expected a numeric exponent after `^`");
                }
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    let Some(f) = Func::from_name(&name) else {
                        return Err(Error::Syntax {
                            offset,
                            message: format!("unknown function `{name}`"),
                        });
                    };
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                self.variable(&name, offset)
            }
            Tok::End => self.err("unexpected end of input, expected an expression"),
            t => self.err(format!("unexpected token {t:?}, expected an expression")),
        }
    }

    fn variable(&self, name: &str, offset: usize) -> Result<Expr> {
        let mut chars = name.chars();
        let letter = chars.next().unwrap_or('?');
        let digits = chars.as_str();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            if Func::from_name(name).is_some() {
                return Err(Error::Syntax {
                    offset,
                    message: format!("function `{name}` needs an argument in parentheses"),
                });
            }
            return Err(Error::Syntax {
                offset,
                message: format!("unknown identifier `{name}`"),
            });
        }
        let idx: usize = digits.parse().map_err(|_| Error::Syntax {
            offset,
            message: format!("bad variable index in `{name}`"),
        })?;
        if idx == 0 {
            return Err(Error::Syntax {
                offset,
                message: "variable indices start at 1".into(),
            });
        }
        match (self.resolve)(letter, idx) {
            Some(slot) => Ok(Expr::Var(slot)),
            None => Err(Error::Syntax {
                offset,
                message: format!("unknown variable `{name}`"),
            }),
        }
    }
}

/// Result of parsing `expr ("where" expr ">" "0")?`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSpec {
    pub body: Expr,
    pub domain: Option<Expr>,
}

pub(crate) fn parse_spec_with(text: &str, resolve: VarResolver<'_>) -> Result<ParsedSpec> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
        resolve,
    };
    let body = p.expr()?;
    let domain = match p.peek() {
        Tok::Ident(w) if w == "where" => {
            p.bump();
            let d = p.expr()?;
            p.expect(Tok::Gt, "`>`")?;
            match p.peek() {
                Tok::Num(z) if *z == 0.0 => {
                    p.bump();
                }
                _ => return p.err("domain clause must read `<expr> > 0`"),
            }
            Some(d)
        }
        _ => None,
    };
    if *p.peek() != Tok::End {
        return p.err("unexpected trailing input");
    }
    Ok(ParsedSpec { body, domain })
}

/// Parse an expression in `u1, u2, ...` (slot `i-1` for `u<i>`).
pub fn parse_spec(text: &str) -> Result<ParsedSpec> {
    parse_spec_with(text, &|c, i| (c == 'u').then(|| i - 1))
}

/// Parse a two-point expression in `x1..xn`, `y1..yn`; returns the tree with
/// slots `0..n` for x and `n..2n` for y, together with `n`.
pub fn parse_two_point(text: &str) -> Result<(Expr, usize)> {
    // Interleave while parsing, then de-interleave once n is known.
    let parsed = parse_spec_with(text, &|c, i| match c {
        'x' => Some(2 * (i - 1)),
        'y' => Some(2 * (i - 1) + 1),
        _ => None,
    })?;
    if parsed.domain.is_some() {
        return Err(Error::Syntax {
            offset: 0,
            message: "two-point cost expressions take no `where` clause".into(),
        });
    }
    let n = parsed.body.arity().div_ceil(2).max(1);
    let e = parsed
        .body
        .map_vars(&|s| if s % 2 == 0 { s / 2 } else { n + s / 2 });
    Ok((e, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(text: &str, at: &[f64]) -> f64 {
        parse_spec(text).unwrap().body.eval(at).unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2 * 3", &[0.0]), 7.0);
        assert_eq!(ev("-u1^2", &[3.0]), -9.0);
        assert_eq!(ev("-2*u1", &[3.0]), -6.0);
        assert_eq!(ev("2^-1", &[0.0]), 0.5);
        assert_eq!(ev("8/4/2", &[0.0]), 1.0);
        assert_eq!(ev("1 - 2 - 3", &[0.0]), -4.0);
    }

    #[test]
    fn multinomial_text() {
        let p = parse_spec("log(1 + exp(u1) + exp(u2))").unwrap();
        assert_eq!(p.body.arity(), 2);
        assert!(p.domain.is_none());
        let v: f64 = p.body.eval(&[0.0, 0.0]).unwrap();
        assert!((v - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn where_clause() {
        let p = parse_spec("-u1^2/(4*u2) - 0.5*log(-2*u2) where -u2 > 0").unwrap();
        let d = p.domain.unwrap();
        assert_eq!(d.eval(&[0.0, -1.0]).unwrap(), 1.0);
        let v: f64 = p.body.eval(&[0.0, -1.0]).unwrap();
        assert!((v + 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse_spec("log(") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        match parse_spec("u0 + 1") {
            Err(Error::Syntax { offset, message }) => {
                assert_eq!(offset, 0);
                assert!(message.contains("start at 1"));
            }
            other => panic!("{other:?}"),
        }
        match parse_spec("1 + sin(u1)") {
            Err(Error::Syntax { offset, message }) => {
                assert_eq!(offset, 4);
                assert!(message.contains("unknown function"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_spec("u1 where u1 > 1").is_err());
        assert!(parse_spec("u1 )").is_err());
        assert!(parse_spec("x1").is_err());
    }

    #[test]
    fn two_point_layout() {
        let (e, n) = parse_two_point("(x1 - y1)^2 + x2*y2").unwrap();
        assert_eq!(n, 2);
        let v: f64 = e.eval(&[1.0, 2.0, 4.0, 5.0]).unwrap();
        assert_eq!(v, 9.0 + 10.0);
    }

    #[test]
    fn printer_round_trip_literal() {
        let p = parse_spec("-u1^2/(4*u2) - 0.5*log(-2*u2) + 1e-7").unwrap();
        let text = p.body.to_string();
        let q = parse_spec(&text).unwrap();
        let a: f64 = p.body.eval(&[0.3, -0.8]).unwrap();
        let b: f64 = q.body.eval(&[0.3, -0.8]).unwrap();
        assert_eq!(a, b);
    }
}
