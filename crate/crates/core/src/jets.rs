//! Order-4 truncated multivariate Taylor arithmetic.
//!
//! A [`Jet4`] stores the Taylor coefficients of a function of `n` variables
//! around a point, for every monomial of total degree at most four, densely
//! in graded order: the constant term first, then `u_1 .. u_n`, then the
//! quadratic monomials, and so on. Products drop every term of degree above
//! four, so arithmetic on jets is exact truncated polynomial arithmetic.
//! Univariate primitives are applied by composing their degree-4 Taylor
//! polynomial with the non-constant part of the argument (Horner form).

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::{Tensor3, Tensor4};

pub const ORDER: usize = 4;

/// Minimum argument accepted by `log`, `sqrt` and non-integer powers.
pub const DOMAIN_MARGIN: f64 = 1e-12;
/// Minimum |argument| accepted by division.
pub const DIV_MARGIN: f64 = 1e-300;

struct MonomialTable {
    n: usize,
    exps: Vec<Vec<u8>>,
    /// Every `(a, b, a + b)` with `deg a + deg b <= 4`.
    products: Vec<(u32, u32, u32)>,
    /// α! for each monomial α.
    factorial: Vec<f64>,
    d2_map: Vec<u32>,
    d3_map: Vec<u32>,
    d4_map: Vec<u32>,
}

fn factorial(k: u8) -> f64 {
    (1..=k as u32).map(f64::from).product()
}

fn push_compositions(n: usize, var: usize, left: u8, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if var + 1 == n {
        cur[var] = left;
        out.push(cur.clone());
        cur[var] = 0;
        return;
    }
    for e in (0..=left).rev() {
        cur[var] = e;
        push_compositions(n, var + 1, left - e, cur, out);
    }
    cur[var] = 0;
}

impl MonomialTable {
    fn new(n: usize) -> Self {
        let mut exps = Vec::new();
        let mut cur = vec![0u8; n];
        for d in 0..=ORDER as u8 {
            push_compositions(n, 0, d, &mut cur, &mut exps);
        }
        let index: HashMap<Vec<u8>, usize> =
            exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let deg: Vec<u8> = exps.iter().map(|e| e.iter().sum()).collect();

        let mut products = Vec::new();
        for (a, ea) in exps.iter().enumerate() {
            for (b, eb) in exps.iter().enumerate() {
                if (deg[a] + deg[b]) as usize > ORDER {
                    continue;
                }
                let sum: Vec<u8> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                products.push((a as u32, b as u32, index[&sum] as u32));
            }
        }
        let factorial = exps.iter().map(|e| e.iter().map(|&k| factorial(k)).product()).collect();

        let lookup = |idx: &[usize]| -> u32 {
            let mut e = vec![0u8; n];
            for &i in idx {
                e[i] += 1;
            }
            index[&e] as u32
        };
        let mut d2_map = Vec::with_capacity(n * n);
        let mut d3_map = Vec::with_capacity(n * n * n);
        let mut d4_map = Vec::with_capacity(n * n * n * n);
        for i in 0..n {
            for j in 0..n {
                d2_map.push(lookup(&[i, j]));
                for k in 0..n {
                    d3_map.push(lookup(&[i, j, k]));
                    for l in 0..n {
                        d4_map.push(lookup(&[i, j, k, l]));
                    }
                }
            }
        }

        MonomialTable {
            n,
            exps,
            products,
            factorial,
            d2_map,
            d3_map,
            d4_map,
        }
    }

    fn len(&self) -> usize {
        self.exps.len()
    }
}

fn table(n: usize) -> Arc<MonomialTable> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<MonomialTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(MonomialTable::new(n)))
        .clone()
}

/// Number of monomials of degree at most four in `n` variables, C(n+4, 4).
pub fn monomial_count(n: usize) -> usize {
    (1..=ORDER).fold(1usize, |acc, k| acc * (n + k) / k)
}

/// Truncated order-4 Taylor expansion of a function of `n` variables.
#[derive(Clone)]
pub struct Jet4 {
    table: Arc<MonomialTable>,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet4")
            .field("n", &self.table.n)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl PartialEq for Jet4 {
    fn eq(&self, other: &Self) -> bool {
        self.table.n == other.table.n && self.coeffs == other.coeffs
    }
}

/// Seed one jet per coordinate of `point`: jet `i` is the variable `u_i`.
pub fn lift_variables(point: &[f64]) -> Result<Vec<Jet4>> {
    let n = point.len();
    if n == 0 {
        return Err(Error::Dimension("cannot lift a 0-dimensional point".into()));
    }
    let t = table(n);
    Ok(point
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut coeffs = vec![0.0; t.len()];
            coeffs[0] = x;
            coeffs[1 + i] = 1.0;
            Jet4 {
                table: t.clone(),
                coeffs,
            }
        })
        .collect())
}

/// The primitives a jet can be pushed through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Div,
    PowConst(f64),
    Exp,
    Log,
    Cosh,
    Sqrt,
    Neg,
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Div => "div",
            Primitive::PowConst(_) => "pow_const",
            Primitive::Exp => "exp",
            Primitive::Log => "log",
            Primitive::Cosh => "cosh",
            Primitive::Sqrt => "sqrt",
            Primitive::Neg => "neg",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Primitive::Add | Primitive::Sub | Primitive::Mul | Primitive::Div => 2,
            _ => 1,
        }
    }
}

/// Apply a primitive to jets of a common dimension.
pub fn apply_primitive(prim: Primitive, args: &[&Jet4]) -> Result<Jet4> {
    if args.len() != prim.arity() {
        return Err(Error::InvalidArgument(format!(
            "{} takes {} argument(s), got {}",
            prim.name(),
            prim.arity(),
            args.len()
        )));
    }
    if args.len() == 2 && args[0].dim() != args[1].dim() {
        return Err(Error::Dimension(format!(
            "{} on jets of dimension {} and {}",
            prim.name(),
            args[0].dim(),
            args[1].dim()
        )));
    }
    match prim {
        Primitive::Add => Ok(args[0] + args[1]),
        Primitive::Sub => Ok(args[0] - args[1]),
        Primitive::Mul => Ok(args[0] * args[1]),
        Primitive::Div => args[0].div(args[1]),
        Primitive::PowConst(k) => args[0].powf(k),
        Primitive::Exp => Ok(args[0].exp()),
        Primitive::Log => args[0].ln(),
        Primitive::Cosh => Ok(args[0].cosh()),
        Primitive::Sqrt => args[0].sqrt(),
        Primitive::Neg => Ok(-args[0]),
    }
}

impl Jet4 {
    /// The constant function `c` of `n` variables.
    pub fn constant(n: usize, c: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension("jets need at least one variable".into()));
        }
        let t = table(n);
        let mut coeffs = vec![0.0; t.len()];
        coeffs[0] = c;
        Ok(Jet4 { table: t, coeffs })
    }

    /// A constant with the same dimension as `self`.
    pub fn constant_like(&self, c: f64) -> Self {
        let mut coeffs = vec![0.0; self.coeffs.len()];
        coeffs[0] = c;
        Jet4 {
            table: self.table.clone(),
            coeffs,
        }
    }

    pub fn dim(&self) -> usize {
        self.table.n
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Coefficients in graded monomial order; length C(n+4, 4).
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Exponent vectors in the same order as [`coeffs`](Self::coeffs).
    pub fn monomials(&self) -> &[Vec<u8>] {
        &self.table.exps
    }

    /// Coefficient of the monomial with the given exponents (0 if its degree exceeds 4).
    pub fn coeff(&self, exps: &[u8]) -> f64 {
        assert_eq!(exps.len(), self.dim(), "exponent vector has wrong length");
        self.table
            .exps
            .iter()
            .position(|e| e.as_slice() == exps)
            .map_or(0.0, |i| self.coeffs[i])
    }

    fn check_same(&self, other: &Jet4) {
        assert_eq!(
            self.table.n, other.table.n,
            "jet arithmetic between different dimensions"
        );
    }

    fn scale(&self, s: f64) -> Jet4 {
        Jet4 {
            table: self.table.clone(),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    fn mul_jet(&self, other: &Jet4) -> Jet4 {
        self.check_same(other);
        let mut out = vec![0.0; self.coeffs.len()];
        for &(a, b, c) in &self.table.products {
            let x = self.coeffs[a as usize];
            if x == 0.0 {
                continue;
            }
            out[c as usize] += x * other.coeffs[b as usize];
        }
        Jet4 {
            table: self.table.clone(),
            coeffs: out,
        }
    }

    /// f(self) given the Taylor coefficients `t[m] = f^(m)(a) / m!` at `a = self.value()`.
    fn compose(&self, t: [f64; ORDER + 1]) -> Jet4 {
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let mut r = self.constant_like(t[ORDER]);
        for m in (0..ORDER).rev() {
            r = r.mul_jet(&h);
            r.coeffs[0] += t[m];
        }
        r
    }

    pub fn exp(&self) -> Jet4 {
        let e = self.value().exp();
        self.compose([e, e, e / 2.0, e / 6.0, e / 24.0])
    }

    pub fn ln(&self) -> Result<Jet4> {
        let a = self.value();
        if !(a >= DOMAIN_MARGIN) {
            return Err(Error::NumericalDomain {
                primitive: "log",
                value: a,
            });
        }
        let r = 1.0 / a;
        Ok(self.compose([
            a.ln(),
            r,
            -r * r / 2.0,
            r * r * r / 3.0,
            -r * r * r * r / 4.0,
        ]))
    }

    pub fn cosh(&self) -> Jet4 {
        let a = self.value();
        let (c, s) = (a.cosh(), a.sinh());
        self.compose([c, s, c / 2.0, s / 6.0, c / 24.0])
    }

    pub fn sqrt(&self) -> Result<Jet4> {
        let a = self.value();
        if !(a >= DOMAIN_MARGIN) {
            return Err(Error::NumericalDomain {
                primitive: "sqrt",
                value: a,
            });
        }
        self.powf_unchecked(0.5)
    }

    pub fn recip(&self) -> Result<Jet4> {
        let a = self.value();
        if !(a.abs() >= DIV_MARGIN) {
            return Err(Error::NumericalDomain {
                primitive: "div",
                value: a,
            });
        }
        let r = 1.0 / a;
        Ok(self.compose([r, -r * r, r * r * r, -r * r * r * r, r * r * r * r * r]))
    }

    pub fn div(&self, other: &Jet4) -> Result<Jet4> {
        Ok(self.mul_jet(&other.recip()?))
    }

    /// `self^k` for a real constant exponent.
    pub fn powf(&self, k: f64) -> Result<Jet4> {
        let a = self.value();
        if k.fract() == 0.0 && k.abs() < 1e9 {
            if k >= 0.0 {
                return Ok(self.powi_nonneg(k as u32));
            }
            if !(a.abs() >= DIV_MARGIN) {
                return Err(Error::NumericalDomain {
                    primitive: "pow_const",
                    value: a,
                });
            }
            return self.powf_unchecked(k);
        }
        if !(a >= DOMAIN_MARGIN) {
            return Err(Error::NumericalDomain {
                primitive: "pow_const",
                value: a,
            });
        }
        self.powf_unchecked(k)
    }

    fn powi_nonneg(&self, k: u32) -> Jet4 {
        // Binomial expansion of (a + h)^k: exact even at a = 0.
        let a = self.value();
        let mut t = [0.0; ORDER + 1];
        let mut binom = 1.0;
        for (m, tm) in t.iter_mut().enumerate() {
            if m as u32 > k {
                break;
            }
            *tm = binom * a.powi((k - m as u32) as i32);
            binom = binom * (k as f64 - m as f64) / (m as f64 + 1.0);
        }
        self.compose(t)
    }

    fn powf_unchecked(&self, k: f64) -> Result<Jet4> {
        let a = self.value();
        let mut t = [0.0; ORDER + 1];
        let mut coef = 1.0;
        for (m, tm) in t.iter_mut().enumerate() {
            *tm = coef * a.powf(k - m as f64);
            coef = coef * (k - m as f64) / (m as f64 + 1.0);
        }
        Ok(self.compose(t))
    }

    /// Derivative tensors to order four: component `J` is `J! * coeff(J)`.
    pub fn derivative_tensors(&self) -> DerivBundle {
        let t = &self.table;
        let n = t.n;
        let comp = |idx: u32| t.factorial[idx as usize] * self.coeffs[idx as usize];
        let grad = (0..n).map(|i| self.coeffs[1 + i]).collect();
        let d2 = DMatrix::from_fn(n, n, |i, j| comp(t.d2_map[i * n + j]));
        let d3 = Tensor3::from_fn(n, |i, j, k| comp(t.d3_map[(i * n + j) * n + k]));
        let d4 = Tensor4::from_fn(n, |i, j, k, l| comp(t.d4_map[((i * n + j) * n + k) * n + l]));
        DerivBundle {
            value: self.value(),
            grad,
            d2,
            d3,
            d4,
        }
    }
}

/// Value and derivatives to order four at a point.
#[derive(Debug, Clone)]
pub struct DerivBundle {
    pub value: f64,
    pub grad: Vec<f64>,
    pub d2: DMatrix<f64>,
    pub d3: Tensor3,
    pub d4: Tensor4,
}

impl DerivBundle {
    pub fn dim(&self) -> usize {
        self.grad.len()
    }
}

impl Add for &Jet4 {
    type Output = Jet4;
    fn add(self, rhs: &Jet4) -> Jet4 {
        self.check_same(rhs);
        Jet4 {
            table: self.table.clone(),
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Jet4 {
    type Output = Jet4;
    fn sub(self, rhs: &Jet4) -> Jet4 {
        self.check_same(rhs);
        Jet4 {
            table: self.table.clone(),
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &Jet4 {
    type Output = Jet4;
    fn mul(self, rhs: &Jet4) -> Jet4 {
        self.mul_jet(rhs)
    }
}

impl Neg for &Jet4 {
    type Output = Jet4;
    fn neg(self) -> Jet4 {
        self.scale(-1.0)
    }
}

impl Add<f64> for &Jet4 {
    type Output = Jet4;
    fn add(self, rhs: f64) -> Jet4 {
        let mut out = self.clone();
        out.coeffs[0] += rhs;
        out
    }
}

impl Mul<f64> for &Jet4 {
    type Output = Jet4;
    fn mul(self, rhs: f64) -> Jet4 {
        self.scale(rhs)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Jet4 {
            type Output = Jet4;
            fn $m(self, rhs: Jet4) -> Jet4 {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Jet4> for Jet4 {
            type Output = Jet4;
            fn $m(self, rhs: &Jet4) -> Jet4 {
                (&self).$m(rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Jet4 {
    type Output = Jet4;
    fn neg(self) -> Jet4 {
        -&self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn monomial_counts() {
        for n in 1..6 {
            let j = Jet4::constant(n, 0.0).unwrap();
            assert_eq!(j.coeffs().len(), monomial_count(n));
        }
        assert_eq!(monomial_count(2), 15);
        assert_eq!(monomial_count(4), 70);
    }

    #[test]
    fn lift_single_variable() {
        let u = lift_variables(&[2.0]).unwrap();
        assert_eq!(u[0].coeffs(), &[2.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn lift_rejects_empty_point() {
        assert!(matches!(lift_variables(&[]), Err(Error::Dimension(_))));
    }

    #[test]
    fn sum_of_lifted_variables() {
        let u = lift_variables(&[0.0, 0.0]).unwrap();
        let s = &u[0] + &u[1];
        let b = s.derivative_tensors();
        assert_eq!(b.grad, vec![1.0, 1.0]);
        assert_eq!(b.value, 0.0);
    }

    #[test]
    fn product_rule() {
        let u = lift_variables(&[1.0, -1.0]).unwrap();
        let b = (&u[0] * &u[1]).derivative_tensors();
        assert_eq!(b.value, -1.0);
        assert_eq!(b.grad, vec![-1.0, 1.0]);
        assert_eq!(b.d2[(0, 1)], 1.0);
        assert_eq!(b.d2[(1, 0)], 1.0);
        assert_eq!(b.d2[(0, 0)], 0.0);
    }

    #[test]
    fn exp_series() {
        let u = lift_variables(&[0.0]).unwrap();
        let e = u[0].exp();
        let expect = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for (a, b) in e.coeffs().iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn log_one_plus_u_series() {
        let u = lift_variables(&[0.0]).unwrap();
        let l = (&u[0] + 1.0).ln().unwrap();
        let expect = [0.0, 1.0, -0.5, 1.0 / 3.0, -0.25];
        for (a, b) in l.coeffs().iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn exp_times_exp_neg_is_constant() {
        let u = lift_variables(&[0.3]).unwrap();
        let p = &u[0].exp() * &(-&u[0]).exp();
        let b = p.derivative_tensors();
        assert_abs_diff_eq!(b.value, 1.0, epsilon = 1e-15);
        assert!(b.d4.max_abs() <= 1e-15);
        assert!(b.d3.max_abs() <= 1e-15);
    }

    #[test]
    fn domain_errors() {
        let u = lift_variables(&[0.0]).unwrap();
        assert!(matches!(
            u[0].ln(),
            Err(Error::NumericalDomain { primitive: "log", .. })
        ));
        assert!(matches!(
            u[0].recip(),
            Err(Error::NumericalDomain { primitive: "div", .. })
        ));
        assert!(matches!(
            (-&u[0]).sqrt(),
            Err(Error::NumericalDomain { primitive: "sqrt", .. })
        ));
        assert!(u[0].powf(0.5).is_err());
        // Integer powers are fine at zero.
        let sq = u[0].powf(2.0).unwrap();
        assert_eq!(sq.coeffs(), &[0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn apply_primitive_dispatch() {
        let u = lift_variables(&[0.5, 2.0]).unwrap();
        let q = apply_primitive(Primitive::Div, &[&u[0], &u[1]]).unwrap();
        assert_abs_diff_eq!(q.value(), 0.25, epsilon = 1e-15);
        assert!(apply_primitive(Primitive::Exp, &[&u[0], &u[1]]).is_err());
        let p = apply_primitive(Primitive::PowConst(1.5), &[&u[1]]).unwrap();
        assert_abs_diff_eq!(p.value(), 2f64.powf(1.5), epsilon = 1e-14);
        let g = p.derivative_tensors().grad;
        assert_abs_diff_eq!(g[1], 1.5 * 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn quadratic_potential_tensors() {
        let u = lift_variables(&[0.4, -1.3]).unwrap();
        let psi = &(&(&u[0] * &u[0]) + &(&u[1] * &u[1])) * 0.5;
        let b = psi.derivative_tensors();
        assert_eq!(b.d2, DMatrix::identity(2, 2));
        assert_eq!(b.d3.max_abs(), 0.0);
        assert_eq!(b.d4.max_abs(), 0.0);
    }

    #[test]
    fn symmetric_components_are_bitwise_equal() {
        let u = lift_variables(&[0.1, 0.2, -0.3]).unwrap();
        let f = (&(&u[0] * &u[1]) + &u[2].exp()).cosh();
        let b = f.derivative_tensors();
        assert_eq!(b.d4.get(0, 1, 2, 2).to_bits(), b.d4.get(2, 0, 2, 1).to_bits());
        assert_eq!(b.d3.get(0, 1, 2).to_bits(), b.d3.get(2, 1, 0).to_bits());
    }
}
