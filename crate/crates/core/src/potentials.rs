//! Convex potentials: a catalog of named entries plus parsed expressions,
//! each carrying an open domain predicate.

use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::error::{DomainFailure, Error, Result};
use crate::expr::{self, Expr};
use crate::jets::{lift_variables, DerivBundle};

/// Smallest admissible Hessian eigenvalue.
pub const PD_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    AllSpace,
    /// `coeffs . u < bound`
    HalfSpace { coeffs: Vec<f64>, bound: f64 },
    /// `expr(u) > 0`
    Positive(Expr),
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainPredicate {
    pub kind: DomainKind,
    pub margin: f64,
}

impl DomainPredicate {
    pub fn all_space() -> Self {
        DomainPredicate {
            kind: DomainKind::AllSpace,
            margin: 0.0,
        }
    }

    fn of(kind: DomainKind) -> Self {
        DomainPredicate { kind, margin: 0.0 }
    }

    /// Signed slack of the predicate at `u`: positive strictly inside.
    /// Half-spaces and boxes report Euclidean distance to the boundary.
    pub fn slack(&self, u: &[f64]) -> Result<f64> {
        Ok(match &self.kind {
            DomainKind::AllSpace => f64::INFINITY,
            DomainKind::HalfSpace { coeffs, bound } => {
                let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
                let dot: f64 = coeffs.iter().zip(u).map(|(c, x)| c * x).sum();
                (bound - dot) / norm
            }
            DomainKind::Positive(e) => e.eval(u)?,
            DomainKind::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .zip(u)
                .map(|((l, h), x)| (x - l).min(h - x))
                .fold(f64::INFINITY, f64::min),
        })
    }

    /// Render as a grammar `where` body, if expressible.
    fn as_expr(&self) -> Option<Expr> {
        match &self.kind {
            DomainKind::AllSpace | DomainKind::Box { .. } => None,
            DomainKind::Positive(e) => Some(e.clone()),
            DomainKind::HalfSpace { coeffs, bound } => {
                let mut e = Expr::num(*bound);
                for (i, c) in coeffs.iter().enumerate() {
                    if *c != 0.0 {
                        e = e - Expr::num(*c) * Expr::var(i);
                    }
                }
                Some(e)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Catalog { name: String },
    Expression { text: String },
}

#[derive(Debug, Clone)]
pub struct PotentialSpec {
    pub source: Source,
    pub n: usize,
    pub expr: Expr,
    pub domain: DomainPredicate,
    pub params: Vec<(String, f64)>,
    /// Default in-domain sampling box for tests and certification.
    pub sampling_box: Option<Vec<(f64, f64)>>,
}

/// Outcome of [`in_domain`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainCheck {
    pub inside: bool,
    pub predicate_holds: bool,
    pub slack: Option<f64>,
    pub min_eigenvalue: Option<f64>,
    pub reason: Option<DomainFailure>,
}

pub struct CatalogEntry {
    pub name: &'static str,
    pub formula: &'static str,
    pub domain: &'static str,
    pub params: &'static str,
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        name: "quadratic",
        formula: "0.5 * sum u_i^2",
        domain: "all of R^n",
        params: "n (default 2)",
    },
    CatalogEntry {
        name: "normal-half-plane",
        formula: "-u1^2/(4 u2) - 0.5 log(-2 u2)",
        domain: "u2 < 0",
        params: "",
    },
    CatalogEntry {
        name: "siegel-dual",
        formula: "-0.5 - log(u2 - u1^2)",
        domain: "u2 - u1^2 > 0",
        params: "",
    },
    CatalogEntry {
        name: "siegel-quartic",
        formula: "-0.5 - log(u2 - u1^4)",
        domain: "u2 - u1^4 > 0",
        params: "",
    },
    CatalogEntry {
        name: "multinomial",
        formula: "log(1 + sum exp(u_i))",
        domain: "all of R^n",
        params: "n (default 2)",
    },
    CatalogEntry {
        name: "neg-multinomial",
        formula: "-log(1 - sum exp(u_i))",
        domain: "1 - sum exp(u_i) > 0",
        params: "n (default 2)",
    },
    CatalogEntry {
        name: "power",
        formula: "(exp(u1) + exp(u2))^p",
        domain: "all of R^2",
        params: "p in (0,1) (default 0.5)",
    },
    CatalogEntry {
        name: "log-cosh",
        formula: "log(cosh(u1) + cosh(u2))",
        domain: "all of R^2",
        params: "",
    },
];

pub fn catalog_names() -> impl Iterator<Item = &'static str> {
    CATALOG.iter().map(|e| e.name)
}

fn take_param(params: &[(String, f64)], name: &str) -> Option<f64> {
    params.iter().rev().find(|(k, _)| k == name).map(|(_, v)| *v)
}

fn dimension_param(params: &[(String, f64)], default: usize) -> Result<usize> {
    match take_param(params, "n") {
        None => Ok(default),
        Some(v) if v >= 1.0 && v.fract() == 0.0 && v <= 16.0 => Ok(v as usize),
        Some(v) => Err(Error::Parameter {
            name: "n".into(),
            value: v,
            reason: "dimension must be an integer in 1..=16".into(),
        }),
    }
}

fn sum_exp(n: usize) -> Expr {
    (1..n).fold(Expr::var(0).exp(), |acc, i| acc + Expr::var(i).exp())
}

/// Build a named catalog potential.
pub fn catalog(name: &str, params: &[(String, f64)]) -> Result<PotentialSpec> {
    let allowed: &[&str] = match name {
        "quadratic" | "multinomial" | "neg-multinomial" => &["n"],
        "power" => &["p"],
        _ => &[],
    };
    if let Some((k, v)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        if CATALOG.iter().any(|e| e.name == name) {
            return Err(Error::Parameter {
                name: k.clone(),
                value: *v,
                reason: format!("not a parameter of `{name}`"),
            });
        }
    }
    let u = Expr::var;
    let (n, e, kind, bx): (usize, Expr, DomainKind, Vec<(f64, f64)>) = match name {
        "quadratic" => {
            let n = dimension_param(params, 2)?;
            let sq = (1..n).fold(u(0).pow(2.0), |acc, i| acc + u(i).pow(2.0));
            (n, 0.5 * sq, DomainKind::AllSpace, vec![(-2.0, 2.0); n])
        }
        "normal-half-plane" => (
            2,
            -u(0).pow(2.0) / (4.0 * u(1)) - 0.5 * (-2.0 * u(1)).ln(),
            DomainKind::HalfSpace {
                coeffs: vec![0.0, 1.0],
                bound: 0.0,
            },
            vec![(-1.0, 1.0), (-2.0, -0.2)],
        ),
        "siegel-dual" => (
            2,
            -0.5 - (u(1) - u(0).pow(2.0)).ln(),
            DomainKind::Positive(u(1) - u(0).pow(2.0)),
            vec![(-1.0, 1.0), (1.2, 3.0)],
        ),
        "siegel-quartic" => (
            2,
            -0.5 - (u(1) - u(0).pow(4.0)).ln(),
            DomainKind::Positive(u(1) - u(0).pow(4.0)),
            // The Hessian degenerates on u1 = 0, so the box stays clear of it.
            vec![(0.25, 1.0), (1.2, 3.0)],
        ),
        "multinomial" => {
            let n = dimension_param(params, 2)?;
            (n, (1.0 + sum_exp(n)).ln(), DomainKind::AllSpace, vec![(-2.0, 2.0); n])
        }
        "neg-multinomial" => {
            let n = dimension_param(params, 2)?;
            let lo = -1.5 - (n as f64).ln();
            (
                n,
                -(1.0 - sum_exp(n)).ln(),
                DomainKind::Positive(1.0 - sum_exp(n)),
                vec![(-4.0, lo); n],
            )
        }
        "power" => {
            let p = take_param(params, "p").unwrap_or(0.5);
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Parameter {
                    name: "p".into(),
                    value: p,
                    reason: "power potential needs 0 < p < 1".into(),
                });
            }
            (
                2,
                (u(0).exp() + u(1).exp()).pow(p),
                DomainKind::AllSpace,
                vec![(-1.0, 1.0); 2],
            )
        }
        "log-cosh" => (
            2,
            (u(0).cosh() + u(1).cosh()).ln(),
            DomainKind::AllSpace,
            vec![(-2.0, 2.0); 2],
        ),
        other => return Err(Error::UnknownPotential(other.to_string())),
    };
    let mut kept: Vec<(String, f64)> = Vec::new();
    for (k, v) in params {
        kept.retain(|(k2, _)| k2 != k);
        kept.push((k.clone(), *v));
    }
    Ok(PotentialSpec {
        source: Source::Catalog { name: name.into() },
        n,
        expr: e,
        domain: DomainPredicate::of(kind),
        params: kept,
        sampling_box: Some(bx),
    })
}

/// Parse a potential written in the expression grammar.
pub fn parse(text: &str) -> Result<PotentialSpec> {
    let parsed = expr::parse_spec(text)?;
    let n = parsed
        .body
        .arity()
        .max(parsed.domain.as_ref().map_or(0, Expr::arity));
    if n == 0 {
        return Err(Error::Dimension(
            "potential must mention at least one variable u1..un".into(),
        ));
    }
    let domain = match parsed.domain {
        Some(d) => DomainPredicate::of(DomainKind::Positive(d)),
        None => DomainPredicate::all_space(),
    };
    Ok(PotentialSpec {
        source: Source::Expression { text: text.into() },
        n,
        expr: parsed.body,
        domain,
        params: Vec::new(),
        sampling_box: None,
    })
}

/// Parse the command-line form `catalog:<name>[:k=v,...]` or `expr:<text>`.
pub fn parse_potential_arg(arg: &str) -> Result<PotentialSpec> {
    if let Some(rest) = arg.strip_prefix("catalog:") {
        let (name, params) = match rest.split_once(':') {
            Some((n, p)) => (n, parse_params(p)?),
            None => (rest, Vec::new()),
        };
        catalog(name, &params)
    } else if let Some(text) = arg.strip_prefix("expr:") {
        parse(text)
    } else {
        Err(Error::InvalidArgument(format!(
            "potential must start with `catalog:` or `expr:`, got `{arg}`"
        )))
    }
}

pub(crate) fn parse_params(text: &str) -> Result<Vec<(String, f64)>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got `{kv}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad number in `{kv}`")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

impl PotentialSpec {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn name(&self) -> String {
        match &self.source {
            Source::Catalog { name } => name.clone(),
            Source::Expression { text } => text.clone(),
        }
    }

    /// Grammar text that parses back to an equivalent expression.
    pub fn print(&self) -> String {
        match self.domain.as_expr() {
            Some(d) => format!("{} where {} > 0", self.expr, d),
            None => self.expr.to_string(),
        }
    }

    /// Round-trippable command-line form.
    pub fn to_arg(&self) -> String {
        match &self.source {
            Source::Catalog { name } if self.params.is_empty() => format!("catalog:{name}"),
            Source::Catalog { name } => {
                let ps: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                format!("catalog:{name}:{}", ps.join(","))
            }
            Source::Expression { text } => format!("expr:{text}"),
        }
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.domain.margin = margin;
        self
    }

    fn check_dim(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.n {
            return Err(Error::Dimension(format!(
                "potential has dimension {}, point has {} coordinates",
                self.n,
                point.len()
            )));
        }
        Ok(())
    }

    /// Plain value, no derivatives and no domain check.
    pub fn value(&self, point: &[f64]) -> Result<f64> {
        self.check_dim(point)?;
        self.expr.eval(point)
    }

    /// Derivatives to order four with no domain check.
    pub fn raw_bundle(&self, point: &[f64]) -> Result<DerivBundle> {
        self.check_dim(point)?;
        let vars = lift_variables(point)?;
        Ok(self.expr.eval(&vars)?.derivative_tensors())
    }

    /// Value and derivatives, after checking the domain with the spec's own margin.
    pub fn eval_bundle(&self, point: &[f64]) -> Result<DerivBundle> {
        self.check_dim(point)?;
        let slack = self.domain.slack(point).map_err(|_| Error::OutOfDomain {
            point: point.to_vec(),
            reason: DomainFailure::Numerical,
        })?;
        if let Some(reason) = predicate_failure(slack, self.domain.margin) {
            return Err(Error::OutOfDomain {
                point: point.to_vec(),
                reason,
            });
        }
        let b = self.raw_bundle(point)?;
        let min_eig = min_eigenvalue(&b);
        if !(min_eig > PD_THRESHOLD) {
            return Err(Error::OutOfDomain {
                point: point.to_vec(),
                reason: DomainFailure::NotPositiveDefinite,
            });
        }
        Ok(b)
    }

    /// True when the domain predicate holds with margin (no Hessian test).
    pub fn predicate_holds(&self, point: &[f64], margin: f64) -> bool {
        point.len() == self.n
            && self
                .domain
                .slack(point)
                .is_ok_and(|s| predicate_failure(s, margin.max(self.domain.margin)).is_none())
    }
}

fn predicate_failure(slack: f64, margin: f64) -> Option<DomainFailure> {
    if !(slack > 0.0) {
        Some(DomainFailure::Predicate)
    } else if slack <= margin {
        Some(DomainFailure::Margin)
    } else {
        None
    }
}

pub(crate) fn min_eigenvalue(b: &DerivBundle) -> f64 {
    if b.d2.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    SymmetricEigen::new(b.d2.clone())
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v))
}

/// Domain predicate with margin plus positive-definite Hessian.
pub fn in_domain(spec: &PotentialSpec, point: &[f64], margin: f64) -> DomainCheck {
    let fail = |reason, predicate_holds, slack, min_eigenvalue| DomainCheck {
        inside: false,
        predicate_holds,
        slack,
        min_eigenvalue,
        reason: Some(reason),
    };
    if point.len() != spec.n {
        return fail(DomainFailure::Dimension, false, None, None);
    }
    let slack = match spec.domain.slack(point) {
        Ok(s) => s,
        Err(_) => return fail(DomainFailure::Numerical, false, None, None),
    };
    let margin = margin.max(spec.domain.margin);
    if let Some(r) = predicate_failure(slack, margin) {
        return fail(r, r == DomainFailure::Margin, Some(slack), None);
    }
    let b = match spec.raw_bundle(point) {
        Ok(b) => b,
        Err(_) => return fail(DomainFailure::Numerical, true, Some(slack), None),
    };
    let m = min_eigenvalue(&b);
    if !(m > PD_THRESHOLD) {
        return fail(DomainFailure::NotPositiveDefinite, true, Some(slack), Some(m));
    }
    DomainCheck {
        inside: true,
        predicate_holds: true,
        slack: Some(slack),
        min_eigenvalue: Some(m),
        reason: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(name: &str) -> PotentialSpec {
        catalog(name, &[]).unwrap()
    }

    #[test]
    fn quadratic_bundle() {
        let b = cat("quadratic").eval_bundle(&[3.0, -7.0]).unwrap();
        assert_eq!(b.value, 29.0);
        assert_eq!(b.grad, vec![3.0, -7.0]);
        assert_eq!(b.d2[(0, 0)], 1.0);
        assert_eq!(b.d2[(0, 1)], 0.0);
    }

    #[test]
    fn multinomial_gradient_symmetric() {
        let b = cat("multinomial").eval_bundle(&[0.0, 0.0]).unwrap();
        for g in b.grad {
            assert!((g - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn normal_half_plane_anchor() {
        let b = cat("normal-half-plane").eval_bundle(&[0.0, -1.0]).unwrap();
        assert!((b.value + 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((b.d2[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((b.d2[(1, 1)] - 0.5).abs() < 1e-14);
        assert!(b.d2[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn domain_diagnostics() {
        let nhp = cat("normal-half-plane");
        assert!(in_domain(&nhp, &[0.0, -1.0], 0.0).inside);
        let c = in_domain(&nhp, &[0.0, 0.5], 0.0);
        assert!(!c.inside);
        assert_eq!(c.reason, Some(DomainFailure::Predicate));
        let c = in_domain(&cat("siegel-dual"), &[1.0, 1.0000001], 1e-3);
        assert_eq!(c.reason, Some(DomainFailure::Margin));
        assert!(c.predicate_holds);
        assert!(matches!(
            nhp.eval_bundle(&[0.0, 0.5]),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn catalog_errors() {
        assert!(matches!(catalog("nope", &[]), Err(Error::UnknownPotential(_))));
        let p = vec![("p".to_string(), 1.5)];
        assert!(matches!(catalog("power", &p), Err(Error::Parameter { .. })));
        let q = vec![("q".to_string(), 1.0)];
        assert!(matches!(catalog("log-cosh", &q), Err(Error::Parameter { .. })));
    }

    #[test]
    fn parsed_specs() {
        let s = parse("log(1 + exp(u1) + exp(u2))").unwrap();
        assert_eq!(s.n, 2);
        assert_eq!(s.domain.kind, DomainKind::AllSpace);
        let s = parse("-u1^2/(4*u2) - 0.5*log(-2*u2) where -u2 > 0").unwrap();
        let c = cat("normal-half-plane");
        let a = s.eval_bundle(&[0.3, -0.7]).unwrap();
        let b = c.eval_bundle(&[0.3, -0.7]).unwrap();
        assert!((a.value - b.value).abs() < 1e-15);
        assert!(!s.predicate_holds(&[0.0, 0.1], 0.0));
    }

    #[test]
    fn printed_catalog_reparses() {
        for name in catalog_names() {
            let s = cat(name);
            let t = parse(&s.print()).unwrap();
            let bx = s.sampling_box.clone().unwrap();
            let mid: Vec<f64> = bx.iter().map(|(l, h)| 0.5 * (l + h)).collect();
            assert_eq!(s.value(&mid).unwrap(), t.value(&mid).unwrap(), "{name}");
            assert_eq!(
                s.predicate_holds(&mid, 0.0),
                t.predicate_holds(&mid, 0.0),
                "{name}"
            );
        }
    }

    #[test]
    fn command_line_forms() {
        let s = parse_potential_arg("catalog:power:p=0.3").unwrap();
        assert_eq!(s.params, vec![("p".to_string(), 0.3)]);
        assert_eq!(parse_potential_arg(&s.to_arg()).unwrap().params, s.params);
        let s = parse_potential_arg("catalog:multinomial:n=3").unwrap();
        assert_eq!(s.n, 3);
        assert!(parse_potential_arg("quadratic").is_err());
    }
}
