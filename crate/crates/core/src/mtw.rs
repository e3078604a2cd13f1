//! Cost functions and the MTW tensor, computed three ways: by raw
//! differentiation of c(x, y) in 2n variables, from derivatives of Ψ, and as
//! twice the anti-bisectional curvature.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{DomainFailure, Error, Result};
use crate::expr::{parse_two_point, Expr, Scalar};
use crate::hessian::metric_point;
use crate::jets::lift_variables;
use crate::kahler::{anti_bisectional, KahlerCurvPoint};
use crate::potentials::{parse_potential_arg, PotentialSpec};
use crate::tensor::dot;

/// Smallest admissible singular value of the mixed derivative c_{x,y}.
pub const MIXED_SINGULAR_MIN: f64 = 1e-10;

#[derive(Debug, Clone)]
pub enum CostKind {
    /// c(x, y) = Ψ(x − y)
    Psi(PotentialSpec),
    /// Jensen-gap divergence with parameter α in (−1, 1).
    DAlpha { spec: PotentialSpec, alpha: f64 },
    /// Logarithmic cost between simplex weight vectors of length `n`.
    LogCost { n: usize },
    /// The same cost in natural parameters of dimension `n − 1`.
    Ecf { n: usize },
    /// Arbitrary expression in x1..xn, y1..yn.
    Raw { expr: Expr, n: usize, text: String },
}

#[derive(Debug, Clone)]
pub struct CostSpec {
    pub kind: CostKind,
}

impl CostSpec {
    pub fn psi(spec: PotentialSpec) -> Self {
        CostSpec {
            kind: CostKind::Psi(spec),
        }
    }

    pub fn d_alpha(spec: PotentialSpec, alpha: f64) -> Result<Self> {
        if !(alpha > -1.0 && alpha < 1.0) {
            return Err(Error::Parameter {
                name: "alpha".into(),
                value: alpha,
                reason: "alpha must lie in (-1, 1)".into(),
            });
        }
        Ok(CostSpec {
            kind: CostKind::DAlpha { spec, alpha },
        })
    }

    pub fn log_cost(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Dimension("log-cost needs at least 2 weights".into()));
        }
        Ok(CostSpec {
            kind: CostKind::LogCost { n },
        })
    }

    pub fn ecf(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Dimension("ecf cost needs n >= 2 assets".into()));
        }
        Ok(CostSpec {
            kind: CostKind::Ecf { n },
        })
    }

    pub fn raw(text: &str) -> Result<Self> {
        let (expr, n) = parse_two_point(text)?;
        Ok(CostSpec {
            kind: CostKind::Raw {
                expr,
                n,
                text: text.to_string(),
            },
        })
    }

    /// Parse `psi:<potential>`, `d-alpha:<alpha>:<potential>`, `log-cost[:n]`,
    /// `ecf[:n]` or `raw:<expr>`. `dim_hint` fills in an omitted `n` (the
    /// number of coordinates per point).
    pub fn parse(arg: &str, dim_hint: Option<usize>) -> Result<Self> {
        let need_n = |rest: Option<&str>, offset: usize| -> Result<usize> {
            match rest {
                Some(t) => t
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad dimension `{t}` in cost `{arg}`"))),
                None => dim_hint.map(|d| d + offset).ok_or_else(|| {
                    Error::InvalidArgument(format!("cost `{arg}` needs an explicit dimension"))
                }),
            }
        };
        if let Some(rest) = arg.strip_prefix("psi:") {
            Ok(CostSpec::psi(parse_potential_arg(rest)?))
        } else if let Some(rest) = arg.strip_prefix("d-alpha:") {
            let (a, pot) = rest
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument("expected d-alpha:<alpha>:<potential>".into()))?;
            let alpha: f64 = a
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad alpha `{a}`")))?;
            CostSpec::d_alpha(parse_potential_arg(pot)?, alpha)
        } else if arg == "log-cost" || arg.starts_with("log-cost:") {
            CostSpec::log_cost(need_n(arg.strip_prefix("log-cost:"), 0)?)
        } else if arg == "ecf" || arg.starts_with("ecf:") {
            CostSpec::ecf(need_n(arg.strip_prefix("ecf:"), 1)?)
        } else if let Some(rest) = arg.strip_prefix("raw:") {
            CostSpec::raw(rest)
        } else {
            Err(Error::InvalidArgument(format!(
                "unknown cost `{arg}` (expected psi:, d-alpha:, log-cost, ecf or raw:)"
            )))
        }
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            CostKind::Psi(s) => format!("psi:{}", s.to_arg()),
            CostKind::DAlpha { spec, alpha } => format!("d-alpha:{alpha}:{}", spec.to_arg()),
            CostKind::LogCost { n } => format!("log-cost:{n}"),
            CostKind::Ecf { n } => format!("ecf:{n}"),
            CostKind::Raw { text, .. } => format!("raw:{text}"),
        }
    }

    /// Coordinates per point as accepted by [`CostSpec::eval`].
    pub fn point_dim(&self) -> usize {
        match &self.kind {
            CostKind::Psi(s) | CostKind::DAlpha { spec: s, .. } => s.dim(),
            CostKind::LogCost { n } => *n,
            CostKind::Ecf { n } => n - 1,
            CostKind::Raw { n, .. } => *n,
        }
    }

    /// Coordinates used for differentiation (natural parameters for log-cost).
    pub fn chart_dim(&self) -> usize {
        match &self.kind {
            CostKind::LogCost { n } => n - 1,
            _ => self.point_dim(),
        }
    }

    /// Map a point to the differentiation chart.
    pub fn to_chart(&self, p: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            CostKind::LogCost { .. } => crate::transport::simplex_to_natural(p),
            _ => Ok(p.to_vec()),
        }
    }

    fn check_dims(&self, x: &[f64], y: &[f64]) -> Result<()> {
        let d = self.point_dim();
        if x.len() != d || y.len() != d {
            return Err(Error::Dimension(format!(
                "cost expects {d} coordinates per point, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        Ok(())
    }

    fn domain_check(&self, x: &[f64], y: &[f64]) -> Result<()> {
        let out = |p: Vec<f64>| Error::OutOfDomain {
            point: p,
            reason: DomainFailure::Predicate,
        };
        match &self.kind {
            CostKind::Psi(s) => {
                let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                if !s.predicate_holds(&z, 0.0) {
                    return Err(out(z));
                }
            }
            CostKind::DAlpha { spec, alpha } => {
                let (a, b) = ((1.0 - alpha) / 2.0, (1.0 + alpha) / 2.0);
                let m: Vec<f64> = x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
                for p in [x, y, &m] {
                    if !spec.predicate_holds(p, 0.0) {
                        return Err(out(p.to_vec()));
                    }
                }
            }
            CostKind::LogCost { .. } => {
                for p in [x, y] {
                    if p.iter().any(|w| !(*w > 0.0)) {
                        return Err(out(p.to_vec()));
                    }
                }
            }
            CostKind::Ecf { .. } | CostKind::Raw { .. } => {}
        }
        Ok(())
    }

    /// c(x, y) in point coordinates.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dims(x, y)?;
        self.domain_check(x, y)?;
        match &self.kind {
            CostKind::LogCost { n } => {
                let nf = *n as f64;
                let ratio_mean = x.iter().zip(y).map(|(p, q)| q / p).sum::<f64>() / nf;
                let log_mean = x.iter().zip(y).map(|(p, q)| (q / p).ln()).sum::<f64>() / nf;
                Ok(ratio_mean.ln() - log_mean)
            }
            _ => self.eval_chart(x, y),
        }
    }

    /// c in chart coordinates, generic over the scalar type.
    pub fn eval_chart<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        let proto = &x[0];
        match &self.kind {
            CostKind::Psi(s) => {
                let z: Vec<S> = x.iter().zip(y).map(|(a, b)| a.sub(b)).collect();
                s.expr.eval(&z)
            }
            CostKind::DAlpha { spec, alpha } => {
                let (a, b) = ((1.0 - alpha) / 2.0, (1.0 + alpha) / 2.0);
                let ca = proto.lift_const(a);
                let cb = proto.lift_const(b);
                let m: Vec<S> = x.iter().zip(y).map(|(p, q)| ca.mul(p).add(&cb.mul(q))).collect();
                let gap = ca
                    .mul(&spec.expr.eval(x)?)
                    .add(&cb.mul(&spec.expr.eval(y)?))
                    .sub(&spec.expr.eval(&m)?);
                Ok(proto.lift_const(4.0 / (1.0 - alpha * alpha)).mul(&gap))
            }
            // Natural parameters: log(1 + Σe^{y−x}) − log n − (1/n)Σ(y − x).
            CostKind::LogCost { n } => Ok(free_energy(y, x, *n)),
            // log(1 + Σe^{x−y}) − log n − (1/n)Σ(x − y).
            CostKind::Ecf { n } => Ok(free_energy(x, y, *n)),
            CostKind::Raw { expr, .. } => {
                let mut v: Vec<S> = x.to_vec();
                v.extend_from_slice(y);
                expr.eval(&v)
            }
        }
    }
}

fn free_energy<S: Scalar>(a: &[S], b: &[S], n: usize) -> S {
    let proto = &a[0];
    let mut sum = proto.lift_const(1.0);
    let mut lin = proto.lift_const(0.0);
    for (p, q) in a.iter().zip(b) {
        let d = p.sub(q);
        sum = sum.add(&d.exp());
        lin = lin.add(&d);
    }
    // log of a value ≥ 1 cannot fail
    let log = sum.ln().unwrap_or_else(|_| proto.lift_const(f64::NAN));
    log.sub(&proto.lift_const((n as f64).ln()))
        .sub(&lin.mul(&proto.lift_const(1.0 / n as f64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Direct,
    Potential,
    Curvature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MtwValue {
    pub value: f64,
    pub route: Route,
}

fn check_pair(n: usize, xi: &[f64], eta: &[f64]) -> Result<()> {
    if xi.len() != n || eta.len() != n {
        return Err(Error::Dimension(format!(
            "xi and eta must have {n} components, got {} and {}",
            xi.len(),
            eta.len()
        )));
    }
    Ok(())
}

/// Mixed block c_{i,j} = ∂x_i ∂y_j and its inverse, at chart coordinates.
fn mixed_block(cost: &CostSpec, x: &[f64], y: &[f64]) -> Result<(crate::jets::DerivBundle, DMatrix<f64>)> {
    let n = x.len();
    let mut xy = x.to_vec();
    xy.extend_from_slice(y);
    let vars = lift_variables(&xy)?;
    let c = cost.eval_chart(&vars[..n], &vars[n..])?;
    let b = c.derivative_tensors();
    let a = DMatrix::from_fn(n, n, |i, j| b.d2[(i, n + j)]);
    let smin = a.singular_values().min();
    if !(smin > MIXED_SINGULAR_MIN) {
        return Err(Error::SingularMixedDerivative { min_singular: smin });
    }
    Ok((b, a))
}

/// 𝔖 from the displayed contraction of raw cost derivatives, jets in (x, y).
pub fn mtw_direct(cost: &CostSpec, x: &[f64], y: &[f64], xi: &[f64], eta: &[f64]) -> Result<MtwValue> {
    cost.check_dims(x, y)?;
    cost.domain_check(x, y)?;
    let x = cost.to_chart(x)?;
    let y = cost.to_chart(y)?;
    mtw_direct_chart(cost, &x, &y, xi, eta)
}

/// [`mtw_direct`] at points already in chart coordinates.
pub fn mtw_direct_chart(cost: &CostSpec, x: &[f64], y: &[f64], xi: &[f64], eta: &[f64]) -> Result<MtwValue> {
    let n = cost.chart_dim();
    if x.len() != n || y.len() != n {
        return Err(Error::Dimension(format!("chart points need {n} coordinates")));
    }
    if !matches!(cost.kind, CostKind::LogCost { .. }) {
        cost.domain_check(x, y)?;
    }
    check_pair(n, xi, eta)?;
    let (b, a) = mixed_block(cost, x, y)?;
    let ainv = a
        .clone()
        .try_inverse()
        .ok_or(Error::SingularMixedDerivative { min_singular: 0.0 })?;
    // c^{r,k} η_k: y-index r
    let w: Vec<f64> = (0..n).map(|r| (0..n).map(|k| ainv[(r, k)] * eta[k]).sum()).collect();
    let d3 = &b.d3;
    let d4 = &b.d4;
    // c_{ij,p} ξ^i ξ^j, p a y-index
    let left: Vec<f64> = (0..n)
        .map(|p| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += d3.get(i, j, n + p) * xi[i] * xi[j];
                }
            }
            s
        })
        .collect();
    // c_{q,rs} w^r w^s, q an x-index
    let right: Vec<f64> = (0..n)
        .map(|q| {
            let mut s = 0.0;
            for r in 0..n {
                for t in 0..n {
                    s += d3.get(q, n + r, n + t) * w[r] * w[t];
                }
            }
            s
        })
        .collect();
    let mut t33 = 0.0;
    for p in 0..n {
        for q in 0..n {
            t33 += left[p] * ainv[(p, q)] * right[q];
        }
    }
    let mut t4 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let wij = xi[i] * xi[j];
            if wij == 0.0 {
                continue;
            }
            for r in 0..n {
                for s in 0..n {
                    t4 += wij * w[r] * w[s] * d4.get(i, j, n + r, n + s);
                }
            }
        }
    }
    Ok(MtwValue {
        value: t33 - t4,
        route: Route::Direct,
    })
}

/// 𝔖 of the Ψ-cost at z = x − y from derivatives of Ψ.
pub fn mtw_potential(spec: &PotentialSpec, z: &[f64], xi: &[f64], eta: &[f64]) -> Result<MtwValue> {
    let m = metric_point(spec, z)?;
    check_pair(m.dim(), xi, eta)?;
    let zeta = m.sharp(eta);
    let b = &m.bundle;
    let left = b.d3.contract2(xi, xi);
    let right = b.d3.contract2(&zeta, &zeta);
    let t33 = dot(&left, &m.sharp(&right));
    let t4 = b.d4.contract(xi, xi, &zeta, &zeta);
    Ok(MtwValue {
        value: t33 - t4,
        route: Route::Potential,
    })
}

/// 𝔖 = 2𝔄(ξ, η).
pub fn mtw_curvature(spec: &PotentialSpec, z: &[f64], xi: &[f64], eta: &[f64]) -> Result<MtwValue> {
    let k = KahlerCurvPoint::from_metric(metric_point(spec, z)?);
    check_pair(k.dim(), xi, eta)?;
    Ok(MtwValue {
        value: 2.0 * anti_bisectional(&k, xi, eta)?,
        route: Route::Curvature,
    })
}

/// Same formula as [`mtw_curvature`] for arbitrary, not necessarily
/// orthogonal, pairs.
pub fn cross_curvature(spec: &PotentialSpec, z: &[f64], xi: &[f64], eta: &[f64]) -> Result<f64> {
    Ok(mtw_curvature(spec, z, xi, eta)?.value)
}

/// Transport a pair (ξ at x, η at x) to the y side through the mixed block
/// A = c_{x,y}: the vector A⁻¹η and the covector Aᵀξ. The MTW tensor of
/// the swapped cost c'(y, x) = c(x, y) at (y, x) on the transported pair
/// equals 𝔖 at (x, y) on the original one.
pub fn transport_pair(cost: &CostSpec, x: &[f64], y: &[f64], xi: &[f64], eta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = cost.to_chart(x)?;
    let y = cost.to_chart(y)?;
    let n = x.len();
    check_pair(n, xi, eta)?;
    let (_, a) = mixed_block(cost, &x, &y)?;
    let ainv = a
        .clone()
        .try_inverse()
        .ok_or(Error::SingularMixedDerivative { min_singular: 0.0 })?;
    let v = (0..n).map(|r| (0..n).map(|k| ainv[(r, k)] * eta[k]).sum()).collect();
    let c = (0..n).map(|j| (0..n).map(|i| a[(i, j)] * xi[i]).sum()).collect();
    Ok((v, c))
}

/// Side-by-side diagnostic for a D^(α) cost: the direct tensor and twice the
/// anti-bisectional curvature at the interpolated point (1−α)/2·x + (1+α)/2·y.
#[derive(Debug, Clone, Serialize)]
pub struct DAlphaComparison {
    pub direct: f64,
    pub curvature_at_interpolant: f64,
    pub ratio: Option<f64>,
    pub footnote_factor: f64,
}

pub fn d_alpha_comparison(
    spec: &PotentialSpec,
    alpha: f64,
    x: &[f64],
    y: &[f64],
    xi: &[f64],
    eta: &[f64],
) -> Result<DAlphaComparison> {
    let cost = CostSpec::d_alpha(spec.clone(), alpha)?;
    let direct = mtw_direct(&cost, x, y, xi, eta)?.value;
    let (a, b) = ((1.0 - alpha) / 2.0, (1.0 + alpha) / 2.0);
    let m: Vec<f64> = x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
    let curv = mtw_curvature(spec, &m, xi, eta)?.value;
    Ok(DAlphaComparison {
        direct,
        curvature_at_interpolant: curv,
        ratio: (curv.abs() > 1e-300).then(|| direct / curv),
        footnote_factor: (1.0 - alpha * alpha) / 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::catalog;

    fn cat(name: &str) -> PotentialSpec {
        catalog(name, &[]).unwrap()
    }

    #[test]
    fn quadratic_is_null() {
        let c = CostSpec::psi(cat("quadratic"));
        let v = mtw_direct(&c, &[0.3, 1.0], &[-1.0, 2.0], &[1.0, 2.0], &[0.5, -0.1]).unwrap();
        assert_eq!(v.value, 0.0);
        assert_eq!(mtw_potential(&cat("quadratic"), &[1.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap().value, 0.0);
    }

    #[test]
    fn three_routes_agree_on_normal_half_plane() {
        let spec = cat("normal-half-plane");
        let c = CostSpec::psi(spec.clone());
        let x = [0.4, -0.3];
        let y = [0.1, 0.8];
        let z = [0.3, -1.1];
        let (xi, eta) = ([1.0, 0.7], [0.7, -1.0]);
        let d = mtw_direct(&c, &x, &y, &xi, &eta).unwrap().value;
        let p = mtw_potential(&spec, &z, &xi, &eta).unwrap().value;
        let k = mtw_curvature(&spec, &z, &xi, &eta).unwrap().value;
        assert!((d - p).abs() < 1e-10 * p.abs().max(1.0), "{d} {p}");
        assert!((k - p).abs() < 1e-10 * p.abs().max(1.0), "{k} {p}");
    }

    #[test]
    fn neg_multinomial_cross_curvature() {
        let spec = cat("neg-multinomial");
        let v = cross_curvature(&spec, &[-2.0, -2.5], &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((v + 2.0).abs() < 1e-9);
    }

    #[test]
    fn ecf_matches_multinomial_psi_cost() {
        let ecf = CostSpec::ecf(3).unwrap();
        let psi = CostSpec::psi(cat("multinomial"));
        let (x, y) = ([0.2, -0.4], [-0.3, 0.5]);
        let (xi, eta) = ([1.0, 0.3], [-0.2, 0.9]);
        let a = mtw_direct(&ecf, &x, &y, &xi, &eta).unwrap().value;
        let b = mtw_direct(&psi, &x, &y, &xi, &eta).unwrap().value;
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn log_cost_formula_matches_natural_chart() {
        let c = CostSpec::log_cost(3).unwrap();
        let p = [0.2, 0.5, 0.3];
        let q = [0.4, 0.25, 0.35];
        let direct = c.eval(&p, &q).unwrap();
        let x = c.to_chart(&p).unwrap();
        let y = c.to_chart(&q).unwrap();
        let chart: f64 = c.eval_chart(&x, &y).unwrap();
        assert!((direct - chart).abs() < 1e-14);
        assert!(c.eval(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn d_alpha_swap_symmetry() {
        let spec = cat("multinomial");
        let (x, y) = ([0.3, -0.2], [-0.5, 0.4]);
        let (xi, eta) = ([0.6, -1.0], [1.1, 0.25]);
        let c = CostSpec::d_alpha(spec.clone(), 0.5).unwrap();
        let r = CostSpec::d_alpha(spec, -0.5).unwrap();
        let s = mtw_direct(&c, &x, &y, &xi, &eta).unwrap().value;
        let (v, w) = transport_pair(&c, &x, &y, &xi, &eta).unwrap();
        let t = mtw_direct(&r, &y, &x, &v, &w).unwrap().value;
        assert!((s - t).abs() < 1e-10 * s.abs().max(1.0), "{s} {t}");
    }

    #[test]
    fn cost_parsing() {
        assert!(matches!(CostSpec::parse("psi:catalog:quadratic", None).unwrap().kind, CostKind::Psi(_)));
        assert_eq!(CostSpec::parse("log-cost", Some(3)).unwrap().point_dim(), 3);
        assert_eq!(CostSpec::parse("ecf", Some(2)).unwrap().point_dim(), 2);
        assert!(CostSpec::parse("log-cost", None).is_err());
        assert!(CostSpec::parse("d-alpha:1.5:catalog:quadratic", None).is_err());
        let raw = CostSpec::parse("raw:(x1-y1)^2", None).unwrap();
        assert_eq!(raw.eval(&[3.0], &[1.0]).unwrap(), 4.0);
    }
}
