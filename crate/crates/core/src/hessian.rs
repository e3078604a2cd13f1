//! Hessian-metric geometry: metric, Christoffel symbols, base curvature,
//! Legendre duality and dual-connection geodesics.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::error::{DomainFailure, Error, Result};
use crate::jets::DerivBundle;
use crate::potentials::{min_eigenvalue, PotentialSpec, PD_THRESHOLD};
use crate::tensor::{Tensor3, Tensor4};

pub const NEWTON_MAX_ITERS: usize = 100;
pub const MAX_HALVINGS: usize = 60;
pub const NEWTON_TOL: f64 = 1e-12;
/// Largest parameter increment when marching along a dual geodesic.
pub const GEODESIC_STEP: f64 = 0.125;

#[derive(Debug, Clone)]
pub struct MetricPoint {
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    /// Γ_ijk = ½Ψ_ijk
    pub gamma_lower: Tensor3,
    /// `gamma_mixed.get(i, j, k)` = Γ^k_ij = ½Ψ_ijm Ψ^km
    pub gamma_mixed: Tensor3,
    pub bundle: DerivBundle,
}

impl MetricPoint {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i] * self.g[(i, j)] * b[j];
            }
        }
        s
    }

    /// Raise a covector with the inverse metric.
    pub fn sharp(&self, eta: &[f64]) -> Vec<f64> {
        (&self.ginv * DVector::from_column_slice(eta))
            .iter()
            .copied()
            .collect()
    }

    pub fn flat(&self, xi: &[f64]) -> Vec<f64> {
        (&self.g * DVector::from_column_slice(xi))
            .iter()
            .copied()
            .collect()
    }
}

/// Base Riemann tensor R_ijkl.
#[derive(Debug, Clone, Serialize)]
pub struct Riem4(pub Tensor4);

impl Riem4 {
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.0.get(i, j, k, l)
    }

    /// Largest violation of the skew, pair and first Bianchi symmetries.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.0.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let r = self.get(i, j, k, l);
                        worst = worst
                            .max((r + self.get(j, i, k, l)).abs())
                            .max((r + self.get(i, j, l, k)).abs())
                            .max((r - self.get(k, l, i, j)).abs())
                            .max((r + self.get(i, k, l, j) + self.get(i, l, j, k)).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Checked bundle: domain predicate, then a positive-definite Hessian.
pub(crate) fn metric_bundle(spec: &PotentialSpec, point: &[f64]) -> Result<DerivBundle> {
    if point.len() != spec.dim() {
        return Err(Error::Dimension(format!(
            "potential has dimension {}, point has {} coordinates",
            spec.dim(),
            point.len()
        )));
    }
    if !spec.predicate_holds(point, 0.0) {
        return Err(Error::OutOfDomain {
            point: point.to_vec(),
            reason: DomainFailure::Predicate,
        });
    }
    spec.raw_bundle(point)
}

pub fn metric_from_bundle(bundle: DerivBundle) -> Result<MetricPoint> {
    let n = bundle.dim();
    let g = bundle.d2.clone();
    let min_eig = min_eigenvalue(&bundle);
    if !(min_eig > PD_THRESHOLD) {
        return Err(Error::DegenerateMetric {
            min_eigenvalue: min_eig,
        });
    }
    let ginv = Cholesky::new(g.clone())
        .ok_or(Error::DegenerateMetric {
            min_eigenvalue: min_eig,
        })?
        .inverse();
    let gamma_lower = Tensor3::from_fn(n, |i, j, k| 0.5 * bundle.d3.get(i, j, k));
    let gamma_mixed = Tensor3::from_fn(n, |i, j, k| {
        (0..n)
            .map(|m| 0.5 * bundle.d3.get(i, j, m) * ginv[(k, m)])
            .sum()
    });
    Ok(MetricPoint {
        g,
        ginv,
        gamma_lower,
        gamma_mixed,
        bundle,
    })
}

pub fn metric_point(spec: &PotentialSpec, point: &[f64]) -> Result<MetricPoint> {
    metric_from_bundle(metric_bundle(spec, point)?)
}

/// M_abcd = Σ Ψ_abp Ψ^pq Ψ_cdq, symmetric within and across the two pairs.
pub(crate) fn cubic_contraction(d3: &Tensor3, ginv: &DMatrix<f64>) -> Tensor4 {
    let n = d3.dim();
    let raised = Tensor3::from_fn(n, |c, d, p| (0..n).map(|q| ginv[(p, q)] * d3.get(c, d, q)).sum());
    Tensor4::from_fn(n, |a, b, c, d| {
        (0..n).map(|p| d3.get(a, b, p) * raised.get(c, d, p)).sum()
    })
}

pub fn riemann_from_metric(m: &MetricPoint) -> Riem4 {
    let n = m.dim();
    let mm = cubic_contraction(&m.bundle.d3, &m.ginv);
    Riem4(Tensor4::from_fn(n, |i, j, k, l| {
        -0.25 * (mm.get(j, l, i, k) - mm.get(i, l, j, k))
    }))
}

pub fn riemann(spec: &PotentialSpec, point: &[f64]) -> Result<Riem4> {
    Ok(riemann_from_metric(&metric_point(spec, point)?))
}

/// Sectional curvature of the plane spanned by `x`, `y`.
pub fn sectional_curvature(r: &Riem4, m: &MetricPoint, x: &[f64], y: &[f64]) -> Result<f64> {
    let area = m.inner(x, x) * m.inner(y, y) - m.inner(x, y).powi(2);
    if !(area.abs() > 1e-300) {
        return Err(Error::ZeroVector("plane spanned by x and y"));
    }
    Ok(r.0.contract(x, y, x, y) / area)
}

/// θ = ∇Ψ(u).
pub fn to_dual(spec: &PotentialSpec, point: &[f64]) -> Result<Vec<f64>> {
    Ok(spec.eval_bundle(point)?.grad)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Evaluate at a trial point; `None` when it is unusable as a Newton iterate.
fn trial(spec: &PotentialSpec, u: &[f64]) -> Option<DerivBundle> {
    if !spec.predicate_holds(u, 0.0) {
        return None;
    }
    let b = spec.raw_bundle(u).ok()?;
    let finite = b.value.is_finite() && b.grad.iter().all(|g| g.is_finite());
    (finite && min_eigenvalue(&b) > PD_THRESHOLD).then_some(b)
}

/// Solve ∇Ψ(u) = θ by safeguarded Newton iteration from `guess`.
pub fn from_dual(spec: &PotentialSpec, theta: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
    let n = spec.dim();
    if theta.len() != n || guess.len() != n {
        return Err(Error::Dimension(format!(
            "expected {n} coordinates for theta and guess"
        )));
    }
    let Some(mut b) = trial(spec, guess) else {
        return Err(Error::OutOfDomain {
            point: guess.to_vec(),
            reason: DomainFailure::Predicate,
        });
    };
    let mut u = guess.to_vec();
    let resid = |b: &DerivBundle| -> Vec<f64> { b.grad.iter().zip(theta).map(|(g, t)| g - t).collect() };
    let merit = |b: &DerivBundle, u: &[f64]| b.value - u.iter().zip(theta).map(|(a, t)| a * t).sum::<f64>();
    let mut r = resid(&b);
    let mut rn = inf_norm(&r);
    for _ in 0..NEWTON_MAX_ITERS {
        if rn <= NEWTON_TOL {
            return Ok(u);
        }
        let h = b.d2.clone();
        let step = match Cholesky::new(h) {
            Some(c) => c.solve(&DVector::from_iterator(n, r.iter().map(|x| -x))),
            None => break,
        };
        let slope: f64 = step.iter().zip(&r).map(|(d, g)| d * g).sum();
        let phi = merit(&b, &u);
        let mut s = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = u.iter().zip(step.iter()).map(|(a, d)| a + s * d).collect();
            if let Some(cb) = trial(spec, &cand) {
                let cr = resid(&cb);
                let crn = inf_norm(&cr);
                let armijo = merit(&cb, &cand) <= phi + 1e-4 * s * slope;
                if armijo || crn < rn {
                    accepted = Some((cand, cb, cr, crn));
                    break;
                }
            }
            s *= 0.5;
        }
        let Some((cu, cb, cr, crn)) = accepted else {
            break;
        };
        u = cu;
        b = cb;
        r = cr;
        rn = crn;
    }
    if rn <= NEWTON_TOL {
        return Ok(u);
    }
    Err(Error::Inversion {
        residual: rn,
        iterations: NEWTON_MAX_ITERS,
    })
}

/// Ψ*(θ) = ⟨u, θ⟩ − Ψ(u) at u = (∇Ψ)⁻¹(θ).
pub fn legendre_value(spec: &PotentialSpec, theta: &[f64], guess: &[f64]) -> Result<f64> {
    let u = from_dual(spec, theta, guess)?;
    let v = spec.value(&u)?;
    Ok(u.iter().zip(theta).map(|(a, t)| a * t).sum::<f64>() - v)
}

/// Point at parameter `t` on the straight θ-line from `u0` to `u1`.
pub fn dual_geodesic(spec: &PotentialSpec, u0: &[f64], u1: &[f64], t: f64) -> Result<Vec<f64>> {
    Ok(dual_geodesic_samples(spec, u0, u1, &[t])?.remove(0))
}

/// Points at several parameters, marching from `u0` so that each inversion
/// is seeded from a nearby solution. `ts` need not be sorted.
pub fn dual_geodesic_samples(
    spec: &PotentialSpec,
    u0: &[f64],
    u1: &[f64],
    ts: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if let Some(t) = ts.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
    }
    let th0 = to_dual(spec, u0)?;
    let th1 = to_dual(spec, u1)?;
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
    let mut out = vec![Vec::new(); ts.len()];
    let mut cur_t = 0.0;
    let mut cur_u = u0.to_vec();
    for idx in order {
        let t = ts[idx];
        if t == 0.0 {
            out[idx] = u0.to_vec();
            continue;
        }
        if t == 1.0 {
            out[idx] = u1.to_vec();
            continue;
        }
        while cur_t < t {
            let next = (cur_t + GEODESIC_STEP).min(t);
            let th: Vec<f64> = th0
                .iter()
                .zip(&th1)
                .map(|(a, b)| (1.0 - next) * a + next * b)
                .collect();
            cur_u = from_dual(spec, &th, &cur_u).map_err(|e| match e {
                Error::Inversion { .. } | Error::OutOfDomain { .. } => {
                    Error::SegmentExitsDomain { t: next }
                }
                other => other,
            })?;
            cur_t = next;
        }
        out[idx] = cur_u.clone();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::catalog;

    fn cat(name: &str) -> PotentialSpec {
        catalog(name, &[]).unwrap()
    }

    #[test]
    fn quadratic_is_flat() {
        let m = metric_point(&cat("quadratic"), &[0.3, 1.0]).unwrap();
        assert_eq!(m.g, DMatrix::identity(2, 2));
        assert_eq!(m.gamma_lower.max_abs(), 0.0);
        assert_eq!(riemann_from_metric(&m).0.max_abs(), 0.0);
    }

    #[test]
    fn multinomial_metric_at_origin() {
        let m = metric_point(&cat("multinomial"), &[0.0, 0.0]).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]) / 9.0;
        assert!((m.g - want).amax() < 1e-15);
    }

    #[test]
    fn constant_sectional_curvatures() {
        for (name, at, k) in [
            ("normal-half-plane", [0.0, -1.0], -0.5),
            ("normal-half-plane", [0.7, -1.6], -0.5),
            ("multinomial", [0.4, -1.1], 0.25),
            ("siegel-dual", [0.2, 1.5], -0.25),
            ("neg-multinomial", [-2.0, -1.7], -0.25),
        ] {
            let spec = cat(name);
            let m = metric_point(&spec, &at).unwrap();
            let r = riemann_from_metric(&m);
            let s = sectional_curvature(&r, &m, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
            assert!((s - k).abs() < 1e-12, "{name}: {s}");
            assert!(r.symmetry_defect() < 1e-14);
        }
    }

    #[test]
    fn mixed_christoffel_lowers_back() {
        let m = metric_point(&cat("siegel-quartic"), &[0.5, 2.0]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let low: f64 = (0..2).map(|l| m.g[(k, l)] * m.gamma_mixed.get(i, j, l)).sum();
                    assert!((low - m.gamma_lower.get(i, j, k)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn duality_anchors() {
        let nhp = cat("normal-half-plane");
        let th = to_dual(&nhp, &[0.0, -1.0]).unwrap();
        assert!(th[0].abs() < 1e-15 && (th[1] - 0.5).abs() < 1e-15);
        let th = to_dual(&nhp, &[1.2, -0.7]).unwrap();
        let u = from_dual(&nhp, &th, &[0.0, -1.0]).unwrap();
        assert!((u[0] - 1.2).abs() < 1e-9 && (u[1] + 0.7).abs() < 1e-9);

        let mn = cat("multinomial");
        let u = from_dual(&mn, &[1.0 / 3.0, 1.0 / 3.0], &[1.0, -2.0]).unwrap();
        assert!(inf_norm(&u) < 1e-12);
        let v = legendre_value(&mn, &[1.0 / 3.0, 1.0 / 3.0], &[0.5, 0.5]).unwrap();
        assert!((v - (1.0f64 / 3.0).ln()).abs() < 1e-12);

        let v = legendre_value(&nhp, &[0.0, 0.5], &[0.3, -2.0]).unwrap();
        assert!((v - (-0.5 + 0.5 * 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn inversion_outside_image_fails() {
        // Market weights must sum below one.
        let mn = cat("multinomial");
        let e = from_dual(&mn, &[0.7, 0.6], &[0.0, 0.0]).unwrap_err();
        assert!(matches!(e, Error::Inversion { .. }), "{e:?}");
    }

    #[test]
    fn geodesic_endpoints_and_midpoint() {
        let q = cat("quadratic");
        let m = dual_geodesic(&q, &[0.0, 1.0], &[2.0, -1.0], 0.5).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-14 && m[1].abs() < 1e-14);
        let mn = cat("multinomial");
        let mid = dual_geodesic(&mn, &[0.0, 0.0], &[1.0, 0.0], 0.5).unwrap();
        let th = to_dual(&mn, &mid).unwrap();
        let a = to_dual(&mn, &[0.0, 0.0]).unwrap();
        let b = to_dual(&mn, &[1.0, 0.0]).unwrap();
        for i in 0..2 {
            assert!((th[i] - 0.5 * (a[i] + b[i])).abs() < 1e-12);
        }
        assert_eq!(dual_geodesic(&mn, &[0.0, 0.0], &[1.0, 0.0], 1.0).unwrap(), vec![1.0, 0.0]);
    }
}
