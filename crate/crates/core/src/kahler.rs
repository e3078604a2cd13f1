//! Curvature of the Kähler Sasaki metric on TM, read off from derivatives of
//! the potential at the base point. The fibre coordinate never appears.
//!
//! Blocks, with M_abcd = Ψ_abp Ψ^pq Ψ_cdq:
//!
//! ```text
//! hh_ijkl    = R(∂u_i, ∂u_j, ∂u_k, ∂u_l) = -¼(M_jlik - M_iljk)
//! hv_ijkl    = R(∂u_i, ∂v_j, ∂u_k, ∂v_l) = -½Ψ_ijkl + ¼M_ikjl + ¼M_jkil
//! mixed_ijkl = R_{i j̄ k l̄}               = -½Ψ_ijkl + ½M_ikjl
//! ```
//!
//! Sectional-type curvatures, with ζ = g⁻¹η:
//!
//! ```text
//! anti-bisectional  A(ξ, η) = hv(ξ,ζ,ξ,ζ) - hh(ζ,ξ,ζ,ξ)      (= mixed(ξ,ζ,ξ,ζ))
//! bisectional       B(ξ, η) = hh(ζ,ξ,ζ,ξ) + hv(ζ,ξ,ζ,ξ)
//! holomorphic       H(ξ)    = 2 hv(ξ,ξ,ξ,ξ) / g(ξ,ξ)²
//! ```
//!
//! With this normalisation the MTW tensor of a Ψ-cost is exactly 2A.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hessian::{cubic_contraction, metric_point, riemann_from_metric, MetricPoint};
use crate::potentials::PotentialSpec;
use crate::tensor::{dot, norm, Tensor4};

/// Human-readable statement of the contraction conventions, echoed in reports.
pub const CONVENTION: &str = "A(xi,eta) = hv(xi,z,xi,z) - hh(z,xi,z,xi); \
B(xi,eta) = hh(z,xi,z,xi) + hv(z,xi,z,xi); H(xi) = 2 hv(xi,xi,xi,xi)/g(xi,xi)^2; \
z = g^-1 eta; orthogonality is eta(xi) = 0";

/// Relative tolerance on η(ξ) for orthogonal pairs.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct KahlerCurvPoint {
    pub hh: Tensor4,
    pub hv: Tensor4,
    pub mixed: Tensor4,
    pub metric: MetricPoint,
}

impl KahlerCurvPoint {
    pub fn from_metric(metric: MetricPoint) -> Self {
        let n = metric.dim();
        let d4 = &metric.bundle.d4;
        let m = cubic_contraction(&metric.bundle.d3, &metric.ginv);
        let hh = riemann_from_metric(&metric).0;
        let hv = Tensor4::from_fn(n, |i, j, k, l| {
            -0.5 * d4.get(i, j, k, l) + 0.25 * m.get(i, k, j, l) + 0.25 * m.get(j, k, i, l)
        });
        let mixed = Tensor4::from_fn(n, |i, j, k, l| -0.5 * d4.get(i, j, k, l) + 0.5 * m.get(i, k, j, l));
        KahlerCurvPoint {
            hh,
            hv,
            mixed,
            metric,
        }
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    /// Component-wise gap between `mixed` and `hv - hh`.
    pub fn block_identity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let d = self.mixed.get(i, j, k, l)
                            - (self.hv.get(i, j, k, l) - self.hh.get(i, j, k, l));
                        worst = worst.max(d.abs());
                    }
                }
            }
        }
        worst
    }
}

pub fn kahler_curvature(spec: &PotentialSpec, point: &[f64]) -> Result<KahlerCurvPoint> {
    Ok(KahlerCurvPoint::from_metric(metric_point(spec, point)?))
}

fn check_vec(v: &[f64], n: usize, what: &'static str) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension(format!("{what} has {} components, expected {n}", v.len())));
    }
    if v.iter().all(|x| *x == 0.0) {
        return Err(Error::ZeroVector(what));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} has non-finite components")));
    }
    Ok(())
}

pub fn anti_bisectional(k: &KahlerCurvPoint, xi: &[f64], eta: &[f64]) -> Result<f64> {
    let n = k.dim();
    check_vec(xi, n, "xi")?;
    check_vec(eta, n, "eta")?;
    let z = k.metric.sharp(eta);
    Ok(k.hv.contract(xi, &z, xi, &z) - k.hh.contract(&z, xi, &z, xi))
}

/// True when η(ξ) vanishes relative to |ξ||η|.
pub fn is_orthogonal(xi: &[f64], eta: &[f64]) -> bool {
    dot(xi, eta).abs() <= ORTHOGONALITY_TOL * norm(xi) * norm(eta)
}

pub fn orthogonal_anti_bisectional(k: &KahlerCurvPoint, xi: &[f64], eta: &[f64]) -> Result<f64> {
    check_vec(xi, k.dim(), "xi")?;
    check_vec(eta, k.dim(), "eta")?;
    if !is_orthogonal(xi, eta) {
        return Err(Error::NotOrthogonal {
            pairing: dot(xi, eta),
        });
    }
    anti_bisectional(k, xi, eta)
}

pub fn holomorphic_sectional(k: &KahlerCurvPoint, xi: &[f64]) -> Result<f64> {
    check_vec(xi, k.dim(), "xi")?;
    let gg = k.metric.inner(xi, xi);
    Ok(2.0 * k.hv.contract(xi, xi, xi, xi) / (gg * gg))
}

pub fn bisectional(k: &KahlerCurvPoint, xi: &[f64], eta: &[f64]) -> Result<f64> {
    let n = k.dim();
    check_vec(xi, n, "xi")?;
    check_vec(eta, n, "eta")?;
    let z = k.metric.sharp(eta);
    Ok(k.hh.contract(&z, xi, &z, xi) + k.hv.contract(&z, xi, &z, xi))
}

/// Flattened blocks for reports.
#[derive(Debug, Clone, Serialize)]
pub struct KahlerBlocks {
    pub n: usize,
    pub hh: Vec<f64>,
    pub hv: Vec<f64>,
    pub mixed: Vec<f64>,
}

impl From<&KahlerCurvPoint> for KahlerBlocks {
    fn from(k: &KahlerCurvPoint) -> Self {
        KahlerBlocks {
            n: k.dim(),
            hh: k.hh.as_slice().to_vec(),
            hv: k.hv.as_slice().to_vec(),
            mixed: k.mixed.as_slice().to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::catalog;

    fn at(name: &str, p: &[f64]) -> KahlerCurvPoint {
        kahler_curvature(&catalog(name, &[]).unwrap(), p).unwrap()
    }

    #[test]
    fn quadratic_blocks_vanish() {
        let k = at("quadratic", &[1.0, 2.0]);
        assert_eq!(k.hh.max_abs(), 0.0);
        assert_eq!(k.hv.max_abs(), 0.0);
        assert_eq!(k.mixed.max_abs(), 0.0);
        assert_eq!(anti_bisectional(&k, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn block_identity_and_hv_symmetry() {
        let k = at("siegel-quartic", &[0.6, 1.9]);
        assert!(k.block_identity_defect() < 1e-12);
        for (i, j, kk, l) in [(0, 1, 1, 0), (1, 0, 0, 0), (0, 1, 0, 1)] {
            let v = k.hv.get(i, j, kk, l);
            assert!((v - k.hv.get(kk, l, i, j)).abs() < 1e-12);
            // The Hermitian block, not hv, carries the i<->k and j<->l symmetries.
            let m = k.mixed.get(i, j, kk, l);
            assert!((m - k.mixed.get(kk, j, i, l)).abs() < 1e-12);
            assert!((m - k.mixed.get(i, l, kk, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn neg_multinomial_anti_bisectional() {
        let k = at("neg-multinomial", &[-2.2, -1.9]);
        let xi = [0.3, -1.1];
        let eta = [0.8, 0.45];
        let a = anti_bisectional(&k, &xi, &eta).unwrap();
        assert!((a + dot(&xi, &eta).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn holomorphic_anchors() {
        let k = at("normal-half-plane", &[0.0, -1.0]);
        assert!((holomorphic_sectional(&k, &[1.0, 0.0]).unwrap() - 2.0).abs() < 1e-12);
        let k = at("multinomial", &[0.3, -0.4]);
        assert!((holomorphic_sectional(&k, &[0.2, 1.0]).unwrap() - 2.0).abs() < 1e-12);
        let k = at("siegel-dual", &[0.3, 1.4]);
        assert!((holomorphic_sectional(&k, &[0.2, 1.0]).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonality_is_enforced() {
        let k = at("multinomial", &[0.0, 0.0]);
        assert!(matches!(
            orthogonal_anti_bisectional(&k, &[1.0, 0.0], &[1.0, 1.0]),
            Err(Error::NotOrthogonal { .. })
        ));
        let v = orthogonal_anti_bisectional(&k, &[1.0, 1.0], &[1.0, -1.0]).unwrap();
        assert!(v.abs() < 1e-14);
        assert!(matches!(
            anti_bisectional(&k, &[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroVector("xi"))
        ));
    }
}
