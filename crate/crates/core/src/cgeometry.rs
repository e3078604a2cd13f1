//! c-exponential, c-segments and relative c-convexity for Ψ-costs.
//!
//! For c(x, y) = Ψ(x − y) the momentum −c_x(x, y) is ∇Ψ(x − y), so a set Y is
//! c-convex relative to x exactly when {∇Ψ(x − y) : y ∈ Y} is convex. The
//! check maps ordered boundary samples of Y to θ-coordinates and tests that
//! every sampled chord between them stays inside the region they bound.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hessian::{dual_geodesic_samples, from_dual, to_dual};
use crate::lp::hull_distance_l1;
use crate::potentials::PotentialSpec;

pub const CONVEXITY_TOL: f64 = 1e-9;
pub const DEFAULT_RESOLUTION: usize = 32;

/// Default Newton seed for inverting ∇Ψ: the centre of the sampling box, or
/// the origin.
pub fn default_guess(spec: &PotentialSpec) -> Vec<f64> {
    match &spec.sampling_box {
        Some(b) => b.iter().map(|(l, h)| 0.5 * (l + h)).collect(),
        None => vec![0.0; spec.dim()],
    }
}

/// y with −c_x(x, y) = p, i.e. y = x − (∇Ψ)⁻¹(−p).
pub fn c_exp(spec: &PotentialSpec, x: &[f64], p: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
    let neg: Vec<f64> = p.iter().map(|v| -v).collect();
    let g = guess.map_or_else(|| default_guess(spec), <[f64]>::to_vec);
    let z = from_dual(spec, &neg, &g)?;
    Ok(x.iter().zip(&z).map(|(a, b)| a - b).collect())
}

/// Momentum −c_x(x, y).
pub fn momentum(spec: &PotentialSpec, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    Ok(to_dual(spec, &z)?.iter().map(|v| -v).collect())
}

/// Point at `t` on the c-segment from `y0` to `y1` seen from `x`.
pub fn c_segment(spec: &PotentialSpec, x: &[f64], y0: &[f64], y1: &[f64], t: f64) -> Result<Vec<f64>> {
    Ok(c_segment_samples(spec, x, y0, y1, &[t])?.remove(0))
}

pub fn c_segment_samples(spec: &PotentialSpec, x: &[f64], y0: &[f64], y1: &[f64], ts: &[f64]) -> Result<Vec<Vec<f64>>> {
    let z0: Vec<f64> = x.iter().zip(y0).map(|(a, b)| a - b).collect();
    let z1: Vec<f64> = x.iter().zip(y1).map(|(a, b)| a - b).collect();
    let zs = dual_geodesic_samples(spec, &z0, &z1, ts)?;
    Ok(zs
        .into_iter()
        .map(|z| x.iter().zip(&z).map(|(a, b)| a - b).collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConvexityMode {
    /// Y is tested relative to every x in X.
    #[serde(rename = "Y-relative-to-X")]
    YRelativeToX,
    /// X is tested relative to every y in Y.
    #[serde(rename = "X-relative-to-Y")]
    XRelativeToY,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityWitness {
    pub base: Vec<f64>,
    pub endpoints: (Vec<f64>, Vec<f64>),
    pub t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub holds: bool,
    pub mode: ConvexityMode,
    pub worst_violation: f64,
    /// Smallest distance of an interior chord sample to the boundary (2-D only).
    pub margin: Option<f64>,
    pub chords_tested: usize,
    pub witness: Option<ConvexityWitness>,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvexityOptions {
    pub mode: ConvexityMode,
    /// Interior points tested along each chord.
    pub resolution: usize,
    /// Extra samples inserted on each boundary edge (2-D).
    pub edge_density: usize,
    /// Largest tolerated distance outside the tested region.
    pub tol: f64,
}

impl Default for ConvexityOptions {
    fn default() -> Self {
        ConvexityOptions {
            mode: ConvexityMode::YRelativeToX,
            resolution: DEFAULT_RESOLUTION,
            edge_density: 8,
            tol: CONVEXITY_TOL,
        }
    }
}

/// Insert `density − 1` evenly spaced points on each edge of a closed polygon.
pub fn densify(poly: &[Vec<f64>], density: usize) -> Vec<Vec<f64>> {
    let d = density.max(1);
    let n = poly.len();
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[(i + 1) % n]);
        for s in 0..d {
            let t = s as f64 / d as f64;
            out.push(a.iter().zip(b).map(|(p, q)| (1.0 - t) * p + t * q).collect());
        }
    }
    out
}

fn seg_dist(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let l2 = dx * dx + dy * dy;
    let t = if l2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p[0] - a[0] - t * dx).powi(2) + (p[1] - a[1] - t * dy).powi(2)).sqrt()
}

/// (inside, distance to boundary) for a closed polygon, by crossing number.
fn polygon_locate(poly: &[Vec<f64>], p: &[f64]) -> (bool, f64) {
    let n = poly.len();
    let mut inside = false;
    let mut dist = f64::INFINITY;
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[(i + 1) % n]);
        dist = dist.min(seg_dist(p, a, b));
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    (inside || dist <= 1e-13, dist)
}

#[derive(Clone)]
struct Finding {
    violation: f64,
    margin: f64,
    witness: Option<ConvexityWitness>,
    chords: usize,
}

impl Finding {
    fn merge(mut self, o: Finding) -> Finding {
        if o.violation > self.violation {
            self.violation = o.violation;
            self.witness = o.witness;
        }
        self.margin = self.margin.min(o.margin);
        self.chords += o.chords;
        self
    }

    fn empty() -> Finding {
        Finding {
            violation: 0.0,
            margin: f64::INFINITY,
            witness: None,
            chords: 0,
        }
    }
}

/// Check relative c-convexity. In 2-D the tested set is given as its
/// boundary, traced in order (a convex polygon's vertices suffice; edges are
/// densified). In higher dimensions it is the convex hull of the given
/// vertices, and chord samples are pulled back and tested by linear
/// programming.
pub fn check_c_convexity(
    spec: &PotentialSpec,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    opts: ConvexityOptions,
) -> Result<ConvexityReport> {
    check_c_convexity_sampled(spec, xs, ys, None, opts)
}

/// As [`check_c_convexity`], with chord endpoints restricted to `samples`
/// (points of the tested set); the set itself is still given by its boundary.
pub fn check_c_convexity_sampled(
    spec: &PotentialSpec,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    samples: Option<&[Vec<f64>]>,
    opts: ConvexityOptions,
) -> Result<ConvexityReport> {
    let n = spec.dim();
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidArgument("point sets must be nonempty".into()));
    }
    if xs.iter().chain(ys).any(|p| p.len() != n) {
        return Err(Error::Dimension(format!("points must have {n} coordinates")));
    }
    let (bases, set) = match opts.mode {
        ConvexityMode::YRelativeToX => (xs, ys),
        ConvexityMode::XRelativeToY => (ys, xs),
    };
    // z = x − y in both modes; `sign` orients base and sample.
    let flip = opts.mode == ConvexityMode::XRelativeToY;
    let zof = |b: &[f64], s: &[f64]| -> Vec<f64> {
        b.iter().zip(s).map(|(p, q)| if flip { q - p } else { p - q }).collect()
    };
    for (i, b) in bases.iter().enumerate() {
        for (j, s) in set.iter().enumerate() {
            if let Err(e) = spec.eval_bundle(&zof(b, s)) {
                let (i, j) = if flip { (j, i) } else { (i, j) };
                return Err(Error::PairOutOfDomain {
                    i,
                    j,
                    reason: e.to_string(),
                });
            }
        }
    }
    let res = opts.resolution.max(1);
    let ts: Vec<f64> = (1..=res).map(|r| r as f64 / (res + 1) as f64).collect();

    let finding = if n == 2 {
        let boundary = densify(set, opts.edge_density);
        let ends: Vec<Vec<f64>> = samples.map_or_else(|| boundary.clone(), <[_]>::to_vec);
        let per_base: Vec<Result<Finding>> = bases
            .par_iter()
            .map(|b| {
                let poly: Vec<Vec<f64>> = boundary
                    .iter()
                    .map(|s| to_dual(spec, &zof(b, s)))
                    .collect::<Result<_>>()?;
                let th: Vec<Vec<f64>> = ends
                    .iter()
                    .map(|s| to_dual(spec, &zof(b, s)))
                    .collect::<Result<_>>()?;
                let mut f = Finding::empty();
                for k in 0..th.len() {
                    for l in k + 1..th.len() {
                        f.chords += 1;
                        for &t in &ts {
                            let q = [
                                (1.0 - t) * th[k][0] + t * th[l][0],
                                (1.0 - t) * th[k][1] + t * th[l][1],
                            ];
                            let (inside, dist) = polygon_locate(&poly, &q);
                            if inside {
                                f.margin = f.margin.min(dist);
                            } else if dist > f.violation {
                                f.violation = dist;
                                f.witness = Some(ConvexityWitness {
                                    base: b.clone(),
                                    endpoints: (ends[k].clone(), ends[l].clone()),
                                    t,
                                });
                            }
                        }
                    }
                }
                Ok(f)
            })
            .collect();
        let mut acc = Finding::empty();
        for f in per_base {
            acc = acc.merge(f?);
        }
        acc
    } else {
        let mut ends: Vec<Vec<f64>> = set.to_vec();
        if samples.is_none() {
            for k in 0..set.len() {
                for l in k + 1..set.len() {
                    ends.push(set[k].iter().zip(&set[l]).map(|(a, b)| 0.5 * (a + b)).collect());
                }
            }
        }
        let ends: Vec<Vec<f64>> = samples.map_or(ends, <[_]>::to_vec);
        let per_base: Vec<Result<Finding>> = bases
            .par_iter()
            .map(|b| {
                let th: Vec<Vec<f64>> = ends
                    .iter()
                    .map(|s| to_dual(spec, &zof(b, s)))
                    .collect::<Result<_>>()?;
                let mut f = Finding::empty();
                for k in 0..th.len() {
                    for l in k + 1..th.len() {
                        f.chords += 1;
                        let mut guess = zof(b, &ends[k]);
                        for &t in &ts {
                            let q: Vec<f64> = th[k].iter().zip(&th[l]).map(|(a, c)| (1.0 - t) * a + t * c).collect();
                            let dist = match from_dual(spec, &q, &guess) {
                                Ok(z) => {
                                    let p: Vec<f64> = b
                                        .iter()
                                        .zip(&z)
                                        .map(|(bb, zz)| if flip { bb + zz } else { bb - zz })
                                        .collect();
                                    guess = z;
                                    hull_distance_l1(set, &p).unwrap_or(f64::INFINITY)
                                }
                                Err(_) => f64::INFINITY,
                            };
                            if dist > f.violation {
                                f.violation = dist;
                                f.witness = Some(ConvexityWitness {
                                    base: b.clone(),
                                    endpoints: (ends[k].clone(), ends[l].clone()),
                                    t,
                                });
                            }
                        }
                    }
                }
                Ok(f)
            })
            .collect();
        let mut acc = Finding::empty();
        for f in per_base {
            acc = acc.merge(f?);
        }
        acc
    };
    let holds = finding.violation <= opts.tol;
    Ok(ConvexityReport {
        holds,
        mode: opts.mode,
        worst_violation: finding.violation,
        margin: (n == 2 && finding.margin.is_finite()).then_some(finding.margin),
        chords_tested: finding.chords,
        witness: if holds { None } else { finding.witness },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{catalog, parse};

    fn square(c: [f64; 2], r: f64) -> Vec<Vec<f64>> {
        vec![
            vec![c[0] - r, c[1] - r],
            vec![c[0] + r, c[1] - r],
            vec![c[0] + r, c[1] + r],
            vec![c[0] - r, c[1] + r],
        ]
    }

    #[test]
    fn quadratic_exponential_is_translation() {
        let q = catalog("quadratic", &[]).unwrap();
        let y = c_exp(&q, &[1.0, 2.0], &[0.5, -0.25], None).unwrap();
        assert_eq!(y, vec![1.5, 1.75]);
        let s = c_segment(&q, &[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], 0.25).unwrap();
        assert!((s[0] - 0.25).abs() < 1e-14 && (s[1] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn multinomial_exponential_anchor() {
        let m = catalog("multinomial", &[]).unwrap();
        let y = c_exp(&m, &[0.0, 0.0], &[-1.0 / 3.0, -1.0 / 3.0], None).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-12));
        let p = momentum(&m, &[0.3, -0.2], &y).unwrap();
        let back = c_exp(&m, &[0.3, -0.2], &p, None).unwrap();
        assert!(back.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn quadratic_square_is_convex() {
        let q = catalog("quadratic", &[]).unwrap();
        let r = check_c_convexity(&q, &[vec![0.0, 0.0], vec![3.0, 1.0]], &square([0.5, 0.5], 1.0), Default::default()).unwrap();
        assert!(r.holds, "{r:?}");
        assert!(r.chords_tested > 0);
    }

    #[test]
    fn triangle_preimage_and_box_hold_diamond_fails() {
        let m = catalog("multinomial", &[]).unwrap();
        let x0 = vec![0.0, 0.0];
        // Boundary of the θ-preimage of a triangle of market weights.
        let tri = [[0.2, 0.2], [0.6, 0.2], [0.2, 0.6]];
        let mut ys = Vec::new();
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            for s in 0..10 {
                let t = s as f64 / 10.0;
                let th = [(1.0 - t) * a[0] + t * b[0], (1.0 - t) * a[1] + t * b[1]];
                let p = [-th[0], -th[1]];
                ys.push(c_exp(&m, &x0, &p, None).unwrap());
            }
        }
        let opts = ConvexityOptions {
            edge_density: 1,
            resolution: 8,
            ..Default::default()
        };
        assert!(check_c_convexity(&m, std::slice::from_ref(&x0), &ys, opts).unwrap().holds);

        // Coordinate boxes map to straight-edged quadrilaterals; a diamond's
        // z1 + z2 = const edges map to curves.
        let diamond = vec![vec![4.0, 0.0], vec![0.0, 4.0], vec![-4.0, 0.0], vec![0.0, -4.0]];
        let box_report = check_c_convexity(&m, std::slice::from_ref(&x0), &square([0.0, 0.0], 4.0), Default::default()).unwrap();
        assert!(box_report.holds, "{box_report:?}");
        let wide = check_c_convexity(&m, &[x0], &diamond, Default::default()).unwrap();
        assert!(!wide.holds, "{wide:?}");
        assert!(wide.witness.is_some());
    }

    #[test]
    fn domain_violation_names_pair() {
        let s = parse("-log(-u2) where -u2 > 0").unwrap();
        let e = check_c_convexity(&s, &[vec![0.0, 0.0]], &square([0.0, 0.0], 1.0), Default::default()).unwrap_err();
        assert!(matches!(e, Error::PairOutOfDomain { i: 0, .. }), "{e:?}");
    }
}
