//! Empirical certification of MTW(0), MTW(κ), NOAB and non-negative
//! cross-curvature over a box: Latin-hypercube sampling followed by local
//! refinement of the worst candidates. A passing certificate is evidence,
//! never a proof.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DomainFailure, Error, Result};
use crate::hessian::metric_point;
use crate::kahler::{anti_bisectional, KahlerCurvPoint, CONVENTION};
use crate::mtw::{mtw_direct_chart, mtw_potential, CostSpec};
use crate::potentials::{in_domain, PotentialSpec};
use crate::tensor::{dot, norm};

pub const HOLD_TOL: f64 = 1e-9;
pub const REFINE_STEP: f64 = 1e-2;
pub const REFINE_ITERS: usize = 200;
const FD_STEP: f64 = 1e-6;

pub const NORMALIZATION: &str =
    "xi and eta are Euclidean unit vectors; kappa_estimate = empirical_min / (|xi|^2 |eta|^2)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Mtw0,
    MtwKappa,
    Noab,
    Cross,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        Ok(match s {
            "mtw0" => Mode::Mtw0,
            "mtw-kappa" => Mode::MtwKappa,
            "noab" => Mode::Noab,
            "cross" => Mode::Cross,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown mode `{s}` (mtw0, mtw-kappa, noab, cross)"
                )))
            }
        })
    }

    fn orthogonal(self) -> bool {
        self != Mode::Cross
    }
}

#[derive(Debug, Clone)]
pub enum Target {
    Potential(PotentialSpec),
    Cost(CostSpec),
}

impl Target {
    fn describe(&self) -> String {
        match self {
            Target::Potential(p) => p.to_arg(),
            Target::Cost(c) => c.describe(),
        }
    }

    /// Dimension of the region and of the (ξ, η) pair.
    fn dims(&self) -> (usize, usize) {
        match self {
            Target::Potential(p) => (p.dim(), p.dim()),
            Target::Cost(c) => (2 * c.chart_dim(), c.chart_dim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Region> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidArgument("box corners must have equal, nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument("box needs lo <= hi in every coordinate".into()));
        }
        Ok(Region { lo, hi })
    }

    /// Parse `box:lo1,lo2,...:hi1,hi2,...`.
    pub fn parse(text: &str) -> Result<Region> {
        let rest = text
            .strip_prefix("box:")
            .ok_or_else(|| Error::InvalidArgument(format!("region must start with `box:`, got `{text}`")))?;
        let (lo, hi) = rest
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument("expected box:<lo>:<hi>".into()))?;
        Region::new(parse_list(lo)?, parse_list(hi)?)
    }

    pub fn from_bounds(b: &[(f64, f64)]) -> Region {
        Region {
            lo: b.iter().map(|p| p.0).collect(),
            hi: b.iter().map(|p| p.1).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
                    .collect()
            })
            .collect()
    }

    fn clamp(&self, z: &mut [f64]) {
        for (i, v) in z.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }
}

pub(crate) fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad number `{t}`")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Budget {
    pub samples: usize,
    pub refinements: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            samples: 2000,
            refinements: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub value: f64,
    /// Value from a fresh evaluation after refinement.
    pub reverified_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    HoldsEmpirically,
    Violated,
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub mode: Mode,
    pub target: String,
    pub region: Region,
    pub samples: usize,
    pub refinements: usize,
    pub empirical_min: f64,
    pub kappa_estimate: f64,
    /// κ normalised with g(ξ,ξ)·g⁻¹(η,η) at the witness (potential targets only).
    pub kappa_g_estimate: Option<f64>,
    pub threshold: f64,
    pub witness: Witness,
    pub verdict: Verdict,
    pub seed: u64,
    pub normalization: &'static str,
    pub convention: &'static str,
}

#[derive(Clone)]
struct Candidate {
    z: Vec<f64>,
    xi: Vec<f64>,
    eta: Vec<f64>,
}

fn evaluate(target: &Target, mode: Mode, c: &Candidate) -> Result<f64> {
    match target {
        Target::Potential(spec) => match mode {
            Mode::Noab => {
                let k = KahlerCurvPoint::from_metric(metric_point(spec, &c.z)?);
                anti_bisectional(&k, &c.xi, &c.eta)
            }
            _ => Ok(mtw_potential(spec, &c.z, &c.xi, &c.eta)?.value),
        },
        Target::Cost(cost) => {
            let m = cost.chart_dim();
            Ok(mtw_direct_chart(cost, &c.z[..m], &c.z[m..], &c.xi, &c.eta)?.value)
        }
    }
}

/// Normalise ξ, then project η off the pairing with ξ (orthogonal modes) and
/// normalise it. `None` for degenerate directions.
fn project(c: &mut Candidate, region: &Region, orthogonal: bool) -> Option<()> {
    region.clamp(&mut c.z);
    let nx = norm(&c.xi);
    if !(nx > 1e-12) {
        return None;
    }
    c.xi.iter_mut().for_each(|v| *v /= nx);
    if orthogonal {
        let p = dot(&c.xi, &c.eta);
        for (e, x) in c.eta.iter_mut().zip(&c.xi) {
            *e -= p * x;
        }
    }
    let ne = norm(&c.eta);
    if !(ne > 1e-12) {
        return None;
    }
    c.eta.iter_mut().for_each(|v| *v /= ne);
    Some(())
}

fn latin_hypercube(rng: &mut ChaCha8Rng, region: &Region, n: usize) -> Vec<Vec<f64>> {
    let d = region.dim();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for i in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        let w = region.hi[i] - region.lo[i];
        cols.push(
            strata
                .into_iter()
                .map(|s| region.lo[i] + w * (s as f64 + rng.gen::<f64>()) / n as f64)
                .collect(),
        );
    }
    (0..n).map(|k| cols.iter().map(|c| c[k]).collect()).collect()
}

fn draw_sphere(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn check_region(target: &Target, region: &Region, margin: f64) -> Result<()> {
    let (d, m) = target.dims();
    if region.dim() != d {
        return Err(Error::Dimension(format!(
            "region has {} coordinates, target needs {d}",
            region.dim()
        )));
    }
    for corner in region.corners() {
        match target {
            Target::Potential(spec) => {
                let c = in_domain(spec, &corner, margin);
                if let Some(reason) = c.reason {
                    return Err(Error::RegionOutsideDomain { corner, reason });
                }
            }
            Target::Cost(_) => {
                let mut xi = vec![0.0; m];
                let mut eta = vec![0.0; m];
                xi[0] = 1.0;
                eta[m - 1] = 1.0;
                let cand = Candidate {
                    z: corner.clone(),
                    xi,
                    eta,
                };
                if evaluate(target, Mode::Cross, &cand).is_err() {
                    return Err(Error::RegionOutsideDomain {
                        corner,
                        reason: DomainFailure::Predicate,
                    });
                }
            }
        }
    }
    Ok(())
}

fn refine(target: &Target, mode: Mode, region: &Region, start: Candidate, start_value: f64) -> (Candidate, f64) {
    let orth = mode.orthogonal();
    let d = start.z.len();
    let m = start.xi.len();
    let f = |w: &[f64]| -> Option<(Candidate, f64)> {
        let mut c = Candidate {
            z: w[..d].to_vec(),
            xi: w[d..d + m].to_vec(),
            eta: w[d + m..].to_vec(),
        };
        project(&mut c, region, orth)?;
        let v = evaluate(target, mode, &c).ok()?;
        v.is_finite().then_some((c, v))
    };
    let flat = |c: &Candidate| -> Vec<f64> { [c.z.clone(), c.xi.clone(), c.eta.clone()].concat() };
    let mut best = (start.clone(), start_value);
    let mut w = flat(&start);
    for _ in 0..REFINE_ITERS {
        let mut g = vec![0.0; w.len()];
        for i in 0..w.len() {
            let mut a = w.clone();
            let mut b = w.clone();
            a[i] += FD_STEP;
            b[i] -= FD_STEP;
            match (f(&a), f(&b)) {
                (Some((_, fa)), Some((_, fb))) => g[i] = (fa - fb) / (2.0 * FD_STEP),
                _ => g[i] = 0.0,
            }
        }
        let gn = norm(&g);
        if !(gn > 0.0) {
            break;
        }
        let scale = REFINE_STEP / gn.max(1.0);
        let next: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - scale * b).collect();
        let Some((c, v)) = f(&next) else { break };
        w = flat(&c);
        if v < best.1 {
            best = (c, v);
        }
    }
    best
}

/// Options beyond target, region and mode.
#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    pub budget: Budget,
    pub seed: u64,
    /// Required κ for mode mtw-kappa; defaults to strict positivity.
    pub kappa: Option<f64>,
    pub margin: f64,
    /// Values down to −tol count as non-negative.
    pub tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            budget: Budget::default(),
            seed: 0,
            kappa: None,
            margin: 0.0,
            tol: HOLD_TOL,
        }
    }
}

pub fn certify(target: &Target, region: &Region, mode: Mode, opts: CertifyOptions) -> Result<Certificate> {
    let (_, m) = target.dims();
    if mode.orthogonal() && m < 2 {
        return Err(Error::InvalidArgument(
            "orthogonal modes need dimension >= 2 (no nonzero orthogonal pairs in 1-D)".into(),
        ));
    }
    if mode == Mode::Noab && matches!(target, Target::Cost(_)) {
        return Err(Error::InvalidArgument("mode noab needs a potential target".into()));
    }
    if opts.budget.samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    check_region(target, region, opts.margin)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let zs = latin_hypercube(&mut rng, region, opts.budget.samples);
    let mut cands = Vec::with_capacity(zs.len());
    for z in zs {
        loop {
            let mut c = Candidate {
                z: z.clone(),
                xi: draw_sphere(&mut rng, m),
                eta: draw_sphere(&mut rng, m),
            };
            if project(&mut c, region, mode.orthogonal()).is_some() {
                cands.push(c);
                break;
            }
        }
    }

    let values: Vec<Result<f64>> = cands.par_iter().map(|c| evaluate(target, mode, c)).collect();
    let mut vals = Vec::with_capacity(values.len());
    for (c, v) in cands.iter().zip(values) {
        match v {
            Ok(v) if v.is_finite() => vals.push(v),
            Ok(_) => {
                return Err(Error::RegionOutsideDomain {
                    corner: c.z.clone(),
                    reason: DomainFailure::Numerical,
                })
            }
            Err(Error::OutOfDomain { reason, .. }) => {
                return Err(Error::RegionOutsideDomain {
                    corner: c.z.clone(),
                    reason,
                })
            }
            Err(Error::DegenerateMetric { .. }) => {
                return Err(Error::RegionOutsideDomain {
                    corner: c.z.clone(),
                    reason: DomainFailure::NotPositiveDefinite,
                })
            }
            Err(e) => return Err(e),
        }
    }

    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
    let picked: Vec<usize> = order.iter().copied().take(opts.budget.refinements).collect();
    let refined: Vec<(Candidate, f64)> = picked
        .par_iter()
        .map(|&i| refine(target, mode, region, cands[i].clone(), vals[i]))
        .collect();

    let mut best = (cands[order[0]].clone(), vals[order[0]]);
    for (c, v) in refined {
        if v < best.1 {
            best = (c, v);
        }
    }
    let (wc, wv) = best;
    let reverified = evaluate(target, mode, &wc)?;
    let empirical_min = reverified.min(wv);
    let scale = dot(&wc.xi, &wc.xi) * dot(&wc.eta, &wc.eta);
    let kappa_estimate = empirical_min / scale;
    let kappa_g_estimate = match target {
        Target::Potential(spec) => metric_point(spec, &wc.z).ok().map(|mp| {
            let g = mp.inner(&wc.xi, &wc.xi) * dot(&wc.eta, &mp.sharp(&wc.eta));
            empirical_min / g
        }),
        Target::Cost(_) => None,
    };
    let threshold = match mode {
        Mode::MtwKappa => opts.kappa.unwrap_or(opts.tol),
        _ => -opts.tol,
    };
    // A violation is reported only if the fresh evaluation confirms it.
    let verdict = match mode {
        Mode::MtwKappa if reverified / scale < threshold => Verdict::Violated,
        Mode::MtwKappa => Verdict::HoldsEmpirically,
        _ if reverified < threshold => Verdict::Violated,
        _ => Verdict::HoldsEmpirically,
    };
    Ok(Certificate {
        mode,
        target: target.describe(),
        region: region.clone(),
        samples: opts.budget.samples,
        refinements: opts.budget.refinements,
        empirical_min,
        kappa_estimate,
        kappa_g_estimate,
        threshold,
        witness: Witness {
            point: wc.z,
            xi: wc.xi,
            eta: wc.eta,
            value: wv,
            reverified_value: reverified,
        },
        verdict,
        seed: opts.seed,
        normalization: NORMALIZATION,
        convention: CONVENTION,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::catalog;

    fn small() -> CertifyOptions {
        CertifyOptions {
            budget: Budget {
                samples: 200,
                refinements: 4,
            },
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn region_parsing_and_corners() {
        let r = Region::parse("box:-1,-2:1,-0.5").unwrap();
        assert_eq!(r.lo, vec![-1.0, -2.0]);
        assert_eq!(r.corners().len(), 4);
        assert!(Region::parse("box:1:0").is_err());
        assert!(Region::parse("-1:1").is_err());
    }

    #[test]
    fn quadratic_holds_trivially() {
        let t = Target::Potential(catalog("quadratic", &[]).unwrap());
        let r = Region::parse("box:-1,-1:1,1").unwrap();
        let c = certify(&t, &r, Mode::Mtw0, small()).unwrap();
        assert_eq!(c.verdict, Verdict::HoldsEmpirically);
        assert_eq!(c.empirical_min, 0.0);
    }

    #[test]
    fn region_outside_domain_is_rejected() {
        let t = Target::Potential(catalog("normal-half-plane", &[]).unwrap());
        let r = Region::parse("box:-1,-1:1,0.5").unwrap();
        assert!(matches!(
            certify(&t, &r, Mode::Noab, small()),
            Err(Error::RegionOutsideDomain { .. })
        ));
    }

    #[test]
    fn neg_multinomial_cross_is_violated() {
        let t = Target::Potential(catalog("neg-multinomial", &[]).unwrap());
        let r = Region::parse("box:-3,-3:-1.5,-1.5").unwrap();
        let c = certify(&t, &r, Mode::Cross, small()).unwrap();
        assert_eq!(c.verdict, Verdict::Violated);
        assert!(c.witness.reverified_value < -1e-9);
        let again = certify(&t, &r, Mode::Cross, small()).unwrap();
        assert_eq!(
            serde_json::to_string(&c).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }
}
