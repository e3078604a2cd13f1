//! Command-line front end. Every subcommand produces one JSON report;
//! the exit code says whether the run succeeded (0), found a violation (1),
//! was misused (2) or hit a numerical failure (3).

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::certify::{self, parse_list, Budget, CertifyOptions, Mode, Region, Target};
use crate::cgeometry::{self, ConvexityMode, ConvexityOptions};
use crate::error::{Error, Result};
use crate::hessian::{self, metric_point, riemann_from_metric};
use crate::io;
use crate::kahler::{self, KahlerBlocks, KahlerCurvPoint, CONVENTION};
use crate::mtw::{self, CostKind, CostSpec};
use crate::potentials::{self, in_domain, parse_potential_arg, PotentialSpec, CATALOG};
use crate::transport::{self, DiscreteMeasure, MARGINAL_TOL};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDING: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "kahler-ot", version, about = "Curvature, MTW tensors, c-convexity and discrete optimal transport for Psi-costs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Print the full JSON report to stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Also write the JSON report to this file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Command-specific tolerance (see each subcommand).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Keep evaluation points this far inside the domain predicate.
    #[arg(long, global = true, default_value_t = 0.0)]
    margin: f64,
    /// Omit wall-clock timing so reports are byte-reproducible.
    #[arg(long, global = true)]
    no_timing: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// List the built-in potentials.
    Catalog,
    /// Metric, Christoffel symbols, Riemann tensor and Kähler blocks at a point.
    Curvature(CurvatureArgs),
    /// The MTW tensor by three routes, side by side. --tol is the relative agreement tolerance.
    MtwCheck(MtwArgs),
    /// Sample-and-refine sign certificate. --tol is the non-negativity slack.
    Certify(CertifyArgs),
    /// c-exponential y with -c_x(x, y) = p.
    Cexp(CexpArgs),
    /// Points on the c-segment from y0 to y1 seen from x.
    Csegment(CsegmentArgs),
    /// Relative c-convexity of one point set with respect to another. --tol is the violation tolerance.
    Cconvex(CconvexArgs),
    /// Gradient map, its inverse and the Legendre dual value.
    Legendre(LegendreArgs),
    /// Optimal transport between two CSV measures. --tol is the map determinism tolerance.
    Ot(OtArgs),
    /// Displacement interpolation t x + (1 - t) T(x).
    Displace(DisplaceArgs),
}

#[derive(Args, Debug)]
struct CurvatureArgs {
    /// catalog:<name>[:k=v,...] or expr:<expression>
    #[arg(long)]
    potential: String,
    #[arg(long, allow_hyphen_values = true)]
    point: String,
    /// Tangent vector for sectional-type curvatures.
    #[arg(long, allow_hyphen_values = true)]
    xi: Option<String>,
    /// Covector paired with xi.
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<String>,
}

#[derive(Args, Debug)]
struct MtwArgs {
    /// Potential for the cost Psi(x - y); evaluated at --point z = x - y.
    #[arg(long, conflicts_with = "cost")]
    potential: Option<String>,
    /// psi:<potential>, d-alpha:<alpha>:<potential>, log-cost[:n], ecf[:n] or raw:<expr>
    #[arg(long)]
    cost: Option<String>,
    #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["x", "y"])]
    point: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    y: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    xi: String,
    #[arg(long, allow_hyphen_values = true)]
    eta: String,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[arg(long, conflicts_with = "cost")]
    potential: Option<String>,
    #[arg(long)]
    cost: Option<String>,
    /// box:<lo1,lo2,...>:<hi1,hi2,...>; defaults to the potential's sampling box.
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    /// mtw0, mtw-kappa, noab or cross
    #[arg(long, default_value = "mtw0")]
    mode: String,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 16)]
    refinements: usize,
    /// Required lower bound for mode mtw-kappa.
    #[arg(long, allow_hyphen_values = true)]
    kappa: Option<f64>,
}

#[derive(Args, Debug)]
struct CexpArgs {
    #[arg(long)]
    potential: String,
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    #[arg(long, allow_hyphen_values = true)]
    p: String,
    /// Starting point for inverting the gradient map.
    #[arg(long, allow_hyphen_values = true)]
    guess: Option<String>,
}

#[derive(Args, Debug)]
struct CsegmentArgs {
    #[arg(long)]
    potential: String,
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    #[arg(long, allow_hyphen_values = true)]
    y0: String,
    #[arg(long, allow_hyphen_values = true)]
    y1: String,
    /// Explicit parameters in [0, 1]; otherwise --steps equal steps.
    #[arg(long, allow_hyphen_values = true)]
    t: Option<String>,
    #[arg(long, default_value_t = 8)]
    steps: usize,
}

#[derive(Args, Debug)]
struct CconvexArgs {
    #[arg(long)]
    potential: String,
    /// CSV of base points (one per row).
    #[arg(long)]
    xs: PathBuf,
    /// CSV of the tested set: ordered boundary in 2-D, vertices otherwise.
    #[arg(long)]
    ys: PathBuf,
    /// y-relative-to-x or x-relative-to-y
    #[arg(long, default_value = "y-relative-to-x")]
    direction: String,
    /// Optional CSV of chord endpoints inside the tested set.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long, default_value_t = cgeometry::DEFAULT_RESOLUTION)]
    resolution: usize,
    #[arg(long, default_value_t = 8)]
    edge_density: usize,
}

#[derive(Args, Debug)]
struct LegendreArgs {
    #[arg(long)]
    potential: String,
    /// Primal point u; reports theta = grad Psi(u).
    #[arg(long, allow_hyphen_values = true, conflicts_with = "theta", required_unless_present = "theta")]
    point: Option<String>,
    /// Dual point theta; reports u with grad Psi(u) = theta.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    guess: Option<String>,
}

#[derive(Args, Debug)]
struct OtArgs {
    #[arg(long)]
    cost: String,
    /// CSV measure: coordinates then mass on each row.
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    /// exact or sinkhorn
    #[arg(long, default_value = "exact")]
    method: String,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// Write the plan as i,j,mass triplets to this CSV file.
    #[arg(long)]
    plan_out: Option<PathBuf>,
    /// Include the dense coupling matrix in the report.
    #[arg(long)]
    dense: bool,
    #[arg(long, default_value_t = 4)]
    cycle_length: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Check that all weights exceed this bound (simplex-weight measures).
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args, Debug)]
struct DisplaceArgs {
    /// CSV of source points.
    #[arg(long, requires = "images", conflicts_with_all = ["cost", "mu", "nu"])]
    sources: Option<PathBuf>,
    /// CSV of their images, row for row.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Solve exact transport with this cost and displace along the extracted map.
    #[arg(long, requires_all = ["mu", "nu"])]
    cost: Option<String>,
    #[arg(long)]
    mu: Option<PathBuf>,
    #[arg(long)]
    nu: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    t: f64,
    /// Use (1 - t) x + t T(x) instead.
    #[arg(long)]
    flip_t: bool,
}

/// What a subcommand hands back for the report.
struct Outcome {
    inputs: Value,
    outputs: Value,
    tolerances: Value,
    seed: Option<u64>,
    finding: bool,
}

impl Outcome {
    fn ok(inputs: Value, outputs: Value, tolerances: Value) -> Self {
        Outcome {
            inputs,
            outputs,
            tolerances,
            seed: None,
            finding: false,
        }
    }
}

#[derive(Serialize)]
struct Provenance {
    seed: Option<u64>,
    tolerances: Value,
    version: &'static str,
}

#[derive(Serialize)]
struct Report<'a> {
    version: u32,
    command: &'a str,
    argv: &'a [String],
    inputs: Value,
    outputs: Value,
    provenance: Provenance,
    timing_ms: Option<f64>,
}

fn list(s: &str) -> Result<Vec<f64>> {
    parse_list(s)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn flat(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    (0..n).flat_map(|i| (0..m.ncols()).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect()
}

fn potential(arg: &str, margin: f64) -> Result<PotentialSpec> {
    Ok(parse_potential_arg(arg)?.with_margin(margin))
}

fn catalog_cmd() -> Result<Outcome> {
    let mut entries = Vec::new();
    for e in CATALOG {
        let spec = potentials::catalog(e.name, &[])?;
        entries.push(json!({
            "name": e.name,
            "formula": e.formula,
            "domain": e.domain,
            "params": e.params,
            "dimension": spec.dim(),
            "expression": spec.print(),
            "sampling_box": spec.sampling_box,
        }));
    }
    Ok(Outcome::ok(json!({}), json!({ "potentials": entries }), json!({})))
}

fn curvature_cmd(a: &CurvatureArgs, c: &Common) -> Result<Outcome> {
    let spec = potential(&a.potential, c.margin)?;
    let point = list(&a.point)?;
    let check = in_domain(&spec, &point, c.margin);
    let metric = metric_point(&spec, &point)?;
    let riem = riemann_from_metric(&metric);
    let k = KahlerCurvPoint::from_metric(metric);
    let m = &k.metric;
    let mut out = json!({
        "value": m.bundle.value,
        "gradient": m.bundle.grad,
        "metric": flat(&m.g),
        "metric_inverse": flat(&m.ginv),
        "christoffel_lower": m.gamma_lower.as_slice(),
        "christoffel_mixed": m.gamma_mixed.as_slice(),
        "riemann": riem.0.as_slice(),
        "riemann_symmetry_defect": riem.symmetry_defect(),
        "kahler": to_value(&KahlerBlocks::from(&k)),
        "block_identity_defect": k.block_identity_defect(),
        "domain": to_value(&check),
        "convention": CONVENTION,
    });
    let xi = a.xi.as_deref().map(list).transpose()?;
    let eta = a.eta.as_deref().map(list).transpose()?;
    if let Some(xi) = &xi {
        out["holomorphic_sectional"] = json!(kahler::holomorphic_sectional(&k, xi)?);
    }
    if let (Some(xi), Some(eta)) = (&xi, &eta) {
        let orth = kahler::is_orthogonal(xi, eta);
        out["anti_bisectional"] = json!(kahler::anti_bisectional(&k, xi, eta)?);
        out["bisectional"] = json!(kahler::bisectional(&k, xi, eta)?);
        out["orthogonal"] = json!(orth);
        out["pairing"] = json!(crate::tensor::dot(xi, eta));
    }
    let inputs = json!({ "potential": spec.to_arg(), "point": point, "xi": xi, "eta": eta, "margin": c.margin });
    Ok(Outcome::ok(inputs, out, json!({ "positive_definite": potentials::PD_THRESHOLD })))
}

fn mtw_cmd(a: &MtwArgs, c: &Common) -> Result<Outcome> {
    let xi = list(&a.xi)?;
    let eta = list(&a.eta)?;
    let rel = c.tol.unwrap_or(1e-8);
    let (cost, x, y) = match (&a.potential, &a.cost) {
        (Some(p), None) => {
            let spec = potential(p, c.margin)?;
            let z = list(a.point.as_deref().ok_or_else(|| {
                Error::InvalidArgument("--potential needs --point z".into())
            })?)?;
            let y = vec![0.0; z.len()];
            (CostSpec::psi(spec), z, y)
        }
        (None, Some(s)) => {
            let x = list(a.x.as_deref().ok_or_else(|| Error::InvalidArgument("--cost needs --x".into()))?)?;
            let y = list(a.y.as_deref().ok_or_else(|| Error::InvalidArgument("--cost needs --y".into()))?)?;
            let mut cost = CostSpec::parse(s, Some(x.len()))?;
            if let CostKind::Psi(spec) | CostKind::DAlpha { spec, .. } = &mut cost.kind {
                *spec = spec.clone().with_margin(c.margin);
            }
            (cost, x, y)
        }
        _ => return Err(Error::InvalidArgument("give exactly one of --potential or --cost".into())),
    };
    let direct = mtw::mtw_direct(&cost, &x, &y, &xi, &eta)?.value;
    let mut out = json!({ "direct": direct, "orthogonal": kahler::is_orthogonal(&xi, &eta) });
    let mut finding = false;
    match &cost.kind {
        CostKind::Psi(spec) => {
            let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p - q).collect();
            let pot = mtw::mtw_potential(spec, &z, &xi, &eta)?.value;
            let curv = mtw::mtw_curvature(spec, &z, &xi, &eta)?.value;
            let vals = [direct, pot, curv];
            let spread = vals.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
                - vals.iter().fold(f64::INFINITY, |m, v| m.min(*v));
            let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let allowed = (rel * scale).max(1e-10);
            finding = !(spread <= allowed);
            out["potential"] = json!(pot);
            out["curvature"] = json!(curv);
            out["cross_curvature"] = json!(mtw::cross_curvature(spec, &z, &xi, &eta)?);
            out["max_discrepancy"] = json!(spread);
            out["allowed_discrepancy"] = json!(allowed);
            out["agree"] = json!(!finding);
        }
        CostKind::DAlpha { spec, alpha } => {
            out["d_alpha"] = to_value(&mtw::d_alpha_comparison(spec, *alpha, &x, &y, &xi, &eta)?);
        }
        _ => {}
    }
    let inputs = json!({ "cost": cost.describe(), "x": x, "y": y, "xi": xi, "eta": eta, "margin": c.margin });
    Ok(Outcome {
        inputs,
        outputs: out,
        tolerances: json!({ "relative": rel, "absolute": 1e-10 }),
        seed: None,
        finding,
    })
}

fn certify_cmd(a: &CertifyArgs, c: &Common) -> Result<Outcome> {
    let target = match (&a.potential, &a.cost) {
        (Some(p), None) => Target::Potential(parse_potential_arg(p)?),
        (None, Some(s)) => Target::Cost(CostSpec::parse(s, None)?),
        _ => return Err(Error::InvalidArgument("give exactly one of --potential or --cost".into())),
    };
    let region = match (&a.region, &target) {
        (Some(r), _) => Region::parse(r)?,
        (None, Target::Potential(p)) => match &p.sampling_box {
            Some(b) => Region::from_bounds(b),
            None => return Err(Error::InvalidArgument("--region is required for this potential".into())),
        },
        (None, Target::Cost(_)) => return Err(Error::InvalidArgument("--region is required for a cost".into())),
    };
    let mode = Mode::parse(&a.mode)?;
    let tol = c.tol.unwrap_or(certify::HOLD_TOL);
    let opts = CertifyOptions {
        budget: Budget {
            samples: a.samples,
            refinements: a.refinements,
        },
        seed: c.seed,
        kappa: a.kappa,
        margin: c.margin,
        tol,
    };
    let cert = certify::certify(&target, &region, mode, opts)?;
    let finding = cert.verdict == certify::Verdict::Violated;
    let inputs = json!({
        "target": cert.target,
        "region": to_value(&region),
        "mode": to_value(&mode),
        "samples": a.samples,
        "refinements": a.refinements,
        "kappa": a.kappa,
        "margin": c.margin,
    });
    Ok(Outcome {
        inputs,
        outputs: json!({ "certificate": to_value(&cert) }),
        tolerances: json!({
            "hold": tol,
            "refine_step": certify::REFINE_STEP,
            "refine_iterations": certify::REFINE_ITERS,
        }),
        seed: Some(c.seed),
        finding,
    })
}

fn cexp_cmd(a: &CexpArgs, c: &Common) -> Result<Outcome> {
    let spec = potential(&a.potential, c.margin)?;
    let x = list(&a.x)?;
    let p = list(&a.p)?;
    let guess = a.guess.as_deref().map(list).transpose()?;
    let y = cgeometry::c_exp(&spec, &x, &p, guess.as_deref())?;
    let back = cgeometry::momentum(&spec, &x, &y)?;
    let residual = back.iter().zip(&p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let inputs = json!({ "potential": spec.to_arg(), "x": x, "p": p, "guess": guess });
    Ok(Outcome::ok(
        inputs,
        json!({ "y": y, "momentum_residual": residual }),
        json!({ "newton": hessian::NEWTON_TOL }),
    ))
}

fn csegment_cmd(a: &CsegmentArgs, c: &Common) -> Result<Outcome> {
    let spec = potential(&a.potential, c.margin)?;
    let x = list(&a.x)?;
    let y0 = list(&a.y0)?;
    let y1 = list(&a.y1)?;
    let ts = match &a.t {
        Some(t) => list(t)?,
        None => {
            let s = a.steps.max(1);
            (0..=s).map(|k| k as f64 / s as f64).collect()
        }
    };
    let pts = cgeometry::c_segment_samples(&spec, &x, &y0, &y1, &ts)?;
    let samples: Vec<Value> = ts.iter().zip(&pts).map(|(t, p)| json!({ "t": t, "y": p })).collect();
    let inputs = json!({ "potential": spec.to_arg(), "x": x, "y0": y0, "y1": y1, "t": ts });
    Ok(Outcome::ok(
        inputs,
        json!({ "samples": samples }),
        json!({ "newton": hessian::NEWTON_TOL, "step": hessian::GEODESIC_STEP }),
    ))
}

fn cconvex_cmd(a: &CconvexArgs, c: &Common) -> Result<Outcome> {
    let spec = potential(&a.potential, c.margin)?;
    let xs = io::read_points_file(&a.xs)?;
    let ys = io::read_points_file(&a.ys)?;
    let samples = a.samples.as_deref().map(io::read_points_file).transpose()?;
    let mode = match a.direction.as_str() {
        "y-relative-to-x" => ConvexityMode::YRelativeToX,
        "x-relative-to-y" => ConvexityMode::XRelativeToY,
        d => {
            return Err(Error::InvalidArgument(format!(
                "unknown direction `{d}` (y-relative-to-x or x-relative-to-y)"
            )))
        }
    };
    let tol = c.tol.unwrap_or(cgeometry::CONVEXITY_TOL);
    let opts = ConvexityOptions {
        mode,
        resolution: a.resolution,
        edge_density: a.edge_density,
        tol,
    };
    let rep = cgeometry::check_c_convexity_sampled(&spec, &xs, &ys, samples.as_deref(), opts)?;
    let inputs = json!({
        "potential": spec.to_arg(),
        "xs": xs,
        "ys": ys,
        "samples": samples,
        "resolution": a.resolution,
        "edge_density": a.edge_density,
    });
    Ok(Outcome {
        inputs,
        finding: !rep.holds,
        outputs: json!({ "report": to_value(&rep) }),
        tolerances: json!({ "violation": tol }),
        seed: None,
    })
}

fn legendre_cmd(a: &LegendreArgs, c: &Common) -> Result<Outcome> {
    let spec = potential(&a.potential, c.margin)?;
    let guess = a.guess.as_deref().map(list).transpose()?;
    let seed_of = |g: &Option<Vec<f64>>| g.clone().unwrap_or_else(|| cgeometry::default_guess(&spec));
    let (u, theta, round_trip) = match (&a.point, &a.theta) {
        (Some(p), _) => {
            let u = list(p)?;
            let theta = hessian::to_dual(&spec, &u)?;
            let back = hessian::from_dual(&spec, &theta, &seed_of(&guess))?;
            let err = back.iter().zip(&u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            (u, theta, err)
        }
        (None, Some(t)) => {
            let theta = list(t)?;
            let u = hessian::from_dual(&spec, &theta, &seed_of(&guess))?;
            let fwd = hessian::to_dual(&spec, &u)?;
            let err = fwd.iter().zip(&theta).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            (u, theta, err)
        }
        (None, None) => return Err(Error::InvalidArgument("give --point or --theta".into())),
    };
    let psi = spec.value(&u)?;
    let dual: f64 = u.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() - psi;
    let inputs = json!({ "potential": spec.to_arg(), "point": a.point.as_deref().map(list).transpose()?, "theta": a.theta.as_deref().map(list).transpose()?, "guess": guess });
    Ok(Outcome::ok(
        inputs,
        json!({ "u": u, "theta": theta, "psi": psi, "psi_dual": dual, "round_trip_error": round_trip }),
        json!({ "newton": hessian::NEWTON_TOL }),
    ))
}

fn cost_for(arg: &str, dim: usize, margin: f64) -> Result<CostSpec> {
    let mut cost = CostSpec::parse(arg, Some(dim))?;
    if let CostKind::Psi(spec) | CostKind::DAlpha { spec, .. } = &mut cost.kind {
        *spec = spec.clone().with_margin(margin);
    }
    Ok(cost)
}

fn ot_cmd(a: &OtArgs, c: &Common) -> Result<Outcome> {
    let mu = io::read_measure_file(&a.mu)?;
    let nu = io::read_measure_file(&a.nu)?;
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension("measures live in different dimensions".into()));
    }
    let cost = cost_for(&a.cost, mu.dim(), c.margin)?;
    let cm = transport::cost_matrix(&cost, &mu.points, &nu.points)?;
    let plan = match a.method.as_str() {
        "exact" => transport::solve_exact(&mu.masses, &nu.masses, &cm)?,
        "sinkhorn" => transport::solve_sinkhorn(&mu.masses, &nu.masses, &cm, a.epsilon, a.max_iters)?,
        m => return Err(Error::InvalidArgument(format!("unknown method `{m}` (exact or sinkhorn)"))),
    };
    if let Some(path) = &a.plan_out {
        io::write_plan_triplets(&plan, std::fs::File::create(path)?)?;
    }
    let map_tol = c.tol.unwrap_or(1e-9);
    let map = transport::extract_map(&plan, map_tol);
    let mono = transport::cyclical_monotonicity(&plan, &cm, a.cycle_length, a.trials, c.seed)?;
    let potentials = if a.method == "exact" {
        Some(to_value(&transport::dual_potentials(&cm, &plan)?))
    } else {
        None
    };
    let mut out = json!({
        "plan": {
            "rows": plan.rows,
            "cols": plan.cols,
            "cost": plan.cost,
            "method": plan.method,
            "iterations": plan.iterations,
            "marginal_violation": plan.marginal_violation(&mu.masses, &nu.masses),
            "triplets": plan.triplets(),
            "basis": plan.basis,
        },
        "map": to_value(&map),
        "potentials": potentials,
        "monotonicity": to_value(&mono),
    });
    if a.dense {
        out["plan"]["entries"] = json!(plan.entries);
    }
    if let Some(d) = a.delta {
        out["uniform_probability"] = json!({
            "delta": d,
            "mu": transport::uniform_probability(&mu.points, d),
            "nu": transport::uniform_probability(&nu.points, d),
        });
    }
    let inputs = json!({
        "cost": cost.describe(),
        "mu": to_value(&mu),
        "nu": to_value(&nu),
        "method": a.method,
        "epsilon": (a.method == "sinkhorn").then_some(a.epsilon),
        "cycle_length": a.cycle_length,
        "trials": a.trials,
    });
    Ok(Outcome {
        inputs,
        finding: !map.deterministic || mono.violated,
        outputs: out,
        tolerances: json!({ "map": map_tol, "marginal": MARGINAL_TOL, "feasibility": transport::FEASIBILITY_TOL }),
        seed: Some(c.seed),
    })
}

fn displace_cmd(a: &DisplaceArgs, c: &Common) -> Result<Outcome> {
    let (sources, images, map) = match (&a.sources, &a.images, &a.cost, &a.mu, &a.nu) {
        (Some(s), Some(i), None, _, _) => (io::read_points_file(s)?, io::read_points_file(i)?, None),
        (None, _, Some(cost), Some(mu), Some(nu)) => {
            let mu = io::read_measure_file(mu)?;
            let nu: DiscreteMeasure = io::read_measure_file(nu)?;
            let cost = cost_for(cost, mu.dim(), c.margin)?;
            let cm = transport::cost_matrix(&cost, &mu.points, &nu.points)?;
            let plan = transport::solve_exact(&mu.masses, &nu.masses, &cm)?;
            let map = transport::extract_map(&plan, c.tol.unwrap_or(1e-9));
            let images = map.assignment.iter().map(|&j| nu.points[j].clone()).collect();
            (mu.points, images, Some(map))
        }
        _ => {
            return Err(Error::InvalidArgument(
                "give --sources with --images, or --cost with --mu and --nu".into(),
            ))
        }
    };
    let pts = transport::displacement(&sources, &images, a.t, a.flip_t)?;
    let formula = if a.flip_t { "(1 - t) x + t T(x)" } else { "t x + (1 - t) T(x)" };
    let finding = map.as_ref().is_some_and(|m| !m.deterministic);
    let inputs = json!({ "sources": sources, "images": images, "t": a.t, "flip_t": a.flip_t });
    Ok(Outcome {
        inputs,
        outputs: json!({ "points": pts, "formula": formula, "map": map.as_ref().map(to_value) }),
        tolerances: json!({ "map": c.tol.unwrap_or(1e-9) }),
        seed: None,
        finding,
    })
}

fn dispatch(cmd: &Cmd, c: &Common) -> Result<Outcome> {
    match cmd {
        Cmd::Catalog => catalog_cmd(),
        Cmd::Curvature(a) => curvature_cmd(a, c),
        Cmd::MtwCheck(a) => mtw_cmd(a, c),
        Cmd::Certify(a) => certify_cmd(a, c),
        Cmd::Cexp(a) => cexp_cmd(a, c),
        Cmd::Csegment(a) => csegment_cmd(a, c),
        Cmd::Cconvex(a) => cconvex_cmd(a, c),
        Cmd::Legendre(a) => legendre_cmd(a, c),
        Cmd::Ot(a) => ot_cmd(a, c),
        Cmd::Displace(a) => displace_cmd(a, c),
    }
}

fn command_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Catalog => "catalog",
        Cmd::Curvature(_) => "curvature",
        Cmd::MtwCheck(_) => "mtw-check",
        Cmd::Certify(_) => "certify",
        Cmd::Cexp(_) => "cexp",
        Cmd::Csegment(_) => "csegment",
        Cmd::Cconvex(_) => "cconvex",
        Cmd::Legendre(_) => "legendre",
        Cmd::Ot(_) => "ot",
        Cmd::Displace(_) => "displace",
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

/// One line per top-level output, long arrays summarised.
fn summary(v: &Value, out: &mut dyn Write) {
    let Some(map) = v.as_object() else {
        let _ = writeln!(out, "{v}");
        return;
    };
    for (k, val) in map {
        let text = match val {
            Value::Array(a) if a.len() > 8 || a.iter().any(|x| x.is_array() || x.is_object()) => {
                format!("[{} entries]", a.len())
            }
            Value::Object(o) if o.len() > 12 => format!("{{{} fields}}", o.len()),
            other => other.to_string(),
        };
        let _ = writeln!(out, "{k}: {text}");
    }
}

/// Run with full argv (program name first) and return the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let echo: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    run_parsed(cli, echo, stdout, stderr)
}

fn run_parsed(cli: Cli, argv: Vec<String>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let common = cli.common.clone();
    let name = command_name(&cli.cmd);
    let start = Instant::now();
    let result = dispatch(&cli.cmd, &common);
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let timing = (!common.no_timing).then_some(elapsed);
    let (code, report) = match result {
        Ok(o) => {
            let code = if o.finding { EXIT_FINDING } else { EXIT_OK };
            let report = Report {
                version: SCHEMA_VERSION,
                command: name,
                argv: &argv,
                inputs: o.inputs,
                outputs: o.outputs,
                provenance: Provenance {
                    seed: o.seed,
                    tolerances: o.tolerances,
                    version: env!("CARGO_PKG_VERSION"),
                },
                timing_ms: timing,
            };
            (code, to_value(&report))
        }
        Err(e) => {
            let code = exit_code(&e);
            let _ = writeln!(stderr, "error: {e}");
            let report = json!({
                "version": SCHEMA_VERSION,
                "command": name,
                "argv": argv,
                "error": { "message": e.to_string(), "exit_code": code },
                "provenance": { "seed": common.seed, "version": env!("CARGO_PKG_VERSION") },
                "timing_ms": timing,
            });
            (code, report)
        }
    };
    let text = serde_json::to_string_pretty(&report).unwrap_or_default();
    if let Some(path) = &common.out {
        if let Err(e) = std::fs::write(path, format!("{text}\n")) {
            let _ = writeln!(stderr, "error: cannot write {}: {e}", path.display());
            return EXIT_USAGE;
        }
    }
    if common.json {
        let _ = writeln!(stdout, "{text}");
    } else if report.get("error").is_none() {
        summary(&report["outputs"], stdout);
    }
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut argv = vec!["kahler-ot"];
        argv.extend_from_slice(args);
        let code = run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap())
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(call(&["nonsense"]).0, EXIT_USAGE);
        assert_eq!(call(&["curvature", "--potential", "catalog:nope", "--point", "0,0"]).0, EXIT_USAGE);
        assert_eq!(call(&["curvature", "--potential", "expr:log(", "--point", "0"]).0, EXIT_USAGE);
    }

    #[test]
    fn domain_errors_exit_three() {
        let (code, _) = call(&["curvature", "--potential", "catalog:normal-half-plane", "--point", "0,1"]);
        assert_eq!(code, EXIT_NUMERICAL);
    }

    #[test]
    fn curvature_report_has_blocks() {
        let (code, out) = call(&["--json", "--no-timing", "curvature", "--potential", "catalog:multinomial", "--point", "0,0"]);
        assert_eq!(code, EXIT_OK);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["outputs"]["metric"].as_array().unwrap().len(), 4);
        assert_eq!(v["outputs"]["riemann"].as_array().unwrap().len(), 16);
        assert!(v["outputs"]["kahler"]["hv"].is_array());
        assert!(v["timing_ms"].is_null());
    }

    #[test]
    fn mtw_routes_agree_for_siegel() {
        let (code, out) = call(&[
            "--json", "mtw-check", "--potential", "catalog:siegel-dual", "--point", "0.2,1.5", "--xi", "1,0.3",
            "--eta", "-0.3,1",
        ]);
        assert_eq!(code, EXIT_OK, "{out}");
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["outputs"]["agree"], true);
    }
}
