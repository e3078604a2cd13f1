//! Discrete optimal transport between finitely supported measures.

mod exact;
mod simplex;
mod sinkhorn;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mtw::CostSpec;

pub use simplex::{
    natural_to_simplex, simplex_to_natural, simplex_transform, uniform_probability, Direction,
};
pub use sinkhorn::MARGINAL_TOL;

pub const MASS_TOL: f64 = 1e-12;
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != masses.len() {
            return Err(Error::Dimension(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        let d = points[0].len();
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(Error::Dimension("points must share a nonzero dimension".into()));
        }
        if let Some(m) = masses.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidArgument(format!("mass {m} is not positive")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidArgument(format!("masses sum to {total}, not 1")));
        }
        let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
        sorted.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("measure has repeated points".into()));
        }
        Ok(DiscreteMeasure { points, masses })
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len().max(1);
        DiscreteMeasure::new(points, vec![1.0 / n as f64; n])
    }

    /// Rescale arbitrary positive weights to total mass one.
    pub fn normalized(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("weights must have positive total".into()));
        }
        DiscreteMeasure::new(points, weights.iter().map(|w| w / total).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// Row-major coupling matrix.
    pub entries: Vec<f64>,
    pub cost: f64,
    pub method: &'static str,
    pub iterations: usize,
    /// Final basis of the simplex solver, sorted by (row, column).
    pub basis: Option<Vec<(usize, usize)>>,
}

impl TransportPlan {
    fn new(
        rows: usize,
        cols: usize,
        entries: Vec<f64>,
        c: &[f64],
        method: &'static str,
        iterations: usize,
        basis: Option<Vec<(usize, usize)>>,
    ) -> Self {
        let cost = entries.iter().zip(c).map(|(p, v)| p * v).sum();
        TransportPlan {
            rows,
            cols,
            entries,
            cost,
            method,
            iterations,
            basis,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// Largest absolute marginal error.
    pub fn marginal_violation(&self, a: &[f64], b: &[f64]) -> f64 {
        let r = self.row_sums().iter().zip(a).fold(0.0f64, |m, (s, t)| m.max((s - t).abs()));
        self.col_sums().iter().zip(b).fold(r, |m, (s, t)| m.max((s - t).abs()))
    }

    /// Nonzero entries as (row, column, mass).
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let v = self.get(i, j);
                if v > 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    /// Product coupling μ ⊗ ν.
    pub fn product(a: &[f64], b: &[f64], c: &[f64]) -> Self {
        let e = a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect();
        TransportPlan::new(a.len(), b.len(), e, c, "product", 0, None)
    }

    /// Plan from explicit entries (for diagnostics and tests).
    pub fn from_entries(rows: usize, cols: usize, entries: Vec<f64>, c: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols || c.len() != rows * cols {
            return Err(Error::Dimension("plan and cost shapes differ".into()));
        }
        Ok(TransportPlan::new(rows, cols, entries, c, "given", 0, None))
    }
}

/// Dense cost matrix, row-major.
#[derive(Debug, Clone, Serialize)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!("{rows}x{cols} matrix needs {} entries", rows * cols)));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn range(&self) -> f64 {
        let lo = self.data.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        let hi = self.data.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        hi - lo
    }
}

/// C_ij = c(x_i, y_j), assembled in parallel.
pub fn cost_matrix(cost: &CostSpec, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<CostMatrix> {
    let rows: Vec<Result<Vec<f64>>> = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            ys.iter()
                .enumerate()
                .map(|(j, y)| match cost.eval(x, y) {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(v) => Err(Error::PairOutOfDomain {
                        i,
                        j,
                        reason: format!("cost evaluates to {v}"),
                    }),
                    Err(e @ Error::Dimension(_)) => Err(e),
                    Err(e) => Err(Error::PairOutOfDomain {
                        i,
                        j,
                        reason: e.to_string(),
                    }),
                })
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(xs.len() * ys.len());
    for r in rows {
        data.extend(r?);
    }
    CostMatrix::new(xs.len(), ys.len(), data)
}

fn check_shapes(mu: &[f64], nu: &[f64], c: &CostMatrix) -> Result<()> {
    if c.rows != mu.len() || c.cols != nu.len() {
        return Err(Error::Dimension(format!(
            "cost matrix is {}x{}, measures have {} and {} atoms",
            c.rows,
            c.cols,
            mu.len(),
            nu.len()
        )));
    }
    Ok(())
}

/// Optimal basic coupling by the transportation simplex.
pub fn solve_exact(mu: &[f64], nu: &[f64], c: &CostMatrix) -> Result<TransportPlan> {
    check_shapes(mu, nu, c)?;
    exact::solve(mu, nu, &c.data)
}

/// Entropic coupling at regularisation `epsilon`, reached by halving from
/// max|C|, then rounded onto the transport polytope.
pub fn solve_sinkhorn(mu: &[f64], nu: &[f64], c: &CostMatrix, epsilon: f64, max_iters: usize) -> Result<TransportPlan> {
    check_shapes(mu, nu, c)?;
    sinkhorn::solve(mu, nu, &c.data, epsilon, max_iters)
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportMap {
    pub assignment: Vec<usize>,
    pub deterministic: bool,
    /// Largest fraction of a row's mass outside its argmax cell.
    pub leakage: f64,
}

pub fn extract_map(plan: &TransportPlan, tol: f64) -> TransportMap {
    let mut assignment = Vec::with_capacity(plan.rows);
    let mut leakage: f64 = 0.0;
    for i in 0..plan.rows {
        let row = &plan.entries[i * plan.cols..(i + 1) * plan.cols];
        let mut best = 0;
        for (j, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = j;
            }
        }
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            leakage = leakage.max((total - row[best]) / total);
        }
        assignment.push(best);
    }
    TransportMap {
        assignment,
        deterministic: leakage <= tol,
        leakage,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PotentialPair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Kantorovich potentials from the difference constraints
/// u_i + v_j ≤ C_ij (all cells) and u_i + v_j ≥ C_ij (support), solved as
/// shortest paths; gauge u_1 = 0.
pub fn dual_potentials(c: &CostMatrix, plan: &TransportPlan) -> Result<PotentialPair> {
    let (m, k) = (c.rows, c.cols);
    if plan.rows != m || plan.cols != k {
        return Err(Error::Dimension("plan and cost shapes differ".into()));
    }
    let scale = c.data.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let support_min = 1e-14 * plan.entries.iter().fold(0.0f64, |s, v| s.max(*v));
    // Nodes: u_i at i, w_j = −v_j at m + j. Edge (a, b, w): x_b ≤ x_a + w.
    let mut edges = Vec::with_capacity(m * k + m + k);
    for i in 0..m {
        for j in 0..k {
            edges.push((m + j, i, c.get(i, j)));
            if plan.get(i, j) > support_min {
                edges.push((i, m + j, -c.get(i, j)));
            }
        }
    }
    let slack = 1e-13 * scale;
    let mut d = vec![0.0f64; m + k];
    let mut converged = false;
    for _ in 0..=(m + k) {
        let mut changed = false;
        for &(a, b, w) in &edges {
            if d[a] + w < d[b] - slack {
                d[b] = d[a] + w;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotOptimal);
    }
    let shift = d[0];
    let u: Vec<f64> = d[..m].iter().map(|x| x - shift).collect();
    let v: Vec<f64> = d[m..].iter().map(|w| -w + shift).collect();
    let tol = FEASIBILITY_TOL * scale.max(1.0);
    for i in 0..m {
        for j in 0..k {
            let gap = c.get(i, j) - u[i] - v[j];
            if gap < -tol || (plan.get(i, j) > support_min && gap > tol) {
                return Err(Error::NotOptimal);
            }
        }
    }
    Ok(PotentialPair { u, v })
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub trials: usize,
    pub max_cycle: usize,
    pub support_size: usize,
    /// Smallest value of Σ C(x_i, y_σ(i)) − Σ C(x_i, y_i) over sampled cycles.
    pub worst_margin: Option<f64>,
    pub violated: bool,
}

/// Sample cycles of support cells and test every cyclic shift.
pub fn cyclical_monotonicity(
    plan: &TransportPlan,
    c: &CostMatrix,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    if k < 2 {
        return Err(Error::InvalidArgument("cycle length must be at least 2".into()));
    }
    let peak = plan.entries.iter().fold(0.0f64, |s, v| s.max(*v));
    let support: Vec<(usize, usize)> = plan
        .triplets()
        .into_iter()
        .filter(|t| t.2 > 1e-12 * peak)
        .map(|t| (t.0, t.1))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<f64> = None;
    if support.len() >= 2 {
        for _ in 0..trials {
            let len = rng.gen_range(2..=k.min(support.len()));
            let cells: Vec<(usize, usize)> = sample(&mut rng, support.len(), len)
                .into_iter()
                .map(|s| support[s])
                .collect();
            let base: f64 = cells.iter().map(|&(i, j)| c.get(i, j)).sum();
            for shift in 1..len {
                let moved: f64 = (0..len)
                    .map(|t| c.get(cells[t].0, cells[(t + shift) % len].1))
                    .sum();
                let margin = moved - base;
                worst = Some(worst.map_or(margin, |w: f64| w.min(margin)));
            }
        }
    }
    Ok(MonotonicityReport {
        trials,
        max_cycle: k,
        support_size: support.len(),
        worst_margin: worst,
        violated: worst.is_some_and(|w| w < -1e-10),
    })
}

/// Interpolated images t·x + (1 − t)·T(x); with `flip`, (1 − t)·x + t·T(x).
pub fn displacement(sources: &[Vec<f64>], images: &[Vec<f64>], t: f64, flip: bool) -> Result<Vec<Vec<f64>>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
    }
    if sources.len() != images.len() {
        return Err(Error::Dimension("each source needs exactly one image".into()));
    }
    let s = if flip { 1.0 - t } else { t };
    sources
        .iter()
        .zip(images)
        .map(|(x, y)| {
            if x.len() != y.len() {
                return Err(Error::Dimension("source and image dimensions differ".into()));
            }
            Ok(x.iter().zip(y).map(|(a, b)| s * a + (1.0 - s) * b).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: usize, cols: usize, d: &[f64]) -> CostMatrix {
        CostMatrix::new(rows, cols, d.to_vec()).unwrap()
    }

    #[test]
    fn identity_pairing() {
        let c = cm(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = solve_exact(&[0.5, 0.5], &[0.5, 0.5], &c).unwrap();
        assert_eq!(p.cost, 0.0);
        let map = extract_map(&p, 1e-12);
        assert!(map.deterministic);
        assert_eq!(map.assignment, vec![0, 1]);
        let d = dual_potentials(&c, &p).unwrap();
        assert_eq!(d.u[0], 0.0);
        assert!((d.u[0] + d.v[0]).abs() < 1e-15 && (d.u[1] + d.v[1]).abs() < 1e-15);
    }

    #[test]
    fn product_coupling_diagnostics() {
        let c = cm(2, 2, &[0.0; 4]);
        let p = TransportPlan::product(&[0.5, 0.5], &[0.5, 0.5], &c.data);
        let map = extract_map(&p, 1e-9);
        assert!(!map.deterministic);
        assert_eq!(map.leakage, 0.5);
        let r = cyclical_monotonicity(&p, &c, 4, 100, 1).unwrap();
        assert!(!r.violated);
        let d = dual_potentials(&c, &p).unwrap();
        assert!(d.u.iter().chain(&d.v).all(|x| *x == 0.0));
    }

    #[test]
    fn swapped_assignment_is_caught() {
        let c = cm(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = TransportPlan::from_entries(2, 2, vec![0.0, 0.5, 0.5, 0.0], &c.data).unwrap();
        let r = cyclical_monotonicity(&p, &c, 2, 10, 0).unwrap();
        assert!(r.violated);
        assert_eq!(r.worst_margin, Some(-2.0));
        assert!(matches!(dual_potentials(&c, &p), Err(Error::NotOptimal)));
    }

    #[test]
    fn infeasible_masses() {
        let c = cm(1, 1, &[0.0]);
        assert!(matches!(
            solve_exact(&[1.0], &[0.5], &c),
            Err(Error::InfeasibleMasses { .. })
        ));
    }

    #[test]
    fn sinkhorn_zero_cost_is_product() {
        let c = cm(2, 3, &[0.0; 6]);
        let a = [0.3, 0.7];
        let b = [0.2, 0.5, 0.3];
        let p = solve_sinkhorn(&a, &b, &c, 1e-3, 1000).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert!((p.get(i, j) - a[i] * b[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn displacement_endpoints() {
        let xs = vec![vec![0.0, 0.0]];
        let ys = vec![vec![2.0, 4.0]];
        assert_eq!(displacement(&xs, &ys, 1.0, false).unwrap(), xs);
        assert_eq!(displacement(&xs, &ys, 0.0, false).unwrap(), ys);
        assert_eq!(displacement(&xs, &ys, 1.0, true).unwrap(), ys);
        assert!(displacement(&xs, &ys, 1.5, false).is_err());
    }

    #[test]
    fn measures_validate() {
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![0.0]], vec![0.5, 0.5]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0]], vec![0.9]).is_err());
        assert!(DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0]]).is_ok());
    }
}
