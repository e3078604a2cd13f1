//! Transportation simplex on the bipartite basis tree.

use std::collections::VecDeque;

use crate::error::{Error, Result};

use super::TransportPlan;

/// After this many consecutive degenerate pivots the entering rule switches
/// from most-negative reduced cost to lowest index, which cannot cycle.
const DEGENERATE_STREAK: usize = 50;

pub(super) fn check_masses(a: &[f64], b: &[f64]) -> Result<()> {
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    if !((sa - sb).abs() <= 1e-9) {
        return Err(Error::InfeasibleMasses {
            source_total: sa,
            target_total: sb,
        });
    }
    Ok(())
}

struct Tableau<'a> {
    m: usize,
    k: usize,
    c: &'a [f64],
    flow: Vec<f64>,
    in_basis: Vec<bool>,
    basis: Vec<(usize, usize)>,
}

impl Tableau<'_> {
    fn cost(&self, i: usize, j: usize) -> f64 {
        self.c[i * self.k + j]
    }

    /// Adjacency of the basis tree: nodes 0..m are rows, m..m+k columns.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.m + self.k];
        for &(i, j) in &self.basis {
            adj[i].push(self.m + j);
            adj[self.m + j].push(i);
        }
        adj
    }

    fn duals(&self, adj: &[Vec<usize>]) -> (Vec<f64>, Vec<f64>) {
        let (m, k) = (self.m, self.k);
        let mut pot = vec![f64::NAN; m + k];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(a) = queue.pop_front() {
            for &b in &adj[a] {
                if pot[b].is_nan() {
                    // u_i + v_j = C_ij
                    pot[b] = if a < m {
                        self.cost(a, b - m) - pot[a]
                    } else {
                        self.cost(b, a - m) - pot[a]
                    };
                    queue.push_back(b);
                }
            }
        }
        (pot[..m].to_vec(), pot[m..].to_vec())
    }

    /// Tree path from column node `m + j` to row node `i`, as node list.
    fn path(&self, adj: &[Vec<usize>], from: usize, to: usize) -> Vec<usize> {
        let mut parent = vec![usize::MAX; self.m + self.k];
        parent[from] = from;
        let mut queue = VecDeque::from([from]);
        while let Some(a) = queue.pop_front() {
            if a == to {
                break;
            }
            for &b in &adj[a] {
                if parent[b] == usize::MAX {
                    parent[b] = a;
                    queue.push_back(b);
                }
            }
        }
        let mut out = vec![to];
        let mut cur = to;
        while cur != from {
            cur = parent[cur];
            out.push(cur);
        }
        out.reverse();
        out
    }
}

/// Least-cost starting basis; exactly m + k − 1 cells forming a spanning tree.
fn initial_basis(t: &mut Tableau, a: &[f64], b: &[f64]) {
    let (m, k) = (t.m, t.k);
    let mut cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
    cells.sort_by(|&(i1, j1), &(i2, j2)| {
        t.cost(i1, j1)
            .total_cmp(&t.cost(i2, j2))
            .then((i1, j1).cmp(&(i2, j2)))
    });
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut row_on = vec![true; m];
    let mut col_on = vec![true; k];
    let (mut rows_left, mut cols_left) = (m, k);
    for (i, j) in cells {
        if !(row_on[i] && col_on[j]) {
            continue;
        }
        let row_first = supply[i] <= demand[j];
        let x = if row_first { supply[i] } else { demand[j] };
        supply[i] -= x;
        demand[j] -= x;
        t.flow[i * k + j] = x;
        t.in_basis[i * k + j] = true;
        t.basis.push((i, j));
        if rows_left == 1 && cols_left == 1 {
            break;
        }
        if (row_first && rows_left > 1) || cols_left == 1 {
            row_on[i] = false;
            rows_left -= 1;
        } else {
            col_on[j] = false;
            cols_left -= 1;
        }
    }
}

pub(super) fn solve(a: &[f64], b: &[f64], c: &[f64]) -> Result<TransportPlan> {
    let (m, k) = (a.len(), b.len());
    if m == 0 || k == 0 || c.len() != m * k {
        return Err(Error::Dimension(format!(
            "cost matrix must be {m}x{k} with nonempty marginals"
        )));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("cost matrix has non-finite entries".into()));
    }
    check_masses(a, b)?;
    let scale = c.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let tol = 1e-12 * scale;
    let mut t = Tableau {
        m,
        k,
        c,
        flow: vec![0.0; m * k],
        in_basis: vec![false; m * k],
        basis: Vec::with_capacity(m + k - 1),
    };
    initial_basis(&mut t, a, b);

    let max_iters = 50 * (m + k) * (m + k) + 1000;
    let mut streak = 0;
    let mut iterations = 0;
    loop {
        if iterations >= max_iters {
            return Err(Error::NotOptimal);
        }
        let adj = t.adjacency();
        let (u, v) = t.duals(&adj);
        let bland = streak >= DEGENERATE_STREAK;
        let mut entering = None;
        let mut best = -tol;
        'scan: for i in 0..m {
            for j in 0..k {
                if t.in_basis[i * k + j] {
                    continue;
                }
                let r = t.cost(i, j) - u[i] - v[j];
                if r < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = r;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };
        iterations += 1;

        // Cycle: entering cell (+), then alternate along the tree path
        // column ej -> ... -> row ei.
        let path = t.path(&adj, m + ej, ei);
        let mut cells = Vec::with_capacity(path.len() - 1);
        for w in path.windows(2) {
            let (p, q) = (w[0], w[1]);
            cells.push(if p < m { (p, q - m) } else { (q, p - m) });
        }
        // cells[0], cells[2], ... lose flow; cells[1], cells[3], ... gain.
        let mut leave = None;
        let mut theta = f64::INFINITY;
        for (idx, &(i, j)) in cells.iter().enumerate().step_by(2) {
            let f = t.flow[i * k + j];
            let better = match leave {
                None => true,
                Some((_, (li, lj))) => f < theta || (f == theta && (i, j) < (li, lj)),
            };
            if better {
                theta = f;
                leave = Some((idx, (i, j)));
            }
        }
        let (_, (li, lj)) = leave.expect("cycle has a minus cell");
        for (idx, &(i, j)) in cells.iter().enumerate() {
            let f = &mut t.flow[i * k + j];
            if idx % 2 == 0 {
                *f -= theta;
            } else {
                *f += theta;
            }
        }
        t.flow[ei * k + ej] = theta;
        t.flow[li * k + lj] = 0.0;
        t.in_basis[li * k + lj] = false;
        t.in_basis[ei * k + ej] = true;
        let pos = t.basis.iter().position(|&c| c == (li, lj)).expect("leaving cell in basis");
        t.basis[pos] = (ei, ej);
        streak = if theta == 0.0 { streak + 1 } else { 0 };
    }

    for f in t.flow.iter_mut() {
        if *f < 0.0 {
            *f = 0.0;
        }
    }
    let mut basis = t.basis;
    basis.sort();
    Ok(TransportPlan::new(m, k, t.flow, c, "exact", iterations, Some(basis)))
}
