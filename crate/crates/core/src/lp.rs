//! Dense two-phase simplex for small linear programs in equality form.

const EPS: f64 = 1e-11;

/// Minimise `c·x` subject to `A x = b`, `x ≥ 0`. Returns the optimal value
/// and a minimiser, or `None` when infeasible or unbounded.
pub fn minimize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<(f64, Vec<f64>)> {
    let rows = a.len();
    let n = c.len();
    // Columns: n structural, rows artificial, then the right-hand side.
    let width = n + rows + 1;
    let mut t = vec![vec![0.0; width]; rows];
    for (r, row) in a.iter().enumerate() {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[r][j] = sign * row[j];
        }
        t[r][n + r] = 1.0;
        t[r][width - 1] = sign * b[r];
    }
    let mut basis: Vec<usize> = (n..n + rows).collect();

    // Phase one: minimise the sum of artificials.
    let mut phase1 = vec![0.0; n + rows];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    run(&mut t, &mut basis, &phase1, n + rows)?;
    let infeas: f64 = basis
        .iter()
        .zip(&t)
        .filter(|(&bv, _)| bv >= n)
        .map(|(_, row)| row[width - 1])
        .sum();
    if infeas > 1e-9 {
        return None;
    }
    // Drive remaining (zero-level) artificials out of the basis.
    for r in 0..rows {
        if basis[r] >= n {
            if let Some(j) = (0..n).find(|&j| t[r][j].abs() > EPS) {
                pivot(&mut t, &mut basis, r, j);
            }
        }
    }
    // Phase two over structural columns only.
    let mut cost = c.to_vec();
    cost.extend(std::iter::repeat_n(0.0, rows));
    run(&mut t, &mut basis, &cost, n)?;
    let mut x = vec![0.0; n];
    for (r, &bv) in basis.iter().enumerate() {
        if bv < n {
            x[bv] = t[r][width - 1];
        }
    }
    let value = c.iter().zip(&x).map(|(p, q)| p * q).sum();
    Some((value, x))
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, j: usize) {
    let p = t[r][j];
    t[r].iter_mut().for_each(|v| *v /= p);
    let prow = t[r].clone();
    for (k, row) in t.iter_mut().enumerate() {
        if k != r {
            let f = row[j];
            if f != 0.0 {
                row.iter_mut().zip(&prow).for_each(|(v, w)| *v -= f * w);
            }
        }
    }
    basis[r] = j;
}

/// Bland's rule over columns `0..allowed`; `None` when unbounded.
fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) -> Option<()> {
    let width = t.first().map_or(0, |r| r.len());
    for _ in 0..10_000 {
        let cb: Vec<f64> = basis.iter().map(|&bv| cost[bv]).collect();
        let entering = (0..allowed).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let z: f64 = t.iter().zip(&cb).map(|(row, c)| c * row[j]).sum();
            cost[j] - z < -EPS
        });
        let Some(j) = entering else { return Some(()) };
        let mut leave: Option<(usize, f64)> = None;
        for (r, row) in t.iter().enumerate() {
            if row[j] > EPS {
                let ratio = row[width - 1] / row[j];
                let better = match leave {
                    None => true,
                    Some((lr, lv)) => ratio < lv - EPS || (ratio <= lv + EPS && basis[r] < basis[lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let (r, _) = leave?;
        pivot(t, basis, r, j);
    }
    None
}

/// L1 distance from `y` to the convex hull of `pts`.
pub fn hull_distance_l1(pts: &[Vec<f64>], y: &[f64]) -> Option<f64> {
    let d = y.len();
    let k = pts.len();
    let n = k + 2 * d;
    let mut a = Vec::with_capacity(d + 1);
    for dd in 0..d {
        let mut row = vec![0.0; n];
        for (i, p) in pts.iter().enumerate() {
            row[i] = p[dd];
        }
        row[k + dd] = 1.0;
        row[k + d + dd] = -1.0;
        a.push(row);
    }
    let mut ones = vec![0.0; n];
    ones[..k].iter_mut().for_each(|v| *v = 1.0);
    a.push(ones);
    let mut b = y.to_vec();
    b.push(1.0);
    let mut c = vec![0.0; n];
    c[k..].iter_mut().for_each(|v| *v = 1.0);
    minimize(&c, &a, &b).map(|(v, _)| v.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_program() {
        // min -x - y  s.t. x + s1 = 1, y + s2 = 2
        let (v, x) = minimize(
            &[-1.0, -1.0, 0.0, 0.0],
            &[vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0]],
            &[1.0, 2.0],
        )
        .unwrap();
        assert!((v + 3.0).abs() < 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
        assert!(minimize(&[1.0], &[vec![1.0]], &[-1.0]).is_none());
    }

    #[test]
    fn hull_membership() {
        let tri = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert!(hull_distance_l1(&tri, &[0.2, 0.2, 0.2]).unwrap() < 1e-12);
        let d = hull_distance_l1(&tri, &[1.0, 1.0, 0.0]).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }
}
