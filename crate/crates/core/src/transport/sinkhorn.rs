//! Log-domain Sinkhorn scaling with ε-annealing, followed by a rounding step
//! that makes the returned coupling exactly feasible.

use crate::error::{Error, Result};

use super::exact::check_masses;
use super::TransportPlan;

pub const MARGINAL_TOL: f64 = 1e-8;

fn logsumexp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let mx = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + it.map(|v| (v - mx).exp()).sum::<f64>().ln()
}

/// Stage tolerance: loose while annealing, tight at the target ε.
fn stage_tol(last: bool) -> f64 {
    if last {
        MARGINAL_TOL * 1e-2
    } else {
        1e-5
    }
}

pub(super) fn solve(a: &[f64], b: &[f64], c: &[f64], epsilon: f64, max_iters: usize) -> Result<TransportPlan> {
    let (m, k) = (a.len(), b.len());
    if m == 0 || k == 0 || c.len() != m * k {
        return Err(Error::Dimension("cost matrix shape does not match the marginals".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    check_masses(a, b)?;
    let la: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; k];
    let cmax = c.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let mut eps = cmax.max(epsilon);
    let mut used = 0;
    let mut violation = f64::INFINITY;

    let row_violation = |f: &[f64], g: &[f64], eps: f64| -> f64 {
        (0..m)
            .map(|i| {
                let s: f64 = (0..k).map(|j| ((f[i] + g[j] - c[i * k + j]) / eps).exp()).sum();
                (s - a[i]).abs()
            })
            .sum()
    };

    loop {
        let last = eps <= epsilon;
        let tol = stage_tol(last);
        loop {
            if used >= max_iters {
                return Err(Error::SinkhornNonConvergence {
                    violation,
                    iterations: used,
                });
            }
            used += 1;
            for i in 0..m {
                let lse = logsumexp((0..k).map(|j| (g[j] - c[i * k + j]) / eps));
                f[i] = eps * (la[i] - lse);
            }
            for j in 0..k {
                let lse = logsumexp((0..m).map(|i| (f[i] - c[i * k + j]) / eps));
                g[j] = eps * (lb[j] - lse);
            }
            violation = row_violation(&f, &g, eps);
            if violation <= tol {
                break;
            }
        }
        if last {
            break;
        }
        eps = (eps * 0.5).max(epsilon);
    }

    let mut p: Vec<f64> = (0..m * k)
        .map(|idx| ((f[idx / k] + g[idx % k] - c[idx]) / eps).exp())
        .collect();
    round_to_feasible(&mut p, a, b);
    Ok(TransportPlan::new(m, k, p, c, "sinkhorn", used, None))
}

/// Scale rows and columns down to their marginals, then restore the missing
/// mass with a rank-one correction. The result has the exact marginals up to
/// floating-point rounding.
pub(crate) fn round_to_feasible(p: &mut [f64], a: &[f64], b: &[f64]) {
    let (m, k) = (a.len(), b.len());
    for i in 0..m {
        let s: f64 = p[i * k..(i + 1) * k].iter().sum();
        if s > a[i] {
            let r = a[i] / s;
            p[i * k..(i + 1) * k].iter_mut().for_each(|v| *v *= r);
        }
    }
    for j in 0..k {
        let s: f64 = (0..m).map(|i| p[i * k + j]).sum();
        if s > b[j] {
            let r = b[j] / s;
            (0..m).for_each(|i| p[i * k + j] *= r);
        }
    }
    let er: Vec<f64> = (0..m)
        .map(|i| (a[i] - p[i * k..(i + 1) * k].iter().sum::<f64>()).max(0.0))
        .collect();
    let ec: Vec<f64> = (0..k)
        .map(|j| (b[j] - (0..m).map(|i| p[i * k + j]).sum::<f64>()).max(0.0))
        .collect();
    let tot: f64 = er.iter().sum();
    if tot > 0.0 {
        for i in 0..m {
            for j in 0..k {
                p[i * k + j] += er[i] * ec[j] / tot;
            }
        }
    }
}
