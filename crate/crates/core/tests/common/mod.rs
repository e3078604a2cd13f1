//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use kahler_ot::potentials::PotentialSpec;
use kahler_ot::transport::CostMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Derivatives of total order 1..=4 by tensor-product central differences,
/// Richardson-extrapolated twice (steps h, h/2, h/4).
pub struct FdTensors {
    pub n: usize,
    pub grad: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
    pub d4: Vec<f64>,
}

fn binom(k: usize, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

/// Central difference of multi-index `alpha` with step h; O(h²) error.
fn central(f: &dyn Fn(&[f64]) -> f64, x: &[f64], alpha: &[usize], h: f64) -> f64 {
    let n = x.len();
    let mut idx = vec![0usize; n];
    let mut total = 0.0;
    loop {
        let mut p = x.to_vec();
        let mut w = 1.0;
        for d in 0..n {
            let (k, j) = (alpha[d], idx[d]);
            p[d] += (k as f64 / 2.0 - j as f64) * h;
            w *= if j % 2 == 0 { 1.0 } else { -1.0 } * binom(k, j);
        }
        total += w * f(&p);
        let mut d = 0;
        loop {
            if d == n {
                let order: usize = alpha.iter().sum();
                return total / h.powi(order as i32);
            }
            idx[d] += 1;
            if idx[d] <= alpha[d] {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn richardson(f: &dyn Fn(&[f64]) -> f64, x: &[f64], alpha: &[usize], h: f64) -> f64 {
    let d0 = central(f, x, alpha, h);
    let d1 = central(f, x, alpha, h / 2.0);
    let d2 = central(f, x, alpha, h / 4.0);
    let e0 = (4.0 * d1 - d0) / 3.0;
    let e1 = (4.0 * d2 - d1) / 3.0;
    (16.0 * e1 - e0) / 15.0
}

fn alpha_of(n: usize, ix: &[usize]) -> Vec<usize> {
    let mut a = vec![0; n];
    for &i in ix {
        a[i] += 1;
    }
    a
}

pub fn fd_tensors(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> FdTensors {
    let n = x.len();
    let grad = (0..n).map(|i| richardson(f, x, &alpha_of(n, &[i]), h)).collect();
    let mut d2 = Vec::new();
    let mut d3 = Vec::new();
    let mut d4 = Vec::new();
    for i in 0..n {
        for j in 0..n {
            d2.push(richardson(f, x, &alpha_of(n, &[i, j]), h));
            for k in 0..n {
                d3.push(richardson(f, x, &alpha_of(n, &[i, j, k]), h));
                for l in 0..n {
                    d4.push(richardson(f, x, &alpha_of(n, &[i, j, k, l]), h));
                }
            }
        }
    }
    FdTensors { n, grad, d2, d3, d4 }
}

/// Largest |a − b| relative to max(‖a‖∞, scale); infinite if `b` has a
/// non-finite entry.
pub fn rel_err(a: &[f64], b: &[f64], scale: f64) -> f64 {
    if b.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let na = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let d = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    d / na.max(scale).max(1e-300)
}

fn flatten(t: &FdTensors) -> Vec<f64> {
    let mut v = t.grad.clone();
    v.extend(&t.d2);
    v.extend(&t.d3);
    v.extend(&t.d4);
    v
}

/// Finite-difference tensors at the step among `h_max`·2^−k, k = 0..6, where
/// two successive levels agree best; balances truncation against roundoff.
pub fn fd_tensors_adaptive(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h_max: f64) -> FdTensors {
    let levels: Vec<FdTensors> = (0..7).map(|k| fd_tensors(f, x, h_max / 2f64.powi(k))).collect();
    let mut best = (f64::INFINITY, 0);
    for k in 0..levels.len() - 1 {
        let (a, b) = (flatten(&levels[k]), flatten(&levels[k + 1]));
        let e = if a.iter().chain(&b).all(|v| v.is_finite()) {
            a.iter().zip(&b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()))
        } else {
            f64::INFINITY
        };
        if e < best.0 {
            best = (e, k);
        }
    }
    levels.into_iter().nth(best.1).unwrap()
}

/// Largest step worth trying: a fraction of the distance to the domain
/// boundary, as measured by the domain slack.
pub fn fd_step(spec: &PotentialSpec, x: &[f64]) -> f64 {
    let slack = spec.domain.slack(x).unwrap_or(1.0);
    0.2 * slack.min(1.0)
}

/// Minimum of Σ_i C[i][σ(i)] over all permutations (Heap's algorithm).
pub fn brute_force_assignment(c: &CostMatrix) -> f64 {
    let n = c.rows;
    assert_eq!(n, c.cols);
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum::<f64>();
    let mut best = eval(&perm);
    let mut stack = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            best = best.min(eval(&perm));
            stack[i] += 1;
            i = 0;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    best
}

pub fn uniform_in_box(rng: &mut ChaCha8Rng, b: &[(f64, f64)]) -> Vec<f64> {
    b.iter().map(|(l, h)| rng.gen_range(*l..*h)).collect()
}

/// Random simplex weights with every entry above `delta`.
pub fn simplex_point(rng: &mut ChaCha8Rng, n: usize, delta: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
    let s: f64 = e.iter().sum();
    let free = 1.0 - n as f64 * delta;
    e.iter().map(|v| delta + free * v / s).collect()
}
