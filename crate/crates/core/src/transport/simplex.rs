//! Dictionary between simplex weights and natural parameters of the
//! multinomial family: p_i = e^{x_i} / (1 + Σ e^{x_j}) for i < n, p_n = 1 / (1 + Σ e^{x_j}).

use serde::Serialize;

use crate::error::{Error, Result};

pub const SIMPLEX_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    ToNatural,
    ToWeights,
}

pub fn simplex_transform(direction: Direction, value: &[f64]) -> Result<Vec<f64>> {
    match direction {
        Direction::ToNatural => simplex_to_natural(value),
        Direction::ToWeights => natural_to_simplex(value),
    }
}

fn check_weights(p: &[f64]) -> Result<()> {
    if p.len() < 2 {
        return Err(Error::Dimension("a weight vector needs at least 2 entries".into()));
    }
    if let Some(w) = p.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::InvalidArgument(format!("weight {w} is not strictly positive")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_SUM_TOL {
        return Err(Error::InvalidArgument(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}

/// x_i = log(p_i / p_n), i < n.
pub fn simplex_to_natural(p: &[f64]) -> Result<Vec<f64>> {
    check_weights(p)?;
    let last = p[p.len() - 1].ln();
    Ok(p[..p.len() - 1].iter().map(|w| w.ln() - last).collect())
}

pub fn natural_to_simplex(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Dimension("natural parameters need at least 1 entry".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("natural parameters must be finite".into()));
    }
    // Softmax over (x, 0), shifted for stability.
    let shift = x.iter().fold(0.0f64, |m, v| m.max(*v));
    let mut out: Vec<f64> = x.iter().map(|v| (v - shift).exp()).collect();
    out.push((-shift).exp());
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    Ok(out)
}

/// True when every weight of every point exceeds `delta`.
pub fn uniform_probability(points: &[Vec<f64>], delta: f64) -> bool {
    points.iter().all(|p| p.iter().all(|w| *w > delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_anchor() {
        let p = natural_to_simplex(&[0.0, 0.0]).unwrap();
        assert!(p.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-16));
        let x = simplex_to_natural(&[1.0 / 3.0; 3]).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(simplex_to_natural(&[0.5, 0.6]).is_err());
        assert!(simplex_to_natural(&[1.0, 0.0]).is_err());
        assert!(uniform_probability(&[vec![0.3, 0.7]], 0.05));
        assert!(!uniform_probability(&[vec![0.01, 0.99]], 0.05));
    }
}
