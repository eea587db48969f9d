//! Discrete probability measures on fixed one-dimensional supports.

use crate::error::{Error, Result};
use crate::model::StateGrid;

pub fn mean(support: &[f64], weights: &[f64]) -> f64 {
    support.iter().zip(weights).map(|(x, w)| x * w).sum()
}

/// 1-Wasserstein distance between two laws on the same sorted support,
/// `∑ |F_a - F_b| (s_{i+1} - s_i)`.
pub fn wasserstein1(support: &[f64], a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), support.len());
    debug_assert_eq!(b.len(), support.len());
    let mut cdf_gap = 0.0;
    let mut dist = 0.0;
    for i in 0..support.len().saturating_sub(1) {
        cdf_gap += a[i] - b[i];
        dist += cdf_gap.abs() * (support[i + 1] - support[i]);
    }
    dist
}

/// 1-Wasserstein distance between two empirical laws given by samples,
/// computed by matching sorted samples.
pub fn wasserstein1_samples(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid("samples", "need two nonempty samples of equal size"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Normal law restricted to the grid, weights proportional to the density at
/// the nodes. A zero standard deviation gives the point mass at `mu`, split
/// linearly between the two neighbouring nodes.
pub fn discretized_normal(grid: &StateGrid, mu: f64, std: f64) -> Result<Vec<f64>> {
    if !grid.contains(mu) {
        return Err(Error::invalid("initial mean", format!("{mu} outside the state grid")));
    }
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::invalid("initial std", format!("must be nonnegative, got {std}")));
    }
    let mut w = vec![0.0; grid.points];
    if std == 0.0 {
        let (i, theta) = grid.locate(mu);
        w[i] += 1.0 - theta;
        w[i + 1] += theta;
        return Ok(w);
    }
    for (i, wi) in w.iter_mut().enumerate() {
        let z = (grid.node(i) - mu) / std;
        *wi = (-0.5 * z * z).exp();
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("initial std", "normal law has no mass on the grid"));
    }
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// Inverse-CDF draw from a discrete law given a uniform `u` in `[0, 1)`.
pub fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u beyond the accumulated mass by rounding: last atom with mass
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
