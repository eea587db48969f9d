//! Loss-versus-rebalancing for a constant-product pool.
//!
//! The pool value at external price `P` is `V(P) = min { P x + y : x y = k }
//! = 2 sqrt(k P)`, attained at `x*(P) = sqrt(k / P)`. Against a driftless
//! geometric Brownian motion the rebalancing portfolio `R_t = V_0 + ∫ x* dP`
//! dominates the pool by the predictable, nondecreasing `LVR_t = ∫ ℓ(P) dt`
//! with `ℓ(P) = -σ² P² V''(P) / 2 = σ² sqrt(k P) / 4`, and the arbitrageurs'
//! gains `ARB_T = R_T - V(P_T)` equal `LVR_T`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{require_positive, Error, Result};
use crate::rng::{derive_seed, stream_rng};

pub fn pool_value(p: f64, k: f64) -> Result<f64> {
    require_positive("p", p)?;
    require_positive("k", k)?;
    Ok(2.0 * (k * p).sqrt())
}

/// ETH holding of the pool at external price `p`.
pub fn optimal_holding(p: f64, k: f64) -> Result<f64> {
    require_positive("p", p)?;
    require_positive("k", k)?;
    Ok((k / p).sqrt())
}

/// Instantaneous LVR rate in USDT per unit time.
pub fn instantaneous_lvr(p: f64, sigma: f64, k: f64) -> Result<f64> {
    require_positive("p", p)?;
    require_positive("k", k)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", format!("must be nonnegative, got {sigma}")));
    }
    Ok(sigma * sigma * (k * p).sqrt() / 4.0)
}

/// One left-point step of the rebalancing portfolio.
pub fn replication_increment(p_prev: f64, p_next: f64, k: f64) -> Result<f64> {
    require_positive("p_next", p_next)?;
    Ok(optimal_holding(p_prev, k)? * (p_next - p_prev))
}

/// LP inventory net of accumulated LVR.
pub fn adjusted_lp_inventory(v_lp: f64, lvr_t: f64) -> f64 {
    v_lp - lvr_t
}

/// Sampled LVR bookkeeping along one external price path.
#[derive(Debug, Clone, PartialEq)]
pub struct LvrAccount {
    pub price_path: Vec<f64>,
    pub pool_value_path: Vec<f64>,
    pub replication_path: Vec<f64>,
    pub lvr_path: Vec<f64>,
    pub arb_gain: f64,
}

impl LvrAccount {
    /// `ARB_T - LVR_T`; zero in continuous time.
    pub fn identity_gap(&self) -> f64 {
        self.arb_gain - self.lvr_path.last().copied().unwrap_or(0.0)
    }

    /// `V(P_t) - R_t + LVR_t` at every grid point.
    pub fn decomposition_residuals(&self) -> Vec<f64> {
        self.pool_value_path
            .iter()
            .zip(&self.replication_path)
            .zip(&self.lvr_path)
            .map(|((v, r), l)| v - r + l)
            .collect()
    }
}

/// Exact log-normal step of the driftless GBM.
fn gbm_step(p: f64, sigma: f64, dt: f64, z: f64) -> f64 {
    p * (-0.5 * sigma * sigma * dt + sigma * dt.sqrt() * z).exp()
}

/// Simulate one path for a pool whose invariant may change over time
/// (`invariant(i)` is used on step `i`). A passive LP keeps it constant.
pub fn simulate_lvr_path_with_invariant<R: Rng>(
    p0: f64,
    sigma: f64,
    dt: f64,
    steps: usize,
    invariant: impl Fn(usize) -> f64,
    rng: &mut R,
) -> Result<LvrAccount> {
    require_positive("p0", p0)?;
    require_positive("dt", dt)?;
    let mut price_path = Vec::with_capacity(steps + 1);
    let mut pool_value_path = Vec::with_capacity(steps + 1);
    let mut replication_path = Vec::with_capacity(steps + 1);
    let mut lvr_path = Vec::with_capacity(steps + 1);

    let k0 = invariant(0);
    let v0 = pool_value(p0, k0)?;
    let (mut p, mut r, mut lvr) = (p0, v0, 0.0);
    price_path.push(p);
    pool_value_path.push(v0);
    replication_path.push(r);
    lvr_path.push(lvr);
    for i in 0..steps {
        let k = invariant(i);
        let z: f64 = rng.sample(StandardNormal);
        let next = gbm_step(p, sigma, dt, z);
        r += replication_increment(p, next, k)?;
        lvr += instantaneous_lvr(p, sigma, k)? * dt;
        p = next;
        price_path.push(p);
        pool_value_path.push(pool_value(p, k)?);
        replication_path.push(r);
        lvr_path.push(lvr);
    }
    let arb_gain = v0 + (r - v0) - pool_value_path[steps];
    Ok(LvrAccount {
        price_path,
        pool_value_path,
        replication_path,
        lvr_path,
        arb_gain,
    })
}

pub fn simulate_lvr_path<R: Rng>(p0: f64, sigma: f64, k: f64, dt: f64, steps: usize, rng: &mut R) -> Result<LvrAccount> {
    simulate_lvr_path_with_invariant(p0, sigma, dt, steps, |_| k, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LvrSettings {
    pub p0: f64,
    pub k: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub dt_list: Vec<f64>,
    pub paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LvrPathSummary {
    pub arb_gain: f64,
    pub lvr_terminal: f64,
    pub replication_terminal: f64,
    pub pool_value_terminal: f64,
}

impl LvrPathSummary {
    pub fn gap(&self) -> f64 {
        self.arb_gain - self.lvr_terminal
    }

    pub fn decomposition_residual(&self) -> f64 {
        self.pool_value_terminal - self.replication_terminal + self.lvr_terminal
    }
}

/// Monte Carlo results at one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct LvrLevel {
    pub dt: f64,
    pub steps: usize,
    pub paths: Vec<LvrPathSummary>,
    pub mean_abs_gap: f64,
    pub mean_gap: f64,
    pub stderr_gap: f64,
    pub mean_abs_decomposition_residual: f64,
}

/// Terminal-only path simulation; keeps memory flat at large step counts.
fn simulate_terminal(settings: &LvrSettings, dt: f64, steps: usize, seed: u64, path: u64) -> LvrPathSummary {
    let mut rng = stream_rng(seed, path);
    let (k, sigma) = (settings.k, settings.sigma);
    let sqrt_k = k.sqrt();
    let v0 = 2.0 * (k * settings.p0).sqrt();
    let (mut p, mut r, mut lvr) = (settings.p0, v0, 0.0);
    let drift = -0.5 * sigma * sigma * dt;
    let vol = sigma * dt.sqrt();
    for _ in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        let next = p * (drift + vol * z).exp();
        let sqrt_p = p.sqrt();
        r += sqrt_k / sqrt_p * (next - p);
        lvr += sigma * sigma * sqrt_k * sqrt_p / 4.0 * dt;
        p = next;
    }
    let v_t = 2.0 * (k * p).sqrt();
    LvrPathSummary {
        arb_gain: r - v_t,
        lvr_terminal: lvr,
        replication_terminal: r,
        pool_value_terminal: v_t,
    }
}

/// Run the ARB = LVR experiment at every step size in `settings.dt_list`.
/// Paths run in parallel; each owns the stream `(level seed, path index)` and
/// reductions are sequential in path order.
pub fn run_lvr_experiment(settings: &LvrSettings, seed: u64) -> Result<Vec<LvrLevel>> {
    require_positive("p0", settings.p0)?;
    require_positive("k", settings.k)?;
    require_positive("horizon", settings.horizon)?;
    if !(settings.sigma >= 0.0) {
        return Err(Error::invalid("sigma", "must be nonnegative"));
    }
    if settings.paths == 0 {
        return Err(Error::invalid("paths", "need at least one path"));
    }
    settings
        .dt_list
        .iter()
        .enumerate()
        .map(|(level, &dt)| {
            require_positive("dt", dt)?;
            let steps = ((settings.horizon / dt).round() as usize).max(1);
            let dt = settings.horizon / steps as f64;
            let level_seed = derive_seed(seed, level as u64);
            let paths: Vec<LvrPathSummary> = (0..settings.paths as u64)
                .into_par_iter()
                .map(|i| simulate_terminal(settings, dt, steps, level_seed, i))
                .collect();
            let n = paths.len() as f64;
            let mean_gap = paths.iter().map(|s| s.gap()).sum::<f64>() / n;
            let var = if paths.len() > 1 {
                paths.iter().map(|s| (s.gap() - mean_gap).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            Ok(LvrLevel {
                dt,
                steps,
                mean_abs_gap: paths.iter().map(|s| s.gap().abs()).sum::<f64>() / n,
                mean_gap,
                stderr_gap: (var / n).sqrt(),
                mean_abs_decomposition_residual: paths
                    .iter()
                    .map(|s| s.decomposition_residual().abs())
                    .sum::<f64>()
                    / n,
                paths,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_value_examples() {
        assert!((pool_value(1.0, 1e4).unwrap() - 200.0).abs() < 1e-12);
        assert!((pool_value(4.0, 1e4).unwrap() - 400.0).abs() < 1e-12);
        assert!(pool_value(0.0, 1.0).is_err());
    }

    #[test]
    fn pool_value_is_minimum_of_portfolio_value() {
        for &(p, k) in &[(1.0, 1e4), (4.0, 1e4), (0.3, 17.0), (250.0, 3.0e6)] {
            let x_star = optimal_holding(p, k).unwrap();
            // grid over x in (0, 4 x*]
            let n = 200_000;
            let (mut best, mut arg) = (f64::INFINITY, 0.0);
            for i in 1..=n {
                let x = 4.0 * x_star * i as f64 / n as f64;
                let v = p * x + k / x;
                if v < best {
                    best = v;
                    arg = x;
                }
            }
            let v = pool_value(p, k).unwrap();
            assert!((best - v).abs() <= 1e-8 * v, "p={p} k={k}");
            assert!((arg - x_star).abs() <= 4.0 * x_star / n as f64);
        }
    }

    #[test]
    fn lvr_rate_examples() {
        assert_eq!(instantaneous_lvr(3.0, 0.0, 5.0).unwrap(), 0.0);
        assert!((instantaneous_lvr(1.0, 0.2, 1e4).unwrap() - 1.0).abs() < 1e-12);
        for &p in &[0.1, 1.0, 7.0] {
            for &k in &[1.0, 1e4, 3e7] {
                let l = instantaneous_lvr(p, 0.3, k).unwrap();
                let v = pool_value(p, k).unwrap();
                assert!((l - 0.09 * v / 8.0).abs() <= 1e-12 * l);
            }
        }
        assert!(instantaneous_lvr(1.0, -0.1, 1.0).is_err());
    }

    #[test]
    fn replication_examples() {
        assert_eq!(replication_increment(2.0, 2.0, 9.0).unwrap(), 0.0);
        assert!((replication_increment(1.0, 1.01, 1e4).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adjusted_inventory() {
        assert_eq!(adjusted_lp_inventory(42.0, 0.0), 42.0);
        assert_eq!(adjusted_lp_inventory(100.0, 1.5), 98.5);
    }

    #[test]
    fn frozen_price_has_no_lvr() {
        let mut rng = stream_rng(1, 0);
        let acc = simulate_lvr_path(1.0, 0.0, 1e4, 0.01, 100, &mut rng).unwrap();
        assert_eq!(*acc.lvr_path.last().unwrap(), 0.0);
        assert_eq!(acc.arb_gain, 0.0);
        assert_eq!(*acc.replication_path.last().unwrap(), 200.0);
    }

    #[test]
    fn lvr_path_is_monotone() {
        let mut rng = stream_rng(3, 1);
        let acc = simulate_lvr_path(1.0, 0.5, 1e4, 1e-3, 2000, &mut rng).unwrap();
        assert!(acc.lvr_path.windows(2).all(|w| w[1] >= w[0]));
        assert!(acc.lvr_path.iter().all(|&l| l >= 0.0));
        // ARB_T - LVR_T is minus the terminal decomposition residual
        let res = acc.decomposition_residuals();
        assert!((acc.identity_gap() + res[res.len() - 1]).abs() < 1e-9);
    }

    #[test]
    fn lp_inventory_reconciles_stepwise() {
        // dṼ = dV_LP - ℓ dt on every step
        let mut rng = stream_rng(9, 0);
        let dt = 1e-3;
        let acc = simulate_lvr_path(1.0, 0.2, 1e4, dt, 500, &mut rng).unwrap();
        let v_lp: Vec<f64> = acc.pool_value_path.clone();
        for i in 0..500 {
            let before = adjusted_lp_inventory(v_lp[i], acc.lvr_path[i]);
            let after = adjusted_lp_inventory(v_lp[i + 1], acc.lvr_path[i + 1]);
            let expected = (v_lp[i + 1] - v_lp[i]) - instantaneous_lvr(acc.price_path[i], 0.2, 1e4).unwrap() * dt;
            assert!((after - before - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn experiment_is_reproducible() {
        let s = LvrSettings {
            p0: 1.0,
            k: 1e4,
            sigma: 0.2,
            horizon: 1.0,
            dt_list: vec![0.01],
            paths: 64,
        };
        let a = run_lvr_experiment(&s, 11).unwrap();
        let b = run_lvr_experiment(&s, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].steps, 100);
    }

    #[test]
    fn terminal_simulation_matches_full_path() {
        let s = LvrSettings {
            p0: 1.3,
            k: 2e3,
            sigma: 0.4,
            horizon: 1.0,
            dt_list: vec![0.01],
            paths: 1,
        };
        let summary = simulate_terminal(&s, 0.01, 100, 5, 0);
        let mut rng = stream_rng(5, 0);
        let acc = simulate_lvr_path(1.3, 0.4, 2e3, 0.01, 100, &mut rng).unwrap();
        assert!((summary.arb_gain - acc.arb_gain).abs() < 1e-9);
        assert!((summary.lvr_terminal - acc.lvr_path[100]).abs() < 1e-9);
    }
}
