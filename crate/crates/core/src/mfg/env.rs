//! The market environment a single trader faces once the population and the
//! LP are frozen.

use crate::agents::{price_drift, trader_running_reward, MarketSnapshot};
use crate::error::{Error, Result};
use crate::lvr::instantaneous_lvr;
use crate::model::{ModelParams, PriceScheme, TimeGrid};
use crate::pool::{execution_price, ReserveFloor};
use crate::sde::SystemTrajectory;

/// Per-step price, price drift and pool ETH reserve.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvPath {
    pub price: Vec<f64>,
    pub price_drift: Vec<f64>,
    pub x_total: Vec<f64>,
    pub lvr_rate: Vec<f64>,
    pub mean_control: Vec<f64>,
    pub x_adj: Vec<f64>,
    /// Cumulative impact `H` at the left point of each step.
    pub h: Vec<f64>,
    pub lp_control: Vec<f64>,
}

impl EnvPath {
    /// Forward recursion from the mean control path with `ℓ_n = ℓ(P_n)` and
    /// `H_{n+1} = H_n + (ℓ_n - mean_n) dt`. The price follows the same scheme
    /// as the simulator without common noise, so a noise-free simulation
    /// reproduces this path exactly.
    pub fn from_mean_controls(
        params: &ModelParams,
        grid: &TimeGrid,
        mean_control: &[f64],
        lp_control: &[f64],
    ) -> Result<Self> {
        let steps = grid.steps;
        if mean_control.len() != steps || lp_control.len() != steps {
            return Err(Error::invalid("env", format!("control paths must have {steps} entries")));
        }
        let dt = grid.dt();
        let k0 = params.k0();
        let phi = params.phi();
        let floor = ReserveFloor::for_initial_reserve(params.x0);
        let mut env = EnvPath {
            price: Vec::with_capacity(steps),
            price_drift: Vec::with_capacity(steps),
            x_total: Vec::with_capacity(steps),
            lvr_rate: Vec::with_capacity(steps),
            mean_control: Vec::with_capacity(steps),
            x_adj: Vec::with_capacity(steps),
            h: Vec::with_capacity(steps),
            lp_control: lp_control.to_vec(),
        };
        let mut x_adj = params.x0 + params.lp_initial.cumulative_control;
        let mut h = 0.0;
        let mut price = params.p0();
        for n in 0..steps {
            let at = |e: Error| e.at_step(n);
            floor.check("x_adj", x_adj).map_err(at)?;
            let x_total = floor.check("x_total", x_adj + h).map_err(at)?;
            if !(price > 0.0) {
                return Err(Error::degenerate("price", price).at_step(n));
            }
            let ell = if params.arbitrage {
                instantaneous_lvr(price, params.market_sigma, k0).map_err(at)?
            } else {
                0.0
            };
            let mean = if params.price_impact { mean_control[n] } else { 0.0 };
            let rate = params.convention.impact_rate(ell, mean);
            let drift = price_drift(x_adj, h, lp_control[n], rate, phi, k0).map_err(at)?;
            env.price.push(price);
            env.price_drift.push(drift);
            env.x_total.push(x_total);
            env.lvr_rate.push(ell);
            env.mean_control.push(mean);
            env.x_adj.push(x_adj);
            env.h.push(h);
            h += (ell - mean) * dt;
            x_adj += lp_control[n] * dt;
            price = match params.price_scheme {
                PriceScheme::Euler => price + drift * dt,
                PriceScheme::Reconstructed => execution_price(k0, x_adj, h, phi).map_err(at)?,
            };
        }
        Ok(env)
    }

    /// The environment realized along a simulated trajectory.
    pub fn from_trajectory(tr: &SystemTrajectory) -> Self {
        let steps = tr.price_drift.len();
        EnvPath {
            price: tr.price[..steps].to_vec(),
            price_drift: tr.price_drift.clone(),
            x_total: tr.x_reserve[..steps].to_vec(),
            lvr_rate: tr.lvr_rate.clone(),
            mean_control: tr.mean_control.clone(),
            x_adj: tr.x_adj[..steps].to_vec(),
            h: tr.delta[..steps].to_vec(),
            lp_control: tr.lp_control.clone(),
        }
    }

    pub fn steps(&self) -> usize {
        self.price.len()
    }

    pub fn snapshot(&self, n: usize, slippage: bool) -> MarketSnapshot {
        MarketSnapshot {
            price: self.price[n],
            price_drift: self.price_drift[n],
            x_total: slippage.then_some(self.x_total[n]),
        }
    }

    /// Trader running reward at step `n`. The reserves were checked positive
    /// on construction, so the only failure left is a non-finite input,
    /// reported as `-inf` so the control is never selected.
    pub fn trader_reward(&self, params: &ModelParams, n: usize, x: f64, alpha: f64) -> f64 {
        trader_running_reward(x, alpha, &self.snapshot(n, params.slippage), params.phi(), params.reward_form)
            .unwrap_or(f64::NEG_INFINITY)
    }
}
