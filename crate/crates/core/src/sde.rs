//! Seeded Euler–Maruyama simulation of the coupled pool, traders, LP and
//! arbitrage impact on a uniform time grid.
//!
//! Coefficients are evaluated at the left point of every step. Arbitrage
//! enters only through the LVR rate, integrated into the pool-side trade
//! `H`. The external price is a driftless GBM stepped exactly; it is tracked
//! for reporting and does not feed back into the pool.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::agents::{
    lp_running_reward, lp_state_step, price_drift, trader_drift, trader_running_reward, LpState, MarketSnapshot,
    MeanFieldAggregates,
};
use crate::error::{Error, Result};
use crate::lvr::instantaneous_lvr;
use crate::measure::sample_index;
use crate::model::{ModelParams, PriceScheme, StateGrid, TimeGrid};
use crate::pool::{execution_price, price_factors, ReserveFloor};
use crate::rng::stream_rng;

/// Closed-loop trader control `α(step, x)`.
pub trait TraderPolicy: Sync {
    fn control(&self, step: usize, x: f64) -> f64;
}

impl<F: Fn(usize, f64) -> f64 + Sync> TraderPolicy for F {
    fn control(&self, step: usize, x: f64) -> f64 {
        self(step, x)
    }
}

/// One step of a trader's inventory given its control and its Brownian
/// increment `dw` of variance `dt`.
pub trait TraderMotion: Sync {
    fn advance(&self, x: f64, alpha: f64, sigma: f64, dt: f64, dw: f64) -> f64;
}

/// `x + α dt + σ dW`.
#[derive(Debug, Clone, Copy, Default)]
pub struct EulerMotion;

impl TraderMotion for EulerMotion {
    fn advance(&self, x: f64, alpha: f64, sigma: f64, dt: f64, dw: f64) -> f64 {
        x + alpha * dt + sigma * dw
    }
}

const COMMON_STREAM: u64 = 0;
const LP_STREAM: u64 = 1;
const EXTERNAL_STREAM: u64 = 4;
const TRADER_STREAM: u64 = 16;

/// Brownian increments for one run, each already scaled to variance `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBundle {
    pub common: Vec<f64>,
    pub external: Vec<f64>,
    pub lp: [Vec<f64>; 3],
    pub idiosyncratic: Vec<Vec<f64>>,
    /// One uniform per trader for drawing the initial inventory.
    pub initial_uniforms: Vec<f64>,
}

impl NoiseBundle {
    pub fn traders(&self) -> usize {
        self.idiosyncratic.len()
    }
}

fn increments(seed: u64, stream: u64, steps: usize, sqrt_dt: f64) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    (0..steps)
        .map(|_| sqrt_dt * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Trader `i` draws from its own stream, so its noise depends only on
/// `(seed, i)`.
pub fn make_noise(seed: u64, grid: &TimeGrid, n_traders: usize) -> NoiseBundle {
    let sqrt_dt = grid.dt().sqrt();
    let steps = grid.steps;
    let mut uniforms = Vec::with_capacity(n_traders);
    let idiosyncratic = (0..n_traders)
        .map(|i| {
            let mut rng = stream_rng(seed, TRADER_STREAM + i as u64);
            uniforms.push(rng.random::<f64>());
            (0..steps)
                .map(|_| sqrt_dt * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    NoiseBundle {
        common: increments(seed, COMMON_STREAM, steps, sqrt_dt),
        external: increments(seed, EXTERNAL_STREAM, steps, sqrt_dt),
        lp: [
            increments(seed, LP_STREAM, steps, sqrt_dt),
            increments(seed, LP_STREAM + 1, steps, sqrt_dt),
            increments(seed, LP_STREAM + 2, steps, sqrt_dt),
        ],
        idiosyncratic,
        initial_uniforms: uniforms,
    }
}

/// Initial trader inventories drawn from a law on the state grid.
pub fn initial_states(law: &[f64], grid: &StateGrid, noise: &NoiseBundle) -> Vec<f64> {
    noise
        .initial_uniforms
        .iter()
        .map(|&u| grid.node(sample_index(law, u)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemTrajectory {
    pub time: Vec<f64>,
    pub price: Vec<f64>,
    pub external_price: Vec<f64>,
    /// Left-point drift used on each step.
    pub price_drift: Vec<f64>,
    pub x_adj: Vec<f64>,
    /// Cumulative pool-side trade `H = ∫ ℓ - ∫ mean α`.
    pub delta: Vec<f64>,
    pub x_reserve: Vec<f64>,
    pub y_reserve: Vec<f64>,
    pub invariant: Vec<f64>,
    pub lvr: Vec<f64>,
    pub lvr_rate: Vec<f64>,
    pub mean_control: Vec<f64>,
    pub lp_control: Vec<f64>,
    pub lp_states: Vec<LpState>,
    /// `∑ f^LP dt`.
    pub lp_reward: f64,
    /// Per-trader inventory paths, indexed `[trader][step]`.
    pub trader_x: Vec<Vec<f64>>,
    pub trader_y: Vec<Vec<f64>>,
    /// Per-trader `∑ f dt`.
    pub trader_reward: Vec<f64>,
    /// Per-trader realized objective `∑ f dt - c x_T²`.
    pub trader_objective: Vec<f64>,
}

/// Mean of the controls, summed in sorted order so the result does not
/// depend on how the traders are labelled.
fn symmetric_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Simulate the system with every trader following `policy`, except trader
/// 0 who follows `deviator` when given. `lp_control` holds one LP rate per
/// step and `initial_x` the traders' starting inventories.
pub fn simulate(
    params: &ModelParams,
    grid: &TimeGrid,
    initial_x: &[f64],
    policy: &dyn TraderPolicy,
    deviator: Option<&dyn TraderPolicy>,
    lp_control: &[f64],
    noise: &NoiseBundle,
) -> Result<SystemTrajectory> {
    simulate_with(params, grid, initial_x, policy, deviator, lp_control, noise, &EulerMotion)
}

/// [`simulate`] with the trader inventories moved by `motion`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_with(
    params: &ModelParams,
    grid: &TimeGrid,
    initial_x: &[f64],
    policy: &dyn TraderPolicy,
    deviator: Option<&dyn TraderPolicy>,
    lp_control: &[f64],
    noise: &NoiseBundle,
    motion: &dyn TraderMotion,
) -> Result<SystemTrajectory> {
    params.validate()?;
    let steps = grid.steps;
    let n = noise.traders();
    if initial_x.len() != n {
        return Err(Error::invalid("initial_x", format!("{} states for {n} traders", initial_x.len())));
    }
    if lp_control.len() != steps || noise.common.len() != steps {
        return Err(Error::invalid("lp_control", format!("need {steps} steps")));
    }

    let dt = grid.dt();
    let k0 = params.k0();
    let phi = params.phi();
    let floor = ReserveFloor::for_initial_reserve(params.x0);

    let mut price = params.p0();
    let mut external = params.p0();
    let mut delta = 0.0;
    let mut lvr = 0.0;
    let mut w0 = 0.0;
    let mut lp = params.lp_initial;
    let mut x_adj = params.x0 + lp.cumulative_control;
    let mut xs = initial_x.to_vec();
    let mut ys = vec![0.0; n];
    let mut alphas = vec![0.0; n];

    let mut tr = SystemTrajectory {
        time: Vec::with_capacity(steps + 1),
        price: Vec::with_capacity(steps + 1),
        external_price: Vec::with_capacity(steps + 1),
        price_drift: Vec::with_capacity(steps),
        x_adj: Vec::with_capacity(steps + 1),
        delta: Vec::with_capacity(steps + 1),
        x_reserve: Vec::with_capacity(steps + 1),
        y_reserve: Vec::with_capacity(steps + 1),
        invariant: Vec::with_capacity(steps + 1),
        lvr: Vec::with_capacity(steps + 1),
        lvr_rate: Vec::with_capacity(steps),
        mean_control: Vec::with_capacity(steps),
        lp_control: lp_control.to_vec(),
        lp_states: Vec::with_capacity(steps + 1),
        lp_reward: 0.0,
        trader_x: xs.iter().map(|&x| vec![x]).collect(),
        trader_y: vec![vec![0.0]; n],
        trader_reward: vec![0.0; n],
        trader_objective: vec![0.0; n],
    };
    let record = |tr: &mut SystemTrajectory, step: usize, price, external, x_adj, delta, lvr, lp| -> Result<()> {
        let (a, b) = price_factors(x_adj, delta, phi).map_err(|e| e.at_step(step))?;
        tr.time.push(grid.time(step));
        tr.price.push(price);
        tr.external_price.push(external);
        tr.x_adj.push(x_adj);
        tr.delta.push(delta);
        tr.x_reserve.push(b);
        tr.y_reserve.push(k0 / a);
        tr.invariant.push(k0 * b / a);
        tr.lvr.push(lvr);
        tr.lp_states.push(lp);
        Ok(())
    };
    record(&mut tr, 0, price, external, x_adj, delta, lvr, lp)?;

    for step in 0..steps {
        let at = |e: Error| e.at_step(step);
        if !(price > 0.0) {
            return Err(Error::degenerate("price", price).at_step(step));
        }
        let ell = if params.arbitrage {
            instantaneous_lvr(price, params.market_sigma, k0).map_err(at)?
        } else {
            0.0
        };
        for (i, a) in alphas.iter_mut().enumerate() {
            *a = match (i, deviator) {
                (0, Some(d)) => d.control(step, xs[0]),
                _ => policy.control(step, xs[i]),
            };
        }
        let mean = if params.price_impact { symmetric_mean(&alphas) } else { 0.0 };
        let alpha_lp = lp_control[step];
        let rate = params.convention.impact_rate(ell, mean);
        let drift = price_drift(x_adj, delta, alpha_lp, rate, phi, k0).map_err(at)?;
        let x_total = floor.check("x_total", x_adj + delta).map_err(at)?;
        let snapshot = MarketSnapshot {
            price,
            price_drift: drift,
            x_total: params.slippage.then_some(x_total),
        };

        for i in 0..n {
            let f = trader_running_reward(xs[i], alphas[i], &snapshot, phi, params.reward_form).map_err(at)?;
            tr.trader_reward[i] += f * dt;
            let (dx, dy) = trader_drift(alphas[i], price, phi, snapshot.x_total).map_err(at)?;
            xs[i] = motion.advance(xs[i], dx, params.trader_sigma, dt, noise.idiosyncratic[i][step]);
            ys[i] += dy * dt;
            tr.trader_x[i].push(xs[i]);
            tr.trader_y[i].push(ys[i]);
        }

        let agg = MeanFieldAggregates::new(x_adj, delta, mean, ell, phi).map_err(at)?;
        let f_lp = lp_running_reward(lp.x_inventory, alpha_lp, &agg, x_adj, phi, k0, params.convention).map_err(at)?;
        tr.lp_reward += f_lp * dt;
        let lp_noise = [noise.lp[0][step], noise.lp[1][step], noise.lp[2][step]];
        lp = lp_state_step(&lp, alpha_lp, price, dt, lp_noise, params.lp_vols, params.x0).map_err(at)?;

        x_adj += alpha_lp * dt;
        floor.check("x_adj", x_adj).map_err(at)?;
        delta += (ell - mean) * dt;
        w0 += noise.common[step];
        price = match params.price_scheme {
            PriceScheme::Euler => price + drift * dt + params.common_sigma * noise.common[step],
            PriceScheme::Reconstructed => {
                execution_price(k0, x_adj, delta, phi).map_err(at)? + params.common_sigma * w0
            }
        };
        lvr += ell * dt;
        let s = params.market_sigma;
        external *= (-0.5 * s * s * dt + s * noise.external[step]).exp();

        tr.price_drift.push(drift);
        tr.lvr_rate.push(ell);
        tr.mean_control.push(mean);
        record(&mut tr, step + 1, price, external, x_adj, delta, lvr, lp)?;
    }

    for i in 0..n {
        tr.trader_objective[i] =
            tr.trader_reward[i] - crate::agents::terminal_cost(xs[i], params.trader_terminal_weight);
    }
    Ok(tr)
}

impl SystemTrajectory {
    /// Realized `ΔV = V_T - V_0` of trader `i`, with `V = Y + X P`.
    pub fn trader_value_change(&self, i: usize) -> f64 {
        let last = self.price.len() - 1;
        let v = |n: usize| self.trader_y[i][n] + self.trader_x[i][n] * self.price[n];
        v(last) - v(0)
    }

    pub fn traders(&self) -> usize {
        self.trader_x.len()
    }
}
