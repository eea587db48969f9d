//! Trader and LP dynamics, mean-field aggregates and running rewards.
//!
//! Conventions shared with the rest of the crate:
//! * `alpha > 0` for a trader means buying ETH from the pool.
//! * `alpha_lp > 0` means the LP's ETH inventory grows, so its pool share
//!   shrinks; deposits are made at the current price ratio and pay no fee.
//! * The cumulative pool-side trade is `H = ∫ ℓ ds - ∫ mean(α) ds`: arbitrage
//!   inflow minus mean trader purchases. Rewards are to be maximized.

use crate::error::{Error, Result};
use crate::pool::{price_factors, slippage};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraderState {
    pub x_inventory: f64,
    pub y_inventory: f64,
}

impl TraderState {
    /// Mark-to-market value `Y + X P`.
    pub fn value(&self, price: f64) -> f64 {
        self.y_inventory + self.x_inventory * price
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LpState {
    pub x_inventory: f64,
    pub y_inventory: f64,
    /// Pool share expressed in USDT.
    pub pool_share_value: f64,
    /// Running integral of the LP control; the LP-adjusted ETH reserve is
    /// `x0 + cumulative_control`.
    pub cumulative_control: f64,
}

impl LpState {
    pub fn value(&self, price: f64) -> f64 {
        self.x_inventory * price + self.y_inventory + self.pool_share_value
    }
}

/// Discrete law of controls over the bounded control set.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLaw {
    atoms: Vec<(f64, f64)>,
}

impl ControlLaw {
    pub const NORMALIZATION_TOL: f64 = 1e-12;

    pub fn new(atoms: Vec<(f64, f64)>, bounds: (f64, f64)) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("atoms", "control law needs at least one atom"));
        }
        let mut total = 0.0;
        for &(a, w) in &atoms {
            if !(a >= bounds.0 && a <= bounds.1) {
                return Err(Error::invalid("atoms", format!("control {a} outside [{}, {}]", bounds.0, bounds.1)));
            }
            if !(w >= 0.0) {
                return Err(Error::invalid("atoms", format!("negative weight {w}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > Self::NORMALIZATION_TOL {
            return Err(Error::invalid("atoms", format!("weights sum to {total}")));
        }
        Ok(Self { atoms })
    }

    pub fn point_mass(a: f64) -> Self {
        Self { atoms: vec![(a, 1.0)] }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(a, w)| a * w).sum()
    }
}

/// Sign convention for the time derivative of the cumulative trade that
/// enters the price drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImpactConvention {
    /// `H' = ℓ - mean(α)`, the derivative of `H` as defined.
    #[default]
    DefinitionConsistent,
    /// `H' = +mean(α)`: the mean trader purchase rate enters the drift with
    /// a positive sign and arbitrage does not move the pool.
    PositiveMean,
}

impl ImpactConvention {
    pub fn impact_rate(&self, lvr_rate: f64, mean_control: f64) -> f64 {
        match self {
            ImpactConvention::DefinitionConsistent => lvr_rate - mean_control,
            ImpactConvention::PositiveMean => mean_control,
        }
    }
}

/// Population quantities at one time index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldAggregates {
    /// Mean of the control law at this time.
    pub mean_control: f64,
    /// Cumulative impact `H(t)`.
    pub h_q: f64,
    /// `1 / ((x_adj + H)(x_adj + phi H))`.
    pub g_factor: f64,
    /// LVR rate `ℓ(P_t)`.
    pub lvr_rate: f64,
}

impl MeanFieldAggregates {
    pub fn new(x_adj: f64, h_q: f64, mean_control: f64, lvr_rate: f64, phi: f64) -> Result<Self> {
        let (a, b) = price_factors(x_adj, h_q, phi)?;
        Ok(Self {
            mean_control,
            h_q,
            g_factor: 1.0 / (a * b),
            lvr_rate,
        })
    }
}

/// Aggregates at `t_index` from a control flow and an LVR-rate path, with the
/// integrals taken as left-endpoint sums of step `dt`.
pub fn mean_field_aggregates(
    q_flow: &[ControlLaw],
    lvr_rate_path: &[f64],
    t_index: usize,
    x_adj: f64,
    phi: f64,
    dt: f64,
) -> Result<MeanFieldAggregates> {
    if t_index >= q_flow.len() || t_index >= lvr_rate_path.len() {
        return Err(Error::invalid("t_index", format!("{t_index} beyond flow of length {}", q_flow.len())));
    }
    let h_q: f64 = q_flow[..t_index]
        .iter()
        .zip(&lvr_rate_path[..t_index])
        .map(|(q, l)| (l - q.mean()) * dt)
        .sum();
    MeanFieldAggregates::new(x_adj, h_q, q_flow[t_index].mean(), lvr_rate_path[t_index], phi)
}

/// Trader inventory drift `(dX/dt, dY/dt)`. With `x_total = None` slippage
/// is switched off.
pub fn trader_drift(alpha: f64, price: f64, phi: f64, x_total: Option<f64>) -> Result<(f64, f64)> {
    let s = match x_total {
        Some(x) => slippage(alpha, x)?,
        None => 0.0,
    };
    Ok((alpha, -alpha * (1.0 - s) * fee_factor(phi) * price))
}

/// `(1 + phi²) / (2 phi)`, the execution-price markup of the fee model.
pub fn fee_factor(phi: f64) -> f64 {
    (1.0 + phi * phi) / (2.0 * phi)
}

/// Time derivative of `k0 / ((x_adj + phi Δ)(x_adj + Δ))` given the rates
/// `x_adj' = alpha_lp` and `Δ' = delta_rate`.
pub fn price_drift(x_adj: f64, delta_x: f64, alpha_lp: f64, delta_rate: f64, phi: f64, k0: f64) -> Result<f64> {
    let (a, b) = price_factors(x_adj, delta_x, phi)?;
    let da = alpha_lp + phi * delta_rate;
    let db = alpha_lp + delta_rate;
    Ok(-k0 * (da * b + a * db) / (a * b).powi(2))
}

/// Price, price drift and (optionally) the slippage reserve seen by a trader
/// at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketSnapshot {
    pub price: f64,
    pub price_drift: f64,
    pub x_total: Option<f64>,
}

impl MarketSnapshot {
    /// Snapshot implied by the price equation at the aggregates.
    pub fn from_aggregates(
        agg: &MeanFieldAggregates,
        alpha_lp: f64,
        x_adj: f64,
        phi: f64,
        k0: f64,
        convention: ImpactConvention,
        with_slippage: bool,
    ) -> Result<Self> {
        let rate = convention.impact_rate(agg.lvr_rate, agg.mean_control);
        let x_total = x_adj + agg.h_q;
        Ok(Self {
            price: k0 * agg.g_factor,
            price_drift: price_drift(x_adj, agg.h_q, alpha_lp, rate, phi, k0)?,
            x_total: with_slippage.then_some(x_total),
        })
    }
}

/// Which expression is used for the trader's running reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardForm {
    /// Exact drift of `V = Y + X P` under the trader dynamics:
    /// `x P' + α P - α (1 - S) c P`.
    #[default]
    ItoDrift,
    /// `x P' + α P + α P (1 - S)(1 - c)`: only the fee markup `c - 1` is
    /// charged on the executed amount.
    MarkupOnly,
}

pub fn trader_running_reward(
    trader_x: f64,
    alpha: f64,
    market: &MarketSnapshot,
    phi: f64,
    form: RewardForm,
) -> Result<f64> {
    let s = match market.x_total {
        Some(x) => slippage(alpha, x)?,
        None => 0.0,
    };
    let c = fee_factor(phi);
    let p = market.price;
    let trade = match form {
        RewardForm::ItoDrift => alpha * p - alpha * (1.0 - s) * c * p,
        RewardForm::MarkupOnly => alpha * p + alpha * p * (1.0 - s) * (1.0 - c),
    };
    Ok(trader_x * market.price_drift + trade)
}

/// LP running reward, the drift of `X_LP P + Y_LP + Z_LP`:
/// `-k0 x G² [2(α x_adj + φ H H') + (1 + φ)(x_adj H' + α H)]`.
pub fn lp_running_reward(
    lp_x: f64,
    alpha_lp: f64,
    agg: &MeanFieldAggregates,
    x_adj: f64,
    phi: f64,
    k0: f64,
    convention: ImpactConvention,
) -> Result<f64> {
    price_factors(x_adj, agg.h_q, phi)?;
    let rate = convention.impact_rate(agg.lvr_rate, agg.mean_control);
    let h = agg.h_q;
    let g = agg.g_factor;
    let bracket = 2.0 * (alpha_lp * x_adj + phi * h * rate) + (1.0 + phi) * (x_adj * rate + alpha_lp * h);
    Ok(-k0 * lp_x * g * g * bracket)
}

/// Quadratic terminal inventory cost `c x²`.
pub fn terminal_cost(x: f64, c_terminal: f64) -> f64 {
    c_terminal * x * x
}

/// One Euler–Maruyama step of the LP state. `noise` holds the three Wiener
/// increments (already scaled to variance `dt`) for the ETH, USDT and share
/// components, `vols` their volatilities.
pub fn lp_state_step(
    state: &LpState,
    alpha_lp: f64,
    price: f64,
    dt: f64,
    noise: [f64; 3],
    vols: [f64; 3],
    pool_x0: f64,
) -> Result<LpState> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    let next = LpState {
        x_inventory: state.x_inventory + alpha_lp * dt + vols[0] * noise[0],
        y_inventory: state.y_inventory + alpha_lp * price * dt + vols[1] * noise[1],
        pool_share_value: state.pool_share_value - 2.0 * alpha_lp * price * dt + vols[2] * noise[2],
        cumulative_control: state.cumulative_control + alpha_lp * dt,
    };
    let x_adj = pool_x0 + next.cumulative_control;
    if !(x_adj > 0.0) {
        return Err(Error::degenerate("x0 + cumulative_control", x_adj));
    }
    Ok(next)
}
