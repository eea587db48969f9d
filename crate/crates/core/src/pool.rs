//! Constant-product pool mechanics.
//!
//! Prices are quoted in USDT per ETH. Trades are signed ETH amounts seen from
//! the pool: a positive `delta_x` adds ETH to the pool, a negative one removes
//! it. Fees follow the two-stage rule: the pool first prices the trade on the
//! fee-discounted amount `phi * delta_x` against the reference invariant, then
//! credits the full amount, which moves the invariant.

use crate::error::{require_positive, Error, Result};

/// Reserves of a two-token constant-product pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolState {
    pub x_reserve: f64,
    pub y_reserve: f64,
    pub invariant_k: f64,
    pub fee_tau: f64,
}

impl PoolState {
    pub fn new(x_reserve: f64, y_reserve: f64, fee_tau: f64) -> Result<Self> {
        require_positive("x_reserve", x_reserve)?;
        require_positive("y_reserve", y_reserve)?;
        if !(0.0..1.0).contains(&fee_tau) {
            return Err(Error::invalid("fee_tau", format!("must lie in [0, 1), got {fee_tau}")));
        }
        Ok(Self {
            x_reserve,
            y_reserve,
            invariant_k: x_reserve * y_reserve,
            fee_tau,
        })
    }

    /// Fraction of a trade credited before the invariant update.
    pub fn phi(&self) -> f64 {
        1.0 - self.fee_tau
    }

    pub fn spot_price(&self) -> f64 {
        spot_price(self)
    }

    /// Liquidity deposit of `eth` ETH together with `eth * P` USDT at the
    /// current ratio. Negative amounts withdraw. No fee is charged.
    pub fn deposit(&self, eth: f64) -> Result<Self> {
        let usdt = eth * self.spot_price();
        let x = self.x_reserve + eth;
        let y = self.y_reserve + usdt;
        if x <= 0.0 {
            return Err(Error::degenerate("x_reserve", x));
        }
        if y <= 0.0 {
            return Err(Error::degenerate("y_reserve", y));
        }
        Ok(Self {
            x_reserve: x,
            y_reserve: y,
            invariant_k: x * y,
            fee_tau: self.fee_tau,
        })
    }
}

pub fn spot_price(pool: &PoolState) -> f64 {
    pool.y_reserve / pool.x_reserve
}

/// Running price after a cumulative trade of `delta_x` ETH against the
/// LP-adjusted reserves `x_adj`:
///
/// ```text
/// P = k0 / ((x_adj + phi * delta_x) * (x_adj + delta_x))
/// ```
pub fn execution_price(k0: f64, x_adj: f64, delta_x: f64, phi: f64) -> Result<f64> {
    let (a, b) = price_factors(x_adj, delta_x, phi)?;
    Ok(k0 / (a * b))
}

/// The two denominator factors of the price equation, both checked positive.
pub(crate) fn price_factors(x_adj: f64, delta_x: f64, phi: f64) -> Result<(f64, f64)> {
    let a = x_adj + phi * delta_x;
    let b = x_adj + delta_x;
    if !(a > 0.0) {
        return Err(Error::degenerate("x_adj + phi * delta_x", a));
    }
    if !(b > 0.0) {
        return Err(Error::degenerate("x_adj + delta_x", b));
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeQuote {
    /// USDT paid out by the pool (negative when USDT flows in).
    pub delta_y: f64,
    /// Invariant after the fee is credited to the reserves.
    pub new_invariant: f64,
}

/// Two-stage quote of a signed ETH trade against the adjusted reserves,
/// priced on `pool.invariant_k` as the reference invariant.
pub fn quote_trade(pool: &PoolState, x_adj: f64, y_adj: f64, delta_x: f64) -> Result<TradeQuote> {
    let k0 = pool.invariant_k;
    let phi = pool.phi();
    let (a, b) = price_factors(x_adj, delta_x, phi)?;
    let y_after = k0 / a;
    let delta_y = y_adj - y_after;
    if !(y_after > 0.0) {
        return Err(Error::degenerate("y_adj - delta_y", y_after));
    }
    Ok(TradeQuote {
        delta_y,
        new_invariant: b * y_after,
    })
}

/// Slippage `alpha / x_total` of a trade at rate `alpha` against the total
/// ETH reserve.
pub fn slippage(alpha: f64, x_total: f64) -> Result<f64> {
    if !(x_total > 0.0) {
        return Err(Error::degenerate("x_total", x_total));
    }
    Ok(alpha / x_total)
}

/// LP-adjusted reserves at grid index `t_index`, integrating the LP control
/// and its USDT counterpart with left-endpoint sums of step `dt`.
pub fn adjusted_reserves(
    lp_control_path: &[f64],
    price_path: &[f64],
    t_index: usize,
    x0: f64,
    y0: f64,
    dt: f64,
) -> Result<(f64, f64)> {
    if t_index > lp_control_path.len() || t_index > price_path.len() {
        return Err(Error::invalid(
            "t_index",
            format!(
                "{t_index} exceeds path lengths ({}, {})",
                lp_control_path.len(),
                price_path.len()
            ),
        ));
    }
    let (mut x, mut y) = (x0, y0);
    for (alpha, p) in lp_control_path[..t_index].iter().zip(&price_path[..t_index]) {
        x += alpha * dt;
        y += alpha * p * dt;
    }
    let floor = ReserveFloor::for_initial_reserve(x0);
    floor.check("x_adj", x)?;
    if !(y > 0.0) {
        return Err(Error::degenerate("y_adj", y));
    }
    Ok((x, y))
}

/// Split of the pool ETH reserve into its three sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReserveDecomposition {
    pub lp_adjusted_x: f64,
    pub lp_adjusted_y: f64,
    /// Cumulative arbitrage inflow, the integral of the LVR rate.
    pub arb_impact: f64,
    /// Cumulative mean trader purchase.
    pub trader_impact: f64,
}

impl ReserveDecomposition {
    pub fn total_x(&self) -> f64 {
        self.lp_adjusted_x + self.arb_impact - self.trader_impact
    }
}

pub fn total_eth_reserves(decomp: &ReserveDecomposition) -> Result<f64> {
    let x = decomp.total_x();
    if !(x > 0.0) {
        return Err(Error::degenerate("x_total", x));
    }
    Ok(x)
}

/// Lower bound below which a reserve counts as emptied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReserveFloor {
    pub epsilon: f64,
}

impl ReserveFloor {
    pub const RELATIVE: f64 = 1e-9;

    pub fn for_initial_reserve(x0: f64) -> Self {
        Self {
            epsilon: Self::RELATIVE * x0,
        }
    }

    pub fn check(&self, quantity: &'static str, value: f64) -> Result<f64> {
        if value > self.epsilon {
            Ok(value)
        } else {
            Err(Error::degenerate(quantity, value))
        }
    }
}
