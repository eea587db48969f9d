//! Arbitrage between the pool and an external market quoting `m_p` USDT per
//! ETH.
//!
//! Two directions are profitable depending on which side of the external
//! price the pool sits. Buying ETH from the pool (USDT in, fee on the USDT leg)
//! pays while `phi * m_p` exceeds the pool price; selling ETH into the pool
//! (ETH in, fee on the ETH leg) pays while the pool price exceeds `m_p / phi`.
//! The second case is the first with the two tokens swapped and `1 / m_p` as
//! the external price.

use crate::error::{require_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArbDirection {
    Inactive,
    /// Pay USDT into the pool, take ETH out, sell it on the external market.
    BuyEth,
    /// Pay ETH into the pool, take USDT out, rebuy ETH on the external market.
    SellEth,
}

/// Optimal arbitrage trade. `delta_alpha` is the ETH leg and `delta_beta` the
/// USDT leg, both as nonnegative magnitudes; `profit` is in USDT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArbSolution {
    pub direction: ArbDirection,
    pub delta_alpha: f64,
    pub delta_beta: f64,
    pub profit: f64,
}

impl ArbSolution {
    pub const INACTIVE: Self = Self {
        direction: ArbDirection::Inactive,
        delta_alpha: 0.0,
        delta_beta: 0.0,
        profit: 0.0,
    };

    pub fn is_active(&self) -> bool {
        self.direction != ArbDirection::Inactive
    }

    /// Pool price on the invariant curve after executing the trade, i.e. with
    /// only the fee-discounted input credited.
    pub fn post_trade_price(&self, r_alpha: f64, r_beta: f64, phi: f64) -> f64 {
        match self.direction {
            ArbDirection::Inactive => r_beta / r_alpha,
            ArbDirection::BuyEth => {
                (r_beta + phi * self.delta_beta) / (r_alpha - self.delta_alpha)
            }
            ArbDirection::SellEth => {
                (r_beta - self.delta_beta) / (r_alpha + phi * self.delta_alpha)
            }
        }
    }
}

/// Price interval inside which no arbitrage trade is profitable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoArbBand {
    pub lower: f64,
    pub upper: f64,
}

impl NoArbBand {
    pub fn contains(&self, price: f64) -> bool {
        self.lower <= price && price <= self.upper
    }
}

/// The band `[(1 - tau) m_p, (1 + tau) m_p]`.
pub fn no_arb_band(m_p: f64, tau: f64) -> Result<NoArbBand> {
    require_positive("m_p", m_p)?;
    check_tau(tau)?;
    Ok(NoArbBand {
        lower: (1.0 - tau) * m_p,
        upper: (1.0 + tau) * m_p,
    })
}

/// The band the closed-form trades actually enforce, `[phi m_p, m_p / phi]`.
/// It agrees with [`no_arb_band`] to first order in `tau`.
pub fn exact_no_arb_band(m_p: f64, tau: f64) -> Result<NoArbBand> {
    require_positive("m_p", m_p)?;
    check_tau(tau)?;
    let phi = 1.0 - tau;
    Ok(NoArbBand {
        lower: phi * m_p,
        upper: m_p / phi,
    })
}

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::invalid("tau", format!("must lie in [0, 1), got {tau}")))
    }
}

fn check_inputs(r_alpha: f64, r_beta: f64, k: f64, m_p: f64, phi: f64) -> Result<()> {
    require_positive("r_alpha", r_alpha)?;
    require_positive("r_beta", r_beta)?;
    require_positive("k", k)?;
    require_positive("m_p", m_p)?;
    if !(phi > 0.0 && phi <= 1.0) {
        return Err(Error::invalid("phi", format!("must lie in (0, 1], got {phi}")));
    }
    Ok(())
}

/// Closed-form optimal arbitrage against reserves `(r_alpha, r_beta)` with
/// invariant `k`.
pub fn optimal_arbitrage(r_alpha: f64, r_beta: f64, k: f64, m_p: f64, phi: f64) -> Result<ArbSolution> {
    check_inputs(r_alpha, r_beta, k, m_p, phi)?;

    let buy = {
        let delta_alpha = r_alpha - (k / (phi * m_p)).sqrt();
        let delta_beta = ((phi * m_p * k).sqrt() - r_beta) / phi;
        let profit = m_p * delta_alpha - delta_beta;
        (delta_alpha, delta_beta, profit)
    };
    // token roles swapped, external price 1 / m_p
    let sell = {
        let delta_beta = r_beta - (k * m_p / phi).sqrt();
        let delta_alpha = ((phi * k / m_p).sqrt() - r_alpha) / phi;
        let profit = delta_beta - m_p * delta_alpha;
        (delta_alpha, delta_beta, profit)
    };

    let candidate = |(da, db, profit): (f64, f64, f64), direction| {
        (da > 0.0 && db > 0.0 && profit > 0.0).then_some(ArbSolution {
            direction,
            delta_alpha: da,
            delta_beta: db,
            profit,
        })
    };
    let best = match (
        candidate(buy, ArbDirection::BuyEth),
        candidate(sell, ArbDirection::SellEth),
    ) {
        (Some(a), Some(b)) => {
            if b.profit > a.profit {
                b
            } else {
                a
            }
        }
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => ArbSolution::INACTIVE,
    };
    Ok(best)
}

/// Objective of the convex reformulation for the USDT-in direction: profit as
/// a function of the ETH taken out, or `None` where the USDT leg would be
/// negative or the pool emptied.
pub fn buy_eth_objective(delta_alpha: f64, r_alpha: f64, r_beta: f64, k: f64, m_p: f64, phi: f64) -> Option<f64> {
    if !(delta_alpha >= 0.0 && delta_alpha < r_alpha) {
        return None;
    }
    let delta_beta = (k / (r_alpha - delta_alpha) - r_beta) / phi;
    (delta_beta >= 0.0).then_some(m_p * delta_alpha - delta_beta)
}

/// Mirror of [`buy_eth_objective`]: profit in USDT as a function of the USDT
/// taken out when paying ETH in.
pub fn sell_eth_objective(delta_beta: f64, r_alpha: f64, r_beta: f64, k: f64, m_p: f64, phi: f64) -> Option<f64> {
    if !(delta_beta >= 0.0 && delta_beta < r_beta) {
        return None;
    }
    let delta_alpha = (k / (r_beta - delta_beta) - r_alpha) / phi;
    (delta_alpha >= 0.0).then_some(delta_beta - m_p * delta_alpha)
}

/// Exhaustive grid search over the traded amount followed by golden-section
/// refinement around the best grid point. Independent of the closed form.
pub fn brute_force_arbitrage(
    r_alpha: f64,
    r_beta: f64,
    k: f64,
    m_p: f64,
    phi: f64,
    grid_points: usize,
) -> Result<ArbSolution> {
    check_inputs(r_alpha, r_beta, k, m_p, phi)?;
    if grid_points < 3 {
        return Err(Error::invalid("grid_points", format!("need at least 3, got {grid_points}")));
    }

    let buy = maximize_on_grid(r_alpha, grid_points, |d| buy_eth_objective(d, r_alpha, r_beta, k, m_p, phi));
    let sell = maximize_on_grid(r_beta, grid_points, |d| sell_eth_objective(d, r_alpha, r_beta, k, m_p, phi));

    // profits at rounding level come from legs that round to zero
    let min_profit = 1e-12 * (m_p * r_alpha + r_beta);
    let buy_sol = buy.filter(|&(_, v)| v > min_profit).map(|(da, profit)| ArbSolution {
        direction: ArbDirection::BuyEth,
        delta_alpha: da,
        delta_beta: (k / (r_alpha - da) - r_beta) / phi,
        profit,
    });
    let sell_sol = sell.filter(|&(_, v)| v > min_profit).map(|(db, profit)| ArbSolution {
        direction: ArbDirection::SellEth,
        delta_alpha: (k / (r_beta - db) - r_alpha) / phi,
        delta_beta: db,
        profit,
    });
    Ok(match (buy_sol, sell_sol) {
        (Some(a), Some(b)) => {
            if b.profit > a.profit {
                b
            } else {
                a
            }
        }
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => ArbSolution::INACTIVE,
    })
}

/// Maximize a concave objective over `[0, upper)` sampled at `points` evenly
/// spaced nodes, then refine by golden-section search on the bracketing cell.
fn maximize_on_grid(upper: f64, points: usize, objective: impl Fn(f64) -> Option<f64>) -> Option<(f64, f64)> {
    let step = upper / points as f64;
    let mut best: Option<(usize, f64)> = None;
    for i in 0..points {
        if let Some(v) = objective(i as f64 * step) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    let (i, v) = best?;
    let lo = if i == 0 { 0.0 } else { (i - 1) as f64 * step };
    let hi = ((i + 1) as f64 * step).min(upper * (1.0 - 1e-12));
    let f = |x: f64| objective(x).unwrap_or(f64::NEG_INFINITY);
    let (x_ref, v_ref) = golden_section_max(lo, hi, f);
    if v_ref > v {
        Some((x_ref, v_ref))
    } else {
        Some((i as f64 * step, v))
    }
}

fn golden_section_max(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a) <= 1e-15 * b.abs().max(1e-300) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
