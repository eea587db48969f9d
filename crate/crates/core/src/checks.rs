//! Randomized closed-form-versus-oracle check of the arbitrage trade.

use rand::Rng;
use rayon::prelude::*;

use crate::arbitrage::{brute_force_arbitrage, exact_no_arb_band, optimal_arbitrage, ArbDirection, ArbSolution};
use crate::error::Result;
use crate::rng::stream_rng;

/// Random pool and external price: reserves over four decades, external
/// price within ±30 % (log) of the pool price, fee up to 5 %.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArbInstance {
    pub r_alpha: f64,
    pub r_beta: f64,
    pub m_p: f64,
    pub tau: f64,
}

impl ArbInstance {
    pub fn draw<R: Rng>(rng: &mut R) -> Self {
        let r_alpha = 10f64.powf(rng.random_range(0.0..4.0));
        let price = 10f64.powf(rng.random_range(-2.0..4.0));
        let m_p = price * rng.random_range(-0.3f64..0.3).exp();
        let tau = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..0.05) };
        Self {
            r_alpha,
            r_beta: price * r_alpha,
            m_p,
            tau,
        }
    }

    pub fn k(&self) -> f64 {
        self.r_alpha * self.r_beta
    }

    pub fn phi(&self) -> f64 {
        1.0 - self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArbCheckRow {
    pub instance: ArbInstance,
    pub closed: ArbSolution,
    pub oracle: ArbSolution,
    /// `|closed - oracle| / (1 + |oracle|)` on the profit.
    pub scaled_discrepancy: f64,
    /// Relative distance of the post-trade price to the band edge on the
    /// traded side; for no trade, relative distance outside the band.
    pub band_error: f64,
}

impl ArbCheckRow {
    pub fn passes(&self, profit_tol: f64, band_tol: f64) -> bool {
        self.scaled_discrepancy <= profit_tol && self.band_error <= band_tol
    }
}

fn band_error(inst: &ArbInstance, sol: &ArbSolution) -> Result<f64> {
    let band = exact_no_arb_band(inst.m_p, inst.tau)?;
    let p = sol.post_trade_price(inst.r_alpha, inst.r_beta, inst.phi());
    Ok(match sol.direction {
        ArbDirection::BuyEth => (p - band.lower).abs() / band.lower,
        ArbDirection::SellEth => (p - band.upper).abs() / band.upper,
        ArbDirection::Inactive => ((band.lower - p).max(p - band.upper)).max(0.0) / p,
    })
}

pub fn check_instance(inst: &ArbInstance, grid_points: usize) -> Result<ArbCheckRow> {
    let k = inst.k();
    let closed = optimal_arbitrage(inst.r_alpha, inst.r_beta, k, inst.m_p, inst.phi())?;
    let oracle = brute_force_arbitrage(inst.r_alpha, inst.r_beta, k, inst.m_p, inst.phi(), grid_points)?;
    Ok(ArbCheckRow {
        instance: *inst,
        closed,
        oracle,
        scaled_discrepancy: (closed.profit - oracle.profit).abs() / (1.0 + oracle.profit.abs()),
        band_error: band_error(inst, &closed)?,
    })
}

/// `draws` instances from the stream `(seed, 0)`, checked in parallel.
pub fn arb_check(draws: usize, grid_points: usize, seed: u64) -> Result<Vec<ArbCheckRow>> {
    let mut rng = stream_rng(seed, 0);
    let instances: Vec<ArbInstance> = (0..draws).map(|_| ArbInstance::draw(&mut rng)).collect();
    instances.par_iter().map(|inst| check_instance(inst, grid_points)).collect()
}
