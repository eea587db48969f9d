//! Model parameters and the discretization grids shared by the simulator and
//! the solvers.

use crate::agents::{ImpactConvention, LpState, RewardForm};
use crate::error::{require_positive, Error, Result};

/// How the simulator advances the pool price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriceScheme {
    /// `P += P' dt + σ0 dW0` with the drift evaluated at the left point.
    #[default]
    Euler,
    /// `P = k0 G(x_adj, H) + σ0 W0`: the price equation evaluated on the
    /// integrated reserves, plus the accumulated common noise.
    Reconstructed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub x0: f64,
    pub y0: f64,
    pub tau: f64,
    pub trader_sigma: f64,
    pub trader_terminal_weight: f64,
    pub slippage: bool,
    pub reward_form: RewardForm,
    /// Whether the mean trader control moves the pool.
    pub price_impact: bool,
    /// Volatilities of the LP's ETH, USDT and pool-share components.
    pub lp_vols: [f64; 3],
    pub lp_terminal_weight: f64,
    pub lp_initial: LpState,
    /// Volatility of the external price; also the σ inside the LVR rate.
    pub market_sigma: f64,
    /// Common-noise volatility σ0 of the pool price.
    pub common_sigma: f64,
    pub arbitrage: bool,
    pub convention: ImpactConvention,
    pub price_scheme: PriceScheme,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            x0: 1000.0,
            y0: 1000.0,
            tau: 0.003,
            trader_sigma: 0.1,
            trader_terminal_weight: 1.0,
            slippage: true,
            reward_form: RewardForm::ItoDrift,
            price_impact: true,
            lp_vols: [0.0; 3],
            lp_terminal_weight: 1.0,
            lp_initial: LpState::default(),
            market_sigma: 0.2,
            common_sigma: 0.0,
            arbitrage: true,
            convention: ImpactConvention::DefinitionConsistent,
            price_scheme: PriceScheme::Euler,
        }
    }
}

impl ModelParams {
    pub fn k0(&self) -> f64 {
        self.x0 * self.y0
    }

    pub fn phi(&self) -> f64 {
        1.0 - self.tau
    }

    pub fn p0(&self) -> f64 {
        self.y0 / self.x0
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("x0", self.x0)?;
        require_positive("y0", self.y0)?;
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::invalid("tau", format!("must lie in [0, 1), got {}", self.tau)));
        }
        let nonneg = [
            ("trader_sigma", self.trader_sigma),
            ("trader_terminal_weight", self.trader_terminal_weight),
            ("lp_terminal_weight", self.lp_terminal_weight),
            ("market_sigma", self.market_sigma),
            ("common_sigma", self.common_sigma),
            ("lp_vols", self.lp_vols[0].min(self.lp_vols[1]).min(self.lp_vols[2])),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Uniform time grid on `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        require_positive("horizon", horizon)?;
        if steps == 0 {
            return Err(Error::invalid("steps", "need at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }
}

/// Uniform grid over the trader's ETH inventory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateGrid {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl StateGrid {
    pub fn new(lower: f64, upper: f64, points: usize) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::invalid("state grid", format!("need lower < upper, got [{lower}, {upper}]")));
        }
        if points < 2 {
            return Err(Error::invalid("state grid", "need at least two points"));
        }
        Ok(Self { lower, upper, points })
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.node(i)).collect()
    }

    /// Cell index `i` and weight `theta` with `x = (1 - theta) node(i) +
    /// theta node(i + 1)`. Points outside the grid are clamped.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let mut s = ((x - self.lower) / self.spacing()).clamp(0.0, (self.points - 1) as f64);
        // snap rounding noise onto the node
        let r = s.round();
        if (s - r).abs() < 1e-9 {
            s = r;
        }
        let i = (s.floor() as usize).min(self.points - 2);
        (i, s - i as f64)
    }

    pub fn nearest(&self, x: f64) -> usize {
        let (i, theta) = self.locate(x);
        if theta > 0.5 {
            i + 1
        } else {
            i
        }
    }

    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let (i, theta) = self.locate(x);
        if theta == 0.0 {
            values[i]
        } else {
            (1.0 - theta) * values[i] + theta * values[i + 1]
        }
    }

    /// Whether `x` lies in the grid up to rounding.
    pub fn contains(&self, x: f64) -> bool {
        let eps = 1e-12 * (self.upper - self.lower);
        x >= self.lower - eps && x <= self.upper + eps
    }
}

/// `count` evenly spaced control atoms on `[lower, upper]`.
pub fn uniform_atoms(lower: f64, upper: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 || !(lower <= upper) {
        return Err(Error::invalid("control atoms", format!("bad atom spec [{lower}, {upper}] x {count}")));
    }
    if count == 1 {
        return Ok(vec![0.5 * (lower + upper)]);
    }
    let h = (upper - lower) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| if i + 1 == count { upper } else { lower + i as f64 * h })
        .collect())
}

/// Expand `K` piecewise-constant segment values to one value per time step.
pub fn piecewise_constant_path(segments: &[f64], steps: usize) -> Vec<f64> {
    let k = segments.len();
    if k == 0 {
        return vec![0.0; steps];
    }
    (0..steps).map(|n| segments[(n * k / steps).min(k - 1)]).collect()
}
