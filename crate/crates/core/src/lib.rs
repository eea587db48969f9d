//! Three-agent constant-product AMM game: traders as mean-field minor
//! players, a liquidity provider as the dominating player, and exogenous
//! arbitrageurs whose impact enters through loss-versus-rebalancing.

pub mod agents;
pub mod arbitrage;
pub mod checks;
pub mod cli;
pub mod config;
pub mod error;
pub mod lvr;
pub mod measure;
pub mod mfg;
pub mod nplayer;
pub mod model;
pub mod pool;
pub mod quadrature;
pub mod rng;
pub mod sde;

pub use error::{Error, Result};
