//! Run configuration: flat `section.key = value` assignments (valid TOML),
//! validated against a fixed schema with defaults.
//!
//! ```text
//! # comments start with '#'
//! seed = 7
//! pool.tau = 0.003
//! grid.steps = 50
//! harness.n_values = [8, 16, 32, 64]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};
use toml::Value;

use crate::agents::{ImpactConvention, LpState, RewardForm};
use crate::error::{Error, Result};
use crate::lvr::LvrSettings;
use crate::measure::discretized_normal;
use crate::mfg::{MajorMinorOptions, MfgSetup, PicardOptions};
use crate::model::{piecewise_constant_path, uniform_atoms, ModelParams, PriceScheme, StateGrid, TimeGrid};
use crate::nplayer::GapMethod;

trait ConfigValue: Sized {
    fn parse(v: &Value) -> Option<Self>;
    fn render(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse(v: &Value) -> Option<Self> {
        match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

impl ConfigValue for usize {
    fn parse(v: &Value) -> Option<Self> {
        v.as_integer().and_then(|i| usize::try_from(i).ok())
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for u64 {
    fn parse(v: &Value) -> Option<Self> {
        v.as_integer().and_then(|i| u64::try_from(i).ok())
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for bool {
    fn parse(v: &Value) -> Option<Self> {
        v.as_bool()
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for String {
    fn parse(v: &Value) -> Option<Self> {
        v.as_str().map(str::to_owned)
    }
    fn render(&self) -> String {
        Value::String(self.clone()).to_string()
    }
}

impl<T: ConfigValue> ConfigValue for Vec<T> {
    fn parse(v: &Value) -> Option<Self> {
        v.as_array()?.iter().map(T::parse).collect()
    }
    fn render(&self) -> String {
        let items: Vec<String> = self.iter().map(ConfigValue::render).collect();
        format!("[{}]", items.join(", "))
    }
}

fn type_name<T: ConfigValue + 'static>() -> &'static str {
    use std::any::TypeId;
    let id = TypeId::of::<T>();
    if id == TypeId::of::<f64>() {
        "a number"
    } else if id == TypeId::of::<usize>() || id == TypeId::of::<u64>() {
        "a nonnegative integer"
    } else if id == TypeId::of::<bool>() {
        "a boolean"
    } else if id == TypeId::of::<String>() {
        "a string"
    } else {
        "an array"
    }
}

macro_rules! schema {
    ($($field:ident : $ty:ty = $default:expr, $key:literal;)*) => {
        /// Every model, grid, solver and harness parameter of a run.
        #[derive(Debug, Clone, PartialEq)]
        pub struct SimConfig {
            $(pub $field: $ty,)*
        }

        impl Default for SimConfig {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        impl SimConfig {
            const KEYS: &'static [&'static str] = &[$($key,)*];

            fn assign(&mut self, key: &str, value: &Value) -> Result<()> {
                match key {
                    $($key => {
                        self.$field = <$ty as ConfigValue>::parse(value).ok_or_else(|| Error::Config {
                            key: key.to_owned(),
                            reason: format!("expected {}, got `{value}`", type_name::<$ty>()),
                        })?;
                    })*
                    _ => {
                        return Err(Error::Config {
                            key: key.to_owned(),
                            reason: "unknown key".into(),
                        })
                    }
                }
                Ok(())
            }

            /// Canonical echo: every key in schema order, one per line.
            pub fn canonical(&self) -> String {
                let mut out = String::new();
                $(
                    out.push_str($key);
                    out.push_str(" = ");
                    out.push_str(&ConfigValue::render(&self.$field));
                    out.push('\n');
                )*
                out
            }
        }
    };
}

schema! {
    seed: u64 = 0, "seed";
    pool_x0: f64 = 1000.0, "pool.x0";
    pool_y0: f64 = 1000.0, "pool.y0";
    pool_tau: f64 = 0.003, "pool.tau";
    trader_sigma: f64 = 0.1, "trader.sigma";
    trader_control_min: f64 = -1.0, "trader.control_min";
    trader_control_max: f64 = 1.0, "trader.control_max";
    trader_terminal_weight: f64 = 1.0, "trader.terminal_weight";
    trader_initial_mean: f64 = 0.0, "trader.initial_mean";
    trader_initial_std: f64 = 0.25, "trader.initial_std";
    trader_slippage: bool = true, "trader.slippage";
    trader_price_impact: bool = true, "trader.price_impact";
    trader_reward_form: String = "ito_drift".into(), "trader.reward_form";
    lp_vol_x: f64 = 0.0, "lp.vol_x";
    lp_vol_y: f64 = 0.0, "lp.vol_y";
    lp_vol_z: f64 = 0.0, "lp.vol_z";
    lp_control_min: f64 = -1.0, "lp.control_min";
    lp_control_max: f64 = 1.0, "lp.control_max";
    lp_segments: usize = 4, "lp.segments";
    lp_values: Vec<f64> = vec![0.0; 4], "lp.values";
    lp_terminal_weight: f64 = 1.0, "lp.terminal_weight";
    market_sigma: f64 = 0.2, "market.sigma";
    market_common_sigma: f64 = 0.0, "market.common_sigma";
    market_convention: String = "definition_consistent".into(), "market.convention";
    market_price_scheme: String = "euler".into(), "market.price_scheme";
    arbitrage_enabled: bool = true, "arbitrage.enabled";
    grid_horizon: f64 = 1.0, "grid.horizon";
    grid_steps: usize = 50, "grid.steps";
    grid_state_min: f64 = -3.0, "grid.state_min";
    grid_state_max: f64 = 3.0, "grid.state_max";
    grid_state_points: usize = 101, "grid.state_points";
    grid_control_atoms: usize = 11, "grid.control_atoms";
    grid_quadrature_nodes: usize = 5, "grid.quadrature_nodes";
    solver_damping: f64 = 0.5, "solver.damping";
    solver_tol: f64 = 1e-6, "solver.tol";
    solver_max_iter: usize = 500, "solver.max_iter";
    solver_search_budget: usize = 400, "solver.search_budget";
    solver_initial_step: f64 = 0.5, "solver.initial_step";
    solver_step_tol: f64 = 1e-2, "solver.step_tol";
    harness_n_values: Vec<usize> = vec![8, 16, 32, 64], "harness.n_values";
    harness_replications: usize = 100, "harness.replications";
    harness_population: usize = 256, "harness.population";
    harness_gap_method: String = "conditional".into(), "harness.gap_method";
    lvr_p0: f64 = 1.0, "lvr.p0";
    lvr_k: f64 = 10000.0, "lvr.k";
    lvr_sigma: f64 = 0.2, "lvr.sigma";
    lvr_horizon: f64 = 1.0, "lvr.horizon";
    lvr_dt_list: Vec<f64> = vec![1e-2, 1e-3, 1e-4], "lvr.dt_list";
    lvr_paths: usize = 10000, "lvr.paths";
    arb_draws: usize = 1000, "arb.draws";
    arb_grid_points: usize = 4096, "arb.grid_points";
}

/// Flatten nested tables into dotted keys.
fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_owned(),
        reason: reason.into(),
    }
}

fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| config_err(spec, "override must read section.key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or(Value::String(raw.to_owned())),
        Err(_) => Value::String(raw.to_owned()),
    };
    Ok((key.to_owned(), value))
}

impl SimConfig {
    /// Parse config text, apply `overrides` (`section.key=value`) and
    /// validate.
    pub fn from_text(text: &str, overrides: &[String]) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let reason = e.message().to_owned();
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
            config_err(&line.map_or("<file>".into(), |l| format!("line {l}")), reason)
        })?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);
        for spec in overrides {
            let (k, v) = parse_override(spec)?;
            flat.insert(k, v);
        }
        let mut cfg = Self::default();
        for (k, v) in &flat {
            cfg.assign(k, v)?;
        }
        if !flat.contains_key("lp.values") {
            cfg.lp_values = vec![0.0; cfg.lp_segments];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(&path.display().to_string(), format!("cannot read: {e}")))?;
        Self::from_text(&text, overrides)
    }

    pub fn keys() -> &'static [&'static str] {
        Self::KEYS
    }

    /// SHA-256 of the canonical echo, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(key, format!("must be positive and finite, got {v}")))
            }
        };
        let nonneg = |key: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(key, format!("must be nonnegative and finite, got {v}")))
            }
        };
        let at_least = |key: &str, v: usize, min: usize| {
            if v >= min {
                Ok(())
            } else {
                Err(config_err(key, format!("must be at least {min}, got {v}")))
            }
        };
        let interval = |key: &str, lo: f64, hi: f64| {
            if lo.is_finite() && hi.is_finite() && lo <= hi {
                Ok(())
            } else {
                Err(config_err(key, format!("need min <= max, got [{lo}, {hi}]")))
            }
        };

        positive("pool.x0", self.pool_x0)?;
        positive("pool.y0", self.pool_y0)?;
        if !(self.pool_tau >= 0.0 && self.pool_tau < 1.0) {
            return Err(config_err("pool.tau", format!("must lie in [0, 1), got {}", self.pool_tau)));
        }
        nonneg("trader.sigma", self.trader_sigma)?;
        interval("trader.control_max", self.trader_control_min, self.trader_control_max)?;
        nonneg("trader.terminal_weight", self.trader_terminal_weight)?;
        nonneg("trader.initial_std", self.trader_initial_std)?;
        if !self.trader_initial_mean.is_finite() {
            return Err(config_err("trader.initial_mean", "must be finite"));
        }
        if self.trader_initial_mean < self.grid_state_min || self.trader_initial_mean > self.grid_state_max {
            return Err(config_err("trader.initial_mean", "must lie inside the state grid"));
        }
        self.reward_form()?;
        nonneg("lp.vol_x", self.lp_vol_x)?;
        nonneg("lp.vol_y", self.lp_vol_y)?;
        nonneg("lp.vol_z", self.lp_vol_z)?;
        interval("lp.control_max", self.lp_control_min, self.lp_control_max)?;
        at_least("lp.segments", self.lp_segments, 1)?;
        if self.lp_segments > self.grid_steps {
            return Err(config_err("lp.segments", "cannot exceed grid.steps"));
        }
        if self.lp_values.len() != self.lp_segments {
            return Err(config_err(
                "lp.values",
                format!("need {} values, got {}", self.lp_segments, self.lp_values.len()),
            ));
        }
        if self.lp_values.iter().any(|v| !(*v >= self.lp_control_min && *v <= self.lp_control_max)) {
            return Err(config_err("lp.values", "values must lie within [lp.control_min, lp.control_max]"));
        }
        nonneg("lp.terminal_weight", self.lp_terminal_weight)?;
        nonneg("market.sigma", self.market_sigma)?;
        nonneg("market.common_sigma", self.market_common_sigma)?;
        self.convention()?;
        self.price_scheme()?;
        positive("grid.horizon", self.grid_horizon)?;
        at_least("grid.steps", self.grid_steps, 1)?;
        interval("grid.state_max", self.grid_state_min, self.grid_state_max)?;
        if self.grid_state_min >= self.grid_state_max {
            return Err(config_err("grid.state_max", "must exceed grid.state_min"));
        }
        at_least("grid.state_points", self.grid_state_points, 2)?;
        at_least("grid.control_atoms", self.grid_control_atoms, 1)?;
        if self.grid_control_atoms == 1 && self.trader_control_min != self.trader_control_max {
            return Err(config_err("grid.control_atoms", "a single atom needs control_min = control_max"));
        }
        at_least("grid.quadrature_nodes", self.grid_quadrature_nodes, 1)?;
        if !(self.solver_damping > 0.0 && self.solver_damping <= 1.0) {
            return Err(config_err("solver.damping", format!("must lie in (0, 1], got {}", self.solver_damping)));
        }
        positive("solver.tol", self.solver_tol)?;
        at_least("solver.max_iter", self.solver_max_iter, 1)?;
        at_least("solver.search_budget", self.solver_search_budget, 1)?;
        positive("solver.initial_step", self.solver_initial_step)?;
        positive("solver.step_tol", self.solver_step_tol)?;
        if self.harness_n_values.is_empty() || self.harness_n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("harness.n_values", "need a nonempty ascending list"));
        }
        if self.harness_n_values[0] == 0 {
            return Err(config_err("harness.n_values", "population sizes must be positive"));
        }
        at_least("harness.replications", self.harness_replications, 2)?;
        at_least("harness.population", self.harness_population, 1)?;
        self.gap_method()?;
        positive("lvr.p0", self.lvr_p0)?;
        positive("lvr.k", self.lvr_k)?;
        nonneg("lvr.sigma", self.lvr_sigma)?;
        positive("lvr.horizon", self.lvr_horizon)?;
        if self.lvr_dt_list.is_empty() {
            return Err(config_err("lvr.dt_list", "need at least one step size"));
        }
        for &dt in &self.lvr_dt_list {
            positive("lvr.dt_list", dt)?;
        }
        at_least("lvr.paths", self.lvr_paths, 2)?;
        at_least("arb.draws", self.arb_draws, 1)?;
        at_least("arb.grid_points", self.arb_grid_points, 3)?;
        Ok(())
    }

    pub fn reward_form(&self) -> Result<RewardForm> {
        match self.trader_reward_form.as_str() {
            "ito_drift" => Ok(RewardForm::ItoDrift),
            "markup_only" => Ok(RewardForm::MarkupOnly),
            other => Err(config_err("trader.reward_form", format!("expected ito_drift or markup_only, got {other:?}"))),
        }
    }

    pub fn convention(&self) -> Result<ImpactConvention> {
        match self.market_convention.as_str() {
            "definition_consistent" => Ok(ImpactConvention::DefinitionConsistent),
            "positive_mean" => Ok(ImpactConvention::PositiveMean),
            other => Err(config_err(
                "market.convention",
                format!("expected definition_consistent or positive_mean, got {other:?}"),
            )),
        }
    }

    pub fn price_scheme(&self) -> Result<PriceScheme> {
        match self.market_price_scheme.as_str() {
            "euler" => Ok(PriceScheme::Euler),
            "reconstructed" => Ok(PriceScheme::Reconstructed),
            other => Err(config_err("market.price_scheme", format!("expected euler or reconstructed, got {other:?}"))),
        }
    }

    pub fn gap_method(&self) -> Result<GapMethod> {
        match self.harness_gap_method.as_str() {
            "conditional" => Ok(GapMethod::Conditional),
            "realized" => Ok(GapMethod::Realized),
            other => Err(config_err("harness.gap_method", format!("expected conditional or realized, got {other:?}"))),
        }
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let p = ModelParams {
            x0: self.pool_x0,
            y0: self.pool_y0,
            tau: self.pool_tau,
            trader_sigma: self.trader_sigma,
            trader_terminal_weight: self.trader_terminal_weight,
            slippage: self.trader_slippage,
            reward_form: self.reward_form()?,
            price_impact: self.trader_price_impact,
            lp_vols: [self.lp_vol_x, self.lp_vol_y, self.lp_vol_z],
            lp_terminal_weight: self.lp_terminal_weight,
            lp_initial: LpState::default(),
            market_sigma: self.market_sigma,
            common_sigma: self.market_common_sigma,
            arbitrage: self.arbitrage_enabled,
            convention: self.convention()?,
            price_scheme: self.price_scheme()?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid_horizon, self.grid_steps)
    }

    pub fn mfg_setup(&self) -> Result<MfgSetup> {
        let time = self.time_grid()?;
        let states = StateGrid::new(self.grid_state_min, self.grid_state_max, self.grid_state_points)?;
        let controls = if self.grid_control_atoms == 1 {
            vec![self.trader_control_min]
        } else {
            uniform_atoms(self.trader_control_min, self.trader_control_max, self.grid_control_atoms)?
        };
        Ok(MfgSetup {
            time,
            states,
            controls,
            quadrature_nodes: self.grid_quadrature_nodes,
            initial_law: discretized_normal(&states, self.trader_initial_mean, self.trader_initial_std)?,
        })
    }

    /// LP control path from `lp.values`, one value per segment.
    pub fn lp_path(&self) -> Vec<f64> {
        piecewise_constant_path(&self.lp_values, self.grid_steps)
    }

    pub fn picard(&self) -> PicardOptions {
        PicardOptions {
            damping: self.solver_damping,
            tol: self.solver_tol,
            max_iter: self.solver_max_iter,
        }
    }

    pub fn major_minor(&self) -> MajorMinorOptions {
        MajorMinorOptions {
            picard: self.picard(),
            segments: self.lp_segments,
            bounds: (self.lp_control_min, self.lp_control_max),
            initial_step: self.solver_initial_step,
            step_tol: self.solver_step_tol,
            budget: self.solver_search_budget,
            start: Some(self.lp_values.clone()),
        }
    }

    pub fn lvr_settings(&self) -> LvrSettings {
        LvrSettings {
            p0: self.lvr_p0,
            k: self.lvr_k,
            sigma: self.lvr_sigma,
            horizon: self.lvr_horizon,
            dt_list: self.lvr_dt_list.clone(),
            paths: self.lvr_paths,
        }
    }
}
