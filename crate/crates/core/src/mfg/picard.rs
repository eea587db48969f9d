//! Damped Picard iteration for the mean-field consistency condition.

use crate::error::{Error, Result};
use crate::mfg::dp::{best_response, Kernel, PolicyGrid};
use crate::mfg::env::EnvPath;
use crate::mfg::flows::{induced_flows, FlowOfMeasures};
use crate::model::{ModelParams, StateGrid, TimeGrid};

/// Grids and initial law of the representative trader's problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MfgSetup {
    pub time: TimeGrid,
    pub states: StateGrid,
    pub controls: Vec<f64>,
    pub quadrature_nodes: usize,
    pub initial_law: Vec<f64>,
}

impl MfgSetup {
    pub fn kernel(&self, params: &ModelParams) -> Result<Kernel> {
        Kernel::new(self.states, self.time.dt(), params.trader_sigma, self.quadrature_nodes)
    }

    /// Index of the atom closest to zero, lowest index on ties.
    fn idle_atom(&self) -> usize {
        let mut best = 0;
        for (j, a) in self.controls.iter().enumerate() {
            if a.abs() < self.controls[best].abs() {
                best = j;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

impl PicardOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid("damping", format!("must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol", format!("must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "need at least one iteration"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfgSolution {
    pub policy: PolicyGrid,
    pub flows: FlowOfMeasures,
    pub env: EnvPath,
    pub residual_history: Vec<f64>,
    /// `d(M(flows), flows)` recomputed after the iteration stopped.
    pub certificate: f64,
}

/// One application of the consistency map: environment from the flows, best
/// response, induced flows.
pub fn mfg_map(
    params: &ModelParams,
    setup: &MfgSetup,
    kernel: &Kernel,
    lp_control: &[f64],
    flows: &FlowOfMeasures,
) -> Result<(EnvPath, PolicyGrid, FlowOfMeasures)> {
    let env = EnvPath::from_mean_controls(params, &setup.time, &flows.mean_controls(), lp_control)?;
    let policy = best_response(params, &setup.time, kernel, &setup.controls, &env)?;
    let next = induced_flows(&policy, &setup.initial_law, kernel)?;
    Ok((env, policy, next))
}

/// `d(M(flows), flows)` evaluated from scratch.
pub fn fixed_point_residual(
    params: &ModelParams,
    setup: &MfgSetup,
    lp_control: &[f64],
    flows: &FlowOfMeasures,
) -> Result<f64> {
    let kernel = setup.kernel(params)?;
    let (_, _, image) = mfg_map(params, setup, &kernel, lp_control, flows)?;
    Ok(image.distance(flows))
}

/// Damped Picard iteration started from the flows of the idle policy.
pub fn solve_mfg(
    params: &ModelParams,
    setup: &MfgSetup,
    lp_control: &[f64],
    opts: &PicardOptions,
) -> Result<MfgSolution> {
    params.validate()?;
    opts.validate()?;
    if lp_control.len() != setup.time.steps {
        return Err(Error::invalid("lp_control", format!("need {} steps", setup.time.steps)));
    }
    let kernel = setup.kernel(params)?;
    let idle = PolicyGrid::constant(setup.time, setup.states, setup.controls.clone(), setup.idle_atom());
    let mut flows = induced_flows(&idle, &setup.initial_law, &kernel)?;
    let mut history = Vec::new();

    for _ in 0..opts.max_iter {
        let (env, policy, image) = mfg_map(params, setup, &kernel, lp_control, &flows)?;
        let residual = image.distance(&flows);
        history.push(residual);
        if residual <= opts.tol {
            let certificate = fixed_point_residual(params, setup, lp_control, &flows)?;
            return Ok(MfgSolution {
                policy,
                flows,
                env,
                residual_history: history,
                certificate,
            });
        }
        flows = image.mix(&flows, opts.damping);
    }
    Err(Error::NotConverged { history })
}
