//! Finite-N validation of a mean-field equilibrium: N explicit traders, the
//! ε-Nash gap of a unilateral deviation, and its trend in N.
//!
//! Trader inventories move on the state grid by the solver's transition
//! kernel, so the N-player game is the finite-population version of the
//! discretized game the equilibrium solves.
//!
//! The deviating trader is a price taker: its best response is computed
//! against the environment realized in a pilot run, and both its payoffs are
//! scored against that same environment.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mfg::{best_response, policy_value, EnvPath, MfgSetup, MfgSolution, PolicyGrid};
use crate::model::ModelParams;
use crate::rng::derive_seed;
use crate::sde::{initial_states, make_noise, simulate_with, SystemTrajectory, TraderPolicy};

/// Run `n` traders on `policy` with the noise of `seed`.
pub fn simulate_n_players(
    params: &ModelParams,
    setup: &MfgSetup,
    n: usize,
    policy: &dyn TraderPolicy,
    lp_control: &[f64],
    seed: u64,
) -> Result<SystemTrajectory> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one trader"));
    }
    let kernel = setup.kernel(params)?;
    let noise = make_noise(seed, &setup.time, n);
    let x0 = initial_states(&setup.initial_law, &setup.states, &noise);
    simulate_with(params, &setup.time, &x0, policy, None, lp_control, &noise, &kernel)
}

/// Per-player realized objectives over `paths` seeded runs. Runs that hit
/// degenerate reserves are dropped and counted.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerObjectives {
    pub objectives: Vec<Vec<f64>>,
    pub dropped: usize,
}

pub fn player_objectives(
    params: &ModelParams,
    setup: &MfgSetup,
    n: usize,
    policy: &dyn TraderPolicy,
    lp_control: &[f64],
    paths: usize,
    seed: u64,
) -> Result<PlayerObjectives> {
    let runs: Vec<Result<SystemTrajectory>> = (0..paths)
        .into_par_iter()
        .map(|r| simulate_n_players(params, setup, n, policy, lp_control, derive_seed(seed, r as u64)))
        .collect();
    let mut out = PlayerObjectives {
        objectives: Vec::new(),
        dropped: 0,
    };
    for run in runs {
        match run {
            Ok(t) => out.objectives.push(t.trader_objective),
            Err(Error::DegenerateReserves { .. }) => out.dropped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// ε-Nash gap estimate at one population size.
#[derive(Debug, Clone, PartialEq)]
pub struct GapEstimate {
    pub n: usize,
    pub gap: f64,
    pub stderr: f64,
    /// Replications that entered the estimate.
    pub paths: usize,
    pub dropped: usize,
    /// Paired per-replication gaps.
    pub samples: Vec<f64>,
}

/// How a replication scores the deviator against the equilibrium policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GapMethod {
    /// Expected payoffs given the pilot environment and the deviator's
    /// initial node, computed exactly on the grid chain.
    #[default]
    Conditional,
    /// Realized payoffs of one rerun on the pilot's noise with player 0
    /// deviating, so the deviation also moves the price.
    Realized,
}

/// One paired replication: pilot run on the equilibrium policy, best
/// response of player 0 to the realized environment, and the payoff
/// difference.
fn replication(
    params: &ModelParams,
    setup: &MfgSetup,
    eq: &MfgSolution,
    n: usize,
    seed: u64,
    method: GapMethod,
) -> Result<f64> {
    let kernel = setup.kernel(params)?;
    let lp = &eq.env.lp_control;
    let noise = make_noise(seed, &setup.time, n);
    let x0 = initial_states(&setup.initial_law, &setup.states, &noise);
    let pilot = simulate_with(params, &setup.time, &x0, &eq.policy, None, lp, &noise, &kernel)?;
    let env = EnvPath::from_trajectory(&pilot);
    let br = best_response(params, &setup.time, &kernel, &setup.controls, &env)?;
    match method {
        GapMethod::Conditional => {
            let i = setup.states.nearest(x0[0]);
            let baseline = policy_value(params, &kernel, &eq.policy, &env)?;
            Ok(br.value[0][i] - baseline[0][i])
        }
        GapMethod::Realized => {
            let deviation = simulate_with(params, &setup.time, &x0, &eq.policy, Some(&br), lp, &noise, &kernel)?;
            Ok(deviation.trader_objective[0] - pilot.trader_objective[0])
        }
    }
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let m = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / m;
    if samples.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Gap of a unilateral deviation by player 0 against `n - 1` equilibrium
/// players, averaged over `paths` replications with common random numbers.
pub fn epsilon_nash_gap(
    params: &ModelParams,
    setup: &MfgSetup,
    eq: &MfgSolution,
    n: usize,
    paths: usize,
    seed: u64,
    method: GapMethod,
) -> Result<GapEstimate> {
    if n == 0 || paths == 0 {
        return Err(Error::invalid("n", "need at least one trader and one path"));
    }
    let runs: Vec<Result<f64>> = (0..paths)
        .into_par_iter()
        .map(|r| replication(params, setup, eq, n, derive_seed(seed, r as u64), method))
        .collect();
    let mut samples = Vec::with_capacity(paths);
    let mut dropped = 0;
    for run in runs {
        match run {
            Ok(g) => samples.push(g),
            Err(Error::DegenerateReserves { .. }) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    let (gap, stderr) = mean_and_stderr(&samples);
    Ok(GapEstimate {
        n,
        gap,
        stderr,
        paths: samples.len(),
        dropped,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashReport {
    pub n_values: Vec<usize>,
    pub gap_estimates: Vec<GapEstimate>,
    pub paths_per_estimate: usize,
    pub seed: u64,
    /// Least-squares slope of `ln gap` against `ln N`; NaN when some gap is
    /// not positive.
    pub slope: f64,
}

impl NashReport {
    pub fn within_noise(&self) -> bool {
        self.gap_estimates.iter().all(|g| g.gap >= -3.0 * g.stderr)
    }
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Gap estimates over an ascending list of population sizes. Each size uses
/// its own child seed.
pub fn convergence_study(
    params: &ModelParams,
    setup: &MfgSetup,
    eq: &MfgSolution,
    n_values: &[usize],
    paths: usize,
    seed: u64,
    method: GapMethod,
) -> Result<NashReport> {
    if n_values.is_empty() || n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("n_values", "need a nonempty ascending list"));
    }
    let gap_estimates = n_values
        .iter()
        .map(|&n| epsilon_nash_gap(params, setup, eq, n, paths, derive_seed(seed, n as u64), method))
        .collect::<Result<Vec<_>>>()?;
    let slope = if gap_estimates.len() >= 2 && gap_estimates.iter().all(|g| g.gap > 0.0) {
        let lx: Vec<f64> = n_values.iter().map(|&n| (n as f64).ln()).collect();
        let ly: Vec<f64> = gap_estimates.iter().map(|g| g.gap.ln()).collect();
        ls_slope(&lx, &ly)
    } else {
        f64::NAN
    };
    Ok(NashReport {
        n_values: n_values.to_vec(),
        gap_estimates,
        paths_per_estimate: paths,
        seed,
        slope,
    })
}

/// The equilibrium policy answered to its own mean-field environment.
pub fn mean_field_best_response(params: &ModelParams, setup: &MfgSetup, eq: &MfgSolution) -> Result<PolicyGrid> {
    best_response(params, &setup.time, &setup.kernel(params)?, &setup.controls, &eq.env)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_power_law() {
        let x: Vec<f64> = [8.0f64, 16.0, 32.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [8.0f64, 16.0, 32.0].iter().map(|v| (3.0 / v).ln()).collect();
        assert!((ls_slope(&x, &y) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn stderr_of_constant_samples_is_zero() {
        assert_eq!(mean_and_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }
}
