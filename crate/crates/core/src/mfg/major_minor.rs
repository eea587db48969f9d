//! The LP's problem: choose a piecewise-constant control, with the traders
//! re-equilibrating for every candidate.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::agents::{lp_running_reward, MeanFieldAggregates};
use crate::error::{Error, Result};
use crate::mfg::picard::{solve_mfg, MfgSetup, MfgSolution, PicardOptions};
use crate::model::{piecewise_constant_path, ModelParams};

/// LP cost `-∑ f^LP dt + c (X_T² + Z_T²)` along the deterministic flow of a
/// solved mean-field equilibrium. Lower is better.
pub fn lp_objective(params: &ModelParams, lp_control: &[f64], solution: &MfgSolution) -> Result<f64> {
    let env = &solution.env;
    if env.lp_control != lp_control {
        return Err(Error::invalid("lp_control", "equilibrium was solved for a different LP control"));
    }
    let dt = solution.policy.time.dt();
    let phi = params.phi();
    let k0 = params.k0();
    let mut x = params.lp_initial.x_inventory;
    let mut z = params.lp_initial.pool_share_value;
    let mut reward = 0.0;
    for (n, &alpha) in lp_control.iter().enumerate() {
        let at = |e: Error| e.at_step(n);
        let agg = MeanFieldAggregates::new(env.x_adj[n], env.h[n], env.mean_control[n], env.lvr_rate[n], phi).map_err(at)?;
        reward += dt * lp_running_reward(x, alpha, &agg, env.x_adj[n], phi, k0, params.convention).map_err(at)?;
        x += alpha * dt;
        z -= 2.0 * alpha * env.price[n] * dt;
    }
    Ok(-reward + params.lp_terminal_weight * (x * x + z * z))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub evaluation: usize,
    pub point: Vec<f64>,
    /// `+inf` for a failed evaluation.
    pub objective: f64,
    pub best_so_far: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchOutcome {
    StepTolerance,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Step of the last complete poll around `best`.
    pub final_step: f64,
    pub outcome: SearchOutcome,
    pub trace: Vec<TraceEntry>,
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// The `2K` coordinate neighbours at distance `step`, clamped to the bounds.
pub fn pattern_neighbors(x: &[f64], step: f64, bounds: (f64, f64)) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * x.len());
    for k in 0..x.len() {
        for sign in [1.0, -1.0] {
            let mut y = x.to_vec();
            y[k] = (x[k] + sign * step).clamp(bounds.0, bounds.1);
            out.push(y);
        }
    }
    out
}

/// Coordinate pattern search minimizing `f` over the box `bounds^K`: poll
/// all `2K` neighbours, move to the best strict improvement, otherwise halve
/// the step. Stops when the next step would fall below `step_tol` or the
/// evaluation budget runs out. Evaluations are memoized.
pub fn pattern_search(
    x0: &[f64],
    bounds: (f64, f64),
    initial_step: f64,
    step_tol: f64,
    budget: usize,
    f: impl Fn(&[f64]) -> f64 + Sync,
) -> SearchResult {
    let mut memo: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut trace = Vec::new();
    let mut best = x0.iter().map(|v| v.clamp(bounds.0, bounds.1)).collect::<Vec<_>>();
    let v0 = f(&best);
    memo.insert(key(&best), v0);
    let mut best_value = v0;
    trace.push(TraceEntry {
        evaluation: 0,
        point: best.clone(),
        objective: v0,
        best_so_far: v0,
        step: initial_step,
    });
    let mut step = initial_step;

    loop {
        let neighbors = pattern_neighbors(&best, step, bounds);
        let mut fresh: Vec<Vec<f64>> = Vec::new();
        for y in &neighbors {
            if !memo.contains_key(&key(y)) && !fresh.iter().any(|z| key(z) == key(y)) {
                fresh.push(y.clone());
            }
        }
        let room = budget.saturating_sub(trace.len());
        let complete = fresh.len() <= room;
        fresh.truncate(room);
        let values: Vec<f64> = fresh.par_iter().map(|y| f(y)).collect();
        for (y, v) in fresh.into_iter().zip(values) {
            memo.insert(key(&y), v);
            let running = trace.last().map_or(v, |t: &TraceEntry| t.best_so_far.min(v));
            trace.push(TraceEntry {
                evaluation: trace.len(),
                point: y,
                objective: v,
                best_so_far: running,
                step,
            });
        }
        if !complete {
            return SearchResult {
                best,
                best_value,
                final_step: step,
                outcome: SearchOutcome::BudgetExhausted,
                trace,
            };
        }

        let mut improved: Option<(Vec<f64>, f64)> = None;
        for y in &neighbors {
            let v = memo[&key(y)];
            if v < improved.as_ref().map_or(best_value, |(_, b)| *b) {
                improved = Some((y.clone(), v));
            }
        }
        match improved {
            Some((y, v)) => {
                best = y;
                best_value = v;
            }
            None if step / 2.0 < step_tol => {
                return SearchResult {
                    best,
                    best_value,
                    final_step: step,
                    outcome: SearchOutcome::StepTolerance,
                    trace,
                };
            }
            None => step /= 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MajorMinorOptions {
    pub picard: PicardOptions,
    pub segments: usize,
    pub bounds: (f64, f64),
    pub initial_step: f64,
    pub step_tol: f64,
    pub budget: usize,
    /// Starting segment values; zeros when absent.
    pub start: Option<Vec<f64>>,
}

impl Default for MajorMinorOptions {
    fn default() -> Self {
        Self {
            picard: PicardOptions::default(),
            segments: 4,
            bounds: (-1.0, 1.0),
            initial_step: 0.5,
            step_tol: 1e-2,
            budget: 400,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MajorMinorSolution {
    pub lp_values: Vec<f64>,
    pub lp_path: Vec<f64>,
    pub objective: f64,
    pub mfg: MfgSolution,
    pub search: SearchResult,
    /// Neighbours at the final step and their freshly computed objectives.
    pub neighbor_check: Vec<(Vec<f64>, f64)>,
}

impl MajorMinorSolution {
    pub fn is_locally_optimal(&self) -> bool {
        self.neighbor_check.iter().all(|(_, v)| self.objective <= *v)
    }
}

/// Nested solve: for each LP candidate the inner mean-field game is solved to
/// tolerance, and the outer pattern search minimizes the LP cost. Inner
/// failures count as `+inf`.
pub fn solve_major_minor(params: &ModelParams, setup: &MfgSetup, opts: &MajorMinorOptions) -> Result<MajorMinorSolution> {
    if opts.segments == 0 {
        return Err(Error::invalid("segments", "need at least one segment"));
    }
    if !(opts.bounds.0 <= opts.bounds.1) || !(opts.initial_step > 0.0) || !(opts.step_tol > 0.0) {
        return Err(Error::invalid("search", "need ordered bounds and positive steps"));
    }
    opts.picard.validate()?;
    let steps = setup.time.steps;
    let evaluate = |u: &[f64]| -> f64 {
        let path = piecewise_constant_path(u, steps);
        solve_mfg(params, setup, &path, &opts.picard)
            .and_then(|sol| lp_objective(params, &path, &sol))
            .unwrap_or(f64::INFINITY)
    };
    let start = match &opts.start {
        Some(s) if s.len() != opts.segments => {
            return Err(Error::invalid("start", format!("need {} segment values", opts.segments)));
        }
        Some(s) => s.iter().map(|v| v.clamp(opts.bounds.0, opts.bounds.1)).collect(),
        None => vec![0.0f64.clamp(opts.bounds.0, opts.bounds.1); opts.segments],
    };
    let search = pattern_search(&start, opts.bounds, opts.initial_step, opts.step_tol, opts.budget, evaluate);

    let lp_path = piecewise_constant_path(&search.best, steps);
    let mfg = solve_mfg(params, setup, &lp_path, &opts.picard)?;
    let objective = lp_objective(params, &lp_path, &mfg)?;
    let neighbor_check = pattern_neighbors(&search.best, search.final_step, opts.bounds)
        .into_par_iter()
        .map(|y| {
            let v = evaluate(&y);
            (y, v)
        })
        .collect();
    Ok(MajorMinorSolution {
        lp_values: search.best.clone(),
        lp_path,
        objective,
        mfg,
        search,
        neighbor_check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_search_finds_quadratic_minimum() {
        let target = [0.3, -0.55];
        let f = |x: &[f64]| (x[0] - target[0]).powi(2) + 2.0 * (x[1] - target[1]).powi(2);
        let r = pattern_search(&[0.0, 0.0], (-1.0, 1.0), 0.5, 1e-3, 1000, f);
        assert_eq!(r.outcome, SearchOutcome::StepTolerance);
        assert!((r.best[0] - 0.3).abs() < 2e-3 && (r.best[1] + 0.55).abs() < 2e-3);
        for y in pattern_neighbors(&r.best, r.final_step, (-1.0, 1.0)) {
            assert!(r.best_value <= f(&y));
        }
        assert!(r.trace.windows(2).all(|w| w[1].best_so_far <= w[0].best_so_far));
    }

    #[test]
    fn pattern_search_respects_budget_and_bounds() {
        let f = |x: &[f64]| -x[0];
        let r = pattern_search(&[0.0], (-1.0, 1.0), 0.25, 1e-6, 3, f);
        assert_eq!(r.outcome, SearchOutcome::BudgetExhausted);
        assert_eq!(r.trace.len(), 3);
        let r = pattern_search(&[0.0], (-1.0, 1.0), 0.25, 1e-3, 100, f);
        assert_eq!(r.best, vec![1.0]);
    }

    #[test]
    fn failed_evaluations_never_win() {
        let f = |x: &[f64]| if x[0] > 0.0 { f64::INFINITY } else { x[0] * x[0] };
        let r = pattern_search(&[0.0], (-1.0, 1.0), 0.5, 1e-2, 100, f);
        assert_eq!(r.best, vec![0.0]);
        assert!(r.trace.iter().any(|t| t.objective.is_infinite()));
    }
}
