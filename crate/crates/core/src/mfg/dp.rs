//! Backward dynamic programming on the inventory grid.

use rayon::prelude::*;

use crate::agents::terminal_cost;
use crate::error::{Error, Result};
use crate::mfg::env::EnvPath;
use crate::model::{ModelParams, StateGrid, TimeGrid};
use crate::quadrature::GaussHermite;
use crate::sde::{TraderMotion, TraderPolicy};

/// Controlled transition `x' = x + α dt + σ sqrt(dt) ξ` with `ξ` on
/// Gauss–Hermite nodes and `x'` spread linearly onto the two neighbouring
/// grid nodes. Nodes falling outside the grid are clamped to its edge; a
/// control whose drift alone leaves the grid is inadmissible.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub states: StateGrid,
    pub dt: f64,
    pub sigma: f64,
    pub quadrature: GaussHermite,
}

impl Kernel {
    pub fn new(states: StateGrid, dt: f64, sigma: f64, nodes: usize) -> Result<Self> {
        let quadrature = if sigma == 0.0 {
            GaussHermite::degenerate()
        } else {
            GaussHermite::new(nodes)?
        };
        Ok(Self {
            states,
            dt,
            sigma,
            quadrature,
        })
    }

    pub fn admissible(&self, x: f64, alpha: f64) -> bool {
        self.states.contains(x + alpha * self.dt)
    }

    pub fn for_each_target(&self, x: f64, alpha: f64, mut f: impl FnMut(usize, f64)) {
        let m = x + alpha * self.dt;
        let s = self.sigma * self.dt.sqrt();
        for (xi, w) in self.quadrature.nodes.iter().zip(&self.quadrature.weights) {
            let (i, theta) = self.states.locate(m + s * xi);
            if theta == 0.0 {
                f(i, *w);
            } else {
                f(i, w * (1.0 - theta));
                f(i + 1, w * theta);
            }
        }
    }

    pub fn expect(&self, values: &[f64], x: f64, alpha: f64) -> f64 {
        let mut acc = 0.0;
        self.for_each_target(x, alpha, |i, w| acc += w * values[i]);
        acc
    }

    /// Target node drawn by inverse CDF at `u ∈ [0, 1)`. Targets are visited
    /// in increasing order, so the draw is monotone in `u`.
    pub fn sample(&self, x: f64, alpha: f64, u: f64) -> usize {
        let mut acc = 0.0;
        let mut pick = None;
        let mut last = 0;
        self.for_each_target(x, alpha, |i, w| {
            acc += w;
            last = i;
            if pick.is_none() && u < acc {
                pick = Some(i);
            }
        });
        pick.unwrap_or(last)
    }
}

/// Traders move on the grid by the kernel's transition law, driven by
/// `u = Φ(dW / sqrt(dt))`. This is the chain the dynamic program optimizes.
impl TraderMotion for Kernel {
    fn advance(&self, x: f64, alpha: f64, _sigma: f64, dt: f64, dw: f64) -> f64 {
        let u = if self.sigma == 0.0 { 0.5 } else { 0.5 * libm::erfc(-dw / (dt.sqrt() * std::f64::consts::SQRT_2)) };
        self.states.node(self.sample(x, alpha, u))
    }
}

/// Optimal feedback policy and value on the (time, inventory) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrid {
    pub time: TimeGrid,
    pub states: StateGrid,
    pub controls: Vec<f64>,
    /// Control index per `[step][node]`.
    pub policy: Vec<Vec<usize>>,
    /// Value per `[step][node]`, `steps + 1` slices.
    pub value: Vec<Vec<f64>>,
}

impl PolicyGrid {
    /// Policy that plays the same atom everywhere.
    pub fn constant(time: TimeGrid, states: StateGrid, controls: Vec<f64>, index: usize) -> Self {
        Self {
            policy: vec![vec![index; states.points]; time.steps],
            value: vec![vec![0.0; states.points]; time.steps + 1],
            time,
            states,
            controls,
        }
    }

    pub fn control_at(&self, step: usize, node: usize) -> f64 {
        self.controls[self.policy[step][node]]
    }
}

impl TraderPolicy for PolicyGrid {
    /// Control interpolated linearly between the two neighbouring nodes,
    /// the off-grid reading consistent with the mass splitting of [`Kernel`].
    /// Steps past the horizon reuse the last slice.
    fn control(&self, step: usize, x: f64) -> f64 {
        let n = step.min(self.time.steps - 1);
        let (i, theta) = self.states.locate(x);
        if theta == 0.0 {
            self.control_at(n, i)
        } else {
            (1.0 - theta) * self.control_at(n, i) + theta * self.control_at(n, i + 1)
        }
    }
}

/// Maximize `∑ dt reward(n, x, α) + terminal(x_T)` by backward induction.
/// Ties go to the lowest control index.
pub fn solve_dp(
    time: &TimeGrid,
    kernel: &Kernel,
    controls: &[f64],
    terminal: impl Fn(f64) -> f64,
    reward: impl Fn(usize, f64, f64) -> f64 + Sync,
) -> Result<PolicyGrid> {
    if controls.is_empty() {
        return Err(Error::invalid("controls", "need at least one control atom"));
    }
    let states = kernel.states;
    let nodes = states.nodes();
    let steps = time.steps;
    let dt = time.dt();
    let mut value = vec![Vec::new(); steps + 1];
    let mut policy = vec![Vec::new(); steps];
    value[steps] = nodes.iter().map(|&x| terminal(x)).collect();

    for n in (0..steps).rev() {
        let next = &value[n + 1];
        let slice: Vec<Option<(usize, f64)>> = nodes
            .par_iter()
            .map(|&x| {
                let mut best: Option<(usize, f64)> = None;
                for (j, &a) in controls.iter().enumerate() {
                    if !kernel.admissible(x, a) {
                        continue;
                    }
                    let v = dt * reward(n, x, a) + kernel.expect(next, x, a);
                    if best.is_none_or(|(_, b)| v > b) {
                        best = Some((j, v));
                    }
                }
                best
            })
            .collect();
        let mut pol = Vec::with_capacity(states.points);
        let mut val = Vec::with_capacity(states.points);
        for entry in slice {
            let (j, v) = entry.ok_or(Error::GridOverflow {
                step: n,
                mass: 1.0,
                lower: states.lower,
                upper: states.upper,
            })?;
            pol.push(j);
            val.push(v);
        }
        policy[n] = pol;
        value[n] = val;
    }
    Ok(PolicyGrid {
        time: *time,
        states,
        controls: controls.to_vec(),
        policy,
        value,
    })
}

/// Value of a fixed policy by backward recursion with the same reward,
/// terminal value and kernel as [`solve_dp`].
pub fn evaluate_policy(
    policy: &PolicyGrid,
    kernel: &Kernel,
    terminal: impl Fn(f64) -> f64,
    reward: impl Fn(usize, f64, f64) -> f64 + Sync,
) -> Vec<Vec<f64>> {
    let nodes = policy.states.nodes();
    let steps = policy.time.steps;
    let dt = policy.time.dt();
    let mut value = vec![Vec::new(); steps + 1];
    value[steps] = nodes.iter().map(|&x| terminal(x)).collect();
    for n in (0..steps).rev() {
        let next = &value[n + 1];
        value[n] = nodes
            .par_iter()
            .enumerate()
            .map(|(i, &x)| {
                let a = policy.control_at(n, i);
                dt * reward(n, x, a) + kernel.expect(next, x, a)
            })
            .collect();
    }
    value
}

/// Largest one-step Bellman violation of the tables: the gain of any
/// admissible atom over the stored value, and the mismatch between the stored
/// value and the stored policy's lookahead. Infinite when the terminal slice
/// is not the terminal value exactly.
pub fn bellman_residual(
    grid: &PolicyGrid,
    kernel: &Kernel,
    terminal: impl Fn(f64) -> f64,
    reward: impl Fn(usize, f64, f64) -> f64 + Sync,
) -> f64 {
    let nodes = grid.states.nodes();
    let steps = grid.time.steps;
    let dt = grid.time.dt();
    if nodes.iter().zip(&grid.value[steps]).any(|(&x, &v)| v != terminal(x)) {
        return f64::INFINITY;
    }
    (0..steps)
        .into_par_iter()
        .map(|n| {
            let next = &grid.value[n + 1];
            let mut worst = 0.0f64;
            for (i, &x) in nodes.iter().enumerate() {
                let lookahead = |a: f64| dt * reward(n, x, a) + kernel.expect(next, x, a);
                let v = grid.value[n][i];
                worst = worst.max((lookahead(grid.control_at(n, i)) - v).abs());
                for &a in &grid.controls {
                    if kernel.admissible(x, a) {
                        worst = worst.max(lookahead(a) - v);
                    }
                }
            }
            worst
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// Trader best response to a frozen environment.
pub fn best_response(params: &ModelParams, time: &TimeGrid, kernel: &Kernel, controls: &[f64], env: &EnvPath) -> Result<PolicyGrid> {
    if env.steps() != time.steps {
        return Err(Error::invalid("env", format!("{} steps for a {}-step grid", env.steps(), time.steps)));
    }
    let c = params.trader_terminal_weight;
    solve_dp(
        time,
        kernel,
        controls,
        |x| -terminal_cost(x, c),
        |n, x, a| env.trader_reward(params, n, x, a),
    )
}

/// Value tables of `policy` against a frozen environment.
pub fn policy_value(params: &ModelParams, kernel: &Kernel, policy: &PolicyGrid, env: &EnvPath) -> Result<Vec<Vec<f64>>> {
    if env.steps() != policy.time.steps {
        return Err(Error::invalid("env", format!("{} steps for a {}-step grid", env.steps(), policy.time.steps)));
    }
    let c = params.trader_terminal_weight;
    Ok(evaluate_policy(
        policy,
        kernel,
        |x| -terminal_cost(x, c),
        |n, x, a| env.trader_reward(params, n, x, a),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::uniform_atoms;

    fn setup(sigma: f64) -> (TimeGrid, Kernel, Vec<f64>) {
        let time = TimeGrid::new(1.0, 10).unwrap();
        let states = StateGrid::new(-3.0, 3.0, 61).unwrap();
        let kernel = Kernel::new(states, time.dt(), sigma, 5).unwrap();
        (time, kernel, uniform_atoms(-1.0, 1.0, 5).unwrap())
    }

    #[test]
    fn zero_problem_has_zero_value() {
        let (time, kernel, controls) = setup(0.1);
        let g = solve_dp(&time, &kernel, &controls, |_| 0.0, |_, _, _| 0.0).unwrap();
        assert!(g.value.iter().flatten().all(|&v| v == 0.0));
        // all ties resolve to the first admissible atom
        assert_eq!(g.policy[3][30], 0);
    }

    #[test]
    fn linear_reward_picks_the_largest_atom() {
        let (time, kernel, controls) = setup(0.0);
        let g = solve_dp(&time, &kernel, &controls, |_| 0.0, |_, _, a| a).unwrap();
        for n in 0..time.steps {
            let room = (time.steps - n) as f64 * time.dt();
            for i in 0..kernel.states.points {
                if kernel.states.node(i) + room <= kernel.states.upper {
                    assert_eq!(g.control_at(n, i), 1.0);
                }
            }
        }
    }

    #[test]
    fn bellman_residual_vanishes() {
        let (time, kernel, controls) = setup(0.2);
        let reward = |n: usize, x: f64, a: f64| (n as f64 * 0.1 - x) * a - 0.3 * a * a;
        let term = |x: f64| -x * x;
        let g = solve_dp(&time, &kernel, &controls, term, reward).unwrap();
        assert!(bellman_residual(&g, &kernel, term, reward) <= 1e-10);
        let mut broken = g.clone();
        broken.value[4][30] += 1e-3;
        assert!(bellman_residual(&broken, &kernel, term, reward) > 1e-4);
    }

    #[test]
    fn sampling_follows_the_transition_law() {
        let (_, kernel, _) = setup(0.3);
        let mut freq = vec![0.0; kernel.states.points];
        let m = 20000;
        for k in 0..m {
            let u = (k as f64 + 0.5) / m as f64;
            freq[kernel.sample(0.05, 0.5, u)] += 1.0 / m as f64;
        }
        let mut law = vec![0.0; kernel.states.points];
        kernel.for_each_target(0.05, 0.5, |i, w| law[i] += w);
        for (a, b) in freq.iter().zip(&law) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn optimal_policy_evaluates_to_its_value() {
        let (time, kernel, controls) = setup(0.2);
        let reward = |n: usize, x: f64, a: f64| (n as f64 * 0.1 - x) * a - 0.3 * a * a;
        let term = |x: f64| -x * x;
        let g = solve_dp(&time, &kernel, &controls, term, reward).unwrap();
        assert_eq!(evaluate_policy(&g, &kernel, term, reward), g.value);
        let idle = PolicyGrid::constant(time, kernel.states, controls, 2);
        let v = evaluate_policy(&idle, &kernel, term, reward);
        assert!(v[0].iter().zip(&g.value[0]).all(|(a, b)| a <= b));
    }

    #[test]
    fn kernel_conserves_probability() {
        let (_, kernel, _) = setup(0.3);
        let mut total = 0.0;
        kernel.for_each_target(2.95, 1.0, |_, w| total += w);
        assert!((total - 1.0).abs() < 1e-14);
        assert!(!kernel.admissible(3.0, 1.0));
    }
}
