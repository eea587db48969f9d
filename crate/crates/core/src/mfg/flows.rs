//! Flows of state and control laws induced by a feedback policy.

use crate::agents::ControlLaw;
use crate::error::{Error, Result};
use crate::measure::{mean, wasserstein1};
use crate::mfg::dp::{Kernel, PolicyGrid};
use crate::model::StateGrid;

/// Time-indexed laws: `q[n]` over the control atoms for `n < steps`, `mu[n]`
/// over the state grid for `n <= steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowOfMeasures {
    pub controls: Vec<f64>,
    pub states: StateGrid,
    pub q: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
}

impl FlowOfMeasures {
    pub fn mean_controls(&self) -> Vec<f64> {
        self.q.iter().map(|w| mean(&self.controls, w)).collect()
    }

    pub fn mean_states(&self) -> Vec<f64> {
        let nodes = self.states.nodes();
        self.mu.iter().map(|w| mean(&nodes, w)).collect()
    }

    pub fn control_law(&self, n: usize) -> Result<ControlLaw> {
        let bounds = (self.controls[0], self.controls[self.controls.len() - 1]);
        ControlLaw::new(self.controls.iter().copied().zip(self.q[n].iter().copied()).collect(), bounds)
    }

    /// `λ self + (1 - λ) other`, slice by slice.
    pub fn mix(&self, other: &Self, lambda: f64) -> Self {
        let blend = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.iter().zip(y).map(|(u, v)| lambda * u + (1.0 - lambda) * v).collect())
                .collect()
        };
        Self {
            controls: self.controls.clone(),
            states: self.states,
            q: blend(&self.q, &other.q),
            mu: blend(&self.mu, &other.mu),
        }
    }

    /// `max_t (W1(q_t, q'_t) + W1(μ_t, μ'_t))`, with `q` absent at the
    /// terminal time.
    pub fn distance(&self, other: &Self) -> f64 {
        let nodes = self.states.nodes();
        (0..self.mu.len())
            .map(|n| {
                let dq = self
                    .q
                    .get(n)
                    .zip(other.q.get(n))
                    .map_or(0.0, |(a, b)| wasserstein1(&self.controls, a, b));
                dq + wasserstein1(&nodes, &self.mu[n], &other.mu[n])
            })
            .fold(0.0, f64::max)
    }
}

/// Push the initial law forward through the policy and the transition kernel.
pub fn induced_flows(policy: &PolicyGrid, initial_law: &[f64], kernel: &Kernel) -> Result<FlowOfMeasures> {
    let states = policy.states;
    if initial_law.len() != states.points {
        return Err(Error::invalid("initial_law", format!("need {} weights", states.points)));
    }
    let total: f64 = initial_law.iter().sum();
    if (total - 1.0).abs() > 1e-12 || initial_law.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::invalid("initial_law", format!("not a probability vector (mass {total})")));
    }
    let steps = policy.time.steps;
    let nodes = states.nodes();
    let mut mu = Vec::with_capacity(steps + 1);
    let mut q = Vec::with_capacity(steps);
    mu.push(initial_law.to_vec());
    for n in 0..steps {
        let cur = &mu[n];
        let mut qn = vec![0.0; policy.controls.len()];
        let mut next = vec![0.0; states.points];
        for (i, &m) in cur.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let j = policy.policy[n][i];
            let a = policy.controls[j];
            qn[j] += m;
            // negligible tail mass is clamped like the noise, not reported
            if !kernel.admissible(nodes[i], a) && m > 1e-12 {
                return Err(Error::GridOverflow {
                    step: n,
                    mass: m,
                    lower: states.lower,
                    upper: states.upper,
                });
            }
            kernel.for_each_target(nodes[i], a, |k, w| next[k] += m * w);
        }
        let before: f64 = cur.iter().sum();
        let after: f64 = next.iter().sum();
        if (after - before).abs() > 1e-12 {
            return Err(Error::GridOverflow {
                step: n,
                mass: (after - before).abs(),
                lower: states.lower,
                upper: states.upper,
            });
        }
        q.push(qn);
        mu.push(next);
    }
    Ok(FlowOfMeasures {
        controls: policy.controls.clone(),
        states,
        q,
        mu,
    })
}
