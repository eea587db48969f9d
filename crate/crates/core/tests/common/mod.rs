//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use num::bigint::BigInt;
use num::{BigRational, ToPrimitive};

use amm_mfg::mfg::{Kernel, MfgSetup};
use amm_mfg::model::{ModelParams, StateGrid, TimeGrid};

pub fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

/// `2 sqrt(k p)` in fixed point with `digits` decimal digits, exact up to one
/// unit in the last place.
fn pool_value_fixed(k: &BigRational, p: &BigRational, scale: &BigInt) -> BigInt {
    let arg = k * p * BigRational::from_integer(scale * scale);
    let floor = arg.numer() / arg.denom();
    BigInt::from(2) * floor.sqrt()
}

/// `-(σ² p² / 2) FD2[V](p; h)` with the second difference evaluated in
/// 60-digit fixed point, so the only error left is the truncation error.
pub fn lvr_by_finite_difference(p: f64, sigma: f64, k: f64, h: &BigRational) -> f64 {
    let scale = BigInt::from(10).pow(60u32);
    let (pr, kr) = (rat(p), rat(k));
    let v = |x: &BigRational| pool_value_fixed(&kr, x, &scale);
    let second = v(&(&pr + h)) - BigInt::from(2) * v(&pr) + v(&(&pr - h));
    let fd2 = BigRational::new(second, scale) / (h * h);
    let s = rat(sigma);
    let ell = -(&s * &s * &pr * &pr / BigRational::from_integer(2.into())) * fd2;
    ell.to_f64().unwrap()
}

pub fn decimal(numer: i64, denom: i64) -> BigRational {
    BigRational::new(numer.into(), denom.into())
}

/// Best open-loop value from `start` over every control sequence whose path
/// stays on the grid, for a noise-free kernel whose steps land on nodes,
/// together with every first control that attains it. Sums are accumulated
/// backward in the same order as a backward recursion.
pub fn open_loop_best(
    grid: &StateGrid,
    steps: usize,
    dt: f64,
    controls: &[f64],
    start: usize,
    terminal: &dyn Fn(f64) -> f64,
    reward: &dyn Fn(usize, f64, f64) -> f64,
) -> Option<(f64, Vec<usize>)> {
    let m = controls.len();
    let total = m.pow(steps as u32);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut seq = vec![0usize; steps];
    let mut path = vec![0usize; steps + 1];
    'outer: for code in 0..total {
        let mut c = code;
        for s in seq.iter_mut() {
            *s = c % m;
            c /= m;
        }
        path[0] = start;
        for n in 0..steps {
            let x = grid.node(path[n]) + controls[seq[n]] * dt;
            if !grid.contains(x) {
                continue 'outer;
            }
            path[n + 1] = grid.nearest(x);
        }
        let mut v = terminal(grid.node(path[steps]));
        for n in (0..steps).rev() {
            v += dt * reward(n, grid.node(path[n]), controls[seq[n]]);
        }
        match &mut best {
            Some((b, firsts)) if v == *b => {
                if !firsts.contains(&seq[0]) {
                    firsts.push(seq[0]);
                }
            }
            Some((b, _)) if v < *b => {}
            _ => best = Some((v, vec![seq[0]])),
        }
    }
    best
}

/// The 50-step, 101-node, 11-atom instance.
pub fn default_setup() -> MfgSetup {
    amm_mfg::config::SimConfig::default().mfg_setup().unwrap()
}

pub fn default_params() -> ModelParams {
    amm_mfg::config::SimConfig::default().model_params().unwrap()
}

pub fn kernel(states: StateGrid, time: &TimeGrid, sigma: f64) -> Kernel {
    Kernel::new(states, time.dt(), sigma, 5).unwrap()
}
