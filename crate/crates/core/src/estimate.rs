//! Monte Carlo estimation of the discounted cost
//!
//! ```text
//! J(x; u) = E[ int_0^inf e^{-beta s} L(X_s, u_s) ds + int_0^inf e^{-beta s} h(X_s) dl_s ]
//! ```
//!
//! truncated at a finite horizon with a deterministic bound on the neglected
//! tail. The running cost is frozen over each step and integrated against the
//! exact discount weight `e^{-beta t_k} (1 - e^{-beta dt}) / beta`; boundary
//! cost is charged at the projected state when the local time moves.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ControlProblem, CostBounds};
use crate::report::Record;
use crate::simulate::{check_start, drive_path, path_seed, Policy, TimeGrid};
use crate::stats::{mean_and_std_error, percentile};

/// Pilot run used to estimate the local-time growth constant `C` in
/// `E[l(t)] <= C (1 + t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotConfig {
    pub n_paths: usize,
    pub horizon: f64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self { n_paths: 256, horizon: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Known local-time constant; estimated by a pilot run when `None`.
    pub local_time_constant: Option<f64>,
    pub pilot: PilotConfig,
}

impl McConfig {
    pub fn new(horizon: f64, dt: f64, n_paths: usize, seed: u64) -> Self {
        Self { horizon, dt, n_paths, seed, local_time_constant: None, pilot: PilotConfig::default() }
    }

    pub fn with_local_time_constant(mut self, c: f64) -> Self {
        self.local_time_constant = Some(c);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub horizon: f64,
    pub dt: f64,
    pub tail_bound: f64,
    pub local_time_constant: f64,
    pub seed: u64,
}

impl McEstimate {
    pub fn summary(&self) -> Record {
        Record::new("estimate")
            .num("mean", self.mean)
            .num("std_error", self.std_error)
            .text("n_paths", self.n_paths)
            .num("horizon", self.horizon)
            .num("dt", self.dt)
            .num("tail_bound", self.tail_bound)
            .num("local_time_constant", self.local_time_constant)
            .text("seed", self.seed)
    }
}

/// Bound on the part of the cost beyond `horizon`:
/// `C_L e^{-beta T} / beta + C_h C beta int_T^inf e^{-beta s} (1 + s) ds`.
pub fn tail_bound(bounds: CostBounds, discount: f64, local_time_constant: f64, horizon: f64) -> f64 {
    let decay = (-discount * horizon).exp();
    let running = bounds.running * decay / discount;
    // beta * int_T^inf e^{-beta s}(1+s) ds = e^{-beta T} (1 + T + 1/beta)
    let boundary = bounds.boundary * local_time_constant * decay * (1.0 + horizon + 1.0 / discount);
    running + boundary
}

/// Smallest horizon whose tail bound is at most `epsilon`, by bisection.
pub fn truncation_horizon(problem: &ControlProblem, epsilon: f64, local_time_constant: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon > 0 required, got {epsilon}")));
    }
    if !(local_time_constant >= 0.0 && local_time_constant.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "local-time constant must be finite and non-negative, got {local_time_constant}"
        )));
    }
    let bounds = problem.cost_bounds();
    let beta = problem.discount();
    let tail = |t: f64| tail_bound(bounds, beta, local_time_constant, t);
    if tail(0.0) <= epsilon {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while tail(hi) > epsilon {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Estimates `C` with `E[l(t)] <= C (1 + t)`: the sample mean of `l(t)/(1+t)`
/// is taken at unit checkpoints of a pilot batch and the 95th percentile of
/// these means is returned.
pub fn estimate_local_time_constant(
    problem: &ControlProblem,
    policy: &Policy,
    x0: &[f64],
    dt: f64,
    pilot: &PilotConfig,
    seed: u64,
) -> Result<f64> {
    check_start(problem, x0)?;
    if pilot.n_paths == 0 {
        return Err(Error::InvalidInput("pilot n_paths >= 1 required".into()));
    }
    let grid = TimeGrid::new(pilot.horizon, dt)?;
    let checkpoints: Vec<usize> = {
        let mut v: Vec<usize> = (1..)
            .map(|j| (j as f64 / dt).round() as usize)
            .take_while(|&k| k < grid.n_steps)
            .collect();
        v.push(grid.n_steps);
        v
    };
    let per_path: Vec<Vec<f64>> = (0..pilot.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut l = 0.0;
            let mut at = Vec::with_capacity(checkpoints.len());
            let mut next = 0;
            drive_path(problem, policy, x0, &grid, path_seed(seed, i), |ev| {
                l += ev.dl;
                if next < checkpoints.len() && ev.k + 1 == checkpoints[next] {
                    at.push(l);
                    next += 1;
                }
            });
            at
        })
        .collect();
    let ratios: Vec<f64> = checkpoints
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let t = grid.time(k);
            let mean = per_path.iter().map(|p| p[j]).sum::<f64>() / pilot.n_paths as f64;
            mean / (1.0 + t)
        })
        .collect();
    Ok(percentile(&ratios, 0.95))
}

/// Value charged at the horizon, discounted by `e^{-beta T}`.
pub type TerminalValue<'a> = dyn Fn(&[f64]) -> f64 + Sync + 'a;

/// Discounted cost of a single path over `grid`, plus `e^{-beta T} terminal(X_T)`.
fn path_cost(
    problem: &ControlProblem,
    policy: &Policy,
    x0: &[f64],
    grid: &TimeGrid,
    seed: u64,
    terminal: Option<&TerminalValue<'_>>,
) -> f64 {
    let beta = problem.discount();
    let mut running = 0.0;
    let mut boundary = 0.0;
    let last = drive_path(problem, policy, x0, grid, seed, |ev| {
        let disc = (-beta * ev.t).exp();
        running += disc * (-(-beta * ev.dt).exp_m1()) / beta * problem.running_cost(ev.x_before, ev.u);
        if ev.dl > 0.0 {
            boundary += (-beta * (ev.t + ev.dt)).exp() * problem.boundary_cost(ev.x_after) * ev.dl;
        }
    });
    let tail = terminal.map_or(0.0, |v| (-beta * grid.horizon).exp() * v(&last));
    running + boundary + tail
}

/// Per-path discounted costs on `[0, horizon]` with path `i` seeded by
/// `path_seed(seed, i)`; the order of the output follows the path index.
#[allow(clippy::too_many_arguments)]
pub fn sample_path_costs(
    problem: &ControlProblem,
    policy: &Policy,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    terminal: Option<&TerminalValue<'_>>,
) -> Result<Vec<f64>> {
    check_start(problem, x0)?;
    if n_paths == 0 {
        return Err(Error::InvalidInput("n_paths >= 1 required".into()));
    }
    let grid = TimeGrid::new(horizon, dt)?;
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|i| path_cost(problem, policy, x0, &grid, path_seed(seed, i), terminal))
        .collect())
}

fn pilot_seed(seed: u64) -> u64 {
    seed ^ 0x5DEE_CE66_D1CE_B00C
}

pub fn estimate_cost(problem: &ControlProblem, policy: &Policy, x0: &[f64], cfg: &McConfig) -> Result<McEstimate> {
    let costs = sample_path_costs(problem, policy, x0, cfg.horizon, cfg.dt, cfg.n_paths, cfg.seed, None)?;
    let c = match cfg.local_time_constant {
        Some(c) => c,
        None => estimate_local_time_constant(problem, policy, x0, cfg.dt, &cfg.pilot, pilot_seed(cfg.seed))?,
    };
    let (mean, std_error) = mean_and_std_error(&costs);
    Ok(McEstimate {
        mean,
        std_error,
        n_paths: cfg.n_paths,
        horizon: cfg.horizon,
        dt: cfg.dt,
        tail_bound: tail_bound(problem.cost_bounds(), problem.discount(), c, cfg.horizon),
        local_time_constant: c,
        seed: cfg.seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueEstimate {
    pub best_value: f64,
    pub best_index: usize,
    pub estimates: Vec<McEstimate>,
}

/// Minimum of the estimated costs over a finite policy family, all run on
/// common random numbers. Up to statistical error this is an upper bound on
/// the value function at `x0`.
pub fn estimate_value(problem: &ControlProblem, x0: &[f64], family: &[Policy], cfg: &McConfig) -> Result<ValueEstimate> {
    if family.is_empty() {
        return Err(Error::InvalidInput("policy family must not be empty".into()));
    }
    let estimates = family
        .iter()
        .map(|p| estimate_cost(problem, p, x0, cfg))
        .collect::<Result<Vec<_>>>()?;
    let (best_index, best) = estimates
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
        .expect("non-empty");
    Ok(ValueEstimate { best_value: best.mean, best_index, estimates })
}
