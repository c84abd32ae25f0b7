//! Projected Euler-Maruyama simulation of the reflected controlled SDE.
//!
//! Each step takes a full Euler step and projects the result back onto the
//! domain; the projection distance is the local-time increment. Path `i` of a
//! batch draws its Gaussian increments from a ChaCha stream keyed by a sub-seed
//! that depends only on `(seed, i)`, so batches are reproducible under any
//! rayon schedule.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ControlProblem;

pub type FeedbackFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Markov control: a constant or a state feedback. Outputs are clamped to the
/// problem's control interval when applied.
#[derive(Clone)]
pub enum Policy {
    Constant(f64),
    Feedback(Arc<FeedbackFn>),
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Constant(u) => write!(f, "Constant({u})"),
            Policy::Feedback(_) => f.write_str("Feedback(..)"),
        }
    }
}

impl Policy {
    pub fn constant(u: f64) -> Self {
        Policy::Constant(u)
    }

    pub fn feedback(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Policy::Feedback(Arc::new(f))
    }

    pub fn control(&self, problem: &ControlProblem, x: &[f64]) -> f64 {
        let u = match self {
            Policy::Constant(u) => *u,
            Policy::Feedback(f) => f(x),
        };
        problem.clamp_control(u)
    }
}

/// Uniform time steps of size `dt`, the last one shortened so the final time
/// is exactly the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt > 0 required, got {dt}")));
        }
        if !(horizon.is_finite() && horizon >= dt) {
            return Err(Error::InvalidInput(format!("horizon >= dt required, got horizon={horizon}, dt={dt}")));
        }
        let mut n_steps = (horizon / dt).ceil() as usize;
        // guard against ceil(1000.0000000001) = 1001 from rounding in the division
        if n_steps > 1 && horizon - (n_steps - 1) as f64 * dt <= 1e-9 * dt {
            n_steps -= 1;
        }
        Ok(Self { horizon, dt, n_steps })
    }

    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }

    pub fn step(&self, k: usize) -> f64 {
        self.time(k + 1) - self.time(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub noise_dim: usize,
    /// `n_steps + 1` times from 0 to the horizon.
    pub times: Vec<f64>,
    /// Flattened `(n_steps + 1) x dim` post-projection states.
    pub states: Vec<f64>,
    /// Cumulative local time at each time, starting at 0.
    pub local_time: Vec<f64>,
    /// Control applied on `[t_k, t_{k+1})`; the last entry is the policy's
    /// value at the final state.
    pub controls: Vec<f64>,
    /// Flattened `n_steps x noise_dim` Brownian increments.
    pub noise_increments: Vec<f64>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn noise(&self, k: usize) -> &[f64] {
        &self.noise_increments[k * self.noise_dim..(k + 1) * self.noise_dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.n_steps())
    }

    /// `sup_t l(t)`, which is the final value since local time never decreases.
    pub fn sup_local_time(&self) -> f64 {
        *self.local_time.last().unwrap()
    }

    /// Lists every violated trajectory invariant (empty when all hold).
    pub fn invariant_violations(&self, problem: &ControlProblem, boundary_tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let domain = problem.domain();
        if self.local_time[0] != 0.0 {
            out.push(format!("local time starts at {}", self.local_time[0]));
        }
        for k in 0..=self.n_steps() {
            if !domain.contains(self.state(k)) {
                out.push(format!("state {k} outside the domain: {:?}", self.state(k)));
            }
            let u = self.controls[k];
            if u < problem.control_lo() || u > problem.control_hi() {
                out.push(format!("control {k} = {u} outside the control interval"));
            }
        }
        for k in 0..self.n_steps() {
            if self.times[k + 1] <= self.times[k] {
                out.push(format!("times not increasing at step {k}"));
            }
            let dl = self.local_time[k + 1] - self.local_time[k];
            if dl < 0.0 {
                out.push(format!("local time decreases at step {k}"));
            }
            if dl > 0.0 && domain.boundary_distance(self.state(k + 1)) > boundary_tol {
                out.push(format!("local time grows at step {k} away from the boundary"));
            }
        }
        out
    }
}

/// One projected Euler step from `x` (in the domain). Returns the projected
/// state and the local-time increment.
pub fn euler_reflected_step(problem: &ControlProblem, x: &[f64], u: f64, dw: &[f64], dt: f64) -> (Vec<f64>, f64) {
    let mut scratch = StepScratch::new(problem);
    let mut y = x.to_vec();
    let dl = scratch.step(problem, &mut y, u, dw, dt);
    (y, dl)
}

pub(crate) struct StepScratch {
    drift: Vec<f64>,
    sigma: Vec<f64>,
}

impl StepScratch {
    pub(crate) fn new(problem: &ControlProblem) -> Self {
        Self {
            drift: vec![0.0; problem.dim()],
            sigma: vec![0.0; problem.dim() * problem.noise_dim()],
        }
    }

    pub(crate) fn step(&mut self, problem: &ControlProblem, x: &mut [f64], u: f64, dw: &[f64], dt: f64) -> f64 {
        let m = problem.noise_dim();
        problem.drift_into(x, u, &mut self.drift);
        problem.dispersion_into(x, u, &mut self.sigma);
        for (i, xi) in x.iter_mut().enumerate() {
            let noise: f64 = self.sigma[i * m..(i + 1) * m].iter().zip(dw).map(|(s, w)| s * w).sum();
            *xi += self.drift[i] * dt + noise;
        }
        problem.domain().project_in_place(x)
    }
}

/// What a path driver reports for each step `k`: time `t_k`, step length,
/// state before the step, applied control, increment, state after the step
/// and local-time increment.
pub(crate) struct StepEvent<'a> {
    pub k: usize,
    pub t: f64,
    pub dt: f64,
    pub x_before: &'a [f64],
    pub u: f64,
    pub dw: &'a [f64],
    pub x_after: &'a [f64],
    pub dl: f64,
}

/// Runs one path, calling `on_step` after every step. Returns the final state.
pub(crate) fn drive_path(
    problem: &ControlProblem,
    policy: &Policy,
    x0: &[f64],
    grid: &TimeGrid,
    seed: u64,
    mut on_step: impl FnMut(&StepEvent<'_>),
) -> Vec<f64> {
    let d = problem.dim();
    let m = problem.noise_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = StepScratch::new(problem);
    let mut x = x0.to_vec();
    let mut prev = vec![0.0; d];
    let mut dw = vec![0.0; m];
    for k in 0..grid.n_steps {
        let dt = grid.step(k);
        let sq = dt.sqrt();
        for w in dw.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = z * sq;
        }
        let u = policy.control(problem, &x);
        prev.copy_from_slice(&x);
        let dl = scratch.step(problem, &mut x, u, &dw, dt);
        on_step(&StepEvent { k, t: grid.time(k), dt, x_before: &prev, u, dw: &dw, x_after: &x, dl });
    }
    x
}

pub(crate) fn check_start(problem: &ControlProblem, x0: &[f64]) -> Result<()> {
    if x0.len() != problem.dim() {
        return Err(Error::InvalidInput(format!(
            "initial state has length {} but the domain has dimension {}",
            x0.len(),
            problem.dim()
        )));
    }
    if !problem.domain().contains(x0) {
        return Err(Error::InvalidInput(format!("initial state {x0:?} lies outside the domain")));
    }
    Ok(())
}

pub fn simulate_path(
    problem: &ControlProblem,
    policy: &Policy,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    check_start(problem, x0)?;
    let grid = TimeGrid::new(horizon, dt)?;
    Ok(record_path(problem, policy, x0, &grid, seed))
}

fn record_path(problem: &ControlProblem, policy: &Policy, x0: &[f64], grid: &TimeGrid, seed: u64) -> Trajectory {
    let d = problem.dim();
    let m = problem.noise_dim();
    let n = grid.n_steps;
    let mut tr = Trajectory {
        dim: d,
        noise_dim: m,
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity((n + 1) * d),
        local_time: Vec::with_capacity(n + 1),
        controls: Vec::with_capacity(n + 1),
        noise_increments: Vec::with_capacity(n * m),
    };
    tr.times.push(0.0);
    tr.states.extend_from_slice(x0);
    tr.local_time.push(0.0);
    let mut l = 0.0;
    let last = drive_path(problem, policy, x0, grid, seed, |ev| {
        l += ev.dl;
        tr.times.push(grid.time(ev.k + 1));
        tr.states.extend_from_slice(ev.x_after);
        tr.local_time.push(l);
        tr.controls.push(ev.u);
        tr.noise_increments.extend_from_slice(ev.dw);
    });
    tr.controls.push(policy.control(problem, &last));
    tr
}

/// Sub-seed of path `index` within a batch seeded by `seed` (SplitMix64
/// finaliser over the pair).
pub fn path_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn simulate_batch(
    problem: &ControlProblem,
    policy: &Policy,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if n_paths == 0 {
        return Err(Error::InvalidInput("n_paths >= 1 required".into()));
    }
    check_start(problem, x0)?;
    let grid = TimeGrid::new(horizon, dt)?;
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|i| record_path(problem, policy, x0, &grid, path_seed(seed, i)))
        .collect())
}
