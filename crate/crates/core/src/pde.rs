//! Monotone finite-difference solver for the stationary HJB equation on
//! `[-alpha, alpha]` with the Neumann data `<Dv, grad phi> = h`.
//!
//! Drift terms are upwinded (forward difference when `mu >= 0`, backward
//! otherwise) and diffusion uses the central second difference. The boundary
//! nodes carry the HJB equation too, with the outside neighbour replaced by the
//! ghost value `v_inner + 2 dx h` that makes the central difference satisfy the
//! Neumann condition exactly. Every row is then tridiagonal with
//! `diag - sum |offdiag| = beta`.
//!
//! The nonlinear system is solved by Howard's policy iteration.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::DomainSpec;
use crate::hamiltonian::{minimize_control, DerivativeProbe, HamiltonianValue};
use crate::model::ControlProblem;
use crate::simulate::Policy;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    spacing: f64,
    alpha: f64,
}

impl Grid {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Cell index `k` and weight `w` with `x = (1 - w) nodes[k] + w nodes[k+1]`;
    /// `x` is clamped to the grid first.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.nodes.len();
        let s = ((x.clamp(-self.alpha, self.alpha) + self.alpha) / self.spacing).max(0.0);
        let k = (s.floor() as usize).min(n - 2);
        (k, (s - k as f64).clamp(0.0, 1.0))
    }

    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let (k, w) = self.locate(x);
        if w == 0.0 {
            values[k]
        } else if w == 1.0 {
            values[k + 1]
        } else {
            (1.0 - w) * values[k] + w * values[k + 1]
        }
    }
}

pub fn build_grid(domain: &DomainSpec, n_nodes: usize) -> Result<Grid> {
    if domain.dim() != 1 {
        return Err(Error::UnsupportedDimension(domain.dim()));
    }
    if n_nodes < 3 {
        return Err(Error::InvalidInput(format!("n_nodes >= 3 required, got {n_nodes}")));
    }
    let alpha = domain.alpha();
    let spacing = 2.0 * alpha / (n_nodes - 1) as f64;
    let mut nodes: Vec<f64> = (0..n_nodes).map(|k| -alpha + spacing * k as f64).collect();
    nodes[n_nodes - 1] = alpha;
    Ok(Grid { nodes, spacing, alpha })
}

/// Tridiagonal matrix; `lower[i]` multiplies `v[i-1]` and `upper[i]` multiplies
/// `v[i+1]` in row `i` (`lower[0]` and `upper[n-1]` are unused zeros).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.lower[i] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * v[i + 1];
                }
                s
            })
            .collect()
    }

    /// `|diag| - |lower| - |upper|` for row `i`.
    pub fn dominance_margin(&self, i: usize) -> f64 {
        self.diag[i].abs() - self.lower[i].abs() - self.upper[i].abs()
    }

    /// Thomas elimination; stable for diagonally dominant rows.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if rhs.len() != n {
            return Err(Error::InvalidInput("right-hand side length mismatch".into()));
        }
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = self.diag[0];
        if denom == 0.0 {
            return Err(Error::InvalidInput("singular tridiagonal system".into()));
        }
        c[0] = self.upper[0] / denom;
        d[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.lower[i] * c[i - 1];
            if denom == 0.0 {
                return Err(Error::InvalidInput("singular tridiagonal system".into()));
            }
            c[i] = if i + 1 < n { self.upper[i] / denom } else { 0.0 };
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / denom;
        }
        let mut x = d;
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub matrix: Tridiagonal,
    pub rhs: Vec<f64>,
}

impl LinearSystem {
    pub fn solve(&self) -> Result<Vec<f64>> {
        self.matrix.solve(&self.rhs)
    }

    /// `A v - b`.
    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(v).iter().zip(&self.rhs).map(|(a, b)| a - b).collect()
    }
}

/// Three-point stencil at a node, with the ghost value substituted at the ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub x: f64,
    pub minus: f64,
    pub center: f64,
    pub plus: f64,
    pub dx: f64,
}

impl Stencil {
    pub fn forward(&self) -> f64 {
        (self.plus - self.center) / self.dx
    }

    pub fn backward(&self) -> f64 {
        (self.center - self.minus) / self.dx
    }

    pub fn second(&self) -> f64 {
        (self.plus - 2.0 * self.center + self.minus) / (self.dx * self.dx)
    }

    /// Gradient upwinded for drift `mu`.
    pub fn upwind(&self, mu: f64) -> f64 {
        if mu >= 0.0 {
            self.forward()
        } else {
            self.backward()
        }
    }
}

pub fn stencil(problem: &ControlProblem, grid: &Grid, values: &[f64], i: usize) -> Stencil {
    let n = grid.n_nodes();
    let dx = grid.spacing;
    let x = grid.nodes[i];
    let (minus, plus) = if i == 0 {
        (values[1] + 2.0 * dx * problem.boundary_cost(&[x]), values[1])
    } else if i == n - 1 {
        (values[n - 2], values[n - 2] + 2.0 * dx * problem.boundary_cost(&[x]))
    } else {
        (values[i - 1], values[i + 1])
    };
    Stencil { x, minus, center: values[i], plus, dx }
}

/// Discrete generator plus running cost at a stencil for control `u`.
pub fn stencil_objective(problem: &ControlProblem, st: &Stencil, u: f64) -> f64 {
    let (mu, a) = problem.coefficients_1d(st.x, u);
    mu * st.upwind(mu) + 0.5 * a * st.second() + problem.running_cost(&[st.x], u)
}

/// Derivative probe the scheme uses at node `i` under control `u`.
pub fn discrete_probe(problem: &ControlProblem, grid: &Grid, values: &[f64], i: usize, u: f64) -> DerivativeProbe {
    let st = stencil(problem, grid, values, i);
    let (mu, _) = problem.coefficients_1d(st.x, u);
    DerivativeProbe::scalar(st.x, st.center, st.upwind(mu), st.second())
}

/// Minimum over controls of the discrete generator plus running cost at node `i`.
pub fn discrete_hamiltonian(problem: &ControlProblem, grid: &Grid, values: &[f64], i: usize, n_grid: usize) -> HamiltonianValue {
    let st = stencil(problem, grid, values, i);
    minimize_control(problem.control_lo(), problem.control_hi(), n_grid, |u| stencil_objective(problem, &st, u))
}

fn check_1d(problem: &ControlProblem, grid: &Grid) -> Result<()> {
    if problem.dim() != 1 {
        return Err(Error::UnsupportedDimension(problem.dim()));
    }
    if (problem.domain().alpha() - grid.alpha).abs() > 1e-12 * grid.alpha {
        return Err(Error::InvalidInput("grid does not span the problem domain".into()));
    }
    Ok(())
}

/// Linear system `A v = b` of the scheme with the control frozen to `policy`.
pub fn assemble_fixed_policy(problem: &ControlProblem, grid: &Grid, policy: &[f64]) -> Result<LinearSystem> {
    check_1d(problem, grid)?;
    let n = grid.n_nodes();
    if policy.len() != n {
        return Err(Error::InvalidInput(format!("policy has {} entries for {n} nodes", policy.len())));
    }
    let beta = problem.discount();
    let dx = grid.spacing;
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let x = grid.nodes[i];
        let u = problem.clamp_control(policy[i]);
        let (mu, a) = problem.coefficients_1d(x, u);
        let half_a = 0.5 * a / (dx * dx);
        let to_plus = -(mu.max(0.0) / dx + half_a);
        let to_minus = -((-mu).max(0.0) / dx + half_a);
        diag[i] = beta - to_plus - to_minus;
        rhs[i] = problem.running_cost(&[x], u);
        if i == 0 {
            let ghost_shift = 2.0 * dx * problem.boundary_cost(&[x]);
            upper[i] = to_plus + to_minus;
            rhs[i] -= to_minus * ghost_shift;
        } else if i == n - 1 {
            let ghost_shift = 2.0 * dx * problem.boundary_cost(&[x]);
            lower[i] = to_plus + to_minus;
            rhs[i] -= to_plus * ghost_shift;
        } else {
            lower[i] = to_minus;
            upper[i] = to_plus;
        }
    }
    Ok(LinearSystem { matrix: Tridiagonal { lower, diag, upper }, rhs })
}

/// The fixed-policy discrete operator applied to nodal values: `A v - b`,
/// i.e. `beta v - L^u v - L` at every node.
pub fn apply_operator(problem: &ControlProblem, grid: &Grid, policy: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    Ok(assemble_fixed_policy(problem, grid, policy)?.residual(values))
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPolicy {
    /// Pointwise minimiser of the running cost.
    MinRunningCost,
    Constant(f64),
    Nodal(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub n_grid_controls: usize,
    pub initial: InitialPolicy,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 200, n_grid_controls: 65, initial: InitialPolicy::MinRunningCost }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// Greedy control at each node for `values`.
    pub policy: Vec<f64>,
    pub iterations: usize,
    pub final_update_norm: f64,
    /// Sup-norm update of every iteration (the first against zero).
    pub history: Vec<f64>,
    pub control_lo: f64,
    pub control_hi: f64,
    pub n_grid_controls: usize,
}

impl ValueFunction {
    /// Wraps arbitrary nodal values as a candidate, with the greedy policy.
    pub fn from_values(problem: &ControlProblem, grid: &Grid, values: Vec<f64>, n_grid_controls: usize) -> Result<Self> {
        check_1d(problem, grid)?;
        if values.len() != grid.n_nodes() {
            return Err(Error::InvalidInput("one value per node required".into()));
        }
        let policy = (0..grid.n_nodes())
            .map(|i| discrete_hamiltonian(problem, grid, &values, i, n_grid_controls).control)
            .collect();
        Ok(Self {
            grid: grid.clone(),
            values,
            policy,
            iterations: 0,
            final_update_norm: 0.0,
            history: Vec::new(),
            control_lo: problem.control_lo(),
            control_hi: problem.control_hi(),
            n_grid_controls,
        })
    }

    pub fn interpolate(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn policy_iteration(problem: &ControlProblem, grid: &Grid, opts: &SolverOptions) -> Result<ValueFunction> {
    check_1d(problem, grid)?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("tol > 0 required".into()));
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidInput("max_iter >= 1 required".into()));
    }
    if opts.n_grid_controls < 2 {
        return Err(Error::InvalidInput("n_grid_controls >= 2 required".into()));
    }
    let n = grid.n_nodes();
    let ng = opts.n_grid_controls;
    let (lo, hi) = (problem.control_lo(), problem.control_hi());
    let mut policy: Vec<f64> = match &opts.initial {
        InitialPolicy::MinRunningCost => grid
            .nodes
            .iter()
            .map(|&x| minimize_control(lo, hi, ng, |u| problem.running_cost(&[x], u)).control)
            .collect(),
        InitialPolicy::Constant(u) => vec![problem.clamp_control(*u); n],
        InitialPolicy::Nodal(p) => {
            if p.len() != n {
                return Err(Error::InvalidInput(format!("initial policy has {} entries for {n} nodes", p.len())));
            }
            p.iter().map(|&u| problem.clamp_control(u)).collect()
        }
    };
    let mut values = vec![0.0; n];
    let mut history = Vec::new();
    for it in 1..=opts.max_iter {
        let next = assemble_fixed_policy(problem, grid, &policy)?.solve()?;
        let update = next.iter().zip(&values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        history.push(update);
        values = next;
        let improved: Vec<f64> = (0..n).map(|i| discrete_hamiltonian(problem, grid, &values, i, ng).control).collect();
        let stationary = improved == policy;
        if update <= opts.tol || stationary {
            return Ok(ValueFunction {
                grid: grid.clone(),
                values,
                policy: improved,
                iterations: it,
                final_update_norm: if stationary { 0.0 } else { update },
                history,
                control_lo: lo,
                control_hi: hi,
                n_grid_controls: ng,
            });
        }
        policy = improved;
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, update: *history.last().unwrap() })
}

/// Feedback policy interpolating the nodal controls linearly, clamped to the
/// control interval.
pub fn extract_policy(vf: &ValueFunction) -> Policy {
    let grid = vf.grid.clone();
    let nodal = Arc::new(vf.policy.clone());
    let (lo, hi) = (vf.control_lo, vf.control_hi);
    Policy::feedback(move |x| grid.interpolate(&nodal, x[0]).clamp(lo, hi))
}
