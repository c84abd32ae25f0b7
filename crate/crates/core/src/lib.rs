//! Discounted stochastic control on a reflected domain.
//!
//! * [`geometry`]: the interval / ball, its defining function and the
//!   projection that realises reflection.
//! * [`model`]: control problems and the two worked examples.
//! * [`simulate`]: projected Euler-Maruyama paths with local time.
//! * [`estimate`]: Monte Carlo costs with truncation bounds.
//! * [`hamiltonian`]: generator, Hamiltonian, closed-form controls, residuals.
//! * [`pde`]: monotone scheme with Neumann data and policy iteration.
//! * [`verify`]: viscosity residuals, dynamic programming, MC-vs-PDE and
//!   equicontinuity checks.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod geometry;
pub mod hamiltonian;
pub mod model;
pub mod pde;
pub mod report;
pub mod simulate;
pub mod stats;
pub mod verify;


pub use error::{Error, Result};
pub use estimate::{
    estimate_cost, estimate_local_time_constant, estimate_value, tail_bound, truncation_horizon, McConfig,
    McEstimate, PilotConfig, ValueEstimate,
};
pub use geometry::DomainSpec;
pub use hamiltonian::{
    analytic_control_ex1, analytic_control_ex2, boundary_residual, generator_apply, hamiltonian_eval, hjb_residual,
    DerivativeProbe, HamiltonianValue,
};
pub use model::{build_example1, build_example2, validate_problem, ControlProblem, ExampleParams, ValidationReport};
pub use pde::{
    assemble_fixed_policy, build_grid, extract_policy, policy_iteration, Grid, InitialPolicy, LinearSystem,
    SolverOptions, ValueFunction,
};
pub use simulate::{euler_reflected_step, simulate_batch, simulate_path, Policy, Trajectory};
pub use verify::{
    audit_quadratic_tests, check_dpp, check_equicontinuity, check_viscosity_residuals, compare_mc_pde, AuditConfig,
    CompareConfig, CompareReport, DppConfig, DppReport, EquicontinuityConfig, EquicontinuityReport, ResidualReport,
};
