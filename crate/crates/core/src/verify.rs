//! Cross-checks between the PDE solution and the stochastic model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimate::{
    estimate_cost, estimate_local_time_constant, sample_path_costs, truncation_horizon, McConfig, McEstimate,
    PilotConfig,
};
use crate::hamiltonian::{hamiltonian_eval, DerivativeProbe};
use crate::model::ControlProblem;
use crate::pde::{discrete_hamiltonian, extract_policy, ValueFunction};
use crate::report::{fmt_f64, Record};
use crate::simulate::Policy;
use crate::stats::mean_and_std_error;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeResidual {
    pub x: f64,
    pub f_value: f64,
    /// Neumann defect, boundary nodes only.
    pub gamma_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub interior_max_abs_residual: f64,
    /// `min(F, Gamma) <= tol_boundary` at both ends.
    pub boundary_sub_ok: bool,
    /// `max(F, Gamma) >= -tol_boundary` at both ends.
    pub boundary_super_ok: bool,
    pub worst_node: Vec<f64>,
    pub details: Vec<NodeResidual>,
    pub tol_interior: f64,
    pub tol_boundary: f64,
}

impl ResidualReport {
    pub fn passed(&self) -> bool {
        self.interior_max_abs_residual <= self.tol_interior && self.boundary_sub_ok && self.boundary_super_ok
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new("viscosity_residuals")
            .text("passed", self.passed())
            .num("interior_max_abs_residual", self.interior_max_abs_residual)
            .num("tol_interior", self.tol_interior)
            .num("tol_boundary", self.tol_boundary)
            .text("boundary_sub_ok", self.boundary_sub_ok)
            .text("boundary_super_ok", self.boundary_super_ok)
            .num("worst_node", self.worst_node[0]);
        for d in self.details.iter().filter(|d| d.gamma_value.is_some()) {
            r = r.text(
                &format!("boundary[{}]", fmt_f64(d.x)),
                format!("F={} Gamma={}", fmt_f64(d.f_value), fmt_f64(d.gamma_value.unwrap())),
            );
        }
        r
    }
}

/// Discrete viscosity test of nodal values. Interior nodes use the scheme's
/// own probes (upwinded gradient, central second difference); at the ends `F`
/// uses the ghost stencil and `Gamma` the second-order one-sided slope.
pub fn check_viscosity_residuals(
    problem: &ControlProblem,
    vf: &ValueFunction,
    tol_interior: f64,
    tol_boundary: f64,
) -> ResidualReport {
    let grid = &vf.grid;
    let v = &vf.values;
    let n = grid.n_nodes();
    let dx = grid.spacing();
    let beta = problem.discount();
    let mut details = Vec::with_capacity(n);
    let mut worst = (0.0f64, grid.nodes()[1]);
    let mut sub_ok = true;
    let mut super_ok = true;
    for i in 0..n {
        let x = grid.nodes()[i];
        let f = beta * v[i] - discrete_hamiltonian(problem, grid, v, i, vf.n_grid_controls).value;
        if i == 0 || i == n - 1 {
            let (slope, normal) = if i == 0 {
                ((-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx), problem.domain().phi_grad(&[x])[0])
            } else {
                ((3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dx), problem.domain().phi_grad(&[x])[0])
            };
            let gamma = slope * normal - problem.boundary_cost(&[x]);
            sub_ok &= f.min(gamma) <= tol_boundary;
            super_ok &= f.max(gamma) >= -tol_boundary;
            details.push(NodeResidual { x, f_value: f, gamma_value: Some(gamma) });
        } else {
            if f.abs() > worst.0 {
                worst = (f.abs(), x);
            }
            details.push(NodeResidual { x, f_value: f, gamma_value: None });
        }
    }
    ResidualReport {
        interior_max_abs_residual: worst.0,
        boundary_sub_ok: sub_ok,
        boundary_super_ok: super_ok,
        worst_node: vec![worst.1],
        details,
        tol_interior,
        tol_boundary,
    }
}

/// Settings for the stricter test-function audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditConfig {
    /// Candidate `(p, M)` pairs drawn per node and side.
    pub samples: usize,
    /// Half-width of the box around the discrete derivatives, relative to
    /// `1 + |derivative|`.
    pub radius: f64,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { samples: 32, radius: 0.5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    /// Largest `F(x, v, p, M)` over quadratics touching from above (should be <= 0).
    pub max_sub_violation: f64,
    /// Largest `-F(x, v, p, M)` over quadratics touching from below (should be <= 0).
    pub max_super_violation: f64,
    pub tested: usize,
}

impl AuditReport {
    pub fn to_record(&self) -> Record {
        Record::new("quadratic_audit")
            .num("max_sub_violation", self.max_sub_violation)
            .num("max_super_violation", self.max_super_violation)
            .text("tested", self.tested)
    }
}

/// Audit mode: at each interior node, samples quadratic test functions
/// `q(y) = v_i + p (y - x_i) + M (y - x_i)^2 / 2` around the discrete
/// derivatives, keeps those touching the nodal values from above (resp.
/// below) on the three-point stencil, and evaluates the continuous `F` there.
pub fn audit_quadratic_tests(problem: &ControlProblem, vf: &ValueFunction, cfg: &AuditConfig) -> AuditReport {
    let grid = &vf.grid;
    let v = &vf.values;
    let dx = grid.spacing();
    let beta = problem.discount();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sub = f64::NEG_INFINITY;
    let mut sup = f64::NEG_INFINITY;
    let mut tested = 0;
    for i in 1..grid.n_nodes() - 1 {
        let x = grid.nodes()[i];
        let p0 = (v[i + 1] - v[i - 1]) / (2.0 * dx);
        let m0 = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dx * dx);
        let rp = cfg.radius * (1.0 + p0.abs());
        let rm = cfg.radius * (1.0 + m0.abs());
        for _ in 0..cfg.samples {
            let p = p0 + rng.random_range(-rp..=rp);
            let m = m0 + rng.random_range(-rm..=rm);
            let q = |y: f64| v[i] + p * (y - x) + 0.5 * m * (y - x) * (y - x);
            let above = q(x - dx) >= v[i - 1] && q(x + dx) >= v[i + 1];
            let below = q(x - dx) <= v[i - 1] && q(x + dx) <= v[i + 1];
            if !(above || below) {
                continue;
            }
            let f = beta * v[i] - hamiltonian_eval(problem, &DerivativeProbe::scalar(x, v[i], p, m), vf.n_grid_controls).value;
            tested += 1;
            if above {
                sub = sub.max(f);
            }
            if below {
                sup = sup.max(-f);
            }
        }
    }
    AuditReport { max_sub_violation: sub, max_super_violation: sup, tested }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DppConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Allowance for space and time discretisation error.
    pub budget: f64,
    /// Extra allowance on the upper side for a family that misses the optimum.
    pub policy_slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DppReport {
    pub x0: Vec<f64>,
    pub t: f64,
    pub lhs: f64,
    pub rhs_min: f64,
    pub rhs_std_error: f64,
    pub best_policy: usize,
    /// `(mean, std_error)` of the right side for every policy in the family.
    pub rhs: Vec<(f64, f64)>,
    pub gap: f64,
    pub tolerance: f64,
    pub policy_slack: f64,
    pub seed: u64,
}

impl DppReport {
    pub fn passed(&self) -> bool {
        self.gap >= -self.tolerance && self.gap <= self.tolerance + self.policy_slack
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new("dpp")
            .text("passed", self.passed())
            .num("x0", self.x0[0])
            .num("t", self.t)
            .num("lhs", self.lhs)
            .num("rhs_min", self.rhs_min)
            .num("rhs_std_error", self.rhs_std_error)
            .text("best_policy", self.best_policy)
            .num("gap", self.gap)
            .num("tolerance", self.tolerance)
            .num("policy_slack", self.policy_slack)
            .text("seed", self.seed);
        for (k, (m, se)) in self.rhs.iter().enumerate() {
            r = r.text(&format!("rhs[{k}]"), format!("{} +- {}", fmt_f64(*m), fmt_f64(*se)));
        }
        r
    }
}

/// Dynamic programming check at the deterministic time `t`: compares `v(x0)`
/// with the minimum over the family of
/// `E[int_0^t e^{-beta s} L ds + int_0^t e^{-beta s} h dl + e^{-beta t} v(X_t)]`.
pub fn check_dpp(
    problem: &ControlProblem,
    vf: &ValueFunction,
    x0: &[f64],
    t: f64,
    family: &[Policy],
    cfg: &DppConfig,
) -> Result<DppReport> {
    if family.is_empty() {
        return Err(Error::InvalidInput("policy family must not be empty".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("t > 0 required, got {t}")));
    }
    if x0.len() != 1 || !problem.domain().contains(x0) {
        return Err(Error::InvalidInput(format!("x0 = {x0:?} must be a point of the interval")));
    }
    let terminal = |x: &[f64]| vf.interpolate(x[0]);
    let dt = cfg.dt.min(t);
    let rhs = family
        .iter()
        .map(|p| {
            let costs = sample_path_costs(problem, p, x0, t, dt, cfg.n_paths, cfg.seed, Some(&terminal))?;
            Ok(mean_and_std_error(&costs))
        })
        .collect::<Result<Vec<_>>>()?;
    let (best_policy, &(rhs_min, rhs_std_error)) =
        rhs.iter().enumerate().min_by(|a, b| a.1 .0.total_cmp(&b.1 .0)).expect("non-empty");
    let lhs = vf.interpolate(x0[0]);
    Ok(DppReport {
        x0: x0.to_vec(),
        t,
        lhs,
        rhs_min,
        rhs_std_error,
        best_policy,
        rhs,
        gap: rhs_min - lhs,
        tolerance: 3.0 * rhs_std_error + cfg.budget,
        policy_slack: cfg.policy_slack,
        seed: cfg.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Target tail bound used to pick the truncation horizon.
    pub epsilon: f64,
    /// Allowance for the discretisation error of both sides.
    pub budget: f64,
    pub pilot: PilotConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparePoint {
    pub x: f64,
    pub v_pde: f64,
    pub mc: McEstimate,
    /// `mc.mean - v_pde`.
    pub diff: f64,
    /// `3 SE + tail_bound + budget`.
    pub tolerance: f64,
}

impl ComparePoint {
    pub fn agrees(&self) -> bool {
        self.diff.abs() <= self.tolerance
    }

    /// The MC cost of any policy may not undercut the value function.
    pub fn upper_bound_ok(&self) -> bool {
        self.diff >= -self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub points: Vec<ComparePoint>,
    pub budget: f64,
    pub epsilon: f64,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.points.iter().all(|p| p.agrees() && p.upper_bound_ok())
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new("mc_vs_pde")
            .text("passed", self.passed())
            .num("budget", self.budget)
            .num("epsilon", self.epsilon);
        for p in &self.points {
            r = r.text(
                &format!("point[{}]", fmt_f64(p.x)),
                format!(
                    "v_pde={} v_mc={} se={} tail={} horizon={} diff={} tolerance={} seed={}",
                    fmt_f64(p.v_pde),
                    fmt_f64(p.mc.mean),
                    fmt_f64(p.mc.std_error),
                    fmt_f64(p.mc.tail_bound),
                    fmt_f64(p.mc.horizon),
                    fmt_f64(p.diff),
                    fmt_f64(p.tolerance),
                    p.mc.seed
                ),
            );
        }
        r
    }
}

/// Estimates the cost of the extracted feedback policy at each point and
/// compares it with the PDE value. The MC horizon at each point is the
/// truncation horizon for `epsilon` with a pilot-estimated local-time constant.
pub fn compare_mc_pde(problem: &ControlProblem, vf: &ValueFunction, points: &[f64], cfg: &CompareConfig) -> Result<CompareReport> {
    let policy = extract_policy(vf);
    let mut out = Vec::with_capacity(points.len());
    for &x in points {
        let x0 = [x];
        let c = estimate_local_time_constant(problem, &policy, &x0, cfg.dt, &cfg.pilot, cfg.seed ^ 0xA5A5_A5A5)?;
        let horizon = truncation_horizon(problem, cfg.epsilon, c)?.max(cfg.dt);
        let mc_cfg = McConfig::new(horizon, cfg.dt, cfg.n_paths, cfg.seed).with_local_time_constant(c);
        let mc = estimate_cost(problem, &policy, &x0, &mc_cfg)?;
        let v_pde = vf.interpolate(x);
        out.push(ComparePoint {
            x,
            v_pde,
            diff: mc.mean - v_pde,
            tolerance: 3.0 * mc.std_error + mc.tail_bound + cfg.budget,
            mc,
        });
    }
    Ok(CompareReport { points: out, budget: cfg.budget, epsilon: cfg.epsilon })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquicontinuityConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Mean of the paired differences `J(x) - J(y)` on common noise.
    pub diff: f64,
    pub std_error: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquicontinuityReport {
    pub pairs: Vec<PairResult>,
    pub max_ratio: f64,
    pub seed: u64,
}

impl EquicontinuityReport {
    /// Every difference quotient is finite.
    pub fn passed(&self) -> bool {
        self.pairs.iter().all(|p| p.ratio.is_finite())
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new("equicontinuity")
            .text("passed", self.passed())
            .num("max_ratio", self.max_ratio)
            .text("seed", self.seed);
        for (k, p) in self.pairs.iter().enumerate() {
            r = r.text(
                &format!("pair[{k}]"),
                format!(
                    "x={:?} y={:?} diff={} se={} ratio={}",
                    p.x,
                    p.y,
                    fmt_f64(p.diff),
                    fmt_f64(p.std_error),
                    fmt_f64(p.ratio)
                ),
            );
        }
        r
    }
}

/// Difference quotients `|J(x) - J(y)| / |x - y|` of the cost functional under
/// one policy, estimated on common random numbers. Pairs closer than `1e-3`
/// are rejected.
pub fn check_equicontinuity(
    problem: &ControlProblem,
    pairs: &[(Vec<f64>, Vec<f64>)],
    policy: &Policy,
    cfg: &EquicontinuityConfig,
) -> Result<EquicontinuityReport> {
    let mut out = Vec::with_capacity(pairs.len());
    for (x, y) in pairs {
        if x.len() != y.len() {
            return Err(Error::InvalidInput("pair members differ in dimension".into()));
        }
        let dist = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist < 1e-3 {
            return Err(Error::InvalidInput(format!("pair {x:?}, {y:?} closer than 1e-3")));
        }
        let jx = sample_path_costs(problem, policy, x, cfg.horizon, cfg.dt, cfg.n_paths, cfg.seed, None)?;
        let jy = sample_path_costs(problem, policy, y, cfg.horizon, cfg.dt, cfg.n_paths, cfg.seed, None)?;
        let paired: Vec<f64> = jx.iter().zip(&jy).map(|(a, b)| a - b).collect();
        let (diff, std_error) = mean_and_std_error(&paired);
        out.push(PairResult { x: x.clone(), y: y.clone(), diff, std_error, ratio: diff.abs() / dist });
    }
    let max_ratio = out.iter().map(|p| p.ratio).fold(0.0, f64::max);
    Ok(EquicontinuityReport { pairs: out, max_ratio, seed: cfg.seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use crate::model::{build_example1, ExampleParams};
    use crate::pde::{build_grid, policy_iteration, SolverOptions};

    fn ex1(theta_e: f64) -> ControlProblem {
        build_example1(ExampleParams::baseline().with_theta_e(theta_e)).unwrap()
    }

    fn dpp_cfg() -> DppConfig {
        DppConfig { dt: 1e-3, n_paths: 200, seed: 8, budget: 0.0, policy_slack: 0.0 }
    }

    #[test]
    fn exact_zero_solution_passes() {
        let pb = ex1(0.0);
        let grid = build_grid(pb.domain(), 101).unwrap();
        let vf = ValueFunction::from_values(&pb, &grid, vec![0.0; 101], 65).unwrap();
        let rep = check_viscosity_residuals(&pb, &vf, 1e-10, 1e-10);
        assert_eq!(rep.interior_max_abs_residual, 0.0);
        assert!(rep.boundary_sub_ok && rep.boundary_super_ok && rep.passed());
        for d in rep.details.iter().filter_map(|d| d.gamma_value) {
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn constant_solution_passes() {
        let domain = DomainSpec::interval(1.0).unwrap();
        let pb = ControlProblem::constant_cost(domain, 0.25, 1.0, 0.0, 1.0).unwrap();
        let grid = build_grid(&domain, 101).unwrap();
        let vf = policy_iteration(&pb, &grid, &SolverOptions::default()).unwrap();
        let rep = check_viscosity_residuals(&pb, &vf, 1e-10, 1e-10);
        assert!(rep.interior_max_abs_residual <= 1e-10);
        assert!(rep.passed());
    }

    #[test]
    fn perturbation_is_located() {
        let pb = ex1(0.2);
        let grid = build_grid(pb.domain(), 101).unwrap();
        let vf = policy_iteration(&pb, &grid, &SolverOptions::default()).unwrap();
        for k in [30usize, 50, 80] {
            let mut values = vf.values.clone();
            values[k] += 0.1;
            let cand = ValueFunction { values, ..vf.clone() };
            let rep = check_viscosity_residuals(&pb, &cand, 1e-6, 1e-6);
            assert!(rep.interior_max_abs_residual >= pb.discount() * 0.1 * 0.5);
            assert_eq!(rep.worst_node[0], grid.nodes()[k]);
            assert!(!rep.passed());
        }
    }

    #[test]
    fn dpp_trivial_cases() {
        let pb = ex1(0.0);
        let grid = build_grid(pb.domain(), 101).unwrap();
        let vf = policy_iteration(&pb, &grid, &SolverOptions::default()).unwrap();
        for t in [0.25, 1.0] {
            let rep = check_dpp(&pb, &vf, &[0.3], t, &[Policy::constant(0.5)], &dpp_cfg()).unwrap();
            assert!(rep.lhs.abs() < 1e-8);
            assert!(rep.gap.abs() <= 3.0 * rep.rhs_std_error + 1e-8);
        }

        let domain = DomainSpec::interval(1.0).unwrap();
        let cc = ControlProblem::constant_cost(domain, 0.25, 1.0, 0.0, 1.0).unwrap();
        let vf = policy_iteration(&cc, &grid, &SolverOptions::default()).unwrap();
        for t in [0.1, 0.5, 2.0] {
            let rep = check_dpp(&cc, &vf, &[0.0], t, &[Policy::constant(0.0), Policy::constant(1.0)], &dpp_cfg()).unwrap();
            assert!(rep.gap.abs() <= 1e-10, "t={t}: gap {}", rep.gap);
        }
    }

    #[test]
    fn dpp_rejects_bad_input() {
        let pb = ex1(0.0);
        let grid = build_grid(pb.domain(), 11).unwrap();
        let vf = policy_iteration(&pb, &grid, &SolverOptions::default()).unwrap();
        let fam = [Policy::constant(0.5)];
        assert!(check_dpp(&pb, &vf, &[1.5], 0.5, &fam, &dpp_cfg()).is_err());
        assert!(check_dpp(&pb, &vf, &[0.0], 0.0, &fam, &dpp_cfg()).is_err());
        assert!(check_dpp(&pb, &vf, &[0.0], 0.5, &[], &dpp_cfg()).is_err());
    }

    #[test]
    fn compare_trivial_cases() {
        let cfg = CompareConfig {
            dt: 1e-3,
            n_paths: 50,
            seed: 1,
            epsilon: 1e-4,
            budget: 0.0,
            pilot: PilotConfig { n_paths: 16, horizon: 2.0 },
        };
        let pb = ex1(0.0);
        let grid = build_grid(pb.domain(), 101).unwrap();
        let vf = policy_iteration(&pb, &grid, &SolverOptions::default()).unwrap();
        let rep = compare_mc_pde(&pb, &vf, &[-0.9, 0.0, 0.9], &cfg).unwrap();
        for p in &rep.points {
            assert!(p.v_pde.abs() < 1e-8 && p.mc.mean.abs() < 1e-8);
        }
        assert!(rep.passed());

        let domain = DomainSpec::interval(1.0).unwrap();
        let cc = ControlProblem::constant_cost(domain, 0.25, 1.0, 0.0, 1.0).unwrap();
        let vf = policy_iteration(&cc, &grid, &SolverOptions::default()).unwrap();
        let rep = compare_mc_pde(&cc, &vf, &[-0.5, 0.5], &cfg).unwrap();
        for p in &rep.points {
            assert!((p.mc.mean - 0.25).abs() < 1e-3 && (p.v_pde - 0.25).abs() < 1e-3);
        }
    }

    #[test]
    fn equicontinuity_guard_and_trivial_case() {
        let pb = ex1(0.0);
        let cfg = EquicontinuityConfig { horizon: 2.0, dt: 1e-3, n_paths: 50, seed: 3 };
        let pol = Policy::constant(0.5);
        let err = check_equicontinuity(&pb, &[(vec![0.2], vec![0.2])], &pol, &cfg);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
        let rep = check_equicontinuity(&pb, &[(vec![0.0], vec![0.1]), (vec![0.5], vec![0.6])], &pol, &cfg).unwrap();
        for p in &rep.pairs {
            assert!(p.diff.abs() <= 3.0 * p.std_error + 1e-15);
        }
        assert!(rep.passed());
    }

    #[test]
    fn equicontinuity_ratios_share_a_constant() {
        let pb = ex1(0.2);
        let cfg = EquicontinuityConfig { horizon: 12.0, dt: 1e-3, n_paths: 400, seed: 17 };
        let pol = Policy::constant(1.0);
        // regression slope of |dJ| on |dx| through the origin over 20 pairs
        let pairs: Vec<(Vec<f64>, Vec<f64>)> =
            (0..20).map(|k| { let x = -0.9 + 0.09 * k as f64; (vec![x], vec![x + 0.1]) }).collect();
        let rep = check_equicontinuity(&pb, &pairs, &pol, &cfg).unwrap();
        let k_hat = rep.pairs.iter().map(|p| p.diff.abs() * 0.1).sum::<f64>() / (20.0 * 0.01);
        let probe = [(vec![0.0], vec![0.1]), (vec![0.5], vec![0.6]), (vec![0.8], vec![0.9])];
        let rep = check_equicontinuity(&pb, &probe, &pol, &cfg).unwrap();
        for p in &rep.pairs {
            assert!(p.ratio <= 1.5 * k_hat, "ratio {} vs K = {k_hat}", p.ratio);
            assert!(p.diff.abs() <= k_hat * 0.1 + 6.0 * p.std_error);
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let pb = ex1(0.2);
        let grid = build_grid(pb.domain(), 51).unwrap();
        let vf = policy_iteration(&pb, &grid, &SolverOptions::default()).unwrap();
        let fam = [extract_policy(&vf), Policy::constant(0.0)];
        let cfg = DppConfig { dt: 1e-3, n_paths: 64, seed: 5, budget: 0.02, policy_slack: 0.0 };
        let a = check_dpp(&pb, &vf, &[0.2], 0.5, &fam, &cfg).unwrap();
        let b = check_dpp(&pb, &vf, &[0.2], 0.5, &fam, &cfg).unwrap();
        assert_eq!(a.to_record().to_string(), b.to_record().to_string());
    }

    #[test]
    fn audit_mode_runs() {
        let pb = ex1(0.2);
        let grid = build_grid(pb.domain(), 101).unwrap();
        let vf = policy_iteration(&pb, &grid, &SolverOptions::default()).unwrap();
        let rep = audit_quadratic_tests(&pb, &vf, &AuditConfig::default());
        assert!(rep.tested > 0);
        assert!(rep.max_sub_violation.is_finite() && rep.max_super_violation.is_finite());
    }
}
