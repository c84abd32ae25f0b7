//! Control problems: drift, dispersion, running and boundary costs, discount
//! rate and control interval, plus the two worked examples on `[-alpha, alpha]`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::DomainSpec;

/// `(x, u, out)`: writes a state-sized vector into `out`.
pub type VectorField = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;
/// `(x, u, out)`: writes a `dim x noise_dim` row-major matrix into `out`.
pub type MatrixField = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;
pub type CostField = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
pub type BoundaryField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Parameters shared by both worked examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleParams {
    pub theta_a: f64,
    pub theta_b: f64,
    pub theta_d: f64,
    pub theta_e: f64,
    pub sigma_x: f64,
    pub u_a: f64,
    pub u_b: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ExampleParams {
    /// The parameter set used throughout the tests and docs.
    pub fn baseline() -> Self {
        Self {
            theta_a: 0.1,
            theta_b: 0.5,
            theta_d: 0.5,
            theta_e: 0.2,
            sigma_x: 0.3,
            u_a: 0.0,
            u_b: 1.0,
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn with_theta_e(mut self, theta_e: f64) -> Self {
        self.theta_e = theta_e;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("theta_a", self.theta_a),
            ("theta_b", self.theta_b),
            ("theta_d", self.theta_d),
            ("theta_e", self.theta_e),
            ("sigma_x", self.sigma_x),
            ("u_a", self.u_a),
            ("u_b", self.u_b),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ];
        if let Some((name, _)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("{name} must be finite")));
        }
        if !(self.u_a < self.u_b) {
            return Err(Error::InvalidParams(format!("u_a < u_b required, got [{}, {}]", self.u_a, self.u_b)));
        }
        if self.theta_b == 0.0 {
            return Err(Error::InvalidParams("theta_b != 0 required".into()));
        }
        if !(self.sigma_x > 0.0) {
            return Err(Error::InvalidParams("sigma_x > 0 required".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParams("beta > 0 required".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidParams("alpha > 0 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    /// Semilinear example: control only in the drift.
    Semilinear(ExampleParams),
    /// Fully nonlinear example: control also scales the diffusion.
    FullyNonlinear(ExampleParams),
    Custom,
}

/// A discounted control problem on a reflected domain. Immutable once built;
/// the `with_*` methods return modified copies.
#[derive(Clone)]
pub struct ControlProblem {
    domain: DomainSpec,
    noise_dim: usize,
    drift: VectorField,
    dispersion: MatrixField,
    running_cost: CostField,
    boundary_cost: BoundaryField,
    discount: f64,
    control_lo: f64,
    control_hi: f64,
    kind: ProblemKind,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("domain", &self.domain)
            .field("noise_dim", &self.noise_dim)
            .field("discount", &self.discount)
            .field("controls", &(self.control_lo, self.control_hi))
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

impl ControlProblem {
    /// A problem with zero drift, zero dispersion and zero costs; fill it in
    /// with the `with_*` builders.
    pub fn new(domain: DomainSpec, noise_dim: usize, discount: f64, control_lo: f64, control_hi: f64) -> Result<Self> {
        if !(discount.is_finite() && discount > 0.0) {
            return Err(Error::InvalidParams(format!("discount > 0 required, got {discount}")));
        }
        if !(control_lo.is_finite() && control_hi.is_finite() && control_lo < control_hi) {
            return Err(Error::InvalidParams(format!(
                "control_lo < control_hi required, got [{control_lo}, {control_hi}]"
            )));
        }
        if noise_dim == 0 {
            return Err(Error::InvalidParams("noise_dim >= 1 required".into()));
        }
        Ok(Self {
            domain,
            noise_dim,
            drift: Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
            dispersion: Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
            running_cost: Arc::new(|_, _| 0.0),
            boundary_cost: Arc::new(|_| 0.0),
            discount,
            control_lo,
            control_hi,
            kind: ProblemKind::Custom,
        })
    }

    /// Zero dynamics, constant running cost `c` and no boundary cost; its value
    /// function is `c / discount` everywhere.
    pub fn constant_cost(domain: DomainSpec, cost: f64, discount: f64, control_lo: f64, control_hi: f64) -> Result<Self> {
        Ok(Self::new(domain, domain.dim(), discount, control_lo, control_hi)?.with_running_cost(move |_, _| cost))
    }

    pub fn with_drift(mut self, f: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Arc::new(f);
        self.kind = ProblemKind::Custom;
        self
    }

    pub fn with_dispersion(mut self, f: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.dispersion = Arc::new(f);
        self.kind = ProblemKind::Custom;
        self
    }

    pub fn with_running_cost(mut self, f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.running_cost = Arc::new(f);
        self.kind = ProblemKind::Custom;
        self
    }

    pub fn with_boundary_cost(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.boundary_cost = Arc::new(f);
        self.kind = ProblemKind::Custom;
        self
    }

    /// Same problem with `c` added to the running cost.
    pub fn with_cost_shift(self, c: f64) -> Self {
        let base = self.running_cost.clone();
        self.with_running_cost(move |x, u| base(x, u) + c)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn control_lo(&self) -> f64 {
        self.control_lo
    }

    pub fn control_hi(&self) -> f64 {
        self.control_hi
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn clamp_control(&self, u: f64) -> f64 {
        u.clamp(self.control_lo, self.control_hi)
    }

    pub fn drift_into(&self, x: &[f64], u: f64, out: &mut [f64]) {
        (self.drift)(x, u, out)
    }

    pub fn dispersion_into(&self, x: &[f64], u: f64, out: &mut [f64]) {
        (self.dispersion)(x, u, out)
    }

    pub fn running_cost(&self, x: &[f64], u: f64) -> f64 {
        (self.running_cost)(x, u)
    }

    pub fn boundary_cost(&self, x: &[f64]) -> f64 {
        (self.boundary_cost)(x)
    }

    pub fn drift(&self, x: &[f64], u: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.drift_into(x, u, &mut out);
        out
    }

    pub fn dispersion(&self, x: &[f64], u: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim() * self.noise_dim];
        self.dispersion_into(x, u, &mut out);
        out
    }

    /// `sigma sigma^T` at `(x, u)`, row-major `dim x dim`.
    pub fn diffusion(&self, x: &[f64], u: f64) -> Vec<f64> {
        let d = self.dim();
        let m = self.noise_dim;
        let s = self.dispersion(x, u);
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = (0..m).map(|k| s[i * m + k] * s[j * m + k]).sum();
            }
        }
        a
    }

    /// Scalar drift and `sigma sigma^T` for one-dimensional problems.
    pub(crate) fn coefficients_1d(&self, x: f64, u: f64) -> (f64, f64) {
        let xs = [x];
        let mut mu = [0.0];
        (self.drift)(&xs, u, &mut mu);
        let m = self.noise_dim;
        let mut s = [0.0; 8];
        let a = if m <= s.len() {
            (self.dispersion)(&xs, u, &mut s[..m]);
            s[..m].iter().map(|v| v * v).sum()
        } else {
            let mut s = vec![0.0; m];
            (self.dispersion)(&xs, u, &mut s);
            s.iter().map(|v| v * v).sum()
        };
        (mu[0], a)
    }

    /// Sup-norm bounds on the running and boundary costs, sampled on a fixed
    /// grid of states (including the boundary) and controls (including both
    /// endpoints).
    pub fn cost_bounds(&self) -> CostBounds {
        let points = self.probe_states(129);
        let nu = 65;
        let mut running: f64 = 0.0;
        for x in &points {
            for j in 0..nu {
                let u = self.control_lo + (self.control_hi - self.control_lo) * j as f64 / (nu - 1) as f64;
                running = running.max(self.running_cost(x, u).abs());
            }
        }
        let boundary = self
            .boundary_points()
            .iter()
            .map(|x| self.boundary_cost(x).abs())
            .fold(0.0, f64::max);
        CostBounds { running, boundary }
    }

    /// Deterministic sample states: a radial grid along each coordinate axis.
    fn probe_states(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let a = self.domain.alpha();
        let mut out = Vec::new();
        for axis in 0..d {
            for k in 0..per_axis {
                let r = -a + 2.0 * a * k as f64 / (per_axis - 1) as f64;
                let mut x = vec![0.0; d];
                x[axis] = r;
                out.push(x);
            }
        }
        out
    }

    /// Deterministic boundary sample: `+-alpha e_i`, plus diagonal directions
    /// for the ball.
    pub fn boundary_points(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let a = self.domain.alpha();
        let mut out = Vec::new();
        for axis in 0..d {
            for s in [-1.0, 1.0] {
                let mut x = vec![0.0; d];
                x[axis] = s * a;
                out.push(x);
            }
        }
        if d > 1 {
            for s in [-1.0, 1.0] {
                out.push(vec![s * a / (d as f64).sqrt(); d]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBounds {
    pub running: f64,
    pub boundary: f64,
}

/// Semilinear example: `mu = theta_a x - theta_b u`, `sigma = sigma_x x`,
/// `L = (theta_d - u)^2`, `h = theta_e`.
pub fn build_example1(params: ExampleParams) -> Result<ControlProblem> {
    params.validate()?;
    let p = params;
    let domain = DomainSpec::interval(p.alpha)?;
    let mut problem = ControlProblem::new(domain, 1, p.beta, p.u_a, p.u_b)?
        .with_drift(move |x, u, out| out[0] = p.theta_a * x[0] - p.theta_b * u)
        .with_dispersion(move |x, _, out| out[0] = p.sigma_x * x[0])
        .with_running_cost(move |_, u| (p.theta_d - u) * (p.theta_d - u))
        .with_boundary_cost(move |_| p.theta_e);
    problem.kind = ProblemKind::Semilinear(p);
    Ok(problem)
}

/// Fully nonlinear example: as [`build_example1`] but with
/// `sigma = sigma_x sqrt(u) x`, which needs `u_a >= 0`.
pub fn build_example2(params: ExampleParams) -> Result<ControlProblem> {
    params.validate()?;
    if params.u_a < 0.0 {
        return Err(Error::InvalidParams(format!(
            "u_a >= 0 required for the control-dependent diffusion, got {}",
            params.u_a
        )));
    }
    let p = params;
    let mut problem = build_example1(p)?.with_dispersion(move |x, u, out| out[0] = p.sigma_x * u.sqrt() * x[0]);
    problem.kind = ProblemKind::FullyNonlinear(p);
    Ok(problem)
}

/// Sampled sup-norms and Lipschitz ratios of the model functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub n_samples: usize,
    pub sup_drift: f64,
    pub sup_dispersion: f64,
    pub sup_running_cost: f64,
    pub sup_boundary_cost: f64,
    /// Max of `|mu(x,u) - mu(y,u)| / |x - y|` over sampled pairs.
    pub lipschitz_drift: f64,
    pub lipschitz_dispersion: f64,
    pub lipschitz_running_cost: f64,
    /// Largest sampled `|d^2 mu / du^2|` (zero when the drift is affine in u).
    pub drift_control_curvature: f64,
    /// Smallest sampled `d^2 L / du^2`.
    pub cost_control_curvature: f64,
    pub flags: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }

    /// Sufficient structural conditions for Lipschitz optimal controls:
    /// drift affine in the control and running cost strictly convex in it.
    pub fn structural_conditions_hold(&self) -> bool {
        self.drift_control_curvature <= 1e-6 && self.cost_control_curvature > 0.0
    }
}

pub fn validate_problem(problem: &ControlProblem, n_samples: usize, seed: u64) -> Result<ValidationReport> {
    if n_samples < 2 {
        return Err(Error::InvalidInput("n_samples >= 2 required".into()));
    }
    let d = problem.dim();
    let alpha = problem.domain.alpha();
    let (lo, hi) = (problem.control_lo, problem.control_hi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_state = |rng: &mut ChaCha8Rng| loop {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-alpha..=alpha)).collect();
        if problem.domain.contains(&x) {
            return x;
        }
    };

    // fixed probes (centre and boundary) come first so singular points are hit
    let mut states: Vec<Vec<f64>> = vec![vec![0.0; d]];
    states.extend(problem.boundary_points());
    while states.len() < n_samples {
        states.push(sample_state(&mut rng));
    }
    let controls: Vec<f64> = (0..states.len())
        .map(|k| match k {
            0 => lo,
            1 => hi,
            _ => rng.random_range(lo..=hi),
        })
        .collect();

    let mut flags = Vec::new();
    let mut flag = |msg: String| {
        if !flags.contains(&msg) {
            flags.push(msg)
        }
    };
    let sup_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut sup_drift: f64 = 0.0;
    let mut sup_disp: f64 = 0.0;
    let mut sup_l: f64 = 0.0;
    for (x, &u) in states.iter().zip(&controls) {
        let mu = problem.drift(x, u);
        let s = problem.dispersion(x, u);
        let l = problem.running_cost(x, u);
        if mu.iter().any(|v| !v.is_finite()) {
            flag(format!("non-finite drift at x={x:?}, u={u}"));
        } else {
            sup_drift = sup_drift.max(sup_abs(&mu));
        }
        if s.iter().any(|v| !v.is_finite()) {
            flag(format!("non-finite dispersion at x={x:?}, u={u}"));
        } else {
            sup_disp = sup_disp.max(sup_abs(&s));
        }
        if !l.is_finite() {
            flag(format!("non-finite running cost at x={x:?}, u={u}"));
        } else {
            sup_l = sup_l.max(l.abs());
        }
    }

    let mut sup_h: f64 = 0.0;
    for x in problem.boundary_points() {
        let h = problem.boundary_cost(&x);
        if h.is_finite() {
            sup_h = sup_h.max(h.abs());
        } else {
            flag(format!("non-finite boundary cost at x={x:?}"));
        }
    }

    // Lipschitz ratios in x at a common control
    let mut lip_mu: f64 = 0.0;
    let mut lip_s: f64 = 0.0;
    let mut lip_l: f64 = 0.0;
    for k in 0..states.len() {
        let x = &states[k];
        let y = &states[(k + 1) % states.len()];
        let dist = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist < 1e-6 {
            continue;
        }
        let u = controls[k];
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let r_mu = diff(&problem.drift(x, u), &problem.drift(y, u)) / dist;
        let r_s = diff(&problem.dispersion(x, u), &problem.dispersion(y, u)) / dist;
        let r_l = (problem.running_cost(x, u) - problem.running_cost(y, u)).abs() / dist;
        if r_mu.is_finite() {
            lip_mu = lip_mu.max(r_mu);
        }
        if r_s.is_finite() {
            lip_s = lip_s.max(r_s);
        }
        if r_l.is_finite() {
            lip_l = lip_l.max(r_l);
        }
    }

    // curvature in u by second differences on an interior stencil
    let mut drift_curv: f64 = 0.0;
    let mut cost_curv = f64::INFINITY;
    let du = 1e-3 * (hi - lo);
    for x in states.iter().take(n_samples.min(64)) {
        let uc = rng.random_range(lo + du..=hi - du);
        let m0 = problem.drift(x, uc - du);
        let m1 = problem.drift(x, uc);
        let m2 = problem.drift(x, uc + du);
        for i in 0..d {
            let c = (m0[i] - 2.0 * m1[i] + m2[i]) / (du * du);
            if c.is_finite() {
                drift_curv = drift_curv.max(c.abs());
            }
        }
        let c = (problem.running_cost(x, uc - du) - 2.0 * problem.running_cost(x, uc) + problem.running_cost(x, uc + du))
            / (du * du);
        if c.is_finite() {
            cost_curv = cost_curv.min(c);
        }
    }

    Ok(ValidationReport {
        n_samples: states.len(),
        sup_drift,
        sup_dispersion: sup_disp,
        sup_running_cost: sup_l,
        sup_boundary_cost: sup_h,
        lipschitz_drift: lip_mu,
        lipschitz_dispersion: lip_s,
        lipschitz_running_cost: lip_l,
        drift_control_curvature: drift_curv,
        cost_control_curvature: cost_curv,
        flags,
    })
}
