//! Run configuration: `key = value` lines under `[section]` headers.

use std::path::PathBuf;

use hjbr_core::report::fmt_f64;
use hjbr_core::ExampleParams;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("unknown key `{key}`: {message}")]
    UnknownKey { key: String, message: String },
    #[error("invalid value for `{key}`: {constraint}")]
    Invalid { key: String, constraint: String },
}

fn invalid(key: &str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), constraint: constraint.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve,
    Simulate,
    Estimate,
    Verify,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub example: u8,
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

impl Default for ProblemSection {
    fn default() -> Self {
        let p = ExampleParams::baseline();
        Self {
            example: 1,
            theta_a: p.theta_a,
            theta_b: p.theta_b,
            theta_d: p.theta_d,
            theta_e: p.theta_e,
            sigma_x: p.sigma_x,
            u_a: p.u_a,
            u_b: p.u_b,
            alpha: p.alpha,
            beta: p.beta,
        }
    }
}

impl ProblemSection {
    pub fn params(&self) -> ExampleParams {
        ExampleParams {
            theta_a: self.theta_a,
            theta_b: self.theta_b,
            theta_d: self.theta_d,
            theta_e: self.theta_e,
            sigma_x: self.sigma_x,
            u_a: self.u_a,
            u_b: self.u_b,
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    /// Mutable access by name, used by `sweep`.
    pub fn field_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "theta_a" => &mut self.theta_a,
            "theta_b" => &mut self.theta_b,
            "theta_d" => &mut self.theta_d,
            "theta_e" => &mut self.theta_e,
            "sigma_x" => &mut self.sigma_x,
            "u_a" => &mut self.u_a,
            "u_b" => &mut self.u_b,
            "alpha" => &mut self.alpha,
            "beta" => &mut self.beta,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n_nodes: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n_nodes: 401 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub n_grid_controls: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 200, n_grid_controls: 65 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n_paths: usize,
    pub dt: f64,
    /// Fixed horizon; when absent the horizon comes from `epsilon`.
    pub horizon: Option<f64>,
    pub epsilon: f64,
    pub seed: u64,
    pub pilot_paths: usize,
    pub pilot_horizon: f64,
}

impl Default for McSection {
    fn default() -> Self {
        Self { n_paths: 10_000, dt: 1e-3, horizon: None, epsilon: 1e-4, seed: 0, pilot_paths: 256, pilot_horizon: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Feedback policy extracted from a solve.
    Optimal,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub policy: PolicyKind,
    /// Control value for `policy = "constant"`.
    pub u: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self { policy: PolicyKind::Optimal, u: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n_trajectories: usize,
    pub x0: f64,
    pub horizon: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { n_trajectories: 4, x0: 0.0, horizon: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub points: Vec<f64>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self { points: vec![-0.9, 0.0, 0.9] }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Interior residual tolerance, scaled by `1 + sup|v|`.
    pub tol_interior: f64,
    pub tol_boundary: f64,
    pub dpp_times: Vec<f64>,
    pub dpp_points: Vec<f64>,
    pub compare_points: Vec<f64>,
    /// Discretisation allowance shared by the DPP and MC-vs-PDE checks.
    pub budget: f64,
    pub pairs: Vec<[f64; 2]>,
    /// Constant control of the equicontinuity check; defaults to `u_b`.
    pub equicontinuity_u: Option<f64>,
    pub equicontinuity_horizon: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            tol_interior: 1e-6,
            tol_boundary: 1e-6,
            dpp_times: vec![0.25, 0.5, 1.0],
            dpp_points: vec![0.0, 0.7],
            compare_points: vec![-0.9, 0.0, 0.9],
            budget: 0.02,
            pairs: vec![[0.0, 0.1], [0.5, 0.6], [0.8, 0.9]],
            equicontinuity_u: None,
            equicontinuity_horizon: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: String,
    pub values: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { parameter: "theta_e".into(), values: vec![0.0, 0.1, 0.2] }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    problem: ProblemSection,
    grid: GridSection,
    solver: SolverSection,
    mc: McSection,
    control: ControlSection,
    simulate: SimulateSection,
    estimate: EstimateSection,
    verify: VerifySection,
    sweep: SweepSection,
    output: OutputSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub problem: ProblemSection,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub mc: McSection,
    pub control: ControlSection,
    pub simulate: SimulateSection,
    pub estimate: EstimateSection,
    pub verify: VerifySection,
    pub sweep: SweepSection,
    pub output_dir: PathBuf,
}

/// Parses and validates a config. The command defaults to `solve`; the
/// binary overrides it (and optionally the output directory and seed).
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let file: FileConfig = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        match message.strip_prefix("unknown field `").and_then(|rest| rest.split('`').next()) {
            Some(key) => ConfigError::UnknownKey { key: key.to_string(), message },
            None => ConfigError::Parse(e.to_string()),
        }
    })?;
    let cfg = RunConfig {
        command: Command::Solve,
        problem: file.problem,
        grid: file.grid,
        solver: file.solver,
        mc: file.mc,
        control: file.control,
        simulate: file.simulate,
        estimate: file.estimate,
        verify: file.verify,
        sweep: file.sweep,
        output_dir: file.output.dir,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn in_domain(key: &str, x: f64, alpha: f64) -> Result<(), ConfigError> {
    if x.is_finite() && x.abs() <= alpha {
        Ok(())
    } else {
        Err(invalid(key, format!("|x| <= alpha = {alpha} required, got {x}")))
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("{key} > 0 required, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        if !matches!(p.example, 1 | 2) {
            return Err(invalid("problem.example", format!("example in {{1, 2}} required, got {}", p.example)));
        }
        for name in ["theta_a", "theta_b", "theta_d", "theta_e", "sigma_x", "u_a", "u_b", "alpha", "beta"] {
            let v = *p.clone().field_mut(name).expect("known field");
            if !v.is_finite() {
                return Err(invalid(&format!("problem.{name}"), format!("{name} must be finite")));
            }
        }
        positive("beta", p.beta).map_err(|e| rename(e, "problem.beta"))?;
        positive("alpha", p.alpha).map_err(|e| rename(e, "problem.alpha"))?;
        positive("sigma_x", p.sigma_x).map_err(|e| rename(e, "problem.sigma_x"))?;
        if p.theta_b == 0.0 {
            return Err(invalid("problem.theta_b", "theta_b != 0 required"));
        }
        if !(p.u_a < p.u_b) {
            return Err(invalid("problem.u_a", format!("u_a < u_b required, got [{}, {}]", p.u_a, p.u_b)));
        }
        if p.example == 2 && p.u_a < 0.0 {
            return Err(invalid("problem.u_a", format!("u_a >= 0 required for example 2, got {}", p.u_a)));
        }
        if self.grid.n_nodes < 3 {
            return Err(invalid("grid.n_nodes", format!("n_nodes >= 3 required, got {}", self.grid.n_nodes)));
        }
        positive("tol", self.solver.tol).map_err(|e| rename(e, "solver.tol"))?;
        if self.solver.max_iter == 0 {
            return Err(invalid("solver.max_iter", "max_iter >= 1 required"));
        }
        if self.solver.n_grid_controls < 2 {
            return Err(invalid("solver.n_grid_controls", "n_grid_controls >= 2 required"));
        }
        let mc = &self.mc;
        if mc.n_paths == 0 {
            return Err(invalid("mc.n_paths", "n_paths >= 1 required"));
        }
        positive("dt", mc.dt).map_err(|e| rename(e, "mc.dt"))?;
        if let Some(h) = mc.horizon {
            positive("horizon", h).map_err(|e| rename(e, "mc.horizon"))?;
        }
        positive("epsilon", mc.epsilon).map_err(|e| rename(e, "mc.epsilon"))?;
        if mc.pilot_paths == 0 {
            return Err(invalid("mc.pilot_paths", "pilot_paths >= 1 required"));
        }
        positive("pilot_horizon", mc.pilot_horizon).map_err(|e| rename(e, "mc.pilot_horizon"))?;
        if self.control.policy == PolicyKind::Constant && !(p.u_a..=p.u_b).contains(&self.control.u) {
            return Err(invalid("control.u", format!("u_a <= u <= u_b required, got {}", self.control.u)));
        }
        if self.simulate.n_trajectories == 0 {
            return Err(invalid("simulate.n_trajectories", "n_trajectories >= 1 required"));
        }
        in_domain("simulate.x0", self.simulate.x0, p.alpha)?;
        positive("horizon", self.simulate.horizon).map_err(|e| rename(e, "simulate.horizon"))?;
        for &x in &self.estimate.points {
            in_domain("estimate.points", x, p.alpha)?;
        }
        let v = &self.verify;
        positive("tol_interior", v.tol_interior).map_err(|e| rename(e, "verify.tol_interior"))?;
        positive("tol_boundary", v.tol_boundary).map_err(|e| rename(e, "verify.tol_boundary"))?;
        for &t in &v.dpp_times {
            positive("dpp_times", t).map_err(|e| rename(e, "verify.dpp_times"))?;
        }
        for &x in &v.dpp_points {
            in_domain("verify.dpp_points", x, p.alpha)?;
        }
        for &x in &v.compare_points {
            in_domain("verify.compare_points", x, p.alpha)?;
        }
        if !(v.budget >= 0.0 && v.budget.is_finite()) {
            return Err(invalid("verify.budget", format!("budget >= 0 required, got {}", v.budget)));
        }
        for [x, y] in &v.pairs {
            in_domain("verify.pairs", *x, p.alpha)?;
            in_domain("verify.pairs", *y, p.alpha)?;
            if (x - y).abs() < 1e-3 {
                return Err(invalid("verify.pairs", format!("|x - y| >= 1e-3 required, got ({x}, {y})")));
            }
        }
        if let Some(u) = v.equicontinuity_u {
            if !(p.u_a..=p.u_b).contains(&u) {
                return Err(invalid("verify.equicontinuity_u", format!("u_a <= u <= u_b required, got {u}")));
            }
        }
        positive("equicontinuity_horizon", v.equicontinuity_horizon)
            .map_err(|e| rename(e, "verify.equicontinuity_horizon"))?;
        if p.clone().field_mut(&self.sweep.parameter).is_none() {
            return Err(invalid(
                "sweep.parameter",
                format!("one of theta_a, theta_b, theta_d, theta_e, sigma_x, u_a, u_b, alpha, beta required, got `{}`", self.sweep.parameter),
            ));
        }
        if self.sweep.values.is_empty() {
            return Err(invalid("sweep.values", "at least one value required"));
        }
        Ok(())
    }

    /// One-line audit header: every parameter and the seed.
    pub fn header(&self) -> String {
        let p = &self.problem;
        let f = fmt_f64;
        let list = |xs: &[f64]| xs.iter().map(|x| f(*x)).collect::<Vec<_>>().join(";");
        let pairs = self.verify.pairs.iter().map(|[x, y]| format!("{}:{}", f(*x), f(*y))).collect::<Vec<_>>().join(";");
        format!(
            "# hjbr command={} example={} theta_a={} theta_b={} theta_d={} theta_e={} sigma_x={} u_a={} u_b={} alpha={} beta={} \
             n_nodes={} tol={} max_iter={} n_grid_controls={} n_paths={} dt={} horizon={} epsilon={} pilot_paths={} pilot_horizon={} \
             policy={} u={} sim_trajectories={} sim_x0={} sim_horizon={} estimate_points={} tol_interior={} tol_boundary={} \
             dpp_times={} dpp_points={} compare_points={} budget={} pairs={} equicontinuity_u={} equicontinuity_horizon={} \
             sweep_parameter={} sweep_values={} seed={}",
            self.command.name(),
            p.example,
            f(p.theta_a),
            f(p.theta_b),
            f(p.theta_d),
            f(p.theta_e),
            f(p.sigma_x),
            f(p.u_a),
            f(p.u_b),
            f(p.alpha),
            f(p.beta),
            self.grid.n_nodes,
            f(self.solver.tol),
            self.solver.max_iter,
            self.solver.n_grid_controls,
            self.mc.n_paths,
            f(self.mc.dt),
            self.mc.horizon.map_or("auto".to_string(), f),
            f(self.mc.epsilon),
            self.mc.pilot_paths,
            f(self.mc.pilot_horizon),
            match self.control.policy {
                PolicyKind::Optimal => "optimal",
                PolicyKind::Constant => "constant",
            },
            f(self.control.u),
            self.simulate.n_trajectories,
            f(self.simulate.x0),
            f(self.simulate.horizon),
            list(&self.estimate.points),
            f(self.verify.tol_interior),
            f(self.verify.tol_boundary),
            list(&self.verify.dpp_times),
            list(&self.verify.dpp_points),
            list(&self.verify.compare_points),
            f(self.verify.budget),
            pairs,
            self.verify.equicontinuity_u.map_or("u_b".to_string(), f),
            f(self.verify.equicontinuity_horizon),
            self.sweep.parameter,
            list(&self.sweep.values),
            self.mc.seed,
        )
    }
}

fn rename(e: ConfigError, key: &str) -> ConfigError {
    match e {
        ConfigError::Invalid { constraint, .. } => invalid(key, constraint),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[problem]\nexample = 1\ntheta_a = 0.1\ntheta_b = 0.5\ntheta_d = 0.5\ntheta_e = 0.2\nsigma_x = 0.3\nu_a = 0.0\nu_b = 1.0\nalpha = 1.0\nbeta = 1.0\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.problem.params(), ExampleParams::baseline());
        assert_eq!(cfg.grid.n_nodes, 401);
        assert_eq!(cfg.solver, SolverSection::default());
        assert_eq!(cfg.mc, McSection::default());
        assert_eq!(cfg.command, Command::Solve);
        assert_eq!(parse_config("").unwrap().problem, cfg.problem);
    }

    #[test]
    fn zero_discount_names_constraint() {
        let err = parse_config(&MINIMAL.replace("beta = 1.0", "beta = 0.0")).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { key, .. } if key == "problem.beta"));
        assert!(err.to_string().contains("beta > 0"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config(&MINIMAL.replace("beta = 1.0", "betaa = 1.0")).unwrap_err();
        assert!(matches!(&err, ConfigError::UnknownKey { key, .. } if key == "betaa"), "{err}");
        let err = parse_config("[problemz]\nexample = 1\n").unwrap_err();
        assert!(matches!(&err, ConfigError::UnknownKey { key, .. } if key == "problemz"), "{err}");
    }

    #[test]
    fn malformed_and_constraint_errors() {
        assert!(matches!(parse_config("[problem\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_config("[problem]\nbeta = \"x\"\n"), Err(ConfigError::Parse(_))));
        let cases = [
            ("[grid]\nn_nodes = 2\n", "grid.n_nodes"),
            ("[problem]\nexample = 3\n", "problem.example"),
            ("[problem]\nexample = 2\nu_a = -0.5\n", "problem.u_a"),
            ("[mc]\ndt = -1.0\n", "mc.dt"),
            ("[verify]\npairs = [[0.2, 0.2]]\n", "verify.pairs"),
            ("[simulate]\nx0 = 1.5\n", "simulate.x0"),
            ("[sweep]\nparameter = \"gamma\"\n", "sweep.parameter"),
            ("[control]\npolicy = \"constant\"\nu = 2.0\n", "control.u"),
        ];
        for (text, want) in cases {
            match parse_config(text) {
                Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, want, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn header_carries_parameters_and_seed() {
        let mut cfg = parse_config(MINIMAL).unwrap();
        cfg.mc.seed = 42;
        let h = cfg.header();
        assert!(h.starts_with("# hjbr command=solve"));
        assert!(h.contains("theta_e=2.0000000000000001e-1"));
        assert!(h.ends_with("seed=42"));
        assert!(!h.contains('\n'));
    }
}
