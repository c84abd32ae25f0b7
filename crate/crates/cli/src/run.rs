//! Subcommand execution and artifact writing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hjbr_core::estimate::PilotConfig;
use hjbr_core::report::{fmt_f64, Record};
use hjbr_core::simulate::simulate_batch;
use hjbr_core::{
    build_example1, build_example2, build_grid, check_dpp, check_equicontinuity, check_viscosity_residuals,
    compare_mc_pde, estimate_cost, estimate_local_time_constant, extract_policy, policy_iteration, truncation_horizon,
    CompareConfig, ControlProblem, DppConfig, EquicontinuityConfig, InitialPolicy, McConfig, Policy, SolverOptions,
    ValueFunction,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{Command, PolicyKind, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{context}: {source}")]
    Core { context: String, source: hjbr_core::Error },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn core(context: impl Into<String>) -> impl FnOnce(hjbr_core::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Core { context, source }
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// False iff some check failed.
    pub passed: bool,
    pub artifacts: Vec<PathBuf>,
    /// Human-readable summary, also written to `summary.txt`.
    pub summary: String,
}

struct Writer {
    dir: PathBuf,
    header: String,
    artifacts: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path, header: String) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), header, artifacts: Vec::new() })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, format!("{}\n{body}", self.header)).map_err(|source| RunError::Io { path: path.clone(), source })?;
        self.artifacts.push(path);
        Ok(())
    }
}

pub fn build_problem(cfg: &RunConfig) -> Result<ControlProblem, RunError> {
    let params = cfg.problem.params();
    match cfg.problem.example {
        1 => build_example1(params),
        _ => build_example2(params),
    }
    .map_err(core("building problem"))
}

fn solver_options(cfg: &RunConfig) -> SolverOptions {
    SolverOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        n_grid_controls: cfg.solver.n_grid_controls,
        initial: InitialPolicy::MinRunningCost,
    }
}

pub fn solve(cfg: &RunConfig, problem: &ControlProblem) -> Result<ValueFunction, RunError> {
    let grid = build_grid(problem.domain(), cfg.grid.n_nodes).map_err(core("grid.n_nodes"))?;
    policy_iteration(problem, &grid, &solver_options(cfg)).map_err(core("policy iteration"))
}

fn policy(cfg: &RunConfig, problem: &ControlProblem) -> Result<Policy, RunError> {
    Ok(match cfg.control.policy {
        PolicyKind::Constant => Policy::constant(cfg.control.u),
        PolicyKind::Optimal => extract_policy(&solve(cfg, problem)?),
    })
}

fn value_csv(vf: &ValueFunction) -> String {
    let mut s = String::from("x,v,policy\n");
    for ((x, v), u) in vf.grid.nodes().iter().zip(&vf.values).zip(&vf.policy) {
        let _ = writeln!(s, "{},{},{}", fmt_f64(*x), fmt_f64(*v), fmt_f64(*u));
    }
    s
}

fn convergence_csv(vf: &ValueFunction) -> String {
    let mut s = String::from("iteration,sup_update\n");
    for (k, u) in vf.history.iter().enumerate() {
        let _ = writeln!(s, "{},{}", k + 1, fmt_f64(*u));
    }
    s
}

fn solve_record(vf: &ValueFunction) -> Record {
    Record::new("solve")
        .text("n_nodes", vf.grid.n_nodes())
        .text("iterations", vf.iterations)
        .num("final_update_norm", vf.final_update_norm)
        .num("sup_abs_value", vf.sup_norm())
        .num("value_at_0", vf.interpolate(0.0))
}

fn write_solve(w: &mut Writer, vf: &ValueFunction) -> Result<(), RunError> {
    w.write("value.csv", &value_csv(vf))?;
    w.write("convergence.csv", &convergence_csv(vf))
}

/// Runs `cfg.command`, writing artifacts under `cfg.output_dir`.
pub fn run(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let problem = build_problem(cfg)?;
    let mut w = Writer::new(&cfg.output_dir, cfg.header())?;
    let (passed, records) = match cfg.command {
        Command::Solve => {
            let vf = solve(cfg, &problem)?;
            write_solve(&mut w, &vf)?;
            (true, vec![solve_record(&vf)])
        }
        Command::Simulate => run_simulate(cfg, &problem, &mut w)?,
        Command::Estimate => run_estimate(cfg, &problem, &mut w)?,
        Command::Verify => run_verify(cfg, &problem, &mut w)?,
        Command::Sweep => run_sweep(cfg, &mut w)?,
    };
    let mut summary = String::new();
    for r in &records {
        let _ = writeln!(summary, "{r}");
    }
    let _ = writeln!(summary, "[result]\npassed = {passed}");
    w.write("summary.txt", &summary)?;
    Ok(Outcome { passed, artifacts: w.artifacts, summary })
}

fn run_simulate(cfg: &RunConfig, problem: &ControlProblem, w: &mut Writer) -> Result<(bool, Vec<Record>), RunError> {
    let pol = policy(cfg, problem)?;
    let s = &cfg.simulate;
    let paths = simulate_batch(problem, &pol, &[s.x0], s.horizon, cfg.mc.dt, s.n_trajectories, cfg.mc.seed)
        .map_err(core("simulate"))?;
    let mut sup_l = 0.0f64;
    let mut clean = true;
    for (k, tr) in paths.iter().enumerate() {
        let mut csv = String::from("t,x,l,u\n");
        for i in 0..=tr.n_steps() {
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                fmt_f64(tr.times[i]),
                fmt_f64(tr.state(i)[0]),
                fmt_f64(tr.local_time[i]),
                fmt_f64(tr.controls[i])
            );
        }
        w.write(&format!("trajectory_{k:04}.csv"), &csv)?;
        sup_l = sup_l.max(tr.sup_local_time());
        clean &= tr.invariant_violations(problem, 1e-12).is_empty();
    }
    let rec = Record::new("simulate")
        .text("n_trajectories", paths.len())
        .num("max_local_time", sup_l)
        .text("invariants_hold", clean);
    Ok((clean, vec![rec]))
}

fn mc_horizon(cfg: &RunConfig, problem: &ControlProblem, pol: &Policy, x0: f64) -> Result<(f64, f64), RunError> {
    let pilot = PilotConfig { n_paths: cfg.mc.pilot_paths, horizon: cfg.mc.pilot_horizon };
    let c = estimate_local_time_constant(problem, pol, &[x0], cfg.mc.dt, &pilot, cfg.mc.seed ^ 0xA5A5_A5A5)
        .map_err(core("local-time pilot"))?;
    let horizon = match cfg.mc.horizon {
        Some(h) => h,
        None => truncation_horizon(problem, cfg.mc.epsilon, c).map_err(core("mc.epsilon"))?.max(cfg.mc.dt),
    };
    Ok((horizon, c))
}

fn run_estimate(cfg: &RunConfig, problem: &ControlProblem, w: &mut Writer) -> Result<(bool, Vec<Record>), RunError> {
    let pol = policy(cfg, problem)?;
    let mut csv = String::from("x,mean,std_error,horizon,tail_bound,local_time_constant,n_paths\n");
    let mut records = Vec::new();
    for &x in &cfg.estimate.points {
        let (horizon, c) = mc_horizon(cfg, problem, &pol, x)?;
        let mc_cfg = McConfig::new(horizon, cfg.mc.dt, cfg.mc.n_paths, cfg.mc.seed).with_local_time_constant(c);
        let est = estimate_cost(problem, &pol, &[x], &mc_cfg).map_err(core(format!("estimate at x = {x}")))?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            fmt_f64(x),
            fmt_f64(est.mean),
            fmt_f64(est.std_error),
            fmt_f64(est.horizon),
            fmt_f64(est.tail_bound),
            fmt_f64(est.local_time_constant),
            est.n_paths
        );
        let mut rec = est.summary();
        rec.title = format!("estimate x={}", fmt_f64(x));
        records.push(rec);
    }
    w.write("estimate.csv", &csv)?;
    Ok((true, records))
}

fn run_verify(cfg: &RunConfig, problem: &ControlProblem, w: &mut Writer) -> Result<(bool, Vec<Record>), RunError> {
    let v = &cfg.verify;
    let vf = solve(cfg, problem)?;
    write_solve(w, &vf)?;

    let residuals = check_viscosity_residuals(problem, &vf, v.tol_interior * (1.0 + vf.sup_norm()), v.tol_boundary);
    let mut passed = residuals.passed();
    w.write("residuals.txt", &residuals.to_record().to_string())?;
    let mut records = vec![solve_record(&vf), residuals.to_record()];

    let mut family = vec![extract_policy(&vf), Policy::constant(problem.control_lo()), Policy::constant(problem.control_hi())];
    let theta_d = cfg.problem.theta_d;
    if (problem.control_lo()..=problem.control_hi()).contains(&theta_d) {
        family.push(Policy::constant(theta_d));
    }
    let dpp_cfg = DppConfig { dt: cfg.mc.dt, n_paths: cfg.mc.n_paths, seed: cfg.mc.seed, budget: v.budget, policy_slack: 0.0 };
    let mut dpp_text = String::new();
    let mut dpp_ok = true;
    for &t in &v.dpp_times {
        for &x0 in &v.dpp_points {
            let rep = check_dpp(problem, &vf, &[x0], t, &family, &dpp_cfg).map_err(core(format!("dpp at t = {t}, x0 = {x0}")))?;
            dpp_ok &= rep.passed();
            let _ = writeln!(dpp_text, "{}", rep.to_record());
        }
    }
    passed &= dpp_ok;
    w.write("dpp.txt", &dpp_text)?;
    records.push(Record::new("dpp").text("passed", dpp_ok).text("checks", v.dpp_times.len() * v.dpp_points.len()));

    let compare_cfg = CompareConfig {
        dt: cfg.mc.dt,
        n_paths: cfg.mc.n_paths,
        seed: cfg.mc.seed,
        epsilon: cfg.mc.epsilon,
        budget: v.budget,
        pilot: PilotConfig { n_paths: cfg.mc.pilot_paths, horizon: cfg.mc.pilot_horizon },
    };
    let compare = compare_mc_pde(problem, &vf, &v.compare_points, &compare_cfg).map_err(core("mc vs pde"))?;
    passed &= compare.passed();
    w.write("compare.txt", &compare.to_record().to_string())?;
    records.push(compare.to_record());

    let pairs: Vec<(Vec<f64>, Vec<f64>)> = v.pairs.iter().map(|[x, y]| (vec![*x], vec![*y])).collect();
    let eq_cfg = EquicontinuityConfig { horizon: v.equicontinuity_horizon, dt: cfg.mc.dt, n_paths: cfg.mc.n_paths, seed: cfg.mc.seed };
    let u = v.equicontinuity_u.unwrap_or(problem.control_hi());
    let eq = check_equicontinuity(problem, &pairs, &Policy::constant(u), &eq_cfg).map_err(core("equicontinuity"))?;
    passed &= eq.passed();
    w.write("equicontinuity.txt", &eq.to_record().to_string())?;
    records.push(eq.to_record());
    Ok((passed, records))
}

fn run_sweep(cfg: &RunConfig, w: &mut Writer) -> Result<(bool, Vec<Record>), RunError> {
    let name = cfg.sweep.parameter.clone();
    let solves: Vec<Result<(RunConfig, ValueFunction), RunError>> = cfg
        .sweep
        .values
        .par_iter()
        .map(|&value| {
            let mut item = cfg.clone();
            *item.problem.field_mut(&name).expect("validated") = value;
            item.validate().map_err(|e| RunError::Core {
                context: format!("sweep {name} = {value}"),
                source: hjbr_core::Error::InvalidParams(e.to_string()),
            })?;
            let problem = build_problem(&item)?;
            let vf = solve(&item, &problem)?;
            Ok((item, vf))
        })
        .collect();
    let mut index = String::from("index,parameter,value,dir,iterations,sup_abs_value\n");
    let mut done = Vec::new();
    for (k, res) in solves.into_iter().enumerate() {
        let (item, vf) = res?;
        let dir = format!("{name}_{k:03}");
        let mut sub = Writer::new(&w.dir.join(&dir), item.header())?;
        write_solve(&mut sub, &vf)?;
        w.artifacts.extend(sub.artifacts);
        let value = cfg.sweep.values[k];
        let _ = writeln!(index, "{k},{name},{},{dir},{},{}", fmt_f64(value), vf.iterations, fmt_f64(vf.sup_norm()));
        done.push((value, vf));
    }
    w.write("index.csv", &index)?;

    let mut rec = Record::new("sweep").text("parameter", &name).text("solves", done.len());
    let mut passed = true;
    // larger boundary cost can only raise the value
    if name == "theta_e" {
        let mut order: Vec<&(f64, ValueFunction)> = done.iter().collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let min_step = order
            .windows(2)
            .flat_map(|p| p[0].1.values.iter().zip(&p[1].1.values).map(|(a, b)| b - a))
            .fold(f64::INFINITY, f64::min);
        passed = order.len() < 2 || min_step >= 0.0;
        rec = rec.text("monotone_in_theta_e", passed);
        if min_step.is_finite() {
            rec = rec.num("min_nodewise_increment", min_step);
        }
    }
    Ok((passed, vec![rec]))
}
