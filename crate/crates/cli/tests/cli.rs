use std::fs;
use std::path::Path;
use std::process::Command;

const HJBR: &str = env!("CARGO_BIN_EXE_hjbr");

/// Small budgets so the MC-backed commands finish quickly.
const FAST: &str = "\
[problem]
example = 1
theta_e = 0.0

[grid]
n_nodes = 51

[mc]
n_paths = 200
dt = 0.002
pilot_paths = 16
pilot_horizon = 1.0
seed = 11

[simulate]
n_trajectories = 3
x0 = 0.9
horizon = 0.5

[estimate]
points = [0.0, 0.9]

[verify]
dpp_times = [0.25]
dpp_points = [0.0]
compare_points = [0.0]
pairs = [[0.0, 0.1]]
equicontinuity_horizon = 1.0
";

fn hjbr(dir: &Path, command: &str, config: &str, extra: &[&str], env: &[(&str, &str)]) -> (i32, String) {
    let cfg_path = dir.join(format!("{command}.conf"));
    fs::write(&cfg_path, config).unwrap();
    let out_dir = dir.join(format!("out_{command}"));
    let mut cmd = Command::new(HJBR);
    cmd.arg(command).arg("--config").arg(&cfg_path).arg("--output-dir").arg(&out_dir).args(extra);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    let text = format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    (out.status.code().unwrap(), text)
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn verify_exact_case_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, text) = hjbr(tmp.path(), "verify", FAST, &[], &[]);
    assert_eq!(code, 0, "{text}");
    let out = tmp.path().join("out_verify");
    for name in ["value.csv", "convergence.csv", "residuals.txt", "dpp.txt", "compare.txt", "equicontinuity.txt", "summary.txt"] {
        assert!(read(out.join(name)).starts_with("# hjbr command=verify"), "{name}");
    }
    assert!(read(out.join("summary.txt")).contains("passed = true"));
}

#[test]
fn failing_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = FAST.replace("theta_e = 0.0", "theta_e = 0.2").replace("[verify]\n", "[verify]\ntol_interior = 1e-300\n");
    let (code, text) = hjbr(tmp.path(), "verify", &cfg, &[], &[]);
    assert_eq!(code, 1, "{text}");
    assert!(read(tmp.path().join("out_verify/summary.txt")).contains("passed = false"));
}

#[test]
fn bad_grid_and_unknown_key_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, text) = hjbr(tmp.path(), "solve", &FAST.replace("n_nodes = 51", "n_nodes = 2"), &[], &[]);
    assert_ne!(code, 0);
    assert!(text.contains("grid.n_nodes") && text.contains("n_nodes >= 3"), "{text}");
    let (code, text) = hjbr(tmp.path(), "solve", &FAST.replace("theta_e", "theta_ee"), &[], &[]);
    assert_ne!(code, 0);
    assert!(text.contains("theta_ee"), "{text}");
    let (code, text) = hjbr(tmp.path(), "solve", &FAST.replace("example = 1", "beta = 0.0"), &[], &[]);
    assert_ne!(code, 0);
    assert!(text.contains("beta > 0"), "{text}");
}

#[test]
fn solve_writes_value_and_convergence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = FAST.replace("theta_e = 0.0", "theta_e = 0.2");
    let (code, text) = hjbr(tmp.path(), "solve", &cfg, &["--seed", "5"], &[]);
    assert_eq!(code, 0, "{text}");
    let value = read(tmp.path().join("out_solve/value.csv"));
    let mut lines = value.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# hjbr command=solve") && header.ends_with("seed=5"));
    assert_eq!(lines.next(), Some("x,v,policy"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 51);
    assert_eq!(rows[0][0], -1.0);
    // 17 significant digits round-trip
    assert!(value.lines().nth(2).unwrap().split(',').all(|c| c.split('e').next().unwrap().chars().filter(char::is_ascii_digit).count() == 17));
    let conv = read(tmp.path().join("out_solve/convergence.csv"));
    assert_eq!(conv.lines().nth(1), Some("iteration,sup_update"));
}

#[test]
fn reruns_are_byte_identical_and_thread_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = FAST.replace("theta_e = 0.0", "theta_e = 0.2");
    let mut outputs = Vec::new();
    for threads in ["1", "3", "1"] {
        let (code, text) = hjbr(tmp.path(), "simulate", &cfg, &[], &[("HJBR_THREADS", threads)]);
        assert_eq!(code, 0, "{text}");
        let (code, text) = hjbr(tmp.path(), "estimate", &cfg, &[], &[("HJBR_THREADS", threads)]);
        assert_eq!(code, 0, "{text}");
        let files: Vec<String> = ["out_simulate/trajectory_0000.csv", "out_simulate/trajectory_0002.csv", "out_estimate/estimate.csv"]
            .iter()
            .map(|f| read(tmp.path().join(f)))
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let traj = &outputs[0][0];
    assert_eq!(traj.lines().nth(1), Some("t,x,l,u"));
    assert_eq!(traj.lines().count(), 2 + 251);
}

#[test]
fn invalid_thread_count_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, text) = hjbr(tmp.path(), "solve", FAST, &[], &[("HJBR_THREADS", "zero")]);
    assert_eq!(code, 2);
    assert!(text.contains("HJBR_THREADS"));
}

#[test]
fn sweep_over_boundary_cost_is_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{FAST}\n[sweep]\nparameter = \"theta_e\"\nvalues = [0.0, 0.1, 0.2]\n");
    let (code, text) = hjbr(tmp.path(), "sweep", &cfg, &[], &[]);
    assert_eq!(code, 0, "{text}");
    let out = tmp.path().join("out_sweep");
    let index = read(out.join("index.csv"));
    assert_eq!(index.lines().count(), 2 + 3);
    let columns: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            let body = read(out.join(format!("theta_e_{k:03}/value.csv")));
            assert!(body.contains(&format!("theta_e={}", hjbr_core::report::fmt_f64([0.0, 0.1, 0.2][k]))));
            body.lines().skip(2).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
        })
        .collect();
    for k in 0..2 {
        assert!(columns[k].iter().zip(&columns[k + 1]).all(|(a, b)| b >= a));
    }
    assert!(read(out.join("summary.txt")).contains("monotone_in_theta_e = true"));
}
