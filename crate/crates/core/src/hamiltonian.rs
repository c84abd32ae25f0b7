//! Generator, Hamiltonian and the residual maps of the HJB boundary problem
//!
//! ```text
//! H(x, g, M) = inf_u { <mu(x,u), g> + 1/2 Tr(sigma sigma^T(x,u) M) + L(x,u) }
//! F(x, r, g, M) = beta r - H(x, g, M)
//! Gamma(x, g)   = <g, grad phi(x)> - h(x)
//! ```

use crate::error::{Error, Result};
use crate::model::{ControlProblem, ExampleParams};

/// Candidate value, gradient and Hessian at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeProbe {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    /// Row-major `dim x dim`, symmetric.
    pub hess: Vec<f64>,
}

impl DerivativeProbe {
    pub fn new(x: Vec<f64>, value: f64, grad: Vec<f64>, hess: Vec<f64>) -> Result<Self> {
        let d = x.len();
        if grad.len() != d || hess.len() != d * d {
            return Err(Error::InvalidInput(format!(
                "probe shapes disagree: x has {d} entries, grad {}, hess {}",
                grad.len(),
                hess.len()
            )));
        }
        for i in 0..d {
            for j in 0..i {
                if (hess[i * d + j] - hess[j * d + i]).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!("hessian is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { x, value, grad, hess })
    }

    pub fn scalar(x: f64, value: f64, grad: f64, hess: f64) -> Self {
        Self { x: vec![x], value, grad: vec![grad], hess: vec![hess] }
    }
}

/// `<mu(x,u), g> + 1/2 Tr(sigma sigma^T(x,u) M)`.
pub fn generator_apply(problem: &ControlProblem, u: f64, probe: &DerivativeProbe) -> f64 {
    let d = problem.dim();
    let mu = problem.drift(&probe.x, u);
    let a = problem.diffusion(&probe.x, u);
    let transport: f64 = mu.iter().zip(&probe.grad).map(|(m, g)| m * g).sum();
    let diffusion: f64 = (0..d * d).map(|k| a[k] * probe.hess[k]).sum();
    transport + 0.5 * diffusion
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianValue {
    pub value: f64,
    pub control: f64,
}

/// Minimises `objective` over `[lo, hi]`: best point of a uniform grid of
/// `n_grid` points, refined by golden-section search on the two neighbouring
/// cells. Exact ties go to the smaller control.
pub fn minimize_control(lo: f64, hi: f64, n_grid: usize, objective: impl Fn(f64) -> f64) -> HamiltonianValue {
    let n = n_grid.max(2);
    let h = (hi - lo) / (n - 1) as f64;
    let at = |j: usize| if j == n - 1 { hi } else { lo + h * j as f64 };
    let mut best_j = 0;
    let mut best = objective(lo);
    for j in 1..n {
        let v = objective(at(j));
        if v < best {
            best = v;
            best_j = j;
        }
    }
    let mut out = HamiltonianValue { value: best, control: at(best_j) };

    let a = at(best_j.saturating_sub(1));
    let b = at((best_j + 1).min(n - 1));
    let refined = golden_section(a, b, &objective);
    let v = objective(refined);
    if v < out.value || (v == out.value && refined < out.control) {
        out = HamiltonianValue { value: v, control: refined };
    }
    out
}

fn golden_section(mut a: f64, mut b: f64, f: &impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let tol = 1e-13 * (1.0 + a.abs().max(b.abs()));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

pub fn hamiltonian_eval(problem: &ControlProblem, probe: &DerivativeProbe, n_grid: usize) -> HamiltonianValue {
    minimize_control(problem.control_lo(), problem.control_hi(), n_grid, |u| {
        generator_apply(problem, u, probe) + problem.running_cost(&probe.x, u)
    })
}

/// `F(x, r, g, M) = beta r - H(x, g, M)`.
pub fn hjb_residual(problem: &ControlProblem, probe: &DerivativeProbe, n_grid: usize) -> f64 {
    problem.discount() * probe.value - hamiltonian_eval(problem, probe, n_grid).value
}

/// Neumann defect `<g, grad phi(x)> - h(x)` at a boundary point.
pub fn boundary_residual(problem: &ControlProblem, x: &[f64], g: &[f64]) -> Result<f64> {
    let domain = problem.domain();
    if x.len() != domain.dim() || g.len() != domain.dim() {
        return Err(Error::InvalidInput("point and gradient must match the domain dimension".into()));
    }
    let dist = domain.boundary_distance(x);
    if dist > 1e-9 {
        return Err(Error::InvalidInput(format!("{x:?} is {dist:e} away from the boundary")));
    }
    let n = domain.phi_grad(x);
    let normal: f64 = g.iter().zip(&n).map(|(a, b)| a * b).sum();
    Ok(normal - problem.boundary_cost(x))
}

fn check_law(params: &ExampleParams) -> Result<()> {
    if params.theta_b == 0.0 {
        return Err(Error::InvalidParams("theta_b != 0 required by the control law".into()));
    }
    if !(params.u_a < params.u_b) {
        return Err(Error::InvalidParams("u_a < u_b required".into()));
    }
    Ok(())
}

/// Closed-form minimiser for the semilinear example: half of
/// `2 theta_d + theta_b g`, clamped to `[u_a, u_b]`.
pub fn analytic_control_ex1(params: &ExampleParams, g: f64) -> Result<f64> {
    check_law(params)?;
    let f = 2.0 * params.theta_d + params.theta_b * g;
    Ok((0.5 * f).clamp(params.u_a, params.u_b))
}

/// Closed-form minimiser for the fully nonlinear example: as
/// [`analytic_control_ex1`] with `f` lowered by `sigma_x^2 x^2 M / 2`.
pub fn analytic_control_ex2(params: &ExampleParams, x: f64, g: f64, hess: f64) -> Result<f64> {
    check_law(params)?;
    if params.u_a < 0.0 {
        return Err(Error::InvalidParams("u_a >= 0 required by the control-dependent diffusion".into()));
    }
    let f = 2.0 * params.theta_d + params.theta_b * g - 0.5 * params.sigma_x * params.sigma_x * x * x * hess;
    Ok((0.5 * f).clamp(params.u_a, params.u_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use crate::model::{build_example1, build_example2};
    use proptest::prelude::*;

    fn p1() -> ExampleParams {
        ExampleParams::baseline()
    }

    /// argmin of `u^2 - f u` over a dense grid of `[lo, hi]`.
    fn dense_argmin(lo: f64, hi: f64, f: f64, n: usize) -> f64 {
        (0..n)
            .map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64)
            .min_by(|a, b| (a * a - f * a).total_cmp(&(b * b - f * b)))
            .unwrap()
    }

    /// The interval form of the semilinear control law, valid for theta_b > 0.
    fn piecewise_ex1(p: &ExampleParams, g: f64) -> f64 {
        let t1 = 2.0 * (p.u_a - p.theta_d) / p.theta_b;
        let t2 = 2.0 * (p.u_b - p.theta_d) / p.theta_b;
        if g <= t1 {
            p.u_a
        } else if g >= t2 {
            p.u_b
        } else {
            0.5 * (2.0 * p.theta_d + p.theta_b * g)
        }
    }

    #[test]
    fn generator_examples() {
        let e1 = build_example1(p1()).unwrap();
        let v = generator_apply(&e1, 0.2, &DerivativeProbe::scalar(0.4, 0.0, 1.0, 0.0));
        assert!((v + 0.06).abs() < 1e-15);
        for u in [0.0, 0.4, 1.0] {
            assert_eq!(generator_apply(&e1, u, &DerivativeProbe::scalar(0.0, 0.0, 0.0, 5.0)), 0.0);
        }
        let e2 = build_example2(p1()).unwrap();
        let v = generator_apply(&e2, 0.25, &DerivativeProbe::scalar(0.5, 0.0, 0.0, 2.0));
        assert!((v - 0.005625).abs() < 1e-15);
    }

    #[test]
    fn hamiltonian_zero_derivatives() {
        let e1 = build_example1(p1()).unwrap();
        for x in [-1.0, 0.0, 0.3] {
            let h = hamiltonian_eval(&e1, &DerivativeProbe::scalar(x, 0.0, 0.0, 0.0), 65);
            assert_eq!(h.control, 0.5);
            assert_eq!(h.value, 0.0);
        }
    }

    #[test]
    fn hamiltonian_matches_closed_forms() {
        let e1 = build_example1(p1()).unwrap();
        let h = hamiltonian_eval(&e1, &DerivativeProbe::scalar(0.4, 0.0, 1.0, 0.0), 65);
        assert!((h.control - analytic_control_ex1(&p1(), 1.0).unwrap()).abs() < 1e-8);
        let e2 = build_example2(p1()).unwrap();
        let h = hamiltonian_eval(&e2, &DerivativeProbe::scalar(0.5, 0.0, 0.2, -1.0), 65);
        assert!((h.control - analytic_control_ex2(&p1(), 0.5, 0.2, -1.0).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn semilinear_law_examples() {
        let p = p1();
        for (g, expect) in [(0.0, 0.5), (-3.0, 0.0), (4.0, 1.0)] {
            let u = analytic_control_ex1(&p, g).unwrap();
            assert_eq!(u, expect);
            let f = 2.0 * p.theta_d + p.theta_b * g;
            assert!((u - dense_argmin(p.u_a, p.u_b, f, 10_001)).abs() <= 1e-4);
        }
        let mut bad = p;
        bad.theta_b = 0.0;
        assert!(analytic_control_ex1(&bad, 0.0).is_err());
    }

    #[test]
    fn nonlinear_law_examples() {
        let p = p1();
        for h in [-20.0, 0.0, 50.0] {
            assert_eq!(analytic_control_ex2(&p, 0.0, 0.0, h).unwrap(), analytic_control_ex1(&p, 0.0).unwrap());
        }
        let u = analytic_control_ex2(&p, 1.0, 0.0, -20.0).unwrap();
        assert!((u - 0.95).abs() < 1e-15);
        assert!((u - dense_argmin(0.0, 1.0, 1.9, 10_001)).abs() <= 1e-4);
        assert_eq!(analytic_control_ex2(&p, 1.0, 0.0, 50.0).unwrap(), 0.0);
        assert_eq!(dense_argmin(0.0, 1.0, -1.25, 10_001), 0.0);
        let mut bad = p;
        bad.u_a = -0.1;
        assert!(analytic_control_ex2(&bad, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn residual_examples() {
        let domain = DomainSpec::interval(1.0).unwrap();
        let cc = ControlProblem::constant_cost(domain, 0.25, 2.0, 0.0, 1.0).unwrap();
        assert_eq!(hjb_residual(&cc, &DerivativeProbe::scalar(0.3, 0.125, 0.0, 0.0), 65), 0.0);
        let e0 = build_example1(p1().with_theta_e(0.0)).unwrap();
        assert_eq!(hjb_residual(&e0, &DerivativeProbe::scalar(0.3, 0.0, 0.0, 0.0), 65), 0.0);
        let e1 = build_example1(p1()).unwrap();
        assert_eq!(hjb_residual(&e1, &DerivativeProbe::scalar(0.3, 1.0, 0.0, 0.0), 65), 1.0);
    }

    #[test]
    fn neumann_defect() {
        let e1 = build_example1(p1()).unwrap();
        assert!(boundary_residual(&e1, &[1.0], &[0.2]).unwrap().abs() < 1e-15);
        assert!(boundary_residual(&e1, &[-1.0], &[-0.2]).unwrap().abs() < 1e-15);
        assert!((boundary_residual(&e1, &[1.0], &[0.0]).unwrap() + 0.2).abs() < 1e-15);
        assert!(matches!(boundary_residual(&e1, &[0.5], &[0.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn asymmetric_hessian_rejected() {
        assert!(DerivativeProbe::new(vec![0.0, 0.0], 0.0, vec![0.0, 0.0], vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(DerivativeProbe::new(vec![0.0, 0.0], 0.0, vec![0.0, 0.0], vec![1.0, 0.5, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn minimizer_ties_prefer_smaller_control() {
        let r = minimize_control(0.0, 1.0, 65, |_| 3.0);
        assert_eq!(r.control, 0.0);
        assert_eq!(r.value, 3.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn semilinear_argmin_equivalence(x in -1.0f64..1.0, g in -6.0f64..6.0, h in -50.0f64..50.0) {
            let p = p1();
            let pb = build_example1(p).unwrap();
            let probe = DerivativeProbe::scalar(x, 0.0, g, h);
            let num = hamiltonian_eval(&pb, &probe, 65);
            let u = analytic_control_ex1(&p, g).unwrap();
            let exact = generator_apply(&pb, u, &probe) + pb.running_cost(&[x], u);
            prop_assert!((num.control - u).abs() <= 1e-6);
            prop_assert!((num.value - exact).abs() <= 1e-10);
            prop_assert!((u - piecewise_ex1(&p, g)).abs() < 1e-15);
        }

        #[test]
        fn nonlinear_argmin_equivalence(x in -1.0f64..1.0, g in -6.0f64..6.0, h in -50.0f64..50.0) {
            let p = p1();
            let pb = build_example2(p).unwrap();
            let probe = DerivativeProbe::scalar(x, 0.0, g, h);
            let num = hamiltonian_eval(&pb, &probe, 65);
            let u = analytic_control_ex2(&p, x, g, h).unwrap();
            let exact = generator_apply(&pb, u, &probe) + pb.running_cost(&[x], u);
            prop_assert!((num.control - u).abs() <= 1e-6);
            prop_assert!((num.value - exact).abs() <= 1e-10);
        }

        #[test]
        fn hamiltonian_is_concave(x in -1.0f64..1.0, g1 in -5.0f64..5.0, g2 in -5.0f64..5.0,
                                  h1 in -30.0f64..30.0, h2 in -30.0f64..30.0) {
            for pb in [build_example1(p1()).unwrap(), build_example2(p1()).unwrap()] {
                let hv = |g: f64, h: f64| hamiltonian_eval(&pb, &DerivativeProbe::scalar(x, 0.0, g, h), 65).value;
                let mid = hv(0.5 * (g1 + g2), 0.5 * (h1 + h2));
                prop_assert!(mid >= 0.5 * (hv(g1, h1) + hv(g2, h2)) - 1e-10);
            }
        }

        #[test]
        fn residual_shift_identity(x in -1.0f64..1.0, r in -2.0f64..2.0, c in -2.0f64..2.0, g in -3.0f64..3.0) {
            let pb = build_example2(p1()).unwrap();
            let a = hjb_residual(&pb, &DerivativeProbe::scalar(x, r + c, g, 1.0), 65);
            let b = hjb_residual(&pb, &DerivativeProbe::scalar(x, r, g, 1.0), 65);
            prop_assert!((a - b - pb.discount() * c).abs() <= 1e-12);
        }

        #[test]
        fn control_laws_are_lipschitz(x in -1.0f64..1.0, g in -6.0f64..6.0, h in -20.0f64..20.0) {
            let p = p1();
            let eps = 1e-5;
            let s2 = p.sigma_x * p.sigma_x;
            let slope_g = (analytic_control_ex1(&p, g + eps).unwrap() - analytic_control_ex1(&p, g).unwrap()).abs() / eps;
            prop_assert!(slope_g <= p.theta_b.abs() / 2.0 + 1e-9);
            let bound = p.theta_b.abs().max(0.5 * s2 * x * x).max(s2 * (x.abs() + eps) * h.abs()) / 2.0;
            for (dx, dg, dh) in [(eps, 0.0, 0.0), (0.0, eps, 0.0), (0.0, 0.0, eps)] {
                let a = analytic_control_ex2(&p, x + dx, g + dg, h + dh).unwrap();
                let b = analytic_control_ex2(&p, x, g, h).unwrap();
                prop_assert!((a - b).abs() / eps <= bound + 1e-6);
            }
        }
    }
}
