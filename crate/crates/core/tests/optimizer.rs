use npsynth::lbfgs::{minimize, FnObjective, OptimizerOptions, Termination};

fn quadratic(x: &[f64]) -> (f64, Vec<f64>) {
    // A = tridiag(-1, d_i, -1) with d_i = 2 + i, b = 1..n
    let n = x.len();
    let mut ax = vec![0.0; n];
    for i in 0..n {
        ax[i] = (2.0 + i as f64) * x[i];
        if i > 0 {
            ax[i] -= x[i - 1];
        }
        if i + 1 < n {
            ax[i] -= x[i + 1];
        }
    }
    let b: Vec<f64> = (1..=n).map(|v| v as f64).collect();
    let f = 0.5 * x.iter().zip(&ax).map(|(a, b)| a * b).sum::<f64>() - x.iter().zip(&b).map(|(a, b)| a * b).sum::<f64>();
    (f, ax.iter().zip(&b).map(|(a, b)| a - b).collect())
}

/// Solves the tridiagonal system of [`quadratic`] with the Thomas algorithm.
fn quadratic_minimizer(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n];
    let mut d: Vec<f64> = (1..=n).map(|v| v as f64).collect();
    let diag = |i: usize| 2.0 + i as f64;
    c[0] = -1.0 / diag(0);
    d[0] /= diag(0);
    for i in 1..n {
        let m = diag(i) + c[i - 1];
        c[i] = -1.0 / m;
        d[i] = (d[i] + d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
    let (a, b) = (x[0], x[1]);
    let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
    (f, vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)])
}

fn tight() -> OptimizerOptions {
    OptimizerOptions {
        grad_tol: 1e-12,
        f_tol: 1e-16,
        ..OptimizerOptions::default()
    }
}

/// `‖x − c‖²` with `c_i = sin(i)`.
fn shifted_sphere(x: &[f64]) -> (f64, Vec<f64>) {
    let d: Vec<f64> = x.iter().enumerate().map(|(i, v)| v - (i as f64).sin()).collect();
    (d.iter().map(|v| v * v).sum(), d.iter().map(|v| 2.0 * v).collect())
}

#[test]
fn sphere_converges_within_ten_iterations_from_any_start() {
    for (n, scale) in [(1, 1.0), (2, 10.0), (10, 0.01), (100, 1e3)] {
        let x0: Vec<f64> = (0..n).map(|i| scale * ((i * 7 + 3) as f64).cos()).collect();
        let (x, trace) = minimize(&mut FnObjective(shifted_sphere), &x0, &tight()).unwrap();
        let err = x.iter().enumerate().map(|(i, v)| (v - (i as f64).sin()).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-8, "n={n}: error {err:e}");
        assert!(trace.iterations.len() <= 10, "n={n}: {} iterations", trace.iterations.len());
        assert!(trace.strong_wolfe_holds(1e-4, 0.9));
    }
}

#[test]
fn ill_conditioned_quadratic_converges() {
    let n = 6;
    let (x, trace) = minimize(&mut FnObjective(quadratic), &vec![0.0; n], &tight()).unwrap();
    let star = quadratic_minimizer(n);
    let err = x.iter().zip(&star).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err <= 1e-10, "error {err:e}");
    assert!(trace.iterations.len() <= 15, "{} iterations", trace.iterations.len());
    assert!(trace.strong_wolfe_holds(1e-4, 0.9));
    assert!(trace.is_monotone());
}

#[test]
fn rosenbrock_reaches_the_valley_floor() {
    let (x, trace) = minimize(&mut FnObjective(rosenbrock), &[-1.2, 1.0], &tight()).unwrap();
    assert!((x[0] - 1.0).abs() <= 1e-6 && (x[1] - 1.0).abs() <= 1e-6, "{x:?}");
    assert!(trace.iterations.len() <= 200);
    assert!(trace.strong_wolfe_holds(1e-4, 0.9));
    assert!(trace.is_monotone());
}

#[test]
fn traces_are_deterministic() {
    let run = || minimize(&mut FnObjective(rosenbrock), &[-1.2, 1.0], &OptimizerOptions::default()).unwrap();
    assert_eq!(run(), run());
}

#[test]
fn iteration_budget_is_respected() {
    let opts = OptimizerOptions {
        max_iterations: 3,
        ..tight()
    };
    let (_, trace) = minimize(&mut FnObjective(rosenbrock), &[-1.2, 1.0], &opts).unwrap();
    assert_eq!(trace.iterations.len(), 3);
    assert_eq!(trace.termination, Termination::MaxIterations);
}

#[test]
fn unbounded_direction_is_reported_not_looped() {
    let mut linear = FnObjective(|x: &[f64]| (x[0], vec![1.0]));
    let opts = OptimizerOptions {
        max_iterations: 50,
        ..OptimizerOptions::default()
    };
    let (x, trace) = minimize(&mut linear, &[0.0], &opts).unwrap();
    // f decreases at a constant rate, so no step can satisfy the curvature condition
    assert_eq!(trace.termination, Termination::LineSearchFailed);
    assert!(trace.iterations.is_empty());
    assert_eq!(x, vec![0.0]);
}
