//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The objective may change between iterations through
//! [`Objective::refresh`]; when it does, the curvature history is dropped.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    /// Number of curvature pairs kept.
    pub history: usize,
    pub max_iterations: usize,
    /// Stop when `‖g‖∞ ≤ grad_tol · max(1, |f|)`.
    pub grad_tol: f64,
    /// Stop when `f_prev − f ≤ f_tol · max(|f_prev|, |f|)`.
    pub f_tol: f64,
    pub c1: f64,
    pub c2: f64,
    /// Trial steps per line search.
    pub max_line_search: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            history: 8,
            max_iterations: 500,
            grad_tol: 1e-6,
            f_tol: 1e-8,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 20,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.history >= 1
            && self.grad_tol > 0.0
            && self.f_tol > 0.0
            && 0.0 < self.c1
            && self.c1 < self.c2
            && self.c2 < 1.0
            && self.max_line_search >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid optimizer options {self:?}")))
        }
    }
}

pub trait Objective {
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Called before iteration `iteration` (> 0). Returns whether the
    /// objective changed.
    fn refresh(&mut self, _iteration: usize, _x: &[f64]) -> Result<bool> {
        Ok(false)
    }
}

/// Adapts a plain value-and-gradient closure.
pub struct FnObjective<F>(pub F);

impl<F> Objective for FnObjective<F>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.0)(x))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective at the start of the line search (after any refresh).
    pub value_before: f64,
    pub value: f64,
    pub grad_norm: f64,
    pub step: f64,
    /// Directional derivative along the search direction at step 0 and at the accepted step.
    pub slope_before: f64,
    pub slope_after: f64,
    pub refreshed: bool,
    pub evaluations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradientTolerance,
    ObjectiveTolerance,
    MaxIterations,
    LineSearchFailed,
    /// The objective stopped being finite after a refresh.
    NonFinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub initial_value: f64,
    pub initial_grad_norm: f64,
    pub final_value: f64,
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
    pub evaluations: usize,
}

impl OptimizerTrace {
    /// Whether every accepted step satisfies the strong-Wolfe conditions.
    pub fn strong_wolfe_holds(&self, c1: f64, c2: f64) -> bool {
        self.iterations.iter().all(|r| {
            let armijo = r.value <= r.value_before + c1 * r.step * r.slope_before;
            let curvature = r.slope_after.abs() <= c2 * r.slope_before.abs();
            armijo && curvature && r.slope_before < 0.0
        })
    }

    /// Whether values never increase between refreshes.
    pub fn is_monotone(&self) -> bool {
        self.iterations.iter().all(|r| r.value <= r.value_before)
            && self.iterations.windows(2).all(|w| w[1].refreshed || w[1].value_before <= w[0].value)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// `−H·g` by the two-loop recursion; `H₀ = γI` with `γ = sᵀy / yᵀy` of the newest pair.
fn search_direction(g: &[f64], history: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for p in history.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        q.iter_mut().zip(&p.y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some(p) = history.back() {
        let gamma = dot(&p.s, &p.y) / dot(&p.y, &p.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (p, a) in history.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        q.iter_mut().zip(&p.s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

struct Trial {
    step: f64,
    x: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
    slope: f64,
}

struct LineSearch<'a, O: Objective> {
    objective: &'a mut O,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    budget: usize,
    evaluations: usize,
}

impl<O: Objective> LineSearch<'_, O> {
    fn eval(&mut self, step: f64) -> Result<Option<Trial>> {
        if self.evaluations >= self.budget {
            return Ok(None);
        }
        self.evaluations += 1;
        let x: Vec<f64> = self.x.iter().zip(self.dir).map(|(xi, di)| xi + step * di).collect();
        let (value, grad) = self.objective.evaluate(&x)?;
        if grad.len() != x.len() {
            return Err(Error::shape("objective gradient", x.len(), grad.len()));
        }
        let value = if value.is_finite() && grad.iter().all(|g| g.is_finite()) {
            value
        } else {
            f64::INFINITY
        };
        let slope = dot(&grad, self.dir);
        Ok(Some(Trial {
            step,
            x,
            value,
            grad,
            slope,
        }))
    }

    fn armijo_fails(&self, t: &Trial) -> bool {
        t.value > self.f0 + self.c1 * t.step * self.slope0
    }

    fn curvature_holds(&self, t: &Trial) -> bool {
        t.slope.is_finite() && t.slope.abs() <= -self.c2 * self.slope0
    }

    fn run(&mut self, initial_step: f64) -> Result<Option<Trial>> {
        let mut prev = Trial {
            step: 0.0,
            x: self.x.to_vec(),
            value: self.f0,
            grad: Vec::new(),
            slope: self.slope0,
        };
        let mut step = initial_step;
        let mut first = true;
        loop {
            let Some(cur) = self.eval(step)? else { return Ok(None) };
            if self.armijo_fails(&cur) || (!first && cur.value >= prev.value) {
                return self.zoom(prev, cur);
            }
            if self.curvature_holds(&cur) {
                return Ok(Some(cur));
            }
            if cur.slope >= 0.0 {
                return self.zoom(cur, prev);
            }
            step = cur.step * 2.0;
            prev = cur;
            first = false;
        }
    }

    fn zoom(&mut self, mut lo: Trial, mut hi: Trial) -> Result<Option<Trial>> {
        loop {
            let step = interpolate(&lo, &hi);
            if !(step.is_finite()) || (step - lo.step).abs() <= f64::EPSILON * lo.step.abs().max(1e-300) {
                return Ok(None);
            }
            let Some(cur) = self.eval(step)? else { return Ok(None) };
            if self.armijo_fails(&cur) || cur.value >= lo.value {
                hi = cur;
            } else {
                if self.curvature_holds(&cur) {
                    return Ok(Some(cur));
                }
                if cur.slope * (hi.step - lo.step) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
    }
}

/// Safeguarded cubic interpolation between two bracketing trials.
fn interpolate(a: &Trial, b: &Trial) -> f64 {
    let (lo, hi) = if a.step < b.step { (a.step, b.step) } else { (b.step, a.step) };
    let width = hi - lo;
    let bisect = 0.5 * (lo + hi);
    if !b.value.is_finite() || !a.value.is_finite() {
        return lo + 0.1 * width;
    }
    let d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.step - b.step);
    let disc = d1 * d1 - a.slope * b.slope;
    if !disc.is_finite() || disc < 0.0 {
        return bisect;
    }
    let d2 = (b.step - a.step).signum() * disc.sqrt();
    let denom = b.slope - a.slope + 2.0 * d2;
    if denom == 0.0 || !denom.is_finite() {
        return bisect;
    }
    let step = b.step - (b.step - a.step) * (b.slope + d2 - d1) / denom;
    if !step.is_finite() {
        return bisect;
    }
    step.clamp(lo + 0.01 * width, hi - 0.01 * width)
}

/// Minimizes `objective` from `x0`.
pub fn minimize<O: Objective>(objective: &mut O, x0: &[f64], opts: &OptimizerOptions) -> Result<(Vec<f64>, OptimizerTrace)> {
    opts.validate()?;
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective.evaluate(&x)?;
    if g.len() != x.len() {
        return Err(Error::shape("objective gradient", x.len(), g.len()));
    }
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut trace = OptimizerTrace {
        initial_value: f,
        initial_grad_norm: norm(&g),
        final_value: f,
        iterations: Vec::new(),
        termination: Termination::MaxIterations,
        evaluations: 1,
    };
    let converged = |f: f64, g: &[f64]| inf_norm(g) <= opts.grad_tol * f.abs().max(1.0);
    if converged(f, &g) {
        trace.termination = Termination::GradientTolerance;
        return Ok((x, trace));
    }

    let mut history: VecDeque<Pair> = VecDeque::with_capacity(opts.history);
    for k in 0..opts.max_iterations {
        let mut refreshed = false;
        if k > 0 && objective.refresh(k, &x)? {
            history.clear();
            (f, g) = objective.evaluate(&x)?;
            trace.evaluations += 1;
            refreshed = true;
            if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
                trace.termination = Termination::NonFinite;
                break;
            }
            if converged(f, &g) {
                trace.termination = Termination::GradientTolerance;
                break;
            }
        }

        let mut accepted = None;
        let mut evaluations = 0;
        for attempt in 0..2 {
            if attempt == 1 {
                if history.is_empty() {
                    break;
                }
                history.clear();
            }
            let mut dir = search_direction(&g, &history);
            let mut slope = dot(&g, &dir);
            if slope.is_nan() || slope >= 0.0 {
                history.clear();
                dir = g.iter().map(|v| -v).collect();
                slope = dot(&g, &dir);
            }
            let initial_step = if history.is_empty() { (1.0 / norm(&g)).min(1.0) } else { 1.0 };
            let mut ls = LineSearch {
                objective: &mut *objective,
                x: &x,
                dir: &dir,
                f0: f,
                slope0: slope,
                c1: opts.c1,
                c2: opts.c2,
                budget: opts.max_line_search,
                evaluations: 0,
            };
            let result = ls.run(initial_step)?;
            evaluations += ls.evaluations;
            if let Some(t) = result {
                accepted = Some((t, slope));
                break;
            }
        }
        trace.evaluations += evaluations;
        let Some((t, slope_before)) = accepted else {
            trace.termination = Termination::LineSearchFailed;
            break;
        };

        let s: Vec<f64> = t.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = t.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * norm(&s) * norm(&y) {
            if history.len() == opts.history {
                history.pop_front();
            }
            history.push_back(Pair { s, y, rho: 1.0 / sy });
        }

        trace.iterations.push(IterationRecord {
            iteration: k,
            value_before: f,
            value: t.value,
            grad_norm: norm(&t.grad),
            step: t.step,
            slope_before,
            slope_after: t.slope,
            refreshed,
            evaluations,
        });
        let f_prev = f;
        x = t.x;
        f = t.value;
        g = t.grad;
        if converged(f, &g) {
            trace.termination = Termination::GradientTolerance;
            break;
        }
        if f_prev - f <= opts.f_tol * f_prev.abs().max(f.abs()) {
            trace.termination = Termination::ObjectiveTolerance;
            break;
        }
    }
    trace.final_value = f;
    Ok((x, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_start_returns_immediately() {
        let mut calls = 0;
        let mut obj = FnObjective(|x: &[f64]| {
            calls += 1;
            (1.0, vec![0.0; x.len()])
        });
        let (x, trace) = minimize(&mut obj, &[3.0, 4.0], &OptimizerOptions::default()).unwrap();
        assert_eq!(x, vec![3.0, 4.0]);
        assert!(trace.iterations.is_empty());
        assert_eq!(trace.termination, Termination::GradientTolerance);
        assert_eq!(calls, 1);
    }

    #[test]
    fn rejects_bad_input() {
        let mut nan = FnObjective(|x: &[f64]| (f64::NAN, vec![0.0; x.len()]));
        assert!(matches!(minimize(&mut nan, &[1.0], &OptimizerOptions::default()), Err(Error::NonFinite)));
        let mut short = FnObjective(|_: &[f64]| (1.0, vec![0.0]));
        assert!(minimize(&mut short, &[1.0, 2.0], &OptimizerOptions::default()).is_err());
        let bad = OptimizerOptions {
            c1: 0.95,
            ..OptimizerOptions::default()
        };
        assert!(minimize(&mut FnObjective(|x: &[f64]| (0.0, x.to_vec())), &[1.0], &bad).is_err());
    }

    #[test]
    fn refresh_clears_history_and_is_recorded() {
        struct Shifting {
            center: f64,
        }
        impl Objective for Shifting {
            fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
                let d: Vec<f64> = x.iter().map(|v| v - self.center).collect();
                Ok((d.iter().map(|v| v * v).sum(), d.iter().map(|v| 2.0 * v).collect()))
            }
            fn refresh(&mut self, iteration: usize, _x: &[f64]) -> Result<bool> {
                if iteration == 1 {
                    self.center = 5.0;
                    return Ok(true);
                }
                Ok(false)
            }
        }
        let mut obj = Shifting { center: 1.0 };
        let (x, trace) = minimize(&mut obj, &[0.0, 0.0], &OptimizerOptions::default()).unwrap();
        assert!(x.iter().all(|v| (v - 5.0).abs() < 1e-8));
        assert!(trace.iterations[1].refreshed);
        assert!(trace.is_monotone());
    }

    #[test]
    fn non_finite_refresh_keeps_the_last_iterate() {
        struct Poisoned {
            broken: bool,
        }
        impl Objective for Poisoned {
            fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
                let (a, b) = (x[0], x[1]);
                let v = if self.broken { f64::NAN } else { (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2) };
                Ok((v, vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]))
            }
            fn refresh(&mut self, iteration: usize, _x: &[f64]) -> Result<bool> {
                self.broken = iteration == 2;
                Ok(self.broken)
            }
        }
        let opts = OptimizerOptions {
            grad_tol: 1e-300,
            f_tol: 1e-300,
            ..OptimizerOptions::default()
        };
        let (x, trace) = minimize(&mut Poisoned { broken: false }, &[-1.2, 1.0], &opts).unwrap();
        assert_eq!(trace.termination, Termination::NonFinite);
        assert_eq!(trace.iterations.len(), 2);
        assert!(x.iter().all(|v| v.is_finite()));
    }
}
