//! Limited-memory BFGS with a strong Wolfe line search.
//!
//! Minimises a smooth objective given through a closure that returns the
//! value and writes the gradient. A step is accepted if it meets the
//! curvature condition and either the sufficient decrease condition or plain
//! non-increase of the computed value, so the recorded objective trace is
//! non-increasing even when rounding noise hides the Armijo decrease.

use std::collections::VecDeque;

/// Relative size of objective differences treated as rounding noise when
/// bracketing a step.
const NOISE_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once the gradient infinity-norm is at or below this.
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 500,
            grad_tol: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    /// No step along the search direction (nor steepest descent) decreased the
    /// objective; usually means the iterate is at the floating-point limit.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub termination: Termination,
    /// Objective at the start point and after every accepted step.
    pub trace: Vec<f64>,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        self.termination == Termination::GradientTolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("objective is not finite at the start point")]
pub struct Diverged;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

struct Probe {
    step: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

struct LineSearch<'a, F> {
    f: &'a mut F,
    x0: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    opts: &'a LbfgsOptions,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> LineSearch<'_, F> {
    fn probe(&mut self, step: f64) -> Probe {
        let x: Vec<f64> = self
            .x0
            .iter()
            .zip(self.dir)
            .map(|(x, d)| x + step * d)
            .collect();
        let mut grad = vec![0.0; x.len()];
        let value = (self.f)(&x, &mut grad);
        let slope = dot(&grad, self.dir);
        Probe {
            step,
            value,
            slope,
            x,
            grad,
        }
    }

    fn sufficient(&self, p: &Probe) -> bool {
        p.value.is_finite() && p.value <= self.f0 + self.opts.c1 * p.step * self.slope0
    }

    fn curvature(&self, p: &Probe) -> bool {
        p.slope.abs() <= -self.opts.c2 * self.slope0
    }

    /// Near a minimum the decrease a good step buys can fall below the
    /// rounding noise of the objective, so the Armijo test can no longer see
    /// it. A step that meets the curvature condition and does not increase
    /// the computed value is then accepted on the strength of its slope.
    fn acceptable(&self, p: &Probe) -> bool {
        self.curvature(p) && p.value.is_finite() && (self.sufficient(p) || p.value <= self.f0)
    }

    /// Whether `p` lies before the minimum along the line, judging the value
    /// only up to rounding noise.
    fn still_descending(&self, p: &Probe) -> bool {
        p.slope < 0.0 && p.value <= self.f0 + NOISE_REL * self.f0.abs().max(1.0)
    }

    fn search(&mut self, initial: f64) -> Option<Probe> {
        let mut prev: Option<Probe> = None;
        let mut step = initial;
        for _ in 0..self.opts.max_line_search {
            let p = self.probe(step);
            let prev_value = prev.as_ref().map_or(self.f0, |q| q.value);
            if self.acceptable(&p) {
                return Some(p);
            }
            if !self.sufficient(&p) || (prev.is_some() && p.value >= prev_value) {
                return self.zoom(prev, p);
            }
            if p.slope >= 0.0 {
                return self.zoom(Some(p), prev.unwrap_or_else(|| self.origin()));
            }
            step = p.step * 2.0;
            prev = Some(p);
        }
        prev
    }

    fn origin(&self) -> Probe {
        Probe {
            step: 0.0,
            value: self.f0,
            slope: self.slope0,
            x: self.x0.to_vec(),
            grad: Vec::new(),
        }
    }

    /// Shrinks the bracket between `lo` (best sufficient-decrease point so
    /// far, `None` for the origin) and `hi`.
    fn zoom(&mut self, lo: Option<Probe>, hi: Probe) -> Option<Probe> {
        let mut lo = lo.unwrap_or_else(|| self.origin());
        let mut hi = hi;
        for _ in 0..self.opts.max_line_search {
            let width = hi.step - lo.step;
            let mut step = lo.step + 0.5 * width;
            if hi.value.is_finite() {
                // minimiser of the quadratic through (lo, f_lo, slope_lo) and (hi, f_hi)
                let denom = 2.0 * (hi.value - lo.value - lo.slope * width);
                if denom > 0.0 {
                    let t = lo.step - lo.slope * width * width / denom;
                    let (a, b) = if width > 0.0 {
                        (lo.step + 0.1 * width, hi.step - 0.1 * width)
                    } else {
                        (hi.step - 0.1 * width, lo.step + 0.1 * width)
                    };
                    if t.is_finite() {
                        step = t.clamp(a.min(b), a.max(b));
                    }
                }
            }
            if step == lo.step || step == hi.step {
                break;
            }
            let p = self.probe(step);
            if self.acceptable(&p) {
                return Some(p);
            }
            if self.sufficient(&p) && p.value < lo.value {
                if p.slope * (hi.step - lo.step) >= 0.0 {
                    hi = std::mem::replace(&mut lo, p);
                } else {
                    lo = p;
                }
            } else if width > 0.0 && self.still_descending(&p) {
                lo = p;
            } else {
                hi = p;
            }
        }
        (lo.step > 0.0 && lo.value <= self.f0).then_some(lo)
    }
}

/// Minimises `f` from `x0`. The closure receives a point and a zeroed
/// gradient buffer and returns the objective value.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &LbfgsOptions) -> Result<Minimum, Diverged>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut value = f(&x, &mut grad);
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Diverged);
    }
    let mut trace = vec![value];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let termination = loop {
        if inf_norm(&grad) <= opts.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break Termination::MaxIterations;
        }
        let mut dir = two_loop(&grad, &history);
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
        }
        let initial = if history.is_empty() {
            (1.0 / dir.iter().map(|d| d * d).sum::<f64>().sqrt()).min(1.0)
        } else {
            1.0
        };
        let found = LineSearch {
            f: &mut f,
            x0: &x,
            dir: &dir,
            f0: value,
            slope0: slope,
            opts,
        }
        .search(initial);
        let Some(step) = found.filter(|p| p.grad.iter().all(|g| g.is_finite())) else {
            if history.is_empty() {
                break Termination::LineSearchFailed;
            }
            history.clear();
            continue;
        };
        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = step.x;
        grad = step.grad;
        value = step.value;
        trace.push(value);
        iterations += 1;
    };
    Ok(Minimum {
        grad_norm: inf_norm(&grad),
        x,
        value,
        grad,
        iterations,
        termination,
        trace,
    })
}

fn two_loop(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let scale = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= scale);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}
