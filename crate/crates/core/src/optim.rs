//! Deterministic full-batch first-order minimization.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{axpy, dot, norm, Vector};
use crate::scalar::Real;

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Fixed step length `step_size` every iteration.
    Constant,
    /// Armijo backtracking from `step_size`, halving on failure.
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Direction {
    /// Negative gradient.
    Gradient,
    /// Limited-memory BFGS two-loop recursion over the last `memory` steps.
    Lbfgs { memory: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig<T> {
    pub max_iters: usize,
    pub grad_tol: T,
    pub step_rule: StepRule,
    pub step_size: T,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOutcome<T> {
    pub x: Vector<T>,
    pub loss: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value at the start and after every iteration.
    pub trace: Vec<T>,
}

struct History<T> {
    s: Vec<Vector<T>>,
    y: Vec<Vector<T>>,
    rho: Vec<T>,
    cap: usize,
}

impl<T: Real> History<T> {
    fn new(cap: usize) -> Self {
        Self {
            s: Vec::new(),
            y: Vec::new(),
            rho: Vec::new(),
            cap,
        }
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    fn push(&mut self, s: Vector<T>, y: Vector<T>) {
        let sy = dot(&s, &y);
        // Skip pairs that violate the curvature condition.
        if !(sy > T::epsilon() * dot(&y, &y)) || self.cap == 0 {
            return;
        }
        if self.s.len() == self.cap {
            self.s.remove(0);
            self.y.remove(0);
            self.rho.remove(0);
        }
        self.rho.push(T::one() / sy);
        self.s.push(s);
        self.y.push(y);
    }

    /// `−H·g` by the two-loop recursion.
    fn direction(&self, g: &[T]) -> Vector<T> {
        let mut q = Vector::from_slice(g);
        let m = self.s.len();
        let mut a = vec![T::zero(); m];
        for i in (0..m).rev() {
            a[i] = self.rho[i] * dot(&self.s[i], &q);
            q.axpy(-a[i], &self.y[i]);
        }
        if let (Some(s), Some(y)) = (self.s.last(), self.y.last()) {
            let gamma = dot(s, y) / dot(y, y);
            for v in q.iter_mut() {
                *v *= gamma;
            }
        }
        for (i, ai) in a.iter().enumerate() {
            let b = self.rho[i] * dot(&self.y[i], &q);
            q.axpy(*ai - b, &self.s[i]);
        }
        for v in q.iter_mut() {
            *v = -*v;
        }
        q
    }
}

/// Minimizes a smooth objective returning `(value, gradient)`.
pub fn minimize<T, F>(
    mut objective: F,
    x0: Vector<T>,
    cfg: &OptimConfig<T>,
) -> Result<OptimOutcome<T>>
where
    T: Real,
    F: FnMut(&[T]) -> Result<(T, Vector<T>)>,
{
    let mut x = x0;
    let (mut f, mut g) = objective(&x)?;
    let mut trace = vec![f];
    let mut history = History::new(match cfg.direction {
        Direction::Gradient => 0,
        Direction::Lbfgs { memory } => memory,
    });
    let c1 = T::lit(ARMIJO_C1);
    let shrink = T::lit(BACKTRACK_SHRINK);
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        let gn = norm(&g);
        if gn <= cfg.grad_tol {
            break;
        }
        let mut dir = history.direction(&g);
        let mut slope = dot(&g, &dir);
        if !(slope < T::zero()) {
            history.clear();
            dir = Vector::from_slice(&g).scaled(-T::one());
            slope = -gn * gn;
        }

        let mut step = cfg.step_size;
        let mut accepted = None;
        match cfg.step_rule {
            StepRule::Constant => {
                let mut cand = x.clone();
                axpy(&mut cand, step, &dir);
                let (fc, gc) = objective(&cand)?;
                accepted = Some((cand, fc, gc));
            }
            StepRule::Backtracking => {
                for _ in 0..MAX_BACKTRACKS {
                    let mut cand = x.clone();
                    axpy(&mut cand, step, &dir);
                    let (fc, gc) = objective(&cand)?;
                    if fc <= f + c1 * step * slope {
                        accepted = Some((cand, fc, gc));
                        break;
                    }
                    step *= shrink;
                }
            }
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            // No sufficient decrease representable: stop at the current point.
            break;
        };

        let mut s = x_new.clone();
        axpy(&mut s, -T::one(), &x);
        let mut y = g_new.clone();
        axpy(&mut y, -T::one(), &g);
        history.push(s, y);

        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
        iterations += 1;
    }

    let grad_norm = norm(&g);
    Ok(OptimOutcome {
        x,
        loss: f,
        grad_norm,
        iterations,
        converged: grad_norm <= cfg.grad_tol,
        trace,
    })
}
