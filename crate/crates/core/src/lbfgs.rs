//! Limited-memory BFGS directions, used as the quasi-Newton hook of the dual
//! barycenter solver.

use std::collections::VecDeque;

/// Produces a search direction from the current point and gradient.
///
/// The solver calls [`DirectionHook::direction`] once per iteration and
/// [`DirectionHook::accept`] after a step has been taken, so implementations
/// can maintain a gradient history.
pub trait DirectionHook: Send {
    /// Descent direction (the solver will move along `x − t·d`).
    fn direction(&mut self, x: &[f64], grad: &[f64]) -> Vec<f64>;

    /// Records the accepted transition `x_old → x_new`.
    fn accept(&mut self, x_old: &[f64], x_new: &[f64], g_old: &[f64], g_new: &[f64]);

    /// Drops any stored history.
    fn reset(&mut self);
}

/// Two-loop recursion L-BFGS with memory `m`.
#[derive(Debug, Clone)]
pub struct Lbfgs {
    memory: usize,
    /// Scale applied to `−∇` before any curvature pair is available.
    initial_scale: f64,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl Lbfgs {
    pub fn new(memory: usize, initial_scale: f64) -> Self {
        Self { memory: memory.max(1), initial_scale, pairs: VecDeque::new() }
    }

    pub fn stored_pairs(&self) -> usize {
        self.pairs.len()
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl DirectionHook for Lbfgs {
    fn direction(&mut self, _x: &[f64], grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        if self.pairs.is_empty() {
            q.iter_mut().for_each(|v| *v *= self.initial_scale);
            return q;
        }
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let alpha = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qv, yv)| *qv -= alpha * yv);
            alphas.push(alpha);
        }
        let (s, y, _) = self.pairs.back().expect("nonempty");
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), alpha) in self.pairs.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qv, sv)| *qv += (alpha - beta) * sv);
        }
        q
    }

    fn accept(&mut self, x_old: &[f64], x_new: &[f64], g_old: &[f64], g_new: &[f64]) {
        let s: Vec<f64> = x_new.iter().zip(x_old).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(g_old).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy <= 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() || sy <= 0.0 {
            return;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    fn reset(&mut self) {
        self.pairs.clear();
    }
}
