//! Regularized barycenters
//!
//! ```text
//! min_a Σₖ λₖ H_{bₖ}(a) + J(𝒜a),     H_b(a) = W_ε(a, b),
//! ```
//!
//! solved through the dual `min Σₖ λₖ H*_{bₖ}(fₖ) + J*(g)` subject to
//! `𝒜*g + Σₖ λₖ fₖ = 0`. The last potential is eliminated,
//! `f_N = −(𝒜*g + Σ_{k<N} λₖ fₖ)/λ_N`, leaving a smooth term plus `J*(g)`,
//! which forward-backward splitting (optionally FISTA) handles with the
//! proximal map of `J*`. The barycenter is `a = ∇H*_{b_N}(f_N)`.

mod operators;
mod prox;

pub use operators::{estimate_norm, graph_gradient, grid_gradient, identity, GraphGradient, GridGradient, Identity, LinearOperator};
pub use prox::{make_regularizer, prox_tv_conjugate, Regularizer};

use ndarray::{Array2, Axis};

use crate::barycenter::BarycenterProblem;
use crate::cost::LogKernel;
use crate::error::{OtError, Result};
use crate::legendre::{semidual_gradient_batch, semidual_value_batch};
use crate::simplex::Histogram;

pub struct RegularizedOptions {
    /// FISTA extrapolation with restart on objective increase.
    pub accel: bool,
    /// Adapt the Lipschitz estimate below the analytic bound by a
    /// sufficient-decrease test, shrinking it between iterations. Without
    /// it the step is exactly `1/L`.
    pub backtracking: bool,
    /// Threshold on the Euclidean norm of the gradient mapping.
    pub tol: f64,
    pub max_iter: usize,
    /// Dual starting point, e.g. from a previous solve.
    pub warm_start: Option<RegularizedState>,
}

impl Default for RegularizedOptions {
    fn default() -> Self {
        Self { accel: true, backtracking: true, tol: 1e-8, max_iter: 20_000, warm_start: None }
    }
}

/// Dual variables in the input order of the problem. `f` holds all `N`
/// potentials, including the eliminated one.
#[derive(Debug, Clone)]
pub struct RegularizedState {
    pub f: Array2<f64>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RegularizedSolution {
    pub barycenter: Histogram,
    pub state: RegularizedState,
    /// Dual objective `Σ λₖ H*(fₖ) + J*(g)` at every accepted iterate.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub gradient_mapping: f64,
    /// Analytic Lipschitz bound of the smooth part.
    pub lipschitz_bound: f64,
    /// Number of FISTA restarts triggered by an objective increase.
    pub restarts: usize,
    /// Whether the gradient-mapping tolerance was reached.
    pub converged: bool,
}

/// `(1/ε)(max_{k<N} λₖ + (‖𝒜‖² + Σ_{k<N} λₖ²)/λ_N)` for the smooth part
/// with `f_N` eliminated.
pub fn lipschitz_bound(weights: &[f64], pivot: usize, op_norm: f64, epsilon: f64) -> f64 {
    let ln = weights[pivot];
    let others = weights.iter().enumerate().filter(|&(k, _)| k != pivot).map(|(_, &w)| w);
    let max = others.clone().fold(0.0, f64::max);
    let sq: f64 = others.map(|w| w * w).sum();
    (max + (op_norm * op_norm + sq) / ln) / epsilon
}

struct Smooth<'a, K: LogKernel, A: LinearOperator + ?Sized> {
    problem: &'a BarycenterProblem<'a, K>,
    op: &'a A,
    /// Input eliminated through the constraint.
    pivot: usize,
}

/// Point of the reduced problem: the free potentials (pivot column ignored)
/// and `g`.
#[derive(Clone)]
struct Point {
    f: Array2<f64>,
    g: Vec<f64>,
}

impl Point {
    fn axpy(&self, t: f64, d: &Point) -> Point {
        Point { f: &self.f + &(&d.f * t), g: self.g.iter().zip(&d.g).map(|(x, y)| x + t * y).collect() }
    }

    fn sub(&self, o: &Point) -> Point {
        self.axpy(-1.0, o)
    }

    fn dot(&self, o: &Point) -> f64 {
        self.f.iter().zip(o.f.iter()).map(|(a, b)| a * b).sum::<f64>()
            + self.g.iter().zip(&o.g).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Smooth part at one point. The gradient is filled in on demand, since
/// candidates rejected by the line search or a restart only need the value.
struct SmoothEval {
    value: f64,
    full_f: Array2<f64>,
    log_ct: Array2<f64>,
    grad: Option<Point>,
    /// `∇H*_{b_N}(f_N)`, set together with `grad`.
    a: Vec<f64>,
}

impl<K: LogKernel, A: LinearOperator + ?Sized> Smooth<'_, K, A> {
    fn full_potentials(&self, x: &Point) -> Array2<f64> {
        let lam = self.problem.weights();
        let ln = lam[self.pivot];
        let mut f = x.f.clone();
        let atg = self.op.adjoint(&x.g);
        let mut fn_col = atg;
        for (k, col) in x.f.axis_iter(Axis(1)).enumerate() {
            if k != self.pivot && lam[k] != 0.0 {
                fn_col.iter_mut().zip(col.iter()).for_each(|(s, v)| *s += lam[k] * v);
            }
        }
        for (dst, s) in f.column_mut(self.pivot).iter_mut().zip(&fn_col) {
            *dst = -s / ln;
        }
        f
    }

    fn value(&self, x: &Point) -> Result<SmoothEval> {
        let lam = self.problem.weights();
        let eps = self.problem.kernel().epsilon();
        let full_f = self.full_potentials(x);
        let (values, log_ct) = semidual_value_batch(&full_f, self.problem.inputs(), self.problem.kernel())?;
        // Batch values carry a −ε offset relative to H*; Σλ = 1 restores it once.
        let value = values.iter().zip(lam).map(|(v, w)| v * w).sum::<f64>() + eps;
        Ok(SmoothEval { value, full_f, log_ct, grad: None, a: Vec::new() })
    }

    fn eval(&self, x: &Point) -> Result<SmoothEval> {
        let mut e = self.value(x)?;
        self.complete(&mut e);
        Ok(e)
    }

    fn complete(&self, e: &mut SmoothEval) {
        if e.grad.is_some() {
            return;
        }
        let lam = self.problem.weights();
        let delta = semidual_gradient_batch(&e.full_f, &e.log_ct, self.problem.kernel());
        let dn = delta.column(self.pivot).to_owned();
        let mut gf = Array2::zeros(e.full_f.dim());
        for k in 0..lam.len() {
            if k == self.pivot {
                continue;
            }
            for i in 0..gf.nrows() {
                gf[[i, k]] = lam[k] * (delta[[i, k]] - dn[i]);
            }
        }
        let gg: Vec<f64> = self.op.forward(dn.as_slice().expect("contiguous")).into_iter().map(|v| -v).collect();
        e.grad = Some(Point { f: gf, g: gg });
        e.a = dn.to_vec();
    }
}

impl SmoothEval {
    fn grad(&self) -> &Point {
        self.grad.as_ref().expect("gradient completed")
    }
}

fn prox_step(x: &Point, grad: &Point, step: f64, reg: &Regularizer, site: usize) -> Result<Point> {
    let mut p = x.axpy(-step, grad);
    p.g = reg.prox_conjugate(&p.g, step, site)?;
    Ok(p)
}

/// Forward-backward splitting on the dual with `f_N` eliminated; errors
/// out at the iteration limit, carrying the last primal estimate.
pub fn solve_regularized<K: LogKernel, A: LinearOperator + ?Sized>(
    problem: &BarycenterProblem<K>,
    op: &A,
    reg: &Regularizer,
    opts: RegularizedOptions,
) -> Result<RegularizedSolution> {
    let max_iter = opts.max_iter;
    let sol = run_regularized(problem, op, reg, opts)?;
    if sol.converged {
        Ok(sol)
    } else {
        Err(OtError::NotConverged { iterations: max_iter, residual: sol.gradient_mapping, best: Some(sol.barycenter.into_vec()) })
    }
}

/// Same iteration as [`solve_regularized`], returning the final state
/// whether or not the tolerance was reached.
pub fn run_regularized<K: LogKernel, A: LinearOperator + ?Sized>(
    problem: &BarycenterProblem<K>,
    op: &A,
    reg: &Regularizer,
    opts: RegularizedOptions,
) -> Result<RegularizedSolution> {
    let n = problem.dim();
    let nk = problem.num_inputs();
    if op.input_dim() != n {
        return Err(OtError::Shape(format!("operator acts on {} entries, barycenter has {n}", op.input_dim())));
    }
    let reg = make_regularizer(reg.clone())?;
    let lam = problem.weights();
    let eps = problem.kernel().epsilon();
    let pivot = if lam[nk - 1] > 0.0 {
        nk - 1
    } else {
        (0..nk).max_by(|&i, &j| lam[i].total_cmp(&lam[j])).expect("nonempty")
    };
    let op_norm = op.norm_bound();
    if !(op_norm.is_finite() && op_norm >= 0.0) {
        return Err(OtError::Domain(format!("operator norm bound {op_norm} is not usable")));
    }
    let l_bound = lipschitz_bound(lam, pivot, op_norm, eps);
    let site = op.site_dim();
    let d = op.output_dim();
    let smooth = Smooth { problem, op, pivot };

    let mut x = match opts.warm_start {
        Some(s) => {
            if s.f.dim() != (n, nk) || s.g.len() != d {
                return Err(OtError::Shape("warm start does not match the problem".into()));
            }
            Point { f: s.f, g: s.g }
        }
        None => Point { f: Array2::zeros((n, nk)), g: vec![0.0; d] },
    };
    // Make the starting point feasible for J*.
    x.g = reg.prox_conjugate(&x.g, 0.0, site)?;
    x.f.column_mut(pivot).fill(0.0);

    let total = |e: &SmoothEval, p: &Point| e.value + reg.conjugate_value(&p.g, site);
    let mut ex = smooth.eval(&x)?;
    let mut phi_x = total(&ex, &x);
    let mut trace = vec![phi_x];
    let mut y = x.clone();
    let mut ey_grad = ex.grad().clone();
    let mut ey_value = ex.value;
    let mut t_mom: f64 = 1.0;
    let l_floor = l_bound * 2f64.powi(-30);
    let mut l = if opts.backtracking { l_bound / 64.0 } else { l_bound };
    let mut restarts = 0;
    let mut gm = f64::INFINITY;
    let mut restarted = true;
    let mut converged = false;
    let mut iterations = opts.max_iter;

    for it in 0..opts.max_iter {
        // Majorization test at y, step 1/L. Once the quadratic term drops
        // below the rounding error of the values the test says nothing, and
        // the estimate is frozen.
        let mut resolved = true;
        let (xn, exn) = loop {
            let cand = prox_step(&y, &ey_grad, 1.0 / l, &reg, site)?;
            let ec = smooth.value(&cand)?;
            if !opts.backtracking || l >= l_bound {
                break (cand, ec);
            }
            let diff = cand.sub(&y);
            let quad = 0.5 * l * diff.dot(&diff);
            if quad <= 64.0 * f64::EPSILON * ey_value.abs().max(1.0) {
                resolved = false;
                break (cand, ec);
            }
            if ec.value <= ey_value + ey_grad.dot(&diff) + quad {
                break (cand, ec);
            }
            l = (2.0 * l).min(l_bound);
        };
        let step_norm = xn.sub(&y).dot(&xn.sub(&y)).sqrt();
        gm = step_norm * l;
        let phi_n = total(&exn, &xn);

        if opts.accel && phi_n > phi_x && !restarted {
            // Restart: redo the step from x without momentum.
            restarts += 1;
            t_mom = 1.0;
            y = x.clone();
            smooth.complete(&mut ex);
            ey_grad = ex.grad().clone();
            ey_value = ex.value;
            restarted = true;
            continue;
        }

        let prev = std::mem::replace(&mut x, xn);
        ex = exn;
        phi_x = phi_n;
        trace.push(phi_x);
        if gm <= opts.tol {
            converged = true;
            iterations = it + 1;
            break;
        }
        restarted = false;
        if opts.accel {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_mom * t_mom).sqrt());
            let beta = (t_mom - 1.0) / t_next;
            t_mom = t_next;
            y = x.axpy(beta, &x.sub(&prev));
            if beta != 0.0 {
                let ey = smooth.eval(&y)?;
                ey_grad = ey.grad.expect("gradient completed");
                ey_value = ey.value;
            } else {
                smooth.complete(&mut ex);
                ey_grad = ex.grad().clone();
                ey_value = ex.value;
            }
        } else {
            y = x.clone();
            smooth.complete(&mut ex);
            ey_grad = ex.grad().clone();
            ey_value = ex.value;
        }
        if opts.backtracking && resolved {
            // Let the estimate drift back down; gently under momentum.
            l = (if opts.accel { 0.9 } else { 0.5 } * l).max(l_floor);
        }
    }
    smooth.complete(&mut ex);
    let barycenter = Histogram::normalized(ex.a.iter().map(|v| v.max(0.0)).collect())?;
    Ok(RegularizedSolution {
        barycenter,
        state: RegularizedState { f: ex.full_f, g: x.g },
        objective_trace: trace,
        iterations,
        gradient_mapping: gm,
        lipschitz_bound: l_bound,
        restarts,
        converged,
    })
}
