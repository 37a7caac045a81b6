//! Smoothed Wasserstein barycenters through the dual problem
//!
//! ```text
//! min_{f₁..f_N} Σₖ λₖ H*_{bₖ}(fₖ)   subject to   Σₖ λₖ fₖ = 0,
//! ```
//!
//! whose objective and gradient are closed-form (see [`crate::legendre`]).
//! The barycenter is read back as `a = ∇H*_{bₖ}(fₖ)` for any `k`; while the
//! iterates are not optimal the solver reports the column average of the
//! gradient matrix `Δ` and monitors the spread of its rows.

use ndarray::{Array1, Array2, Axis};

use crate::cost::{check_rows, CostMatrix, LogKernel};
use crate::entropic::{ctransform_of_f, sinkhorn_potentials, SinkhornOptions};
use crate::error::{OtError, Result};
use crate::lbfgs::DirectionHook;
use crate::legendre::semidual_conjugate_batch;
use crate::simplex::{Histogram, SIMPLEX_TOL};

/// Input histograms `B` (`m × N`), weights `λ ∈ Σ_N` and the Gibbs kernel.
pub struct BarycenterProblem<'k, K: LogKernel> {
    inputs: Array2<f64>,
    weights: Vec<f64>,
    kernel: &'k K,
}

impl<'k, K: LogKernel> BarycenterProblem<'k, K> {
    pub fn new(inputs: Array2<f64>, weights: Vec<f64>, kernel: &'k K) -> Result<Self> {
        let (n, m) = kernel.shape();
        if inputs.nrows() != m {
            return Err(OtError::Shape(format!("inputs have {} rows, kernel has {m} columns", inputs.nrows())));
        }
        if inputs.ncols() == 0 {
            return Err(OtError::Domain("no input histograms".into()));
        }
        if weights.len() != inputs.ncols() {
            return Err(OtError::Shape(format!("{} weights for {} inputs", weights.len(), inputs.ncols())));
        }
        for (k, col) in inputs.axis_iter(Axis(1)).enumerate() {
            if col.iter().any(|&v| !(v > 0.0)) {
                return Err(OtError::Domain(format!("input {k} is not strictly positive")));
            }
            if (col.sum() - 1.0).abs() > SIMPLEX_TOL {
                return Err(OtError::Domain(format!("input {k} has mass {}", col.sum())));
            }
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
            return Err(OtError::Domain("barycenter weights must lie in the simplex".into()));
        }
        let _ = n;
        Ok(Self { inputs, weights, kernel })
    }

    /// Builds the input matrix from a list of histograms.
    pub fn from_histograms(inputs: &[Histogram], weights: Vec<f64>, kernel: &'k K) -> Result<Self> {
        let m = inputs.first().map(|h| h.len()).unwrap_or(0);
        if inputs.iter().any(|h| h.len() != m) {
            return Err(OtError::Shape("input histograms of different lengths".into()));
        }
        let b = Array2::from_shape_fn((m, inputs.len()), |(i, k)| inputs[k][i]);
        Self::new(b, weights, kernel)
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kernel(&self) -> &'k K {
        self.kernel
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.ncols()
    }

    /// Length `n` of the barycenter.
    pub fn dim(&self) -> usize {
        self.kernel.shape().0
    }
}

/// Objective, weighted gradient and raw gradient matrix `Δ` at one `F`.
#[derive(Debug, Clone)]
pub struct DualEval {
    pub objective: f64,
    /// Column `k` is `λₖ Δ·ₖ`.
    pub gradient: Array2<f64>,
    pub delta: Array2<f64>,
}

/// `Σ λₖ H*(fₖ)` (vectorized convention, see
/// [`semidual_conjugate_batch`]) and its gradient.
pub fn dual_objective_grad<K: LogKernel>(f: &Array2<f64>, problem: &BarycenterProblem<K>) -> Result<DualEval> {
    check_rows(problem.kernel, "F", f.nrows())?;
    let (values, delta) = semidual_conjugate_batch(f, &problem.inputs, problem.kernel)?;
    let objective = values.iter().zip(&problem.weights).map(|(v, w)| v * w).sum();
    let mut gradient = delta.clone();
    for (mut col, &w) in gradient.axis_iter_mut(Axis(1)).zip(&problem.weights) {
        col.mapv_inplace(|v| v * w);
    }
    Ok(DualEval { objective, gradient, delta })
}

/// Euclidean projection onto `{F : Fλ = 0}`.
pub fn project_constraint(f: &Array2<f64>, weights: &[f64]) -> Array2<f64> {
    let lam = Array1::from(weights.to_vec());
    let norm2 = lam.dot(&lam);
    assert!(norm2 > 0.0, "weights must not all vanish");
    let fl = f.dot(&lam);
    let mut out = f.clone();
    for ((i, k), v) in out.indexed_iter_mut() {
        *v -= fl[i] * lam[k] / norm2;
    }
    out
}

/// Sum over rows of the standard deviation across columns of `Δ`.
pub fn linewise_std_monitor(delta: &Array2<f64>) -> f64 {
    let nn = delta.ncols() as f64;
    delta
        .axis_iter(Axis(0))
        .map(|row| {
            let mean = row.sum() / nn;
            (row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nn).sqrt()
        })
        .sum()
}

/// Step-size policy for [`solve_barycenter`].
pub enum StepRule {
    /// Constant step; `None` uses `ε/2`.
    Fixed(Option<f64>),
    /// Armijo backtracking that halves the step until the objective decreases.
    Backtracking { initial: Option<f64> },
    /// Caller-supplied direction (e.g. [`crate::lbfgs::Lbfgs`]) with Armijo
    /// backtracking from unit step.
    QuasiNewton(Box<dyn DirectionHook>),
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Fixed(None)
    }
}

pub struct BarycenterOptions {
    pub step: StepRule,
    /// Threshold on the linewise-std monitor.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting dual iterate; projected before use. Defaults to `F = 0`.
    pub init: Option<Array2<f64>>,
}

impl Default for BarycenterOptions {
    fn default() -> Self {
        Self { step: StepRule::default(), tol: 1e-6, max_iter: 10_000, init: None }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TraceEntry {
    pub objective: f64,
    pub monitor: f64,
    pub step: f64,
}

/// Final dual state.
#[derive(Debug, Clone)]
pub struct DualIterate {
    pub f: Array2<f64>,
    pub objective: f64,
    pub monitor: f64,
}

#[derive(Debug, Clone)]
pub struct BarycenterSolution {
    pub barycenter: Histogram,
    pub iterate: DualIterate,
    /// Gradient matrix `Δ` at the final iterate.
    pub delta: Array2<f64>,
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    /// Number of batched transform evaluations (each costs `2N` kernel products).
    pub evaluations: usize,
    /// Whether the monitor dropped below `tol`.
    pub converged: bool,
}

fn column_average(delta: &Array2<f64>) -> Vec<f64> {
    let nn = delta.ncols() as f64;
    delta.sum_axis(Axis(1)).iter().map(|v| v / nn).collect()
}

fn to_histogram(v: Vec<f64>) -> Result<Histogram> {
    Histogram::normalized(v.into_iter().map(|x| x.max(0.0)).collect())
}

fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

fn frob_dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Gradient descent on the constrained dual; returns `ã = Δ1/N` once the
/// linewise-std monitor drops below `tol`.
pub fn solve_barycenter<K: LogKernel>(problem: &BarycenterProblem<K>, opts: BarycenterOptions) -> Result<BarycenterSolution> {
    let sol = run_barycenter(problem, opts)?;
    if sol.converged {
        Ok(sol)
    } else {
        Err(OtError::NotConverged {
            iterations: sol.iterations,
            residual: sol.iterate.monitor,
            best: Some(sol.barycenter.into_vec()),
        })
    }
}

/// As [`solve_barycenter`], but an exhausted iteration budget is reported
/// through `converged` instead of an error, keeping the trace.
pub fn run_barycenter<K: LogKernel>(
    problem: &BarycenterProblem<K>,
    mut opts: BarycenterOptions,
) -> Result<BarycenterSolution> {
    let eps = problem.kernel.epsilon();
    let n = problem.dim();
    let nk = problem.num_inputs();
    let lam = problem.weights.clone();
    let mut f = match opts.init.take() {
        Some(f0) => {
            if f0.dim() != (n, nk) {
                return Err(OtError::Shape(format!("initial F is {:?}, expected {:?}", f0.dim(), (n, nk))));
            }
            project_constraint(&f0, &lam)
        }
        None => Array2::zeros((n, nk)),
    };
    let mut eval = dual_objective_grad(&f, problem)?;
    let mut evaluations = 1;
    let mut grad = project_constraint(&eval.gradient, &lam);
    let mut trace = Vec::new();
    let mut tau = match &opts.step {
        StepRule::Fixed(t) => t.unwrap_or(0.5 * eps),
        StepRule::Backtracking { initial } => initial.unwrap_or(0.5 * eps),
        StepRule::QuasiNewton(_) => 1.0,
    };
    const ARMIJO: f64 = 1e-4;

    for it in 0..=opts.max_iter {
        let monitor = linewise_std_monitor(&eval.delta);
        trace.push(TraceEntry { objective: eval.objective, monitor, step: tau });
        if monitor < opts.tol {
            let barycenter = to_histogram(column_average(&eval.delta))?;
            return Ok(BarycenterSolution {
                barycenter,
                iterate: DualIterate { f, objective: eval.objective, monitor },
                delta: eval.delta,
                trace,
                iterations: it,
                evaluations,
                converged: true,
            });
        }
        if it == opts.max_iter {
            break;
        }
        match &mut opts.step {
            StepRule::Fixed(_) => {
                f = project_constraint(&(&f - &(&grad * tau)), &lam);
                eval = dual_objective_grad(&f, problem)?;
                evaluations += 1;
                grad = project_constraint(&eval.gradient, &lam);
            }
            StepRule::Backtracking { .. } => {
                let g2 = frob_dot(&grad, &grad);
                let mut t = 2.0 * tau;
                loop {
                    let cand = project_constraint(&(&f - &(&grad * t)), &lam);
                    let ce = dual_objective_grad(&cand, problem)?;
                    evaluations += 1;
                    if ce.objective <= eval.objective - ARMIJO * t * g2 || t < 1e-16 * eps {
                        tau = t;
                        f = cand;
                        eval = ce;
                        break;
                    }
                    t *= 0.5;
                }
                grad = project_constraint(&eval.gradient, &lam);
            }
            StepRule::QuasiNewton(hook) => {
                let xg = flat(&grad);
                let mut dir_flat = hook.direction(&flat(&f), &xg);
                let mut slope: f64 = dir_flat.iter().zip(&xg).map(|(d, g)| d * g).sum();
                let mut t = 1.0;
                if !(slope > 0.0) {
                    hook.reset();
                    dir_flat = xg.iter().map(|g| g * 0.5 * eps).collect();
                    slope = dir_flat.iter().zip(&xg).map(|(d, g)| d * g).sum();
                }
                let dir = project_constraint(&Array2::from_shape_vec((n, nk), dir_flat).expect("shape"), &lam);
                let mut accepted = None;
                for _ in 0..60 {
                    let cand = project_constraint(&(&f - &(&dir * t)), &lam);
                    let ce = dual_objective_grad(&cand, problem)?;
                    evaluations += 1;
                    // Allow for roundoff in the objective once decreases reach working precision.
                    let noise = 8.0 * f64::EPSILON * eval.objective.abs().max(1.0);
                    if ce.objective <= eval.objective - ARMIJO * t * slope + noise {
                        accepted = Some((cand, ce));
                        break;
                    }
                    t *= 0.5;
                }
                match accepted {
                    Some((cand, ce)) => {
                        let new_grad = project_constraint(&ce.gradient, &lam);
                        hook.accept(&flat(&f), &flat(&cand), &flat(&grad), &flat(&new_grad));
                        f = cand;
                        eval = ce;
                        grad = new_grad;
                        tau = t;
                    }
                    None => {
                        // No decrease achievable at working precision.
                        hook.reset();
                        break;
                    }
                }
            }
        }
    }
    let monitor = linewise_std_monitor(&eval.delta);
    Ok(BarycenterSolution {
        barycenter: to_histogram(column_average(&eval.delta))?,
        iterate: DualIterate { f, objective: eval.objective, monitor },
        delta: eval.delta,
        iterations: trace.len() - 1,
        trace,
        evaluations,
        converged: false,
    })
}

/// Gradient of `a ↦ Σ λₖ W_ε(a, bₖ)` from Sinkhorn potentials: `Σ λₖ fₖ`,
/// i.e. `ε Σ λₖ log uₖ` for the left scalings. Defined up to an additive
/// constant; accuracy is limited by `sinkhorn_tol`.
pub fn smooth_primal_gradient<K: LogKernel>(
    a: &Histogram,
    problem: &BarycenterProblem<K>,
    sinkhorn_tol: f64,
) -> Result<Vec<f64>> {
    check_rows(problem.kernel, "a", a.len())?;
    if !a.is_positive() {
        return Err(OtError::Domain("smooth primal gradient needs a strictly positive barycenter".into()));
    }
    let mut grad = vec![0.0; a.len()];
    let opts = SinkhornOptions { tol: sinkhorn_tol, ..SinkhornOptions::default() };
    for (k, &w) in problem.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let b = problem.inputs.column(k).to_vec();
        let sol = sinkhorn_potentials(a, &b, problem.kernel, &opts)?;
        grad.iter_mut().zip(&sol.potentials.f).for_each(|(g, f)| *g += w * f);
    }
    Ok(grad)
}

/// `Σ λₖ W_ε(a, bₖ)` evaluated with Sinkhorn.
pub fn primal_objective<K: LogKernel>(a: &[f64], problem: &BarycenterProblem<K>, sinkhorn_tol: f64) -> Result<f64> {
    let opts = SinkhornOptions { tol: sinkhorn_tol, ..SinkhornOptions::default() };
    let mut total = 0.0;
    for (k, &w) in problem.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let b = problem.inputs.column(k).to_vec();
        total += w * sinkhorn_potentials(a, &b, problem.kernel, &opts)?.dual_value;
    }
    Ok(total)
}

/// Unregularized transforms `H*_{bₖ}(fₖ) = −⟨fₖ^{c,0}, bₖ⟩` and one
/// subgradient per column.
#[derive(Debug, Clone)]
pub struct NonsmoothEval {
    pub values: Vec<f64>,
    /// `Σ λₖ values[k]`.
    pub objective: f64,
    pub subgradient: Array2<f64>,
}

/// Closed-form subgradients of the `ε = 0` dual: for every `j` the mass
/// `bₖⱼ` goes to the lowest index `i` minimizing `Cᵢⱼ − fₖᵢ`.
pub fn nonsmooth_dual_subgradient(
    f: &Array2<f64>,
    inputs: &Array2<f64>,
    weights: &[f64],
    cost: &CostMatrix,
) -> Result<NonsmoothEval> {
    let (n, m) = cost.shape();
    if f.nrows() != n || inputs.nrows() != m || f.ncols() != inputs.ncols() || weights.len() != f.ncols() {
        return Err(OtError::Shape("nonsmooth dual: inconsistent shapes".into()));
    }
    let c = cost.entries();
    let mut sub = Array2::zeros((n, f.ncols()));
    let mut values = Vec::with_capacity(f.ncols());
    for k in 0..f.ncols() {
        let fk = f.column(k).to_vec();
        let bk = inputs.column(k).to_vec();
        let fc = ctransform_of_f(&fk, &bk, cost, 0.0)?;
        values.push(-fc.iter().zip(&bk).map(|(x, w)| x * w).sum::<f64>());
        for j in 0..m {
            let mut best = (f64::INFINITY, 0);
            for i in 0..n {
                let v = c[[i, j]] - fk[i];
                if v < best.0 {
                    best = (v, i);
                }
            }
            sub[[best.1, k]] += bk[j];
        }
    }
    let objective = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    Ok(NonsmoothEval { values, objective, subgradient: sub })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lbfgs::Lbfgs;
    use crate::legendre::semidual_conjugate;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn line_problem_kernel(n: usize, eps: f64) -> crate::cost::GibbsKernel {
        CostMatrix::grid_1d(n, 0.0, 1.0).unwrap().gibbs(eps).unwrap()
    }

    fn bump(n: usize, center: f64, width: f64) -> Vec<f64> {
        let v: Vec<f64> = (0..n)
            .map(|i| {
                let x = i as f64 / (n - 1) as f64;
                (-(x - center).powi(2) / (2.0 * width * width)).exp() + 1e-3
            })
            .collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    #[test]
    fn projection_examples() {
        let lam = [0.25, 0.75];
        let f = array![[3.0, -1.0], [0.0, 0.0]];
        assert_eq!(project_constraint(&f, &lam), f);
        let g = array![[1.0], [-2.0]];
        assert_eq!(project_constraint(&g, &[1.0]), Array2::<f64>::zeros((2, 1)));
        let r = array![[0.3, 1.2, -0.4], [2.0, 0.1, 0.7]];
        let w = [0.2, 0.5, 0.3];
        let p1 = project_constraint(&r, &w);
        let p2 = project_constraint(&p1, &w);
        for (x, y) in p1.iter().zip(p2.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
        let fl = p1.dot(&Array1::from(w.to_vec()));
        assert!(fl.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn single_input_returns_gradient_at_zero() {
        let k = line_problem_kernel(8, 0.05);
        let b = bump(8, 0.3, 0.1);
        let problem = BarycenterProblem::new(Array2::from_shape_fn((8, 1), |(i, _)| b[i]), vec![1.0], &k).unwrap();
        let sol = solve_barycenter(&problem, BarycenterOptions::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        let expect = semidual_conjugate(&vec![0.0; 8], &b, &k, false).unwrap().gradient;
        let l1: f64 = sol.barycenter.iter().zip(&expect).map(|(x, y)| (x - y).abs()).sum();
        assert!(l1 <= 1e-6);
    }

    #[test]
    fn duplicated_input_matches_single() {
        let k = line_problem_kernel(10, 0.05);
        let b = bump(10, 0.6, 0.15);
        let single = BarycenterProblem::new(Array2::from_shape_fn((10, 1), |(i, _)| b[i]), vec![1.0], &k).unwrap();
        let double =
            BarycenterProblem::new(Array2::from_shape_fn((10, 2), |(i, _)| b[i]), vec![0.5, 0.5], &k).unwrap();
        let a1 = solve_barycenter(&single, BarycenterOptions::default()).unwrap().barycenter;
        let a2 = solve_barycenter(&double, BarycenterOptions::default()).unwrap().barycenter;
        let l1: f64 = a1.iter().zip(a2.iter()).map(|(x, y)| (x - y).abs()).sum();
        assert!(l1 <= 1e-6, "{l1}");
    }

    #[test]
    fn fixed_step_descent_is_monotone() {
        let k = line_problem_kernel(12, 0.05);
        let b1 = bump(12, 0.2, 0.08);
        let b2 = bump(12, 0.8, 0.12);
        let b = Array2::from_shape_fn((12, 2), |(i, c)| if c == 0 { b1[i] } else { b2[i] });
        let problem = BarycenterProblem::new(b, vec![0.4, 0.6], &k).unwrap();
        let opts = BarycenterOptions { tol: 1e-7, max_iter: 20_000, ..Default::default() };
        let sol = solve_barycenter(&problem, opts).unwrap();
        for w in sol.trace.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-15);
        }
        let fl = sol.iterate.f.dot(&Array1::from(vec![0.4, 0.6]));
        assert!(fl.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn step_rules_agree() {
        let k = line_problem_kernel(12, 0.05);
        let b1 = bump(12, 0.2, 0.08);
        let b2 = bump(12, 0.7, 0.12);
        let b = Array2::from_shape_fn((12, 2), |(i, c)| if c == 0 { b1[i] } else { b2[i] });
        let problem = BarycenterProblem::new(b, vec![0.5, 0.5], &k).unwrap();
        let run = |step| {
            solve_barycenter(&problem, BarycenterOptions { step, tol: 1e-8, max_iter: 100_000, init: None })
                .unwrap()
                .barycenter
        };
        let a_fixed = run(StepRule::Fixed(None));
        let a_bt = run(StepRule::Backtracking { initial: None });
        let a_qn = run(StepRule::QuasiNewton(Box::new(Lbfgs::new(10, 0.025))));
        for (x, (y, z)) in a_fixed.iter().zip(a_bt.iter().zip(a_qn.iter())) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-6);
            assert_abs_diff_eq!(x, z, epsilon = 1e-6);
        }
    }

    #[test]
    fn iteration_limit_carries_best_iterate() {
        let k = line_problem_kernel(12, 0.02);
        let b1 = bump(12, 0.1, 0.05);
        let b2 = bump(12, 0.9, 0.05);
        let b = Array2::from_shape_fn((12, 2), |(i, c)| if c == 0 { b1[i] } else { b2[i] });
        let problem = BarycenterProblem::new(b, vec![0.5, 0.5], &k).unwrap();
        let err = solve_barycenter(&problem, BarycenterOptions { tol: 1e-12, max_iter: 3, ..Default::default() })
            .unwrap_err();
        match err {
            OtError::NotConverged { iterations: 3, residual, best: Some(a) } => {
                assert!(residual > 0.0);
                assert_abs_diff_eq!(a.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_problems_rejected() {
        let k = line_problem_kernel(3, 0.1);
        assert!(BarycenterProblem::new(array![[0.5], [0.5], [0.0]], vec![1.0], &k).is_err());
        assert!(BarycenterProblem::new(array![[0.2], [0.3], [0.4]], vec![1.0], &k).is_err());
        assert!(BarycenterProblem::new(array![[0.2], [0.3], [0.5]], vec![0.5], &k).is_err());
        assert!(BarycenterProblem::new(array![[0.5], [0.5]], vec![1.0], &k).is_err());
    }

    #[test]
    fn nonsmooth_examples() {
        let one = CostMatrix::new(array![[0.0]]).unwrap();
        let e = nonsmooth_dual_subgradient(&array![[0.0]], &array![[1.0]], &[1.0], &one).unwrap();
        assert_eq!(e.values, vec![0.0]);
        assert_eq!(e.subgradient, array![[1.0]]);

        let ties = CostMatrix::new(Array2::zeros((2, 2))).unwrap();
        let e = nonsmooth_dual_subgradient(&Array2::zeros((2, 1)), &array![[0.3], [0.7]], &[1.0], &ties).unwrap();
        assert_eq!(e.subgradient, array![[1.0], [0.0]]);
    }

    #[test]
    fn nonsmooth_matches_small_epsilon_limit() {
        let c = CostMatrix::new(array![[0.0, 1.0, 4.0], [1.0, 0.0, 1.0], [4.0, 1.0, 0.0]]).unwrap();
        let f = array![[0.1], [-0.2], [0.05]];
        let b = array![[0.2], [0.5], [0.3]];
        let hard = nonsmooth_dual_subgradient(&f, &b, &[1.0], &c).unwrap();
        let k = c.gibbs(1e-4).unwrap();
        let soft = semidual_conjugate(&f.column(0).to_vec(), &b.column(0).to_vec(), &k, false).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(hard.subgradient[[i, 0]], soft.gradient[i], epsilon = 1e-6);
        }
        assert_abs_diff_eq!(hard.subgradient.sum(), 1.0, epsilon = 1e-15);
    }
}
