//! Wasserstein gradient flows by JKO stepping
//!
//! ```text
//! a_{k+1} = argmin_a H_{a_k}(a) + τ J(𝒜a)
//! ```
//!
//! Each step is a regularized barycenter with a single input `a_k`, where
//! the time step multiplies the regularizer strength.

use ndarray::Array2;

use crate::barycenter::BarycenterProblem;
use crate::cost::LogKernel;
use crate::entropic::{is_symmetric, self_transport, sinkhorn_potentials, SinkhornOptions};
use crate::error::{OtError, Result};
use crate::regularized::{solve_regularized, LinearOperator, RegularizedOptions, RegularizedState, Regularizer};
use crate::simplex::Histogram;

/// Sweep budget for the Sinkhorn evaluations of the descent check.
const SINKHORN_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone)]
pub struct FlowOptions {
    /// Dual solver settings for every step (the warm start is managed by the flow).
    pub accel: bool,
    pub tol: f64,
    pub max_iter: usize,
    /// Sinkhorn tolerance used to evaluate `H_{a_k}` for the descent check.
    pub sinkhorn_tol: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { accel: true, tol: 1e-8, max_iter: 20_000, sinkhorn_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct JkoStep {
    pub a: Histogram,
    pub state: RegularizedState,
    pub iterations: usize,
    pub gradient_mapping: f64,
}

fn regularized_options(opts: &FlowOptions, warm: Option<RegularizedState>) -> RegularizedOptions {
    RegularizedOptions { accel: opts.accel, backtracking: true, tol: opts.tol, max_iter: opts.max_iter, warm_start: warm }
}

fn step_impl<K: LogKernel, A: LinearOperator + ?Sized>(
    a_prev: &Histogram,
    kernel: &K,
    tau_flow: f64,
    op: &A,
    reg: &Regularizer,
    opts: &FlowOptions,
    warm: Option<RegularizedState>,
) -> Result<JkoStep> {
    if !(tau_flow >= 0.0 && tau_flow.is_finite()) {
        return Err(OtError::Domain(format!("time step must be finite and ≥ 0, got {tau_flow}")));
    }
    if !a_prev.is_positive() {
        return Err(OtError::Domain("JKO step needs a strictly positive previous iterate".into()));
    }
    let b = Array2::from_shape_fn((a_prev.len(), 1), |(i, _)| a_prev[i]);
    let problem = BarycenterProblem::new(b, vec![1.0], kernel)?;
    let sol = solve_regularized(&problem, op, &reg.scaled(tau_flow), regularized_options(opts, warm))?;
    Ok(JkoStep { a: sol.barycenter, state: sol.state, iterations: sol.iterations, gradient_mapping: sol.gradient_mapping })
}

/// One implicit step from `a_prev`.
pub fn jko_step<K: LogKernel, A: LinearOperator + ?Sized>(
    a_prev: &Histogram,
    kernel: &K,
    tau_flow: f64,
    op: &A,
    reg: &Regularizer,
    opts: &FlowOptions,
) -> Result<JkoStep> {
    step_impl(a_prev, kernel, tau_flow, op, reg, opts, None)
}

/// `H_{a_prev}(a) + τ J(𝒜a)`, with `H` evaluated by Sinkhorn.
pub fn jko_objective<K: LogKernel, A: LinearOperator + ?Sized>(
    a: &[f64],
    a_prev: &[f64],
    kernel: &K,
    tau_flow: f64,
    op: &A,
    reg: &Regularizer,
    sinkhorn_tol: f64,
) -> Result<f64> {
    objective_from(a, a_prev, kernel, tau_flow, op, reg, sinkhorn_tol, None)
}

/// Transport term from a warm start for the `a`-side potential; the
/// self-transport `a = a_prev` uses the symmetric iteration when it applies.
#[allow(clippy::too_many_arguments)]
fn objective_from<K: LogKernel, A: LinearOperator + ?Sized>(
    a: &[f64],
    a_prev: &[f64],
    kernel: &K,
    tau_flow: f64,
    op: &A,
    reg: &Regularizer,
    sinkhorn_tol: f64,
    init_f: Option<Vec<f64>>,
) -> Result<f64> {
    let opts = SinkhornOptions { tol: sinkhorn_tol, max_iter: SINKHORN_MAX_ITER, init_f };
    let transport = if a == a_prev && is_symmetric(kernel) {
        self_transport(a, kernel, &opts)?.dual_value
    } else {
        sinkhorn_potentials(a, a_prev, kernel, &opts)?.dual_value
    };
    let energy = reg.value(&op.forward(a), op.site_dim());
    Ok(transport + tau_flow * energy)
}

#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    /// `H_{a_k}(a_{k+1}) + τJ(𝒜a_{k+1})`.
    pub objective_new: f64,
    /// `H_{a_k}(a_k) + τJ(𝒜a_k)`.
    pub objective_prev: f64,
    /// `J(𝒜a_{k+1})` at unit strength scaling.
    pub energy: f64,
    pub iterations: usize,
}

impl StepRecord {
    /// `objective_new − objective_prev`; nonpositive up to solver accuracy.
    pub fn descent_gap(&self) -> f64 {
        self.objective_new - self.objective_prev
    }
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    /// `a_1, …, a_steps` (the initial histogram is not repeated).
    pub iterates: Vec<Histogram>,
    pub records: Vec<StepRecord>,
}

/// `steps` JKO steps from `a0`, warm-starting each dual solve from the
/// previous one.
pub fn run_flow<K: LogKernel, A: LinearOperator + ?Sized>(
    a0: &Histogram,
    steps: usize,
    kernel: &K,
    tau_flow: f64,
    op: &A,
    reg: &Regularizer,
    opts: &FlowOptions,
) -> Result<FlowTrajectory> {
    if steps == 0 {
        return Err(OtError::Domain("a flow needs at least one step".into()));
    }
    let mut iterates = Vec::with_capacity(steps);
    let mut records = Vec::with_capacity(steps);
    let mut prev = a0.clone();
    let mut warm = None;
    let scaled = reg.scaled(tau_flow);
    for _ in 0..steps {
        let step = step_impl(&prev, kernel, tau_flow, op, reg, opts, warm.take())?;
        // The dual potential of the step is the optimal `a`-side potential.
        let f_new = step.state.f.column(0).to_vec();
        let objective_new = objective_from(&step.a, &prev, kernel, 1.0, op, &scaled, opts.sinkhorn_tol, Some(f_new))?;
        let objective_prev = objective_from(&prev, &prev, kernel, 1.0, op, &scaled, opts.sinkhorn_tol, None)?;
        let energy = reg.value(&op.forward(&step.a), op.site_dim());
        records.push(StepRecord { objective_new, objective_prev, energy, iterations: step.iterations });
        warm = Some(step.state);
        prev = step.a.clone();
        iterates.push(step.a);
    }
    Ok(FlowTrajectory { iterates, records })
}
