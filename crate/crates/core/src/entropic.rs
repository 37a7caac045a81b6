//! Entropic transport between two histograms.
//!
//! With `P = exp((f ⊕ g − C)/ε)` the dual problem
//! `max ⟨f,a⟩ + ⟨g,b⟩ − ε Σ exp((fᵢ + gⱼ − Cᵢⱼ)/ε)` is solved by alternating
//! the two soft c-transforms (Sinkhorn's algorithm), entirely on the
//! potentials. Zero-mass bins carry `−∞` potentials during the iterations,
//! which removes them from every log-sum-exp exactly as if they had been
//! stripped; they are reported back as zero rows/columns of the coupling.

use ndarray::Array2;

use crate::cost::{check_cols, check_rows, CostMatrix, LogKernel};
use crate::error::{check_len, OtError, Result};
use crate::simplex::{entropy, softmin, Histogram};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Dual potentials `(f, g)` of one transport problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

/// A transport plan together with the ℓ¹ distance of its marginals to the
/// targets it was built for.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub matrix: Array2<f64>,
    pub row_residual: f64,
    pub col_residual: f64,
}

impl Coupling {
    pub fn new(matrix: Array2<f64>, a: &[f64], b: &[f64]) -> Result<Self> {
        let (n, m) = matrix.dim();
        check_len("coupling rows", a.len(), n)?;
        check_len("coupling cols", b.len(), m)?;
        let (row_residual, col_residual) = marginal_residuals(&matrix, a, b);
        Ok(Self { matrix, row_residual, col_residual })
    }

    pub fn total_mass(&self) -> f64 {
        self.matrix.sum()
    }

    /// `⟨C, P⟩`.
    pub fn transport_cost(&self, cost: &CostMatrix) -> f64 {
        (&self.matrix * cost.entries()).sum()
    }
}

/// ℓ¹ distances `(‖P1 − a‖₁, ‖Pᵀ1 − b‖₁)`.
pub fn marginal_residuals(p: &Array2<f64>, a: &[f64], b: &[f64]) -> (f64, f64) {
    let rows = p.sum_axis(ndarray::Axis(1));
    let cols = p.sum_axis(ndarray::Axis(0));
    let r = rows.iter().zip(a).map(|(x, y)| (x - y).abs()).sum();
    let c = cols.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    (r, c)
}

/// Soft c-transform of `f`: `f^{c,ε}ⱼ = ε log bⱼ + min_ε(C·ⱼ − f)`.
///
/// At `ε = 0` the logarithmic term is dropped and every row takes part in the
/// minimum. For `ε > 0`, coordinates with `bⱼ = 0` come back as `−∞`.
pub fn ctransform_of_f(f: &[f64], b: &[f64], cost: &CostMatrix, epsilon: f64) -> Result<Vec<f64>> {
    let (n, m) = cost.shape();
    check_len("f", f.len(), n)?;
    check_len("b", b.len(), m)?;
    let c = cost.entries();
    let mut col = vec![0.0; n];
    (0..m)
        .map(|j| {
            for i in 0..n {
                col[i] = c[[i, j]] - f[i];
            }
            let sm = softmin(&col, epsilon)?;
            Ok(if epsilon > 0.0 { epsilon * b[j].ln() + sm } else { sm })
        })
        .collect()
}

/// Soft c̄-transform of `g`: `g^{c̄,ε}ᵢ = ε log aᵢ + min_ε(Cᵢ· − g)`.
pub fn ctransform_of_g(g: &[f64], a: &[f64], cost: &CostMatrix, epsilon: f64) -> Result<Vec<f64>> {
    let (n, m) = cost.shape();
    check_len("g", g.len(), m)?;
    check_len("a", a.len(), n)?;
    let c = cost.entries();
    (0..n)
        .map(|i| {
            let row: Vec<f64> = (0..m).map(|j| c[[i, j]] - g[j]).collect();
            let sm = softmin(&row, epsilon)?;
            Ok(if epsilon > 0.0 { epsilon * a[i].ln() + sm } else { sm })
        })
        .collect()
}

/// Options for [`sinkhorn`].
#[derive(Debug, Clone)]
pub struct SinkhornOptions {
    /// Stop once `‖P1 − a‖₁ ≤ tol` (columns are exact after each sweep).
    pub tol: f64,
    pub max_iter: usize,
    /// Warm start for `f`.
    pub init_f: Option<Vec<f64>>,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, init_f: None }
    }
}

impl SinkhornOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Output of [`sinkhorn_potentials`]; the coupling is materialized on demand.
#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    pub potentials: Potentials,
    /// Dual objective `⟨f,a⟩ + ⟨g,b⟩ − ε Σ Pᵢⱼ` at the returned potentials.
    pub dual_value: f64,
    pub iterations: usize,
    /// ℓ¹ row-marginal violation at exit.
    pub residual: f64,
    /// Row residual after every sweep.
    pub residual_trace: Vec<f64>,
}

impl SinkhornSolution {
    /// `P = exp((f ⊕ g − C)/ε)`, with zero rows/columns for zero-mass bins.
    pub fn coupling(&self, kernel: &impl LogKernel, a: &[f64], b: &[f64]) -> Result<Coupling> {
        Coupling::new(coupling_from_potentials(kernel, &self.potentials.f, &self.potentials.g, a, b), a, b)
    }
}

/// Potentials-only Sinkhorn in the log domain.
pub fn sinkhorn_potentials(
    a: &[f64],
    b: &[f64],
    kernel: &impl LogKernel,
    opts: &SinkhornOptions,
) -> Result<SinkhornSolution> {
    check_rows(kernel, "a", a.len())?;
    check_cols(kernel, "b", b.len())?;
    if !(opts.tol > 0.0) {
        return Err(OtError::Domain(format!("sinkhorn tolerance must be positive, got {}", opts.tol)));
    }
    let eps = kernel.epsilon();
    let (n, _) = kernel.shape();
    let log_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|v| v.ln()).collect();

    let mut f = match &opts.init_f {
        Some(f0) => {
            check_len("init_f", f0.len(), n)?;
            f0.iter().zip(a).map(|(&v, &w)| if w > 0.0 { v } else { f64::NEG_INFINITY }).collect()
        }
        None => a.iter().map(|&w| if w > 0.0 { 0.0 } else { f64::NEG_INFINITY }).collect::<Vec<_>>(),
    };
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let fs: Vec<f64> = f.iter().map(|v| v / eps).collect();
        let lkt = kernel.log_apply_t(&fs);
        let g: Vec<f64> = log_b.iter().zip(&lkt).map(|(lb, l)| eps * (lb - l)).collect();
        let gs: Vec<f64> = g.iter().map(|v| v / eps).collect();
        let lk = kernel.log_apply(&gs);
        let rows: Vec<f64> = fs.iter().zip(&lk).map(|(x, l)| (x + l).exp()).collect();
        residual = rows.iter().zip(a).map(|(r, w)| (r - w).abs()).sum();
        trace.push(residual);
        if !residual.is_finite() {
            return Err(OtError::Domain("sinkhorn diverged (non-finite marginals)".into()));
        }
        if residual <= opts.tol {
            let mass: f64 = rows.iter().sum();
            let dual_value = pair_sum(&f, a) + pair_sum(&g, b) - eps * mass;
            let f = finite_potential(f, &log_a, &lk, eps);
            let g = finite_potential(g, &log_b, &lkt, eps);
            return Ok(SinkhornSolution {
                potentials: Potentials { f, g },
                dual_value,
                iterations: it,
                residual,
                residual_trace: trace,
            });
        }
        f = log_a.iter().zip(&lk).map(|(la, l)| eps * (la - l)).collect();
    }
    Err(OtError::NotConverged { iterations: opts.max_iter, residual, best: None })
}

/// Whether `C = Cᵀ` exactly.
pub fn is_symmetric(kernel: &impl LogKernel) -> bool {
    let (n, m) = kernel.shape();
    n == m && (0..n).all(|i| (0..i).all(|j| kernel.cost(i, j) == kernel.cost(j, i)))
}

/// Entropic self-transport of `a` under a symmetric cost, where the optimal
/// potentials coincide (`f = g`). Iterates the averaged fixed point
/// `f ← ½(f + ε log a − ε log K e^{f/ε})`, which converges far faster than
/// alternating sweeps at small `ε`. Fails with [`OtError::Domain`] if `C` is
/// not symmetric.
pub fn self_transport(a: &[f64], kernel: &impl LogKernel, opts: &SinkhornOptions) -> Result<SinkhornSolution> {
    check_rows(kernel, "a", a.len())?;
    if !is_symmetric(kernel) {
        return Err(OtError::Domain("self-transport needs a symmetric cost".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(OtError::Domain(format!("sinkhorn tolerance must be positive, got {}", opts.tol)));
    }
    let eps = kernel.epsilon();
    let log_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let mut f: Vec<f64> = match &opts.init_f {
        Some(f0) => {
            check_len("init_f", f0.len(), a.len())?;
            f0.iter().zip(a).map(|(&v, &w)| if w > 0.0 { v } else { f64::NEG_INFINITY }).collect()
        }
        None => a.iter().map(|&w| if w > 0.0 { 0.0 } else { f64::NEG_INFINITY }).collect(),
    };
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let fs: Vec<f64> = f.iter().map(|v| v / eps).collect();
        let lk = kernel.log_apply(&fs);
        let rows: Vec<f64> = fs.iter().zip(&lk).map(|(x, l)| (x + l).exp()).collect();
        residual = rows.iter().zip(a).map(|(r, w)| (r - w).abs()).sum();
        trace.push(residual);
        if !residual.is_finite() {
            return Err(OtError::Domain("self-transport diverged (non-finite marginals)".into()));
        }
        if residual <= opts.tol {
            let mass: f64 = rows.iter().sum();
            let dual_value = 2.0 * pair_sum(&f, a) - eps * mass;
            let f = finite_potential(f, &log_a, &lk, eps);
            return Ok(SinkhornSolution {
                potentials: Potentials { g: f.clone(), f },
                dual_value,
                iterations: it,
                residual,
                residual_trace: trace,
            });
        }
        for ((v, la), l) in f.iter_mut().zip(&log_a).zip(&lk) {
            if *la > f64::NEG_INFINITY {
                *v = 0.5 * (*v + eps * (la - l));
            }
        }
    }
    Err(OtError::NotConverged { iterations: opts.max_iter, residual, best: None })
}

/// `Σ xᵢ wᵢ` skipping zero weights, so `−∞` potentials on empty bins vanish.
fn pair_sum(x: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(w).filter(|(_, &wv)| wv > 0.0).map(|(xv, wv)| xv * wv).sum()
}

/// Replaces the `−∞` potentials of empty bins by the soft c-transform without
/// its `ε log(mass)` term.
fn finite_potential(mut p: Vec<f64>, log_w: &[f64], lse: &[f64], eps: f64) -> Vec<f64> {
    for ((v, lw), l) in p.iter_mut().zip(log_w).zip(lse) {
        if *lw == f64::NEG_INFINITY {
            *v = -eps * l;
        }
    }
    p
}

/// Materializes `exp((fᵢ + gⱼ − Cᵢⱼ)/ε)`, zeroing rows/columns with no mass.
pub fn coupling_from_potentials(kernel: &impl LogKernel, f: &[f64], g: &[f64], a: &[f64], b: &[f64]) -> Array2<f64> {
    let eps = kernel.epsilon();
    let (n, m) = kernel.shape();
    Array2::from_shape_fn((n, m), |(i, j)| {
        if a[i] > 0.0 && b[j] > 0.0 {
            ((f[i] + g[j] - kernel.cost(i, j)) / eps).exp()
        } else {
            0.0
        }
    })
}

/// Log-domain Sinkhorn returning potentials, coupling and dual value.
pub fn sinkhorn(
    a: &Histogram,
    b: &Histogram,
    kernel: &impl LogKernel,
    opts: &SinkhornOptions,
) -> Result<(Potentials, Coupling, f64)> {
    let sol = sinkhorn_potentials(a, b, kernel, opts)?;
    let coupling = sol.coupling(kernel, a, b)?;
    Ok((sol.potentials, coupling, sol.dual_value))
}

/// Regularized transport value `W_ε(a,b)` (the dual value at convergence).
pub fn entropic_cost(a: &[f64], b: &[f64], kernel: &impl LogKernel, opts: &SinkhornOptions) -> Result<f64> {
    sinkhorn_potentials(a, b, kernel, opts).map(|s| s.dual_value)
}

/// Primal objective `⟨P,C⟩ − ε H(P)` of a coupling feasible within `1e−6`.
pub fn primal_value(a: &[f64], b: &[f64], cost: &CostMatrix, epsilon: f64, p: &Array2<f64>) -> Result<f64> {
    if p.dim() != cost.shape() {
        return Err(OtError::Shape("coupling and cost shapes differ".into()));
    }
    check_len("a", a.len(), p.nrows())?;
    check_len("b", b.len(), p.ncols())?;
    if p.iter().any(|&v| v < 0.0) {
        return Err(OtError::Infeasible("coupling has negative entries".into()));
    }
    let (r, c) = marginal_residuals(p, a, b);
    if r > 1e-6 || c > 1e-6 {
        return Err(OtError::Infeasible(format!("marginal residuals ({r:.3e}, {c:.3e}) exceed 1e-6")));
    }
    let linear = (p * cost.entries()).sum();
    if epsilon == 0.0 {
        return Ok(linear);
    }
    Ok(linear - epsilon * entropy(p))
}

/// Dual objective `⟨f,a⟩ + ⟨g,b⟩ + B_ε(C − f ⊕ g)`; at `ε = 0` the barrier is
/// the indicator of `C − f ⊕ g ≥ 0`.
pub fn dual_value(a: &[f64], b: &[f64], cost: &CostMatrix, epsilon: f64, pot: &Potentials) -> Result<f64> {
    let (n, m) = cost.shape();
    check_len("f", pot.f.len(), n)?;
    check_len("g", pot.g.len(), m)?;
    check_len("a", a.len(), n)?;
    check_len("b", b.len(), m)?;
    let lin = pair_sum(&pot.f, a) + pair_sum(&pot.g, b);
    let c = cost.entries();
    if epsilon == 0.0 {
        let feasible = (0..n).all(|i| (0..m).all(|j| c[[i, j]] - pot.f[i] - pot.g[j] >= -1e-12));
        return Ok(if feasible { lin } else { f64::NEG_INFINITY });
    }
    let mut mass = 0.0;
    for i in 0..n {
        for j in 0..m {
            mass += ((pot.f[i] + pot.g[j] - c[[i, j]]) / epsilon).exp();
        }
    }
    Ok(lin - epsilon * mass)
}
