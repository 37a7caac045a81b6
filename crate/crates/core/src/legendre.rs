//! Closed-form Legendre transforms of the regularized transport cost.
//!
//! * [`semidual_conjugate`]: `H*_b(f) = max_{a∈Σₙ} ⟨f,a⟩ − W_ε(a,b)`, with
//!   value `ε(H(b) + ⟨b, log Kᵀu⟩)`, gradient `u ∘ K(b / Kᵀu)` and Hessian
//!   `(1/ε)(diag(∇) − P diag(b)⁻¹ Pᵀ)` where `u = e^{f/ε}`. The value equals
//!   `ε − ⟨f^{c,ε}, b⟩` exactly; no constant separates the two expressions.
//! * [`semidual_conjugate_batch`]: the same for `N` columns at once, returning
//!   the vectorized objective `−ε 1ᵀ(B ∘ log(B / KᵀA))`, which is the scalar
//!   value minus `ε`.
//! * [`joint_conjugate`]: `ε log Σᵢⱼ exp((fᵢ + gⱼ − Cᵢⱼ)/ε) = −min_ε(C − f ⊕ g)`,
//!   whose gradient is the pair of marginals of the Gibbs distribution
//!   `X* ∝ exp((f ⊕ g − C)/ε)`. With the entropy `−Σ P(log P − 1)` used
//!   throughout the crate the true conjugate of `W_ε` over `Σₙ × Σₘ` is this
//!   value plus `ε`.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use crate::cost::{check_cols, check_rows, CostMatrix, LogKernel};
use crate::entropic::ctransform_of_f;
use crate::error::{check_len, OtError, Result};
use crate::simplex::entropy_of;

/// Value, gradient and optional Hessian of `H*_b` at one point.
#[derive(Debug, Clone)]
pub struct SemidualEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Option<Array2<f64>>,
}

/// Hessian of the joint transform, split into its blocks.
#[derive(Debug, Clone)]
pub struct JointHessian {
    /// `∂²/∂f²`, `n × n`.
    pub a_f: Array2<f64>,
    /// `∂²/∂f∂g`, `n × m`.
    pub b: Array2<f64>,
    /// `∂²/∂g²`, `m × m`.
    pub a_g: Array2<f64>,
}

impl JointHessian {
    /// Assembles the symmetric `(n+m) × (n+m)` matrix.
    pub fn full(&self) -> Array2<f64> {
        let n = self.a_f.nrows();
        let m = self.a_g.nrows();
        let mut h = Array2::zeros((n + m, n + m));
        h.slice_mut(ndarray::s![..n, ..n]).assign(&self.a_f);
        h.slice_mut(ndarray::s![..n, n..]).assign(&self.b);
        h.slice_mut(ndarray::s![n.., ..n]).assign(&self.b.t());
        h.slice_mut(ndarray::s![n.., n..]).assign(&self.a_g);
        h
    }
}

#[derive(Debug, Clone)]
pub struct JointEval {
    pub value: f64,
    pub grad_f: Vec<f64>,
    pub grad_g: Vec<f64>,
    pub hessian: Option<JointHessian>,
}

fn require_positive(b: &[f64]) -> Result<()> {
    if let Some(j) = b.iter().position(|&v| !(v > 0.0)) {
        return Err(OtError::Domain(format!(
            "histogram entry {j} is {}; the semi-dual transform needs strictly positive mass",
            b[j]
        )));
    }
    Ok(())
}

/// `H*_b(f)` with its gradient (always) and Hessian (when `want_hessian`).
pub fn semidual_conjugate(f: &[f64], b: &[f64], kernel: &impl LogKernel, want_hessian: bool) -> Result<SemidualEval> {
    check_rows(kernel, "f", f.len())?;
    check_cols(kernel, "b", b.len())?;
    require_positive(b)?;
    let eps = kernel.epsilon();
    let fs: Vec<f64> = f.iter().map(|v| v / eps).collect();
    let log_ktu = kernel.log_apply_t(&fs);
    let log_v: Vec<f64> = b.iter().zip(&log_ktu).map(|(bj, l)| bj.ln() - l).collect();
    let value = eps * (entropy_of(b.iter().copied()) + b.iter().zip(&log_ktu).map(|(bj, l)| bj * l).sum::<f64>());
    let log_kv = kernel.log_apply(&log_v);
    let gradient: Vec<f64> = fs.iter().zip(&log_kv).map(|(x, l)| (x + l).exp()).collect();

    let hessian = want_hessian.then(|| {
        let (n, m) = kernel.shape();
        let p = Array2::from_shape_fn((n, m), |(i, j)| (fs[i] - kernel.cost(i, j) / eps + log_v[j]).exp());
        let scaled = Array2::from_shape_fn((n, m), |(i, j)| p[[i, j]] / b[j]);
        let mut h = -scaled.dot(&p.t());
        for i in 0..n {
            h[[i, i]] += gradient[i];
        }
        h.mapv_inplace(|v| v / eps);
        h
    });
    Ok(SemidualEval { value, gradient, hessian })
}

/// `H*_b(f)` through the soft c-transform, `ε − ⟨f^{c,ε}, b⟩`.
pub fn semidual_value_via_ctransform(f: &[f64], b: &[f64], cost: &CostMatrix, epsilon: f64) -> Result<f64> {
    require_positive(b)?;
    let fc = ctransform_of_f(f, b, cost, epsilon)?;
    Ok(epsilon - fc.iter().zip(b).map(|(x, w)| x * w).sum::<f64>())
}

/// Column-wise transforms for `F` (`n × N`) against `B` (`m × N`).
///
/// Returns the vectorized objectives `−ε 1ᵀ(B ∘ log C̃)` with `C̃ = B / KᵀA`,
/// `A = e^{F/ε}` (each equal to [`semidual_conjugate`]'s value minus `ε`)
/// and the gradient matrix `Δ = A ∘ K C̃`.
pub fn semidual_conjugate_batch(
    f: &Array2<f64>,
    b: &Array2<f64>,
    kernel: &impl LogKernel,
) -> Result<(Vec<f64>, Array2<f64>)> {
    let (values, log_ct) = semidual_value_batch(f, b, kernel)?;
    Ok((values, semidual_gradient_batch(f, &log_ct, kernel)))
}

/// Objectives of [`semidual_conjugate_batch`] alone, with `log C̃` so the
/// gradient can be completed later by [`semidual_gradient_batch`].
pub fn semidual_value_batch(
    f: &Array2<f64>,
    b: &Array2<f64>,
    kernel: &impl LogKernel,
) -> Result<(Vec<f64>, Array2<f64>)> {
    let (n, m) = kernel.shape();
    if f.nrows() != n || b.nrows() != m || f.ncols() != b.ncols() {
        return Err(OtError::Shape(format!(
            "batch transform: F is {:?}, B is {:?}, kernel is {n}x{m}",
            f.dim(),
            b.dim()
        )));
    }
    let eps = kernel.epsilon();
    let cols: Vec<(f64, Vec<f64>)> = (0..f.ncols())
        .into_par_iter()
        .map(|k| {
            let bk = b.column(k).to_vec();
            require_positive(&bk)?;
            let fs: Vec<f64> = f.column(k).iter().map(|v| v / eps).collect();
            let log_ktu = kernel.log_apply_t(&fs);
            let log_ct: Vec<f64> = bk.iter().zip(&log_ktu).map(|(bj, l)| bj.ln() - l).collect();
            let value = -eps * bk.iter().zip(&log_ct).map(|(bj, l)| bj * l).sum::<f64>();
            Ok((value, log_ct))
        })
        .collect::<Result<_>>()?;
    let mut log_ct = Array2::zeros(b.dim());
    let mut values = Vec::with_capacity(cols.len());
    for (k, (v, c)) in cols.into_iter().enumerate() {
        values.push(v);
        log_ct.column_mut(k).assign(&Array1::from(c));
    }
    Ok((values, log_ct))
}

/// `Δ = A ∘ K C̃` from the `log C̃` returned by [`semidual_value_batch`].
pub fn semidual_gradient_batch(f: &Array2<f64>, log_ct: &Array2<f64>, kernel: &impl LogKernel) -> Array2<f64> {
    let eps = kernel.epsilon();
    let cols: Vec<Vec<f64>> = (0..f.ncols())
        .into_par_iter()
        .map(|k| {
            let log_kc = kernel.log_apply(&log_ct.column(k).to_vec());
            f.column(k).iter().zip(&log_kc).map(|(x, l)| (x / eps + l).exp()).collect()
        })
        .collect();
    let mut grads = Array2::zeros(f.dim());
    for (k, g) in cols.into_iter().enumerate() {
        grads.column_mut(k).assign(&Array1::from(g));
    }
    grads
}

/// `W*(f,g) = −min_ε(C − f ⊕ g)` with gradient and optional Hessian blocks.
///
/// At `ε = 0` the value is `max(f ⊕ g − C)` and the gradient is the indicator
/// of the first maximizing cell in row-major order.
pub fn joint_conjugate(f: &[f64], g: &[f64], cost: &CostMatrix, epsilon: f64, want_hessian: bool) -> Result<JointEval> {
    let (n, m) = cost.shape();
    check_len("f", f.len(), n)?;
    check_len("g", g.len(), m)?;
    if !(epsilon >= 0.0) {
        return Err(OtError::Domain(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let c = cost.entries();
    let z = Array2::from_shape_fn((n, m), |(i, j)| f[i] + g[j] - c[[i, j]]);
    if epsilon == 0.0 {
        if want_hessian {
            return Err(OtError::Unsupported("the joint transform has no Hessian at epsilon = 0".into()));
        }
        let (mut best, mut arg) = (f64::NEG_INFINITY, (0, 0));
        for ((i, j), &v) in z.indexed_iter() {
            if v > best {
                best = v;
                arg = (i, j);
            }
        }
        let mut grad_f = vec![0.0; n];
        let mut grad_g = vec![0.0; m];
        grad_f[arg.0] = 1.0;
        grad_g[arg.1] = 1.0;
        return Ok(JointEval { value: best, grad_f, grad_g, hessian: None });
    }
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut x = z.mapv(|v| ((v - zmax) / epsilon).exp());
    let s = x.sum();
    x.mapv_inplace(|v| v / s);
    let value = zmax + epsilon * s.ln();
    let p = x.sum_axis(Axis(1));
    let q = x.sum_axis(Axis(0));
    let hessian = want_hessian.then(|| {
        let outer = |u: &Array1<f64>, v: &Array1<f64>| {
            Array2::from_shape_fn((u.len(), v.len()), |(i, j)| u[i] * v[j])
        };
        let mut a_f = -outer(&p, &p);
        for i in 0..n {
            a_f[[i, i]] += p[i];
        }
        let mut a_g = -outer(&q, &q);
        for j in 0..m {
            a_g[[j, j]] += q[j];
        }
        let b = &x - &outer(&p, &q);
        JointHessian { a_f: a_f / epsilon, b: b / epsilon, a_g: a_g / epsilon }
    });
    Ok(JointEval { value, grad_f: p.to_vec(), grad_g: q.to_vec(), hessian })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn one_point_semidual() {
        let c = CostMatrix::new(array![[0.0]]).unwrap();
        let k = c.gibbs(1.0).unwrap();
        let e = semidual_conjugate(&[0.0], &[1.0], &k, true).unwrap();
        assert_abs_diff_eq!(e.value, 1.0, epsilon = 1e-15);
        assert_eq!(e.gradient, vec![1.0]);
        assert_abs_diff_eq!(e.hessian.unwrap()[[0, 0]], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_mass_target_rejected() {
        let c = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let k = c.gibbs(1.0).unwrap();
        assert!(matches!(semidual_conjugate(&[0.0, 0.0], &[0.0, 1.0], &k, false), Err(OtError::Domain(_))));
    }

    #[test]
    fn both_value_formulas_agree() {
        let c = CostMatrix::new(array![[0.0, 0.4, 1.3], [0.4, 0.0, 0.2], [1.1, 0.2, 0.0]]).unwrap();
        let eps = 0.3;
        let k = c.gibbs(eps).unwrap();
        let f = [0.3, -0.7, 0.05];
        let b = [0.2, 0.5, 0.3];
        let e = semidual_conjugate(&f, &b, &k, false).unwrap();
        let v = semidual_value_via_ctransform(&f, &b, &c, eps).unwrap();
        assert!((e.value - v).abs() <= 1e-9 * (1.0 + v.abs()));
        assert_abs_diff_eq!(e.gradient.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn batch_of_one_matches_scalar_up_to_epsilon() {
        let c = CostMatrix::new(array![[0.0, 0.5], [0.5, 0.0]]).unwrap();
        let k = c.gibbs(0.25).unwrap();
        let f = array![[0.1], [-0.2]];
        let b = array![[0.3], [0.7]];
        let (vals, grads) = semidual_conjugate_batch(&f, &b, &k).unwrap();
        let e = semidual_conjugate(&[0.1, -0.2], &[0.3, 0.7], &k, false).unwrap();
        assert_abs_diff_eq!(vals[0] + 0.25, e.value, epsilon = 1e-12);
        assert_abs_diff_eq!(grads[[0, 0]], e.gradient[0], epsilon = 1e-12);
        assert_abs_diff_eq!(grads[[1, 0]], e.gradient[1], epsilon = 1e-12);
        assert!(semidual_conjugate_batch(&array![[0.0]], &b, &k).is_err());
    }

    #[test]
    fn batch_with_identical_columns() {
        let c = CostMatrix::grid_1d(4, 0.0, 1.0).unwrap();
        let k = c.gibbs(0.2).unwrap();
        let f = Array2::zeros((4, 3));
        let col = [0.1, 0.2, 0.3, 0.4];
        let b = Array2::from_shape_fn((4, 3), |(i, _)| col[i]);
        let (vals, grads) = semidual_conjugate_batch(&f, &b, &k).unwrap();
        for kk in 1..3 {
            assert_eq!(vals[kk], vals[0]);
            assert_eq!(grads.column(kk), grads.column(0));
        }
    }

    #[test]
    fn joint_one_point() {
        let c = CostMatrix::new(array![[0.0]]).unwrap();
        for eps in [0.0, 0.1, 3.0] {
            let e = joint_conjugate(&[0.0], &[0.0], &c, eps, false).unwrap();
            assert_abs_diff_eq!(e.value, 0.0, epsilon = 1e-15);
            assert_eq!(e.grad_f, vec![1.0]);
            assert_eq!(e.grad_g, vec![1.0]);
        }
        assert!(matches!(joint_conjugate(&[0.0], &[0.0], &c, 0.0, true), Err(OtError::Unsupported(_))));
    }

    #[test]
    fn joint_translation() {
        let c = CostMatrix::new(array![[0.0, 1.0, 0.3], [0.5, 0.2, 0.9]]).unwrap();
        let f = [0.2, -0.1];
        let g = [0.0, 0.4, -0.3];
        let base = joint_conjugate(&f, &g, &c, 0.5, false).unwrap();
        let shifted = joint_conjugate(&[f[0] + 1.5, f[1] + 1.5], &g, &c, 0.5, false).unwrap();
        assert_abs_diff_eq!(shifted.value, base.value + 1.5, epsilon = 1e-14);
        for (x, y) in shifted.grad_f.iter().zip(&base.grad_f) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn joint_hard_maximum() {
        let c = CostMatrix::new(array![[0.0, 0.0], [0.0, 0.0]]).unwrap();
        let e = joint_conjugate(&[0.0, 1.0], &[0.5, 0.5], &c, 0.0, false).unwrap();
        assert_eq!(e.value, 1.5);
        assert_eq!(e.grad_f, vec![0.0, 1.0]);
        assert_eq!(e.grad_g, vec![1.0, 0.0]);
    }
}
