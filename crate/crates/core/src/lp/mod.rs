//! Exact solvers for the unregularized problems: the transportation LP, the
//! barycenter LP and the 1-D monotone coupling.

mod network;
mod tableau;

pub use network::{min_cost_flow, min_cost_flow_with, Arc, FlowSolution, PivotRule};
pub use tableau::{ratio, rational, solve_standard_form, LpSolution, Scalar};

use ndarray::Array2;

use crate::cost::CostMatrix;
use crate::error::{OtError, Result};

const MASS_TOL: f64 = 1e-10;

fn check_marginals(a: &[f64], b: &[f64]) -> Result<()> {
    if a.iter().chain(b).any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(OtError::Domain("marginals must be finite and nonnegative".into()));
    }
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    if (sa - sb).abs() > MASS_TOL {
        return Err(OtError::Infeasible(format!("marginal masses differ: {sa} vs {sb}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ExactOt {
    pub coupling: Array2<f64>,
    pub value: f64,
    /// Dual potentials with `uᵢ + vⱼ ≤ Cᵢⱼ`, tight on the support.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub pivots: usize,
}

/// Optimal vertex of the transportation polytope by network simplex.
pub fn exact_ot(a: &[f64], b: &[f64], cost: &CostMatrix) -> Result<ExactOt> {
    let (n, m) = cost.shape();
    if a.len() != n || b.len() != m {
        return Err(OtError::Shape(format!("marginals {}×{} for a {n}×{m} cost", a.len(), b.len())));
    }
    check_marginals(a, b)?;
    let c = cost.entries();
    let mut arcs = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            arcs.push(Arc { tail: i, head: n + j, cost: c[[i, j]] });
        }
    }
    let mut supply: Vec<f64> = a.to_vec();
    supply.extend(b.iter().map(|v| -v));
    // Absorb the (tolerated) mass difference in the last sink.
    let total: f64 = supply.iter().sum();
    *supply.last_mut().expect("m ≥ 1") -= total;
    let sol = min_cost_flow(&supply, &arcs)?;
    let coupling = Array2::from_shape_vec((n, m), sol.flow).expect("n·m flows");
    let u = sol.potential[..n].to_vec();
    let v = sol.potential[n..].iter().map(|p| -p).collect();
    Ok(ExactOt { coupling, value: sol.cost, u, v, pivots: sol.pivots })
}

/// Transportation LP solved by the dense tableau in the scalar field `S`.
pub fn exact_ot_tableau<S: Scalar>(a: &[S], b: &[S], cost: &[Vec<S>]) -> Result<(Vec<Vec<S>>, S)> {
    let n = a.len();
    let m = b.len();
    if cost.len() != n || cost.iter().any(|r| r.len() != m) {
        return Err(OtError::Shape("cost does not match the marginals".into()));
    }
    let mut rows = Vec::with_capacity(n + m);
    for i in 0..n {
        rows.push((0..n * m).map(|k| if k / m == i { S::one() } else { S::zero() }).collect::<Vec<_>>());
    }
    for j in 0..m {
        rows.push((0..n * m).map(|k| if k % m == j { S::one() } else { S::zero() }).collect::<Vec<_>>());
    }
    let rhs: Vec<S> = a.iter().chain(b).cloned().collect();
    let c: Vec<S> = cost.iter().flat_map(|r| r.iter().cloned()).collect();
    let sol = solve_standard_form(&rows, &rhs, &c)?;
    let p = (0..n).map(|i| sol.x[i * m..(i + 1) * m].to_vec()).collect();
    Ok((p, sol.value))
}

/// North-west corner coupling between sorted 1-D supports and its cost
/// `Σ Pᵢⱼ |xᵢ − yⱼ|^p`.
pub fn quantile_coupling_1d(a: &[f64], x: &[f64], b: &[f64], y: &[f64], p: f64) -> Result<(Array2<f64>, f64)> {
    if a.len() != x.len() || b.len() != y.len() {
        return Err(OtError::Shape("weights and supports differ in length".into()));
    }
    if x.windows(2).any(|w| !(w[0] < w[1])) || y.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(OtError::Domain("supports must be strictly increasing".into()));
    }
    if !(p >= 1.0) {
        return Err(OtError::Domain(format!("exponent must be ≥ 1, got {p}")));
    }
    check_marginals(a, b)?;
    let (n, m) = (a.len(), b.len());
    let mut coupling = Array2::zeros((n, m));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a.first().copied().unwrap_or(0.0), b.first().copied().unwrap_or(0.0));
    let mut value = 0.0;
    while i < n && j < m {
        let t = ra.min(rb);
        coupling[[i, j]] += t;
        value += t * (x[i] - y[j]).abs().powf(p);
        ra -= t;
        rb -= t;
        if ra <= rb {
            i += 1;
            ra = a.get(i).copied().unwrap_or(0.0);
        } else {
            j += 1;
            rb = b.get(j).copied().unwrap_or(0.0);
        }
    }
    Ok((coupling, value))
}

#[derive(Debug, Clone)]
pub struct ExactWbp {
    pub barycenter: Vec<f64>,
    /// `Σ λₖ ⟨C, Pₖ⟩`.
    pub value: f64,
    pub couplings: Vec<Array2<f64>>,
}

fn check_wbp(inputs: &Array2<f64>, weights: &[f64], cost: &CostMatrix) -> Result<()> {
    let (_, m) = cost.shape();
    if inputs.nrows() != m || inputs.ncols() != weights.len() || weights.is_empty() {
        return Err(OtError::Shape("barycenter LP: inconsistent shapes".into()));
    }
    if inputs.iter().chain(weights).any(|&v| !(v >= 0.0)) {
        return Err(OtError::Domain("inputs and weights must be nonnegative".into()));
    }
    let s0 = inputs.column(0).sum();
    if inputs.columns().into_iter().any(|c| (c.sum() - s0).abs() > MASS_TOL) {
        return Err(OtError::Infeasible("inputs have different masses".into()));
    }
    Ok(())
}

/// Exact Wasserstein barycenter `min_a Σ λₖ W₀(a, bₖ)` with inputs as the
/// columns of `inputs` (`m × N`) and `C` of shape `n × m`.
///
/// One input reduces to nearest-point assignment, two inputs to a
/// transshipment through the barycenter nodes, and larger `N` to the full LP
/// on the dense tableau.
pub fn exact_wbp(inputs: &Array2<f64>, weights: &[f64], cost: &CostMatrix) -> Result<ExactWbp> {
    check_wbp(inputs, weights, cost)?;
    let (n, m) = cost.shape();
    let c = cost.entries();
    let nk = weights.len();
    match nk {
        1 => {
            let mut a = vec![0.0; n];
            let mut p = Array2::zeros((n, m));
            let mut value = 0.0;
            for j in 0..m {
                let bj = inputs[[j, 0]];
                let mut best = 0;
                for i in 1..n {
                    if c[[i, j]] < c[[best, j]] {
                        best = i;
                    }
                }
                a[best] += bj;
                p[[best, j]] = bj;
                value += weights[0] * bj * c[[best, j]];
            }
            Ok(ExactWbp { barycenter: a, value, couplings: vec![p] })
        }
        2 => {
            // Nodes: b₁ (m), barycenter (n), b₂ (m).
            let mut arcs = Vec::with_capacity(2 * n * m);
            for j in 0..m {
                for i in 0..n {
                    arcs.push(Arc { tail: j, head: m + i, cost: weights[0] * c[[i, j]] });
                }
            }
            for i in 0..n {
                for j in 0..m {
                    arcs.push(Arc { tail: m + i, head: m + n + j, cost: weights[1] * c[[i, j]] });
                }
            }
            let mut supply: Vec<f64> = inputs.column(0).to_vec();
            supply.extend(std::iter::repeat(0.0).take(n));
            supply.extend(inputs.column(1).iter().map(|v| -v));
            let total: f64 = supply.iter().sum();
            *supply.last_mut().expect("m ≥ 1") -= total;
            let sol = min_cost_flow(&supply, &arcs)?;
            let p1 = Array2::from_shape_fn((n, m), |(i, j)| sol.flow[j * n + i]);
            let p2 = Array2::from_shape_fn((n, m), |(i, j)| sol.flow[n * m + i * m + j]);
            let a = p1.sum_axis(ndarray::Axis(1)).to_vec();
            let value = weights[0] * (&p1 * c).sum() + weights[1] * (&p2 * c).sum();
            Ok(ExactWbp { barycenter: a, value, couplings: vec![p1, p2] })
        }
        _ => {
            let cs: Vec<Vec<f64>> = c.rows().into_iter().map(|r| r.to_vec()).collect();
            let bs: Vec<Vec<f64>> = inputs.columns().into_iter().map(|col| col.to_vec()).collect();
            let (a, ps, value) = exact_wbp_tableau(&bs, weights, &cs)?;
            let couplings = ps.into_iter().map(|p| Array2::from_shape_fn((n, m), |(i, j)| p[i][j])).collect();
            Ok(ExactWbp { barycenter: a, value, couplings })
        }
    }
}

/// Full barycenter LP over `(P₁, …, P_N, a)` on the dense tableau: `Pₖ1 = a`,
/// `Pₖᵀ1 = bₖ`. Returns `(a, couplings, value)`.
#[allow(clippy::type_complexity)]
pub fn exact_wbp_tableau<S: Scalar>(inputs: &[Vec<S>], weights: &[S], cost: &[Vec<S>]) -> Result<(Vec<S>, Vec<Vec<Vec<S>>>, S)> {
    let nk = inputs.len();
    let n = cost.len();
    let m = cost.first().map(|r| r.len()).unwrap_or(0);
    if weights.len() != nk || inputs.iter().any(|b| b.len() != m) || cost.iter().any(|r| r.len() != m) {
        return Err(OtError::Shape("barycenter LP: inconsistent shapes".into()));
    }
    let block = n * m;
    let nvar = nk * block + n;
    let mut rows = Vec::with_capacity(nk * (n + m));
    let mut rhs = Vec::with_capacity(nk * (n + m));
    for k in 0..nk {
        for i in 0..n {
            let mut r = vec![S::zero(); nvar];
            for j in 0..m {
                r[k * block + i * m + j] = S::one();
            }
            r[nk * block + i] = -S::one();
            rows.push(r);
            rhs.push(S::zero());
        }
        for j in 0..m {
            let mut r = vec![S::zero(); nvar];
            for i in 0..n {
                r[k * block + i * m + j] = S::one();
            }
            rows.push(r);
            rhs.push(inputs[k][j].clone());
        }
    }
    let mut c = vec![S::zero(); nvar];
    for k in 0..nk {
        for i in 0..n {
            for j in 0..m {
                c[k * block + i * m + j] = weights[k].clone() * cost[i][j].clone();
            }
        }
    }
    let sol = solve_standard_form(&rows, &rhs, &c)?;
    let a = sol.x[nk * block..].to_vec();
    let ps = (0..nk)
        .map(|k| (0..n).map(|i| sol.x[k * block + i * m..k * block + (i + 1) * m].to_vec()).collect())
        .collect();
    Ok((a, ps, sol.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_ot_examples() {
        let c = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let s = exact_ot(&[0.5, 0.5], &[0.25, 0.75], &c).unwrap();
        assert!((s.value - 0.25).abs() < 1e-15);
        let s = exact_ot(&[0.3, 0.7], &[0.3, 0.7], &c).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.coupling, array![[0.3, 0.0], [0.0, 0.7]]);
        assert!(matches!(exact_ot(&[0.5, 0.5], &[0.5, 0.6], &c), Err(OtError::Infeasible(_))));
    }

    #[test]
    fn rational_tableau_certifies_small_instance() {
        let c = vec![vec![ratio(0, 1), ratio(1, 1)], vec![ratio(1, 1), ratio(0, 1)]];
        let (p, v) = exact_ot_tableau(&[ratio(1, 2), ratio(1, 2)], &[ratio(1, 4), ratio(3, 4)], &c).unwrap();
        assert_eq!(v, ratio(1, 4));
        assert_eq!(p[0][1].clone() + p[1][1].clone(), ratio(3, 4));
    }

    #[test]
    fn quantile_examples() {
        let (_, v) = quantile_coupling_1d(&[0.5, 0.5], &[0.0, 1.0], &[0.5, 0.5], &[2.0, 3.0], 2.0).unwrap();
        assert!((v - 4.0).abs() < 1e-15);
        let (p, v) = quantile_coupling_1d(&[0.2, 0.8], &[0.0, 1.0], &[0.2, 0.8], &[0.0, 1.0], 2.0).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(p, array![[0.2, 0.0], [0.0, 0.8]]);
        let (_, v) = quantile_coupling_1d(&[1.0], &[0.5], &[1.0], &[2.0], 3.0).unwrap();
        assert!((v - 3.375).abs() < 1e-15);
        assert!(quantile_coupling_1d(&[0.5, 0.5], &[1.0, 0.0], &[1.0], &[0.0], 2.0).is_err());
        assert!(quantile_coupling_1d(&[1.0], &[0.0], &[1.0], &[0.0], 0.5).is_err());
    }

    #[test]
    fn wbp_single_and_identical_inputs() {
        let c = CostMatrix::grid_1d(4, 0.0, 1.0).unwrap();
        let b = [0.1, 0.2, 0.3, 0.4];
        let one = exact_wbp(&Array2::from_shape_fn((4, 1), |(i, _)| b[i]), &[1.0], &c).unwrap();
        assert_eq!(one.barycenter, b.to_vec());
        assert_eq!(one.value, 0.0);
        for nk in [2usize, 3] {
            let w = vec![1.0 / nk as f64; nk];
            let s = exact_wbp(&Array2::from_shape_fn((4, nk), |(i, _)| b[i]), &w, &c).unwrap();
            assert!(s.value.abs() < 1e-12);
            for (x, y) in s.barycenter.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transshipment_matches_tableau() {
        let c = CostMatrix::grid_1d(4, 0.0, 1.0).unwrap();
        let b = array![[0.1, 0.4], [0.2, 0.3], [0.3, 0.2], [0.4, 0.1]];
        let net = exact_wbp(&b, &[0.3, 0.7], &c).unwrap();
        let cs: Vec<Vec<f64>> = c.entries().rows().into_iter().map(|r| r.to_vec()).collect();
        let bs: Vec<Vec<f64>> = b.columns().into_iter().map(|r| r.to_vec()).collect();
        let (_, _, v) = exact_wbp_tableau(&bs, &[0.3, 0.7], &cs).unwrap();
        assert!((net.value - v).abs() < 1e-12, "{} vs {v}", net.value);
    }
}
