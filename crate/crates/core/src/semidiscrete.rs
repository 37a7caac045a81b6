//! Semi-discrete entropic transport from a quadrature-sampled source `α` to a
//! discrete target `β = Σⱼ bⱼ δ_{yⱼ}`, by ascent on the concave semi-dual
//!
//! ```text
//! E^ε(g) = ∫ g^{c̄,ε}(x) dα(x) + ⟨g, b⟩,   ∇E^ε(g)ⱼ = bⱼ − ∫ χⱼ^ε dα.
//! ```

use rayon::prelude::*;

use crate::error::{check_len, OtError, Result};
use crate::simplex::{softmin, SIMPLEX_TOL};

/// Finite quadrature of the source measure.
#[derive(Debug, Clone)]
pub struct SampledMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl SampledMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        check_len("weights", weights.len(), points.len())?;
        if points.is_empty() {
            return Err(OtError::Domain("empty source measure".into()));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(OtError::Shape("source points of mixed dimension".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
            return Err(OtError::Domain("source weights must lie in the simplex".into()));
        }
        Ok(Self { points, weights })
    }

    /// Equal weights on the given samples.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub type CostFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

pub fn squared_euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Weighted sites with a ground cost.
pub struct DiscreteTarget {
    sites: Vec<Vec<f64>>,
    masses: Vec<f64>,
    cost: Box<CostFn>,
}

impl std::fmt::Debug for DiscreteTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteTarget").field("sites", &self.sites).field("masses", &self.masses).finish()
    }
}

impl DiscreteTarget {
    /// Squared Euclidean cost.
    pub fn new(sites: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self> {
        Self::with_cost(sites, masses, Box::new(squared_euclidean))
    }

    pub fn with_cost(sites: Vec<Vec<f64>>, masses: Vec<f64>, cost: Box<CostFn>) -> Result<Self> {
        check_len("masses", masses.len(), sites.len())?;
        if sites.is_empty() {
            return Err(OtError::Domain("empty target".into()));
        }
        if masses.iter().any(|&b| !(b > 0.0)) || (masses.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
            return Err(OtError::Domain("target masses must be positive and sum to 1".into()));
        }
        Ok(Self { sites, masses, cost })
    }

    pub fn sites(&self) -> &[Vec<f64>] {
        &self.sites
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn cost(&self, x: &[f64], j: usize) -> f64 {
        (self.cost)(x, &self.sites[j])
    }

    fn shifted_costs(&self, g: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|j| self.cost(x, j) - g[j]).collect()
    }
}

/// `g^{c̄,ε}(x)`: softmin over `j` of `c(x, yⱼ) − gⱼ`, hard min at `ε = 0`.
pub fn gbar_transform(g: &[f64], x: &[f64], target: &DiscreteTarget, epsilon: f64) -> Result<f64> {
    check_len("g", g.len(), target.len())?;
    softmin(&target.shifted_costs(g, x), epsilon)
}

/// Softmax weights `χⱼ^ε(x)` over the sites.
pub fn smoothed_indicator(g: &[f64], x: &[f64], target: &DiscreteTarget, epsilon: f64) -> Result<Vec<f64>> {
    check_len("g", g.len(), target.len())?;
    if !(epsilon > 0.0) {
        return Err(OtError::Domain(format!("smoothed indicator needs ε > 0, got {epsilon}")));
    }
    Ok(softmax_neg(&target.shifted_costs(g, x), epsilon))
}

fn softmax_neg(u: &[f64], epsilon: f64) -> Vec<f64> {
    let min = u.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = u.iter().map(|&v| (-(v - min) / epsilon).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

fn argmin_first(u: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in u.iter().enumerate() {
        if v < u[best] {
            best = j;
        }
    }
    best
}

/// Hard assignment of every sample to its Laguerre cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LaguerreCells {
    pub assignment: Vec<usize>,
    pub masses: Vec<f64>,
}

/// Assigns each sample to `argminⱼ c(xᵢ, yⱼ) − gⱼ`, lowest index on ties.
pub fn laguerre_assign(g: &[f64], source: &SampledMeasure, target: &DiscreteTarget) -> Result<LaguerreCells> {
    check_len("g", g.len(), target.len())?;
    let assignment: Vec<usize> =
        source.points.par_iter().map(|x| argmin_first(&target.shifted_costs(g, x))).collect();
    let mut masses = vec![0.0; target.len()];
    for (&j, &w) in assignment.iter().zip(&source.weights) {
        masses[j] += w;
    }
    Ok(LaguerreCells { assignment, masses })
}

const CHUNK: usize = 256;

/// `E^ε(g)` and its gradient (a supergradient from hard cells at `ε = 0`).
/// Gradient entries are recentred so that they sum to zero.
pub fn semidiscrete_objective_grad(
    g: &[f64],
    source: &SampledMeasure,
    target: &DiscreteTarget,
    epsilon: f64,
) -> Result<(f64, Vec<f64>)> {
    check_len("g", g.len(), target.len())?;
    if !(epsilon >= 0.0) {
        return Err(OtError::Domain(format!("ε must be nonnegative, got {epsilon}")));
    }
    let m = target.len();
    // Fixed chunking keeps the reduction order independent of the thread count.
    let partials: Vec<(f64, Vec<f64>)> = source
        .points
        .par_chunks(CHUNK)
        .zip(source.weights.par_chunks(CHUNK))
        .map(|(xs, ws)| {
            let mut value = 0.0;
            let mut cells = vec![0.0; m];
            for (x, &w) in xs.iter().zip(ws) {
                let u = target.shifted_costs(g, x);
                if epsilon > 0.0 {
                    value += w * softmin(&u, epsilon).expect("ε > 0");
                    for (c, chi) in cells.iter_mut().zip(softmax_neg(&u, epsilon)) {
                        *c += w * chi;
                    }
                } else {
                    let j = argmin_first(&u);
                    value += w * u[j];
                    cells[j] += w;
                }
            }
            (value, cells)
        })
        .collect();
    let mut value = 0.0;
    let mut cells = vec![0.0; m];
    for (v, c) in partials {
        value += v;
        cells.iter_mut().zip(c).for_each(|(a, b)| *a += b);
    }
    value += g.iter().zip(&target.masses).map(|(x, b)| x * b).sum::<f64>();
    let mut grad: Vec<f64> = target.masses.iter().zip(&cells).map(|(b, c)| b - c).collect();
    let mean = grad.iter().sum::<f64>() / m as f64;
    grad.iter_mut().for_each(|v| *v -= mean);
    Ok((value, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// Constant step; `None` uses `τ = ε`.
    Fixed(Option<f64>),
    /// `τ_ℓ = τ₀/√ℓ` (ℓ starting at 1).
    InvSqrt(f64),
}

impl StepSchedule {
    /// `Fixed(None)` for `ε > 0`, `InvSqrt(1)` for the unregularized problem.
    pub fn default_for(epsilon: f64) -> Self {
        if epsilon > 0.0 {
            StepSchedule::Fixed(None)
        } else {
            StepSchedule::InvSqrt(1.0)
        }
    }

    fn step(&self, epsilon: f64, iteration: usize) -> f64 {
        match *self {
            StepSchedule::Fixed(t) => t.unwrap_or(epsilon),
            StepSchedule::InvSqrt(t0) => t0 / ((iteration + 1) as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SemidiscreteSolution {
    /// Mean-zero potential.
    pub g: Vec<f64>,
    pub value: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub value_trace: Vec<f64>,
}

fn gauge_fix(g: &mut [f64]) {
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    g.iter_mut().for_each(|v| *v -= mean);
}

/// Gradient ascent `g ← g + τ_ℓ ∇E^ε(g)` from `g = 0`, with the gauge fixed
/// to mean zero after every step. Stops once `‖∇E^ε‖∞ ≤ tol`.
pub fn solve_semidiscrete(
    source: &SampledMeasure,
    target: &DiscreteTarget,
    epsilon: f64,
    schedule: StepSchedule,
    tol: f64,
    max_iter: usize,
) -> Result<SemidiscreteSolution> {
    solve_semidiscrete_from(&vec![0.0; target.len()], source, target, epsilon, schedule, tol, max_iter)
}

/// As [`solve_semidiscrete`], starting the ascent at `init` (gauge-fixed first).
pub fn solve_semidiscrete_from(
    init: &[f64],
    source: &SampledMeasure,
    target: &DiscreteTarget,
    epsilon: f64,
    schedule: StepSchedule,
    tol: f64,
    max_iter: usize,
) -> Result<SemidiscreteSolution> {
    check_len("initial weights", init.len(), target.len())?;
    let step0 = schedule.step(epsilon, 0);
    if !(step0 > 0.0 && step0.is_finite()) {
        return Err(OtError::Domain(format!("step size must be positive, got {step0}")));
    }
    let mut g = init.to_vec();
    gauge_fix(&mut g);
    let mut trace = Vec::new();
    let mut best = (f64::NEG_INFINITY, g.clone(), f64::INFINITY);
    for it in 0..=max_iter {
        let (value, grad) = semidiscrete_objective_grad(&g, source, target, epsilon)?;
        let grad_inf = grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        trace.push(value);
        if value > best.0 {
            best = (value, g.clone(), grad_inf);
        }
        if grad_inf <= tol {
            return Ok(SemidiscreteSolution { g, value, grad_inf, iterations: it, value_trace: trace });
        }
        if it == max_iter {
            break;
        }
        let tau = schedule.step(epsilon, it);
        g.iter_mut().zip(&grad).for_each(|(x, d)| *x += tau * d);
        gauge_fix(&mut g);
    }
    Err(OtError::NotConverged { iterations: max_iter, residual: best.2, best: Some(best.1) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_source(n: usize) -> SampledMeasure {
        SampledMeasure::uniform((0..n).map(|i| vec![-1.0 + (2 * i + 1) as f64 / n as f64]).collect()).unwrap()
    }

    #[test]
    fn transform_examples() {
        let t = DiscreteTarget::new(vec![vec![0.5]], vec![1.0]).unwrap();
        for eps in [0.0, 0.1, 2.0] {
            assert!((gbar_transform(&[0.2], &[0.0], &t, eps).unwrap() - 0.05).abs() < 1e-15);
        }
        let t = DiscreteTarget::new(vec![vec![-0.5], vec![0.5]], vec![0.5, 0.5]).unwrap();
        assert_eq!(gbar_transform(&[0.1, 0.1], &[0.0], &t, 0.0).unwrap(), 0.25 - 0.1);
        let base = gbar_transform(&[0.1, -0.3], &[0.2], &t, 0.3).unwrap();
        let shifted = gbar_transform(&[1.1, 0.7], &[0.2], &t, 0.3).unwrap();
        assert!((base - shifted - 1.0).abs() < 1e-14);
    }

    #[test]
    fn indicator_examples() {
        let one = DiscreteTarget::new(vec![vec![3.0]], vec![1.0]).unwrap();
        assert_eq!(smoothed_indicator(&[0.0], &[1.0], &one, 0.5).unwrap(), vec![1.0]);
        let t = DiscreteTarget::new(vec![vec![-0.5], vec![0.5]], vec![0.5, 0.5]).unwrap();
        assert_eq!(smoothed_indicator(&[0.0, 0.0], &[0.0], &t, 0.2).unwrap(), vec![0.5, 0.5]);
        assert!(smoothed_indicator(&[0.0, 0.0], &[0.0], &t, 0.0).is_err());
    }

    #[test]
    fn laguerre_examples() {
        let src = line_source(10);
        let t = DiscreteTarget::new(vec![vec![-0.5], vec![0.5]], vec![0.5, 0.5]).unwrap();
        let cells = laguerre_assign(&[0.0, 0.0], &src, &t).unwrap();
        assert_eq!(cells.assignment, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        let cells = laguerre_assign(&[0.0, 10.0], &src, &t).unwrap();
        assert!(cells.assignment.iter().all(|&j| j == 1));
        assert!((cells.masses[1] - 1.0).abs() < 1e-14);
        let one = DiscreteTarget::new(vec![vec![0.0]], vec![1.0]).unwrap();
        assert!((laguerre_assign(&[0.0], &src, &one).unwrap().masses[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_site_converges_immediately() {
        let src = line_source(20);
        let one = DiscreteTarget::new(vec![vec![0.3]], vec![1.0]).unwrap();
        let (_, grad) = semidiscrete_objective_grad(&[0.7], &src, &one, 0.1).unwrap();
        assert!(grad[0].abs() < 1e-15);
        let sol = solve_semidiscrete(&src, &one, 0.1, StepSchedule::default_for(0.1), 1e-12, 10).unwrap();
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn value_is_shift_invariant() {
        let src = line_source(30);
        let t = DiscreteTarget::new(vec![vec![-0.7], vec![0.1], vec![0.6]], vec![0.2, 0.5, 0.3]).unwrap();
        let g = [0.3, -0.1, 0.05];
        let gs: Vec<f64> = g.iter().map(|v| v + 2.5).collect();
        for eps in [0.0, 0.2] {
            let (v0, d0) = semidiscrete_objective_grad(&g, &src, &t, eps).unwrap();
            let (v1, d1) = semidiscrete_objective_grad(&gs, &src, &t, eps).unwrap();
            assert!((v0 - v1).abs() < 1e-13);
            for (a, b) in d0.iter().zip(&d1) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn separated_clusters_recovered_at_zero_epsilon() {
        // 4 samples near −1 and 6 near +1, target masses matching the clusters.
        let mut pts: Vec<Vec<f64>> = (0..4).map(|i| vec![-1.0 + 0.01 * i as f64]).collect();
        pts.extend((0..6).map(|i| vec![1.0 + 0.01 * i as f64]));
        let src = SampledMeasure::uniform(pts).unwrap();
        let t = DiscreteTarget::new(vec![vec![0.9], vec![-0.2]], vec![0.6, 0.4]).unwrap();
        let sol = solve_semidiscrete(&src, &t, 0.0, StepSchedule::default_for(0.0), 1e-12, 10_000).unwrap();
        let cells = laguerre_assign(&sol.g, &src, &t).unwrap();
        assert_eq!(cells.assignment, vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0]);
        assert!(sol.g.iter().sum::<f64>().abs() < 1e-14);
    }

    #[test]
    fn asymmetric_masses_are_matched() {
        let src = line_source(200);
        let t = DiscreteTarget::new(vec![vec![-0.5], vec![0.5]], vec![0.3, 0.7]).unwrap();
        let sol = solve_semidiscrete(&src, &t, 0.05, StepSchedule::default_for(0.05), 1e-9, 100_000).unwrap();
        let x0 = [0.0];
        let chi = smoothed_indicator(&sol.g, &x0, &t, 0.05).unwrap();
        assert!(chi[1] > chi[0]);
        assert!(sol.grad_inf <= 1e-9);
    }
}
