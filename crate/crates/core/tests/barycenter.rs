use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use otdual::barycenter::{
    primal_objective, smooth_primal_gradient, solve_barycenter, BarycenterOptions, BarycenterProblem, StepRule,
};
use otdual::entropic::{self_transport, sinkhorn_potentials, SinkhornOptions};
use otdual::lbfgs::Lbfgs;
use otdual::{CostMatrix, Histogram};

fn inputs(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Array2<f64> {
    let b = Array2::from_shape_fn((n, k), |_| rng.gen_range(0.1..1.0));
    &b / &b.sum_axis(ndarray::Axis(0))
}

fn opts() -> BarycenterOptions {
    BarycenterOptions { step: StepRule::QuasiNewton(Box::new(Lbfgs::new(10, 0.05))), tol: 1e-12, max_iter: 20_000, init: None }
}

fn l1(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

#[test]
fn input_permutation_leaves_the_barycenter_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let k = CostMatrix::grid_1d(12, 0.0, 1.0).unwrap().gibbs(0.1).unwrap();
    let b = inputs(&mut rng, 12, 3);
    let w = vec![0.2, 0.3, 0.5];
    let p = BarycenterProblem::new(b.clone(), w.clone(), &k).unwrap();
    let base = solve_barycenter(&p, opts()).unwrap().barycenter;
    let order = [2, 0, 1];
    let permuted = Array2::from_shape_fn((12, 3), |(i, j)| b[[i, order[j]]]);
    let pw: Vec<f64> = order.iter().map(|&j| w[j]).collect();
    let q = BarycenterProblem::new(permuted, pw, &k).unwrap();
    let other = solve_barycenter(&q, opts()).unwrap().barycenter;
    assert!(l1(base.as_slice(), other.as_slice()) <= 1e-10);
}

#[test]
fn constant_cost_shift_leaves_the_barycenter_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let cost = CostMatrix::grid_1d(10, 0.0, 1.0).unwrap();
    let shifted = CostMatrix::new(cost.entries().mapv(|c| c + 0.4)).unwrap();
    let b = inputs(&mut rng, 10, 2);
    let (k0, k1) = (cost.gibbs(0.1).unwrap(), shifted.gibbs(0.1).unwrap());
    let a0 = solve_barycenter(&BarycenterProblem::new(b.clone(), vec![0.5, 0.5], &k0).unwrap(), opts()).unwrap();
    let a1 = solve_barycenter(&BarycenterProblem::new(b, vec![0.5, 0.5], &k1).unwrap(), opts()).unwrap();
    assert!(l1(a0.barycenter.as_slice(), a1.barycenter.as_slice()) <= 1e-8);
}

#[test]
fn all_columns_of_the_gradient_agree_at_convergence() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let k = CostMatrix::grid_1d(15, 0.0, 1.0).unwrap().gibbs(0.05).unwrap();
    let p = BarycenterProblem::new(inputs(&mut rng, 15, 3), vec![0.3, 0.3, 0.4], &k).unwrap();
    let sol = solve_barycenter(&p, BarycenterOptions { tol: 1e-9, ..opts() }).unwrap();
    for col in sol.delta.columns() {
        assert!(l1(&col.to_vec(), sol.barycenter.as_slice()) <= 1e-8 * 3f64.sqrt() * 15.0);
    }
}

#[test]
fn smooth_primal_gradient_is_constant_at_the_barycenter() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let k = CostMatrix::grid_1d(10, 0.0, 1.0).unwrap().gibbs(0.1).unwrap();
    let p = BarycenterProblem::new(inputs(&mut rng, 10, 2), vec![0.6, 0.4], &k).unwrap();
    let a = solve_barycenter(&p, opts()).unwrap().barycenter;
    let tol = 1e-11;
    let g = smooth_primal_gradient(&a, &p, tol).unwrap();
    let spread = g.iter().copied().fold(f64::NEG_INFINITY, f64::max) - g.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread <= 1e-8, "{spread}");
}

#[test]
fn smooth_primal_gradient_is_a_descent_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let k = CostMatrix::grid_1d(8, 0.0, 1.0).unwrap().gibbs(0.1).unwrap();
    let p = BarycenterProblem::new(inputs(&mut rng, 8, 2), vec![0.5, 0.5], &k).unwrap();
    let a = Histogram::uniform(8).unwrap();
    let g = smooth_primal_gradient(&a, &p, 1e-12).unwrap();
    let mean = g.iter().sum::<f64>() / 8.0;
    let t = 1e-3;
    let moved: Vec<f64> = a.iter().zip(&g).map(|(x, d)| x - t * (d - mean)).collect();
    assert!(moved.iter().all(|&v| v > 0.0));
    assert!(primal_objective(&moved, &p, 1e-12).unwrap() < primal_objective(a.as_slice(), &p, 1e-12).unwrap());
}

#[test]
fn duplicated_inputs_give_the_single_input_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let k = CostMatrix::grid_1d(8, 0.0, 1.0).unwrap().gibbs(0.1).unwrap();
    let b = inputs(&mut rng, 8, 1);
    let twice = ndarray::concatenate![ndarray::Axis(1), b, b];
    let a = Histogram::new(inputs(&mut rng, 8, 1).column(0).to_vec()).unwrap();
    let g1 = smooth_primal_gradient(&a, &BarycenterProblem::new(b.clone(), vec![1.0], &k).unwrap(), 1e-12).unwrap();
    let g2 = smooth_primal_gradient(&a, &BarycenterProblem::new(twice, vec![0.5, 0.5], &k).unwrap(), 1e-12).unwrap();
    assert!(l1(&g1, &g2) <= 1e-12);
}

#[test]
fn self_transport_agrees_with_sinkhorn() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    for eps in [0.5, 0.05, 0.01] {
        let k = CostMatrix::grid_1d(20, 0.0, 1.0).unwrap().gibbs(eps).unwrap();
        let a = inputs(&mut rng, 20, 1).column(0).to_vec();
        let opts = SinkhornOptions { tol: 1e-12, max_iter: 1_000_000, init_f: None };
        let sym = self_transport(&a, &k, &opts).unwrap();
        let plain = sinkhorn_potentials(&a, &a, &k, &opts).unwrap();
        assert!((sym.dual_value - plain.dual_value).abs() <= 1e-10, "{eps}: {} vs {}", sym.dual_value, plain.dual_value);
        assert!(sym.residual <= 1e-12);
    }
}

#[test]
fn self_transport_rejects_asymmetric_costs() {
    let cost = CostMatrix::new(ndarray::array![[0.0, 1.0], [2.0, 0.0]]).unwrap();
    let k = cost.gibbs(0.1).unwrap();
    assert!(self_transport(&[0.5, 0.5], &k, &SinkhornOptions::default()).is_err());
}
