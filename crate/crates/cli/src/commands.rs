//! Subcommand implementations. Each returns whether the requested tolerance
//! was reached; outputs are written either way.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use ndarray::Array2;
use serde_json::{json, Value};

use otdual::barycenter::{run_barycenter, BarycenterOptions, BarycenterProblem, StepRule};
use otdual::cost::CostMatrix;
use otdual::entropic::{coupling_from_potentials, dual_value, marginal_residuals, primal_value, sinkhorn_potentials, SinkhornOptions};
use otdual::flow::{run_flow, FlowOptions};
use otdual::lbfgs::Lbfgs;
use otdual::lp::{exact_ot, exact_wbp};
use otdual::regularized::{graph_gradient, grid_gradient, identity, run_regularized, LinearOperator, RegularizedOptions, Regularizer};
use otdual::semidiscrete::{laguerre_assign, solve_semidiscrete, DiscreteTarget, SampledMeasure, StepSchedule};
use otdual::{GibbsKernel, GridGibbsKernel, Histogram, LogKernel, OtError};

use crate::config::{parse_config, Command, Config, CostSpec, OperatorSpec, RegularizerKind, SolverSpec};
use crate::io::{format_matrix, format_pgm, format_vector, load_density, read_matrix, read_vector, write, Density, Pgm};

/// Gray levels used when writing PGM output.
const PGM_MAXVAL: u32 = 65535;

pub struct DistanceArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    pub cost: Option<PathBuf>,
    pub grid: Option<String>,
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub rescale_median: bool,
    pub dump_coupling: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub struct SolveArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub rescale_median: bool,
    pub inputs: Vec<PathBuf>,
}

pub struct SemidiscreteArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub source: PathBuf,
    pub source_weights: Option<PathBuf>,
    pub sites: PathBuf,
    pub masses: PathBuf,
}

fn emit(value: &Value, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => write(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>, command: Command) -> Result<Config> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            parse_config(&text, command).with_context(|| format!("{}", p.display()))
        }
        None => Ok(Config::default()),
    }
}

fn parse_grid_flag(spec: &str, n: usize) -> Result<CostMatrix> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.parse::<f64>().with_context(|| format!("--grid: bad number {s:?}"));
    let int = |s: &str| s.parse::<usize>().with_context(|| format!("--grid: bad size {s:?}"));
    let cost = match parts.as_slice() {
        ["line"] => CostMatrix::grid_1d(n, 0.0, 1.0)?,
        ["line", lo, hi] => CostMatrix::grid_1d(n, num(lo)?, num(hi)?)?,
        ["square", h, w] => {
            let (h, w) = (int(h)?, int(w)?);
            ensure!(h * w == n, "--grid {spec}: {h}×{w} grid for {n} bins");
            CostMatrix::grid_2d(h, w)?
        }
        _ => bail!("--grid: expected line, line:LO:HI or square:H:W, got {spec:?}"),
    };
    Ok(cost)
}

fn dense_cost(spec: &CostSpec, n: usize, shape: Option<(usize, usize)>) -> Result<CostMatrix> {
    Ok(match spec {
        CostSpec::Line { lo, hi } => CostMatrix::grid_1d(n, *lo, *hi)?,
        CostSpec::Square => {
            let (h, w) = shape.context("a square grid cost needs image (PGM) inputs")?;
            CostMatrix::grid_2d(h, w)?
        }
        CostSpec::File(p) => {
            let c = CostMatrix::new(read_matrix(p)?)?;
            ensure!(c.shape() == (n, n), "{}: cost is {:?}, expected {n}×{n}", p.display(), c.shape());
            c
        }
    })
}

/// `distance`: entropic transport by Sinkhorn, or the exact LP at `ε = 0`.
pub fn distance(args: &DistanceArgs) -> Result<bool> {
    let start = Instant::now();
    let a = load_density(&args.a, 0.0)?;
    let b = load_density(&args.b, 0.0)?;
    let (n, m) = (a.values.len(), b.values.len());
    let mut cost = match (&args.cost, &args.grid) {
        (Some(_), Some(_)) => bail!("--cost and --grid are mutually exclusive"),
        (Some(p), None) => CostMatrix::new(read_matrix(p)?)?,
        (None, Some(g)) => {
            ensure!(n == m, "--grid needs histograms of equal length, got {n} and {m}");
            parse_grid_flag(g, n)?
        }
        (None, None) => {
            ensure!(n == m, "a default grid cost needs histograms of equal length, got {n} and {m}");
            match a.shape {
                Some((h, w)) if b.shape == a.shape => CostMatrix::grid_2d(h, w)?,
                _ => CostMatrix::grid_1d(n, 0.0, 1.0)?,
            }
        }
    };
    ensure!(cost.shape() == (n, m), "cost is {:?} for histograms of length {n} and {m}", cost.shape());
    if args.rescale_median {
        cost.rescale_median()?;
    }
    let eps = args.epsilon;
    ensure!(eps >= 0.0 && eps.is_finite(), "--epsilon must be finite and ≥ 0, got {eps}");
    let (summary, coupling, converged) = if eps == 0.0 {
        let sol = exact_ot(&a.values, &b.values, &cost)?;
        let (ra, rb) = marginal_residuals(&sol.coupling, &a.values, &b.values);
        let dual = sol.u.iter().zip(&a.values).chain(sol.v.iter().zip(&b.values)).map(|(p, w)| p * w).sum::<f64>();
        let s = json!({
            "solver": "network-simplex",
            "epsilon": 0.0,
            "value": sol.value,
            "dual_value": dual,
            "marginal_residuals": [ra, rb],
            "iterations": sol.pivots,
            "converged": true,
        });
        (s, sol.coupling, true)
    } else {
        let ha = Histogram::new(a.values.clone())?;
        let hb = Histogram::new(b.values.clone())?;
        let kernel = cost.gibbs(eps)?;
        let opts = SinkhornOptions { tol: args.tol, max_iter: args.max_iter, init_f: None };
        match sinkhorn_potentials(&ha, &hb, &kernel, &opts) {
            Ok(sol) => {
                let p = coupling_from_potentials(&kernel, &sol.potentials.f, &sol.potentials.g, &ha, &hb);
                let (ra, rb) = marginal_residuals(&p, &ha, &hb);
                let value = primal_value(&ha, &hb, &cost, eps, &p)?;
                let dual = dual_value(&ha, &hb, &cost, eps, &sol.potentials)?;
                let s = json!({
                    "solver": "sinkhorn",
                    "epsilon": eps,
                    "value": value,
                    "dual_value": dual,
                    "transport_cost": (&p * cost.entries()).sum(),
                    "marginal_residuals": [ra, rb],
                    "iterations": sol.iterations,
                    "converged": true,
                });
                (s, p, true)
            }
            Err(OtError::NotConverged { iterations, residual, .. }) => {
                let s = json!({
                    "solver": "sinkhorn",
                    "epsilon": eps,
                    "value": null,
                    "dual_value": null,
                    "marginal_residuals": [residual, null],
                    "iterations": iterations,
                    "converged": false,
                });
                (s, Array2::zeros((0, 0)), false)
            }
            Err(e) => return Err(e.into()),
        }
    };
    if let (Some(path), true) = (&args.dump_coupling, converged) {
        write(path, &format_matrix(&coupling))?;
    }
    let mut summary = summary;
    summary["wall_time_seconds"] = json!(start.elapsed().as_secs_f64());
    emit(&summary, args.out.as_deref())?;
    Ok(converged)
}

/// Log kernel over either a dense cost or the separable image grid.
enum Kernel {
    Dense(GibbsKernel),
    Grid(GridGibbsKernel),
}

impl LogKernel for Kernel {
    fn epsilon(&self) -> f64 {
        match self {
            Kernel::Dense(k) => k.epsilon(),
            Kernel::Grid(k) => k.epsilon(),
        }
    }
    fn shape(&self) -> (usize, usize) {
        match self {
            Kernel::Dense(k) => k.shape(),
            Kernel::Grid(k) => k.shape(),
        }
    }
    fn log_apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Kernel::Dense(k) => k.log_apply(x),
            Kernel::Grid(k) => k.log_apply(x),
        }
    }
    fn log_apply_t(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Kernel::Dense(k) => k.log_apply_t(x),
            Kernel::Grid(k) => k.log_apply_t(x),
        }
    }
    fn cost(&self, i: usize, j: usize) -> f64 {
        match self {
            Kernel::Dense(k) => k.cost(i, j),
            Kernel::Grid(k) => k.cost(i, j),
        }
    }
}

struct Data {
    inputs: Vec<Density>,
    n: usize,
    shape: Option<(usize, usize)>,
    cost_spec: CostSpec,
    rescale: bool,
}

fn load_inputs(paths: &[PathBuf], cfg: &Config, rescale_flag: bool) -> Result<Data> {
    ensure!(!paths.is_empty(), "no input densities given");
    let inputs = paths.iter().map(|p| load_density(p, cfg.floor)).collect::<Result<Vec<_>>>()?;
    let n = inputs[0].values.len();
    let shape = inputs[0].shape;
    for (d, p) in inputs.iter().zip(paths) {
        ensure!(d.values.len() == n, "{}: {} bins, expected {n}", p.display(), d.values.len());
        ensure!(d.shape == shape, "{}: image shape {:?} differs from {:?}", p.display(), d.shape, shape);
    }
    let cost_spec = cfg.cost.clone().unwrap_or(if shape.is_some() { CostSpec::Square } else { CostSpec::Line { lo: 0.0, hi: 1.0 } });
    Ok(Data { inputs, n, shape, cost_spec, rescale: cfg.rescale_median || rescale_flag })
}

impl Data {
    fn epsilon(&self, cfg: &Config) -> f64 {
        cfg.epsilon.unwrap_or(1.0 / self.n as f64)
    }

    fn dense(&self) -> Result<CostMatrix> {
        let mut c = dense_cost(&self.cost_spec, self.n, self.shape)?;
        if self.rescale {
            c.rescale_median()?;
        }
        Ok(c)
    }

    fn kernel(&self, eps: f64) -> Result<Kernel> {
        if let (CostSpec::Square, false, Some((h, w))) = (&self.cost_spec, self.rescale, self.shape) {
            return Ok(Kernel::Grid(GridGibbsKernel::unit_square(h, w, eps)?));
        }
        Ok(Kernel::Dense(self.dense()?.gibbs(eps)?))
    }

    fn matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.inputs.len()), |(i, k)| self.inputs[k].values[i])
    }

    fn weights(&self, cfg: &Config) -> Result<Vec<f64>> {
        let nk = self.inputs.len();
        match &cfg.weights {
            Some(w) => {
                ensure!(w.len() == nk, "weights: {} entries for {nk} inputs", w.len());
                let s: f64 = w.iter().sum();
                Ok(if s == 1.0 { w.clone() } else { w.iter().map(|x| x / s).collect() })
            }
            None => Ok(vec![1.0 / nk as f64; nk]),
        }
    }

    fn operator(&self, spec: &OperatorSpec) -> Result<Box<dyn LinearOperator>> {
        Ok(match spec {
            OperatorSpec::Grid => {
                let (h, w) = self.shape.unwrap_or((1, self.n));
                Box::new(grid_gradient(h, w)?)
            }
            OperatorSpec::Identity => Box::new(identity(self.n)),
            OperatorSpec::Graph(edges) => Box::new(graph_gradient(edges, self.n)?),
        })
    }

    /// Writes `name.csv`, plus `name.pgm` for image data.
    fn write_density(&self, dir: &Path, name: &str, values: &[f64]) -> Result<()> {
        write(&dir.join(format!("{name}.csv")), &format_vector(values))?;
        if let Some((h, w)) = self.shape {
            write(&dir.join(format!("{name}.pgm")), &format_pgm(&Pgm::quantize(values, h, w, PGM_MAXVAL)?))?;
        }
        Ok(())
    }
}

fn regularizer(cfg: &Config, lambda: f64) -> Result<Regularizer> {
    Ok(match cfg.regularizer {
        RegularizerKind::Tv if cfg.beta == 1 => Regularizer::TvAniso { lambda },
        RegularizerKind::Tv => Regularizer::TvIso { lambda },
        RegularizerKind::Quadratic => Regularizer::Quadratic { lambda },
        RegularizerKind::Box => Regularizer::Box { rho: cfg.rho.context("rho: required by the box regularizer")? },
    })
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// `barycenter`: smooth dual descent, or the exact LP at `ε = 0`.
pub fn barycenter(args: &SolveArgs) -> Result<bool> {
    let start = Instant::now();
    let cfg = load_config(args.config.as_deref(), Command::Barycenter)?;
    let data = load_inputs(&args.inputs, &cfg, args.rescale_median)?;
    prepare_out(&args.out)?;
    let weights = data.weights(&cfg)?;
    let eps = data.epsilon(&cfg);
    let mut summary;
    let converged;
    if eps == 0.0 {
        let sol = exact_wbp(&data.matrix(), &weights, &data.dense()?)?;
        data.write_density(&args.out, "barycenter", &sol.barycenter)?;
        converged = true;
        summary = json!({ "solver": "exact-lp", "value": sol.value, "iterations": 0 });
    } else {
        let kernel = data.kernel(eps)?;
        let problem = BarycenterProblem::new(data.matrix(), weights, &kernel)?;
        let step = match cfg.solver {
            SolverSpec::Lbfgs => StepRule::QuasiNewton(Box::new(Lbfgs::new(cfg.memory, cfg.step.unwrap_or(0.5 * eps)))),
            SolverSpec::Gradient => StepRule::Fixed(cfg.step),
            SolverSpec::Backtracking => StepRule::Backtracking { initial: cfg.step },
        };
        let opts = BarycenterOptions { step, tol: cfg.tol.unwrap_or(1e-6), max_iter: cfg.max_iter.unwrap_or(10_000), init: None };
        let sol = run_barycenter(&problem, opts)?;
        data.write_density(&args.out, "barycenter", &sol.barycenter)?;
        converged = sol.converged;
        summary = json!({
            "solver": "dual-descent",
            "objective_trace": sol.trace.iter().map(|t| t.objective).collect::<Vec<_>>(),
            "monitor_trace": sol.trace.iter().map(|t| t.monitor).collect::<Vec<_>>(),
            "iterations": sol.iterations,
            "evaluations": sol.evaluations,
        });
    }
    summary["command"] = json!("barycenter");
    summary["epsilon"] = json!(eps);
    summary["inputs"] = json!(args.inputs.len());
    summary["bins"] = json!(data.n);
    summary["seed"] = json!(cfg.seed);
    summary["converged"] = json!(converged);
    summary["wall_time_seconds"] = json!(start.elapsed().as_secs_f64());
    write(&args.out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(converged)
}

/// `regbary`: regularized barycenter by forward-backward splitting on the dual.
pub fn regbary(args: &SolveArgs) -> Result<bool> {
    let start = Instant::now();
    let cfg = load_config(args.config.as_deref(), Command::Regbary)?;
    let data = load_inputs(&args.inputs, &cfg, args.rescale_median)?;
    prepare_out(&args.out)?;
    let eps = data.epsilon(&cfg);
    ensure!(eps > 0.0, "epsilon: the regularized solver needs ε > 0");
    let kernel = data.kernel(eps)?;
    let problem = BarycenterProblem::new(data.matrix(), data.weights(&cfg)?, &kernel)?;
    let op = data.operator(&cfg.operator)?;
    let reg = regularizer(&cfg, cfg.lambda)?;
    let opts = RegularizedOptions {
        accel: cfg.accel,
        backtracking: cfg.backtracking,
        tol: cfg.tol.unwrap_or(1e-8),
        max_iter: cfg.max_iter.unwrap_or(20_000),
        warm_start: None,
    };
    let sol = run_regularized(&problem, op.as_ref(), &reg, opts)?;
    data.write_density(&args.out, "barycenter", &sol.barycenter)?;
    let summary = json!({
        "command": "regbary",
        "epsilon": eps,
        "regularizer": reg.tag(),
        "inputs": args.inputs.len(),
        "bins": data.n,
        "objective_trace": sol.objective_trace,
        "monitor_trace": [sol.gradient_mapping],
        "gradient_mapping": sol.gradient_mapping,
        "lipschitz_bound": sol.lipschitz_bound,
        "restarts": sol.restarts,
        "iterations": sol.iterations,
        "seed": cfg.seed,
        "converged": sol.converged,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
    });
    write(&args.out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(sol.converged)
}

/// `flow`: JKO steps from one initial density.
pub fn flow(args: &SolveArgs) -> Result<bool> {
    let start = Instant::now();
    let cfg = load_config(args.config.as_deref(), Command::Flow)?;
    ensure!(args.inputs.len() == 1, "flow takes exactly one initial density, got {}", args.inputs.len());
    let data = load_inputs(&args.inputs, &cfg, args.rescale_median)?;
    prepare_out(&args.out)?;
    let eps = data.epsilon(&cfg);
    ensure!(eps > 0.0, "epsilon: the flow needs ε > 0");
    let kernel = data.kernel(eps)?;
    let op = data.operator(&cfg.operator)?;
    let reg = regularizer(&cfg, cfg.lambda)?;
    ensure!(cfg.backtracking, "backtracking: the flow always adapts its step");
    let opts = FlowOptions {
        accel: cfg.accel,
        tol: cfg.tol.unwrap_or(1e-8),
        max_iter: cfg.max_iter.unwrap_or(20_000),
        sinkhorn_tol: cfg.sinkhorn_tol,
    };
    let a0 = Histogram::new(data.inputs[0].values.clone())?;
    let mut summary = json!({
        "command": "flow",
        "epsilon": eps,
        "tau": cfg.tau,
        "regularizer": reg.tag(),
        "bins": data.n,
        "seed": cfg.seed,
    });
    let converged = match run_flow(&a0, cfg.steps, &kernel, cfg.tau, op.as_ref(), &reg, &opts) {
        Ok(traj) => {
            let mut rows = vec![a0.to_vec()];
            rows.extend(traj.iterates.iter().map(|a| a.to_vec()));
            let m = Array2::from_shape_fn((rows.len(), data.n), |(k, i)| rows[k][i]);
            write(&args.out.join("trajectory.csv"), &format_matrix(&m))?;
            for (k, a) in traj.iterates.iter().enumerate() {
                data.write_density(&args.out, &format!("step_{:03}", k + 1), a)?;
            }
            data.write_density(&args.out, "final", traj.iterates.last().expect("steps ≥ 1"))?;
            summary["objective_trace"] = json!(traj.records.iter().map(|r| r.objective_new).collect::<Vec<_>>());
            summary["monitor_trace"] = json!(traj.records.iter().map(|r| r.descent_gap()).collect::<Vec<_>>());
            summary["energy_trace"] = json!(traj.records.iter().map(|r| r.energy).collect::<Vec<_>>());
            summary["iterations"] = json!(traj.records.iter().map(|r| r.iterations).sum::<usize>());
            summary["steps"] = json!(traj.records.len());
            true
        }
        Err(OtError::NotConverged { iterations, residual, .. }) => {
            summary["error"] = json!(format!("a step did not converge after {iterations} iterations (gradient mapping {residual:.3e})"));
            false
        }
        Err(e) => return Err(e.into()),
    };
    summary["converged"] = json!(converged);
    summary["wall_time_seconds"] = json!(start.elapsed().as_secs_f64());
    write(&args.out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(converged)
}

fn points(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// `semidiscrete`: semi-dual ascent from sampled source to discrete sites.
pub fn semidiscrete(args: &SemidiscreteArgs) -> Result<bool> {
    let start = Instant::now();
    let cfg = load_config(args.config.as_deref(), Command::Semidiscrete)?;
    prepare_out(&args.out)?;
    let xs = points(&read_matrix(&args.source)?);
    let source = match &args.source_weights {
        Some(p) => SampledMeasure::new(xs, read_vector(p)?)?,
        None => SampledMeasure::uniform(xs)?,
    };
    let target = DiscreteTarget::new(points(&read_matrix(&args.sites)?), load_density(&args.masses, 0.0)?.values)?;
    ensure!(source.points()[0].len() == target.sites()[0].len(), "source and sites differ in dimension");
    let eps = cfg.epsilon.unwrap_or(1e-2);
    let schedule = match (cfg.step, eps > 0.0) {
        (Some(t), true) => StepSchedule::Fixed(Some(t)),
        (Some(t), false) => StepSchedule::InvSqrt(t),
        (None, _) => StepSchedule::default_for(eps),
    };
    let tol = cfg.tol.unwrap_or(1e-8);
    let max_iter = cfg.max_iter.unwrap_or(10_000);
    let (g, converged, mut summary) = match solve_semidiscrete(&source, &target, eps, schedule, tol, max_iter) {
        Ok(sol) => {
            let s = json!({
                "objective_trace": sol.value_trace,
                "gradient_inf": sol.grad_inf,
                "iterations": sol.iterations,
            });
            (sol.g, true, s)
        }
        Err(OtError::NotConverged { iterations, residual, best: Some(g) }) => {
            (g, false, json!({ "gradient_inf": residual, "iterations": iterations }))
        }
        Err(e) => return Err(e.into()),
    };
    write(&args.out.join("g.csv"), &format_vector(&g))?;
    let cells = laguerre_assign(&g, &source, &target)?;
    summary["command"] = json!("semidiscrete");
    summary["epsilon"] = json!(eps);
    summary["cell_masses"] = json!(cells.masses);
    summary["seed"] = json!(cfg.seed);
    summary["converged"] = json!(converged);
    summary["wall_time_seconds"] = json!(start.elapsed().as_secs_f64());
    write(&args.out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(converged)
}
