//! JSON run configuration. Every problem found is reported together, keyed
//! by the offending entry.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum CostSpec {
    /// Squared distances between `n` equispaced points of `[lo, hi]`.
    Line { lo: f64, hi: f64 },
    /// Squared distances between pixel centres of the unit square.
    Square,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpec {
    /// Forward-difference gradient on the image grid (a line for 1-D data).
    Grid,
    Identity,
    Graph(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverSpec {
    Lbfgs,
    Gradient,
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerKind {
    Tv,
    Quadratic,
    Box,
}

/// Every recognised key. Which ones a command accepts is decided by [`Command`].
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub epsilon: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: u64,
    pub cost: Option<CostSpec>,
    pub rescale_median: bool,
    pub floor: f64,
    pub weights: Option<Vec<f64>>,
    pub solver: SolverSpec,
    pub step: Option<f64>,
    pub memory: usize,
    pub regularizer: RegularizerKind,
    pub lambda: f64,
    pub beta: u8,
    pub rho: Option<f64>,
    pub operator: OperatorSpec,
    pub accel: bool,
    pub backtracking: bool,
    pub tau: f64,
    pub steps: usize,
    pub sinkhorn_tol: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            epsilon: None,
            tol: None,
            max_iter: None,
            seed: 0,
            cost: None,
            rescale_median: false,
            floor: 0.0,
            weights: None,
            solver: SolverSpec::Lbfgs,
            step: None,
            memory: 10,
            regularizer: RegularizerKind::Tv,
            lambda: 1.0,
            beta: 2,
            rho: None,
            operator: OperatorSpec::Grid,
            accel: true,
            backtracking: true,
            tau: 0.1,
            steps: 10,
            sinkhorn_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Barycenter,
    Regbary,
    Flow,
    Semidiscrete,
}

const COMMON: &[&str] = &["epsilon", "tol", "max_iter", "seed"];
const DATA: &[&str] = &["cost", "rescale_median", "floor"];
const REG: &[&str] = &["regularizer", "lambda", "beta", "rho", "operator", "accel", "backtracking"];

impl Command {
    fn allowed(self) -> Vec<&'static str> {
        let mut keys: Vec<&str> = COMMON.to_vec();
        match self {
            Command::Barycenter => {
                keys.extend(DATA);
                keys.extend(["weights", "solver", "step", "memory"]);
            }
            Command::Regbary => {
                keys.extend(DATA);
                keys.extend(REG);
                keys.push("weights");
            }
            Command::Flow => {
                keys.extend(DATA);
                keys.extend(REG);
                keys.extend(["tau", "steps", "sinkhorn_tol"]);
            }
            Command::Semidiscrete => keys.push("step"),
        }
        keys
    }
}

struct Checker<'a> {
    map: &'a Map<String, Value>,
    errors: Vec<String>,
}

impl Checker<'_> {
    fn fail(&mut self, key: &str, msg: impl Into<String>) {
        self.errors.push(format!("{key}: {}", msg.into()));
    }

    fn real(&mut self, key: &str, ok: impl Fn(f64) -> bool, want: &str) -> Option<f64> {
        let v = self.map.get(key)?;
        match v.as_f64() {
            Some(x) if x.is_finite() && ok(x) => Some(x),
            _ => {
                self.fail(key, format!("expected {want}, got {v}"));
                None
            }
        }
    }

    fn count(&mut self, key: &str, min: u64) -> Option<usize> {
        let v = self.map.get(key)?;
        match v.as_u64() {
            Some(x) if x >= min => Some(x as usize),
            _ => {
                self.fail(key, format!("expected an integer ≥ {min}, got {v}"));
                None
            }
        }
    }

    fn flag(&mut self, key: &str) -> Option<bool> {
        let v = self.map.get(key)?;
        let b = v.as_bool();
        if b.is_none() {
            self.fail(key, format!("expected true or false, got {v}"));
        }
        b
    }

    fn choice<T: Copy>(&mut self, key: &str, options: &[(&str, T)]) -> Option<T> {
        let v = self.map.get(key)?;
        let found = v.as_str().and_then(|s| options.iter().find(|(name, _)| *name == s).map(|(_, t)| *t));
        if found.is_none() {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            self.fail(key, format!("expected one of {}, got {v}", names.join(", ")));
        }
        found
    }
}

fn parse_cost(c: &mut Checker, v: &Value) -> Option<CostSpec> {
    match v {
        Value::String(s) if s == "line" => Some(CostSpec::Line { lo: 0.0, hi: 1.0 }),
        Value::String(s) if s == "square" => Some(CostSpec::Square),
        Value::Object(o) if o.contains_key("file") => match o.get("file").and_then(Value::as_str) {
            Some(p) if o.len() == 1 => Some(CostSpec::File(PathBuf::from(p))),
            _ => {
                c.fail("cost", "expected {\"file\": \"path\"}");
                None
            }
        },
        Value::Object(o) if o.get("grid").and_then(Value::as_str) == Some("line") => {
            let lo = o.get("lo").map_or(Some(0.0), Value::as_f64);
            let hi = o.get("hi").map_or(Some(1.0), Value::as_f64);
            match (lo, hi) {
                (Some(lo), Some(hi)) if lo < hi && o.keys().all(|k| ["grid", "lo", "hi"].contains(&k.as_str())) => {
                    Some(CostSpec::Line { lo, hi })
                }
                _ => {
                    c.fail("cost", "a line grid needs numbers lo < hi and no other keys");
                    None
                }
            }
        }
        _ => {
            c.fail("cost", format!("expected \"line\", \"square\", {{\"grid\": \"line\", \"lo\", \"hi\"}} or {{\"file\": path}}, got {v}"));
            None
        }
    }
}

fn parse_operator(c: &mut Checker, v: &Value) -> Option<OperatorSpec> {
    match v {
        Value::String(s) if s == "grid" => Some(OperatorSpec::Grid),
        Value::String(s) if s == "identity" => Some(OperatorSpec::Identity),
        Value::Object(o) if o.len() == 1 && o.contains_key("graph") => {
            let edges = o["graph"].as_array().and_then(|es| {
                es.iter()
                    .map(|e| match e.as_array().map(Vec::as_slice) {
                        Some([a, b]) => Some((a.as_u64()? as usize, b.as_u64()? as usize)),
                        _ => None,
                    })
                    .collect::<Option<Vec<_>>>()
            });
            if edges.is_none() {
                c.fail("operator", "graph edges must be pairs of node indices");
            }
            edges.map(OperatorSpec::Graph)
        }
        _ => {
            c.fail("operator", format!("expected \"grid\", \"identity\" or {{\"graph\": [[i, j], …]}}, got {v}"));
            None
        }
    }
}

/// Validates `text` for `command`, listing every offending key on failure.
pub fn parse_config(text: &str, command: Command) -> Result<Config> {
    let value: Value = serde_json::from_str(text).context("configuration is not valid JSON")?;
    let Value::Object(map) = value else { bail!("configuration must be a JSON object") };
    let mut c = Checker { map: &map, errors: Vec::new() };
    let allowed = command.allowed();
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            c.fail(key, "unknown key for this command");
        }
    }
    let mut cfg = Config::default();
    cfg.epsilon = c.real("epsilon", |x| x >= 0.0, "a number ≥ 0");
    cfg.tol = c.real("tol", |x| x >= 0.0, "a number ≥ 0");
    cfg.max_iter = c.count("max_iter", 0);
    if let Some(s) = c.count("seed", 0) {
        cfg.seed = s as u64;
    }
    if let Some(v) = map.get("cost") {
        cfg.cost = parse_cost(&mut c, v);
    }
    if let Some(b) = c.flag("rescale_median") {
        cfg.rescale_median = b;
    }
    if let Some(x) = c.real("floor", |x| x >= 0.0, "a number ≥ 0") {
        cfg.floor = x;
    }
    if let Some(v) = map.get("weights") {
        let w = v.as_array().and_then(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>());
        match w {
            Some(w) if !w.is_empty() && w.iter().all(|x| x.is_finite() && *x >= 0.0) && w.iter().sum::<f64>() > 0.0 => {
                cfg.weights = Some(w)
            }
            _ => c.fail("weights", "expected a nonempty array of nonnegative numbers with positive sum"),
        }
    }
    if let Some(s) = c.choice(
        "solver",
        &[("lbfgs", SolverSpec::Lbfgs), ("gradient", SolverSpec::Gradient), ("backtracking", SolverSpec::Backtracking)],
    ) {
        cfg.solver = s;
    }
    cfg.step = c.real("step", |x| x > 0.0, "a number > 0");
    if let Some(m) = c.count("memory", 1) {
        cfg.memory = m;
    }
    if let Some(r) = c.choice(
        "regularizer",
        &[("tv", RegularizerKind::Tv), ("quadratic", RegularizerKind::Quadratic), ("box", RegularizerKind::Box)],
    ) {
        cfg.regularizer = r;
    }
    if let Some(x) = c.real("lambda", |x| x >= 0.0, "a number ≥ 0") {
        cfg.lambda = x;
    }
    if let Some(v) = map.get("beta") {
        match v.as_u64() {
            Some(b @ (1 | 2)) => cfg.beta = b as u8,
            _ => c.fail("beta", format!("expected 1 (anisotropic) or 2 (isotropic), got {v}")),
        }
    }
    cfg.rho = c.real("rho", |x| x > 0.0, "a number > 0");
    if cfg.regularizer == RegularizerKind::Box && cfg.rho.is_none() && !map.contains_key("rho") {
        c.fail("rho", "required by the box regularizer");
    }
    if let Some(v) = map.get("operator") {
        if let Some(op) = parse_operator(&mut c, v) {
            cfg.operator = op;
        }
    }
    if let Some(b) = c.flag("accel") {
        cfg.accel = b;
    }
    if let Some(b) = c.flag("backtracking") {
        cfg.backtracking = b;
    }
    if let Some(x) = c.real("tau", |x| x >= 0.0, "a number ≥ 0") {
        cfg.tau = x;
    }
    if let Some(s) = c.count("steps", 1) {
        cfg.steps = s;
    }
    if let Some(x) = c.real("sinkhorn_tol", |x| x > 0.0, "a number > 0") {
        cfg.sinkhorn_tol = x;
    }
    if !c.errors.is_empty() {
        bail!("invalid configuration:\n  {}", c.errors.join("\n  "));
    }
    Ok(cfg)
}
