//! Primal network simplex for uncapacitated min-cost flow.
//!
//! The spanning tree is kept strongly feasible (every zero-flow tree arc
//! points toward the root), which rules out cycling for any entering rule.
//! Tree flows and node potentials are recomputed from scratch after every
//! pivot.

use std::collections::VecDeque;

use crate::error::{OtError, Result};

/// Flow below this (relative to the total supply) is treated as zero in the
/// ratio test.
const FLOW_TOL: f64 = 1e-15;

/// Flow left on an artificial arc below this (relative to the total supply)
/// is roundoff, not infeasibility.
const FEAS_TOL: f64 = 1e-11;

/// Entering-arc selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PivotRule {
    /// Lowest-index arc with negative reduced cost.
    Bland,
    /// Most negative reduced cost within cyclic blocks of about `√arcs`
    /// arcs, resuming after the last block that produced a candidate.
    #[default]
    BlockSearch,
}

#[derive(Debug, Clone, Copy)]
pub struct Arc {
    pub tail: usize,
    pub head: usize,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct FlowSolution {
    /// Flow on every input arc.
    pub flow: Vec<f64>,
    /// Node potentials `π` with `cost(u,v) − π_u + π_v ≥ 0` on every arc and
    /// equality on the tree.
    pub potential: Vec<f64>,
    pub cost: f64,
    pub pivots: usize,
}

struct Tree {
    /// Arc indices in the tree (artificial arcs are numbered after the input arcs).
    arcs: Vec<usize>,
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// Whether `pred[v]` is oriented `v → parent[v]`.
    up: Vec<bool>,
    depth: Vec<usize>,
    order: Vec<usize>,
    pi: Vec<f64>,
    flow: Vec<f64>,
}

/// Minimizes `Σ cost·flow` subject to `out(v) − in(v) = supply[v]`, flow ≥ 0.
pub fn min_cost_flow(supply: &[f64], arcs: &[Arc]) -> Result<FlowSolution> {
    min_cost_flow_with(supply, arcs, PivotRule::default())
}

pub fn min_cost_flow_with(supply: &[f64], arcs: &[Arc], rule: PivotRule) -> Result<FlowSolution> {
    let nv = supply.len();
    if let Some(a) = arcs.iter().find(|a| a.tail >= nv || a.head >= nv) {
        return Err(OtError::Shape(format!("arc ({},{}) out of range for {nv} nodes", a.tail, a.head)));
    }
    if arcs.iter().any(|a| !a.cost.is_finite()) || supply.iter().any(|s| !s.is_finite()) {
        return Err(OtError::Domain("network data must be finite".into()));
    }
    let total: f64 = supply.iter().sum();
    let scale = supply.iter().map(|s| s.abs()).sum::<f64>().max(1.0);
    if total.abs() > 1e-10 * scale {
        return Err(OtError::Infeasible(format!("supplies sum to {total}")));
    }
    let root = nv;
    let big_m = (nv as f64 + 1.0) * (arcs.iter().map(|a| a.cost.abs()).fold(0.0, f64::max) + 1.0);
    let mut all: Vec<Arc> = arcs.to_vec();
    for (v, &s) in supply.iter().enumerate() {
        if s >= 0.0 {
            all.push(Arc { tail: v, head: root, cost: big_m });
        } else {
            all.push(Arc { tail: root, head: v, cost: big_m });
        }
    }
    let na = arcs.len();
    let mut sup = supply.to_vec();
    sup.push(-total);
    let mut tree = Tree {
        arcs: (na..na + nv).collect(),
        in_tree: (0..all.len()).map(|e| e >= na).collect(),
        parent: vec![root; nv + 1],
        pred: vec![usize::MAX; nv + 1],
        up: vec![false; nv + 1],
        depth: vec![0; nv + 1],
        order: Vec::with_capacity(nv + 1),
        pi: vec![0.0; nv + 1],
        flow: vec![0.0; all.len()],
    };
    rebuild(&mut tree, &all, &sup, root);
    let tol = FLOW_TOL * scale;
    let mut pivots = 0;
    let total_arcs = all.len();
    let block = ((total_arcs as f64).sqrt().ceil() as usize).max(1);
    let mut cursor = 0;
    loop {
        let reduced = |e: usize| {
            let a = all[e];
            let (pt, ph) = (tree.pi[a.tail], tree.pi[a.head]);
            let rc = a.cost - pt + ph;
            if !tree.in_tree[e] && rc < -1e-12 * (1.0 + a.cost.abs() + pt.abs() + ph.abs()) {
                Some(rc)
            } else {
                None
            }
        };
        let entering = match rule {
            PivotRule::Bland => (0..total_arcs).find(|&e| reduced(e).is_some()),
            PivotRule::BlockSearch => {
                let mut found = None;
                let mut scanned = 0;
                while scanned < total_arcs && found.is_none() {
                    let mut best = (0.0, usize::MAX);
                    for _ in 0..block.min(total_arcs - scanned) {
                        if let Some(rc) = reduced(cursor) {
                            if rc < best.0 {
                                best = (rc, cursor);
                            }
                        }
                        cursor = (cursor + 1) % total_arcs;
                        scanned += 1;
                    }
                    if best.1 != usize::MAX {
                        found = Some(best.1);
                    }
                }
                found
            }
        };
        let Some(e) = entering else { break };
        let (k, l) = (all[e].tail, all[e].head);
        // Apex of the cycle.
        let (mut x, mut y) = (k, l);
        while x != y {
            if tree.depth[x] >= tree.depth[y] {
                x = tree.parent[x];
            } else {
                y = tree.parent[y];
            }
        }
        let apex = x;
        // Path apex ⇝ k, listed top-down.
        let mut down = Vec::new();
        let mut v = k;
        while v != apex {
            down.push(v);
            v = tree.parent[v];
        }
        down.reverse();
        // On apex ⇝ k the cycle runs parent → v, so arcs oriented v → parent are backward.
        let mut theta = f64::INFINITY;
        for &v in &down {
            if tree.up[v] {
                theta = theta.min(tree.flow[tree.pred[v]]);
            }
        }
        let mut v = l;
        while v != apex {
            if !tree.up[v] {
                theta = theta.min(tree.flow[tree.pred[v]]);
            }
            v = tree.parent[v];
        }
        if !theta.is_finite() {
            return Err(OtError::Infeasible("unbounded: negative-cost cycle of uncapacitated arcs".into()));
        }
        let theta_cut = theta.max(0.0) + tol;
        let mut leaving = None;
        for &v in &down {
            if tree.up[v] && tree.flow[tree.pred[v]] <= theta_cut {
                leaving = Some(tree.pred[v]);
            }
        }
        let mut v = l;
        while v != apex {
            if !tree.up[v] && tree.flow[tree.pred[v]] <= theta_cut {
                leaving = Some(tree.pred[v]);
            }
            v = tree.parent[v];
        }
        let out = leaving.expect("a finite θ has a blocking arc");
        let pos = tree.arcs.iter().position(|&a| a == out).expect("leaving arc is in the tree");
        tree.arcs[pos] = e;
        tree.in_tree[out] = false;
        tree.flow[out] = 0.0;
        tree.in_tree[e] = true;
        rebuild(&mut tree, &all, &sup, root);
        pivots += 1;
    }
    let feas = FEAS_TOL * scale;
    if (na..all.len()).any(|e| tree.in_tree[e] && tree.flow[e] > feas) {
        return Err(OtError::Infeasible("no feasible flow on the given arcs".into()));
    }
    let flow: Vec<f64> = tree.flow[..na].iter().map(|&f| if f.abs() <= tol { 0.0 } else { f }).collect();
    let cost = flow.iter().zip(arcs).map(|(f, a)| f * a.cost).sum();
    let potential = tree.pi[..nv].to_vec();
    Ok(FlowSolution { flow, potential, cost, pivots })
}

fn rebuild(tree: &mut Tree, all: &[Arc], sup: &[f64], root: usize) {
    let nn = sup.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nn];
    for &e in &tree.arcs {
        adj[all[e].tail].push(e);
        adj[all[e].head].push(e);
    }
    tree.order.clear();
    let mut seen = vec![false; nn];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    tree.depth[root] = 0;
    tree.pi[root] = 0.0;
    while let Some(u) = queue.pop_front() {
        tree.order.push(u);
        for &e in &adj[u] {
            let a = all[e];
            let (v, up) = if a.tail == u { (a.head, false) } else { (a.tail, true) };
            if seen[v] {
                continue;
            }
            seen[v] = true;
            tree.parent[v] = u;
            tree.pred[v] = e;
            tree.up[v] = up;
            tree.depth[v] = tree.depth[u] + 1;
            // Zero reduced cost: cost − π_tail + π_head = 0.
            tree.pi[v] = if up { tree.pi[u] + a.cost } else { tree.pi[u] - a.cost };
            queue.push_back(v);
        }
    }
    debug_assert_eq!(tree.order.len(), nn, "tree must span all nodes");
    for &e in &tree.arcs {
        tree.flow[e] = 0.0;
    }
    let mut net = sup.to_vec();
    for &v in tree.order.iter().rev() {
        if v == root {
            continue;
        }
        let e = tree.pred[v];
        tree.flow[e] = if tree.up[v] { net[v] } else { -net[v] };
        let p = tree.parent[v];
        net[p] += net[v];
    }
}
