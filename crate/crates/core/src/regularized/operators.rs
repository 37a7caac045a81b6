//! Linear operators `𝒜` entering the regularizer `J(𝒜a)`.

use crate::error::{OtError, Result};

pub trait LinearOperator: Sync {
    /// Dimension `n` of the histogram side.
    fn input_dim(&self) -> usize;

    /// Dimension `d` of the regularizer side.
    fn output_dim(&self) -> usize;

    fn forward(&self, x: &[f64]) -> Vec<f64>;

    fn adjoint(&self, y: &[f64]) -> Vec<f64>;

    /// Upper bound on the operator norm `‖𝒜‖₂`.
    fn norm_bound(&self) -> f64;

    /// Number of consecutive output coordinates forming one site (one pixel
    /// for image gradients).
    fn site_dim(&self) -> usize {
        1
    }
}

/// Forward finite differences on an `h × w` row-major image with Neumann
/// boundary conditions. Output is interleaved per pixel as `(∂x, ∂y)`, where
/// `x` runs along a row.
#[derive(Debug, Clone, Copy)]
pub struct GridGradient {
    h: usize,
    w: usize,
}

pub fn grid_gradient(h: usize, w: usize) -> Result<GridGradient> {
    if h == 0 || w == 0 {
        return Err(OtError::Domain(format!("grid gradient needs a nonempty grid, got {h}×{w}")));
    }
    Ok(GridGradient { h, w })
}

impl GridGradient {
    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }
}

impl LinearOperator for GridGradient {
    fn input_dim(&self) -> usize {
        self.h * self.w
    }

    fn output_dim(&self) -> usize {
        2 * self.h * self.w
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim());
        let (h, w) = (self.h, self.w);
        let mut out = vec![0.0; 2 * h * w];
        for r in 0..h {
            for c in 0..w {
                let p = r * w + c;
                if c + 1 < w {
                    out[2 * p] = x[p + 1] - x[p];
                }
                if r + 1 < h {
                    out[2 * p + 1] = x[p + w] - x[p];
                }
            }
        }
        out
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.output_dim());
        let (h, w) = (self.h, self.w);
        let mut out = vec![0.0; h * w];
        for r in 0..h {
            for c in 0..w {
                let p = r * w + c;
                if c + 1 < w {
                    out[p + 1] += y[2 * p];
                    out[p] -= y[2 * p];
                }
                if r + 1 < h {
                    out[p + w] += y[2 * p + 1];
                    out[p] -= y[2 * p + 1];
                }
            }
        }
        out
    }

    fn norm_bound(&self) -> f64 {
        // Each nontrivial axis contributes at most 4 to ‖∇‖².
        let axes = (self.h > 1) as usize + (self.w > 1) as usize;
        (4.0 * axes as f64).sqrt()
    }

    fn site_dim(&self) -> usize {
        2
    }
}

/// Edge differences `(aᵢ − aⱼ)_{(i,j)}` on a graph with `n` vertices.
#[derive(Debug, Clone)]
pub struct GraphGradient {
    n: usize,
    edges: Vec<(usize, usize)>,
}

pub fn graph_gradient(edges: &[(usize, usize)], n: usize) -> Result<GraphGradient> {
    if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i >= n || j >= n) {
        return Err(OtError::Domain(format!("edge ({i},{j}) out of range for {n} vertices")));
    }
    Ok(GraphGradient { n, edges: edges.to_vec() })
}

impl GraphGradient {
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
}

impl LinearOperator for GraphGradient {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.edges.len()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        self.edges.iter().map(|&(i, j)| x[i] - x[j]).collect()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.edges.len());
        let mut out = vec![0.0; self.n];
        for (&(i, j), &v) in self.edges.iter().zip(y) {
            out[i] += v;
            out[j] -= v;
        }
        out
    }

    fn norm_bound(&self) -> f64 {
        // 𝒜*𝒜 is the graph Laplacian (with multiplicities), λ_max ≤ 2·max degree.
        let mut deg = vec![0usize; self.n];
        for &(i, j) in &self.edges {
            if i != j {
                deg[i] += 1;
                deg[j] += 1;
            }
        }
        (2.0 * deg.into_iter().max().unwrap_or(0) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity {
    n: usize,
}

pub fn identity(n: usize) -> Identity {
    Identity { n }
}

impl LinearOperator for Identity {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.n
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }

    fn norm_bound(&self) -> f64 {
        1.0
    }
}

/// Power iteration on `𝒜*𝒜`; returns an estimate of `‖𝒜‖₂` from below.
pub fn estimate_norm(op: &dyn LinearOperator, iterations: usize) -> f64 {
    let n = op.input_dim();
    if n == 0 || op.output_dim() == 0 {
        return 0.0;
    }
    // Deterministic, non-degenerate start.
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut est = 0.0;
    for _ in 0..iterations {
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let y = op.adjoint(&op.forward(&x));
        est = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt();
        x = y;
    }
    est
}
