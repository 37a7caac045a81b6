//! Ground costs and their Gibbs kernels.
//!
//! Every solver in the crate touches the kernel `K = exp(−C/ε)` only through
//! log-domain products `log(K·eˣ)` and `log(Kᵀ·eˣ)`, exposed by [`LogKernel`].
//! Two implementations are provided: a dense matrix and a separable kernel for
//! squared Euclidean costs on regular 2-D grids, where the product factors into
//! two 1-D passes.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{check_len, OtError, Result};

/// Dense ground cost, optionally remembering the points it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
    points: Option<Vec<Vec<f64>>>,
}

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(OtError::Domain("empty cost matrix".into()));
        }
        if entries.iter().any(|c| !c.is_finite()) {
            return Err(OtError::Domain("cost matrix has non-finite entries".into()));
        }
        Ok(Self { entries, points: None })
    }

    /// `Cᵢⱼ = ‖zᵢ − zⱼ‖²` over a common point set.
    pub fn squared_euclidean(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::squared_euclidean_between(&points, &points).map(|mut c| {
            c.points = Some(points);
            c
        })
    }

    /// `Cᵢⱼ = ‖xᵢ − yⱼ‖²` between two point sets of equal dimension.
    pub fn squared_euclidean_between(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<Self> {
        let dim = xs.first().map(Vec::len).unwrap_or(0);
        if xs.iter().chain(ys).any(|p| p.len() != dim) {
            return Err(OtError::Shape("points of mixed dimension".into()));
        }
        let entries = Array2::from_shape_fn((xs.len(), ys.len()), |(i, j)| sq_dist(&xs[i], &ys[j]));
        Self::new(entries)
    }

    /// Squared distances between `n` equispaced points of `[lo, hi]`.
    pub fn grid_1d(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::squared_euclidean(grid_points_1d(n, lo, hi).into_iter().map(|x| vec![x]).collect())
    }

    /// Squared distances between the pixel centres of an `h × w` image laid
    /// out row-major on `[0,1]²` (column index is the x axis).
    pub fn grid_2d(h: usize, w: usize) -> Result<Self> {
        let ys = grid_points_1d(h, 0.0, 1.0);
        let xs = grid_points_1d(w, 0.0, 1.0);
        let pts = (0..h * w).map(|i| vec![xs[i % w], ys[i / w]]).collect();
        Self::squared_euclidean(pts)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn points(&self) -> Option<&[Vec<f64>]> {
        self.points.as_deref()
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Median of all entries (mean of the two middle values for even counts).
    pub fn median(&self) -> f64 {
        let mut v: Vec<f64> = self.entries.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let k = v.len();
        if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    }

    /// Divides the cost by its median and returns the factor used.
    pub fn rescale_median(&mut self) -> Result<f64> {
        let med = self.median();
        if !(med > 0.0) {
            return Err(OtError::Domain(format!("cannot rescale by non-positive median {med}")));
        }
        self.entries.mapv_inplace(|c| c / med);
        Ok(med)
    }

    /// Gibbs kernel at temperature `epsilon`.
    pub fn gibbs(&self, epsilon: f64) -> Result<GibbsKernel> {
        GibbsKernel::new(self, epsilon)
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `n` equispaced points from `lo` to `hi` inclusive; the midpoint if `n = 1`.
pub fn grid_points_1d(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

/// Log-domain access to `K = exp(−C/ε)`.
pub trait LogKernel: Sync {
    fn epsilon(&self) -> f64;

    /// `(rows, cols)` of the underlying cost.
    fn shape(&self) -> (usize, usize);

    /// `outᵢ = log Σⱼ exp(xⱼ − Cᵢⱼ/ε)`; `x` has one entry per column.
    fn log_apply(&self, x: &[f64]) -> Vec<f64>;

    /// `outⱼ = log Σᵢ exp(xᵢ − Cᵢⱼ/ε)`; `x` has one entry per row.
    fn log_apply_t(&self, x: &[f64]) -> Vec<f64>;

    /// Ground cost `Cᵢⱼ`.
    fn cost(&self, i: usize, j: usize) -> f64;
}

const PAR_THRESHOLD: usize = 1 << 15;

/// Dense Gibbs kernel built for a specific `ε`.
#[derive(Debug, Clone)]
pub struct GibbsKernel {
    epsilon: f64,
    cost: Array2<f64>,
    kernel: Array2<f64>,
    logkernel: Array2<f64>,
}

impl GibbsKernel {
    pub fn new(cost: &CostMatrix, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(OtError::Domain(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        let logkernel = cost.entries.mapv(|c| -c / epsilon);
        let kernel = logkernel.mapv(f64::exp);
        Ok(Self { epsilon, cost: cost.entries.clone(), kernel, logkernel })
    }

    /// `K = exp(−C/ε)`; may underflow to zero for small `ε`, which is why the
    /// solvers go through [`LogKernel`] instead.
    pub fn kernel(&self) -> &Array2<f64> {
        &self.kernel
    }

    /// `−C/ε`.
    pub fn logkernel(&self) -> &Array2<f64> {
        &self.logkernel
    }

    fn row_lse(&self, i: usize, x: &[f64]) -> f64 {
        let row = self.logkernel.row(i);
        let row = row.as_slice().expect("row-major logkernel");
        let mut max = f64::NEG_INFINITY;
        for (l, xv) in row.iter().zip(x) {
            max = max.max(l + xv);
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        let s: f64 = row.iter().zip(x).map(|(l, xv)| (l + xv - max).exp()).sum();
        max + s.ln()
    }
}

impl LogKernel for GibbsKernel {
    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn shape(&self) -> (usize, usize) {
        self.logkernel.dim()
    }

    fn log_apply(&self, x: &[f64]) -> Vec<f64> {
        let (n, m) = self.shape();
        assert_eq!(x.len(), m, "log_apply: vector length");
        if n * m >= PAR_THRESHOLD {
            (0..n).into_par_iter().map(|i| self.row_lse(i, x)).collect()
        } else {
            (0..n).map(|i| self.row_lse(i, x)).collect()
        }
    }

    fn log_apply_t(&self, x: &[f64]) -> Vec<f64> {
        let (n, m) = self.shape();
        assert_eq!(x.len(), n, "log_apply_t: vector length");
        let lk = self.logkernel.as_slice().expect("row-major logkernel");
        let column_block = |cols: std::ops::Range<usize>| -> Vec<f64> {
            let width = cols.len();
            let mut max = vec![f64::NEG_INFINITY; width];
            for i in 0..n {
                let row = &lk[i * m + cols.start..i * m + cols.end];
                for (mx, l) in max.iter_mut().zip(row) {
                    *mx = mx.max(l + x[i]);
                }
            }
            let mut acc = vec![0.0; width];
            for i in 0..n {
                let row = &lk[i * m + cols.start..i * m + cols.end];
                for ((a, l), mx) in acc.iter_mut().zip(row).zip(&max) {
                    if *mx > f64::NEG_INFINITY {
                        *a += (l + x[i] - mx).exp();
                    }
                }
            }
            max.iter().zip(&acc).map(|(mx, a)| if *mx == f64::NEG_INFINITY { *mx } else { mx + a.ln() }).collect()
        };
        if n * m >= PAR_THRESHOLD {
            let block = 64;
            let starts: Vec<usize> = (0..m).step_by(block).collect();
            starts
                .into_par_iter()
                .map(|s| column_block(s..(s + block).min(m)))
                .collect::<Vec<_>>()
                .concat()
        } else {
            column_block(0..m)
        }
    }

    fn cost(&self, i: usize, j: usize) -> f64 {
        self.cost[[i, j]]
    }
}

/// Gibbs kernel of `C((r,c),(r',c')) = Cy(r,r') + Cx(c,c')` on an `h × w`
/// grid, flattened row-major. Each product costs `O(hw(h+w))` instead of
/// `O(h²w²)`.
#[derive(Debug, Clone)]
pub struct GridGibbsKernel {
    epsilon: f64,
    h: usize,
    w: usize,
    /// `−Cy/ε`, `h × h`.
    log_ky: Array2<f64>,
    /// `−Cx/ε`, `w × w`.
    log_kx: Array2<f64>,
}

impl GridGibbsKernel {
    /// Squared Euclidean cost between pixel centres of an `h × w` image on
    /// `[0,1]²`, matching [`CostMatrix::grid_2d`].
    pub fn unit_square(h: usize, w: usize, epsilon: f64) -> Result<Self> {
        let axis = |k: usize| {
            let p = grid_points_1d(k, 0.0, 1.0);
            Array2::from_shape_fn((k, k), |(i, j)| (p[i] - p[j]) * (p[i] - p[j]))
        };
        Self::from_axis_costs(axis(h), axis(w), epsilon)
    }

    pub fn from_axis_costs(cy: Array2<f64>, cx: Array2<f64>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(OtError::Domain(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        let (h, h2) = cy.dim();
        let (w, w2) = cx.dim();
        if h != h2 || w != w2 || h == 0 || w == 0 {
            return Err(OtError::Shape("axis costs must be square and nonempty".into()));
        }
        if cy != cy.t() || cx != cx.t() {
            return Err(OtError::Domain("axis costs must be symmetric".into()));
        }
        let log_k = |c: Array2<f64>| c.mapv(|c| -c / epsilon).as_standard_layout().into_owned();
        Ok(Self { epsilon, h, w, log_ky: log_k(cy), log_kx: log_k(cx) })
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    /// Dense equivalent, for tests and small problems.
    pub fn to_cost_matrix(&self) -> CostMatrix {
        let n = self.h * self.w;
        let entries = Array2::from_shape_fn((n, n), |(i, j)| self.cost(i, j));
        CostMatrix::new(entries).expect("finite grid cost")
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (h, w) = (self.h, self.w);
        assert_eq!(x.len(), h * w, "grid kernel: vector length");
        // Pass along x: t[r'][c] = lse_{c'} x[r'][c'] − Cx(c,c')/ε.
        let lse_row = |vals: &[f64], lk: &[f64]| -> f64 {
            let mut max = f64::NEG_INFINITY;
            for (v, l) in vals.iter().zip(lk.iter()) {
                max = max.max(v + l);
            }
            if max == f64::NEG_INFINITY {
                return max;
            }
            // Terms below e^-60 of the largest cannot move the sum.
            let sum: f64 = vals
                .iter()
                .zip(lk.iter())
                .map(|(v, l)| v + l - max)
                .filter(|&z| z > -60.0)
                .map(f64::exp)
                .sum();
            max + sum.ln()
        };
        let kx = self.log_kx.as_slice().expect("standard layout");
        let ky = self.log_ky.as_slice().expect("standard layout");
        let mut t = vec![0.0; h * w];
        t.par_chunks_mut(w).enumerate().for_each(|(r, out)| {
            let row = &x[r * w..(r + 1) * w];
            for (c, o) in out.iter_mut().enumerate() {
                *o = lse_row(row, &kx[c * w..(c + 1) * w]);
            }
        });
        // Pass along y on the transposed layout.
        let mut tt = vec![0.0; h * w];
        for r in 0..h {
            for c in 0..w {
                tt[c * h + r] = t[r * w + c];
            }
        }
        let mut out_t = vec![0.0; h * w];
        out_t.par_chunks_mut(h).enumerate().for_each(|(c, out)| {
            let col = &tt[c * h..(c + 1) * h];
            for (r, o) in out.iter_mut().enumerate() {
                *o = lse_row(col, &ky[r * h..(r + 1) * h]);
            }
        });
        let mut out = vec![0.0; h * w];
        for r in 0..h {
            for c in 0..w {
                out[r * w + c] = out_t[c * h + r];
            }
        }
        out
    }
}

impl LogKernel for GridGibbsKernel {
    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn shape(&self) -> (usize, usize) {
        (self.h * self.w, self.h * self.w)
    }

    fn log_apply(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x)
    }

    fn log_apply_t(&self, x: &[f64]) -> Vec<f64> {
        // Both axis costs are symmetric.
        self.apply(x)
    }

    fn cost(&self, i: usize, j: usize) -> f64 {
        let (ri, ci) = (i / self.w, i % self.w);
        let (rj, cj) = (j / self.w, j % self.w);
        -(self.log_ky[[ri, rj]] + self.log_kx[[ci, cj]]) * self.epsilon
    }
}

/// Validates that a vector has the number of rows (or columns) a kernel expects.
pub(crate) fn check_rows(k: &impl LogKernel, what: &str, len: usize) -> Result<()> {
    check_len(what, len, k.shape().0)
}

pub(crate) fn check_cols(k: &impl LogKernel, what: &str, len: usize) -> Result<()> {
    check_len(what, len, k.shape().1)
}
