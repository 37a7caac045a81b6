//! Dense two-phase tableau simplex with Bland's rule, generic over the
//! scalar field so that tiny instances can be certified in exact rationals.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};

use crate::error::{OtError, Result};

/// Ordered field used by the tableau: `f64` with a zero tolerance, or exact
/// rationals.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    /// Strictly positive beyond roundoff.
    fn is_pos(&self) -> bool;
    /// Strictly negative beyond roundoff.
    fn is_neg(&self) -> bool;
    fn to_f64(&self) -> f64;
}

const F64_TOL: f64 = 1e-11;

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_pos(&self) -> bool {
        *self > F64_TOL
    }
    fn is_neg(&self) -> bool {
        *self < -F64_TOL
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn is_pos(&self) -> bool {
        self.is_positive()
    }
    fn is_neg(&self) -> bool {
        self.is_negative()
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Exact rational value of a finite `f64`.
pub fn rational(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite value")
}

/// Rational `p/q`.
pub fn ratio(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

#[derive(Debug, Clone)]
pub struct LpSolution<S> {
    pub x: Vec<S>,
    pub value: S,
    pub pivots: usize,
}

struct Tableau<S> {
    /// `rows × (cols + 1)`; the last column is the right-hand side.
    t: Vec<Vec<S>>,
    basis: Vec<usize>,
    cols: usize,
    pivots: usize,
}

impl<S: Scalar> Tableau<S> {
    fn pivot(&mut self, r: usize, c: usize, obj: &mut [S]) {
        let p = self.t[r][c].clone();
        for v in self.t[r].iter_mut() {
            *v = v.clone() / p.clone();
        }
        let prow = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c].clone();
            if f.is_pos() || f.is_neg() {
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v = v.clone() - f.clone() * pv.clone();
                }
            }
            row[c] = S::zero();
        }
        let f = obj[c].clone();
        if f.is_pos() || f.is_neg() {
            for (v, pv) in obj.iter_mut().zip(&prow) {
                *v = v.clone() - f.clone() * pv.clone();
            }
        }
        obj[c] = S::zero();
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Minimizes the reduced-cost row `obj` over columns allowed by `allowed`.
    fn run(&mut self, obj: &mut [S], allowed: &dyn Fn(usize) -> bool) -> Result<()> {
        loop {
            let Some(c) = (0..self.cols).find(|&j| allowed(j) && obj[j].is_neg()) else { return Ok(()) };
            let mut best: Option<(usize, S)> = None;
            for (i, row) in self.t.iter().enumerate() {
                if row[c].is_pos() {
                    let q = row[self.cols].clone() / row[c].clone();
                    let better = match &best {
                        None => true,
                        Some((bi, bq)) => q < *bq || (!(q > *bq) && self.basis[i] < self.basis[*bi]),
                    };
                    if better {
                        best = Some((i, q));
                    }
                }
            }
            let Some((r, _)) = best else { return Err(OtError::Unsupported("linear program is unbounded".into())) };
            self.pivot(r, c, obj);
        }
    }
}

/// Minimizes `cᵀx` subject to `Ax = b`, `x ≥ 0`.
pub fn solve_standard_form<S: Scalar>(a: &[Vec<S>], b: &[S], c: &[S]) -> Result<LpSolution<S>> {
    let rows = a.len();
    let n = c.len();
    if b.len() != rows || a.iter().any(|r| r.len() != n) {
        return Err(OtError::Shape("inconsistent LP dimensions".into()));
    }
    // Phase 1: artificials n..n+rows, right-hand side made nonnegative.
    let cols = n + rows;
    let mut t = Vec::with_capacity(rows);
    for (i, (row, bi)) in a.iter().zip(b).enumerate() {
        let flip = bi.is_neg();
        let mut r: Vec<S> = row.iter().map(|v| if flip { -v.clone() } else { v.clone() }).collect();
        r.extend((0..rows).map(|k| if k == i { S::one() } else { S::zero() }));
        r.push(if flip { -bi.clone() } else { bi.clone() });
        t.push(r);
    }
    let mut tab = Tableau { t, basis: (n..cols).collect(), cols, pivots: 0 };
    let mut obj1: Vec<S> = vec![S::zero(); cols + 1];
    for row in &tab.t {
        for j in 0..n {
            obj1[j] = obj1[j].clone() - row[j].clone();
        }
        obj1[cols] = obj1[cols].clone() - row[cols].clone();
    }
    tab.run(&mut obj1, &|_| true)?;
    // Objective value of phase 1 is −obj1[cols].
    if obj1[cols].is_neg() {
        return Err(OtError::Infeasible("linear program has no feasible point".into()));
    }
    // Drive remaining artificials out of the basis, dropping redundant rows.
    let mut r = 0;
    while r < tab.t.len() {
        if tab.basis[r] >= n {
            if let Some(j) = (0..n).find(|&j| tab.t[r][j].is_pos() || tab.t[r][j].is_neg()) {
                tab.pivot(r, j, &mut obj1);
            } else {
                tab.t.remove(r);
                tab.basis.remove(r);
                continue;
            }
        }
        r += 1;
    }
    // Phase 2.
    let mut obj2: Vec<S> = c.to_vec();
    obj2.extend((0..=rows).map(|_| S::zero()));
    for (i, row) in tab.t.iter().enumerate() {
        let cb = c[tab.basis[i]].clone();
        if cb.is_pos() || cb.is_neg() {
            for (v, rv) in obj2.iter_mut().zip(row) {
                *v = v.clone() - cb.clone() * rv.clone();
            }
        }
    }
    tab.run(&mut obj2, &|j| j < n)?;
    let mut x = vec![S::zero(); n];
    for (i, &j) in tab.basis.iter().enumerate() {
        x[j] = tab.t[i][cols].clone();
    }
    let value = x.iter().zip(c).fold(S::zero(), |acc, (xi, ci)| acc + xi.clone() * ci.clone());
    Ok(LpSolution { x, value, pivots: tab.pivots })
}
