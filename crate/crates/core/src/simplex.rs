//! Probability-simplex utilities: histograms, entropy, relative entropy and
//! the soft-minimum used by every transform in the crate.

use ndarray::{ArrayBase, Data, Dimension};

use crate::error::{OtError, Result};

/// Tolerance on `|Σ aᵢ − 1|` for a vector to count as a point of the simplex.
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Tolerance on the total mass of a coupling.
pub const MASS_TOL: f64 = 1e-8;

/// A dense nonnegative vector summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram(Vec<f64>);

impl Histogram {
    /// Strict constructor: entries must be finite, nonnegative and sum to one
    /// within [`SIMPLEX_TOL`].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        validate_entries(&weights)?;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(OtError::Domain(format!(
                "histogram mass {total} differs from 1 by more than {SIMPLEX_TOL:e}"
            )));
        }
        Ok(Self(weights))
    }

    /// Divides by the total mass. Fails on an all-zero vector.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        validate_entries(&weights)?;
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(OtError::Domain("cannot normalize a vector of zero mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(OtError::Domain("empty histogram".into()));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// True when every entry is strictly positive.
    pub fn is_positive(&self) -> bool {
        self.0.iter().all(|&w| w > 0.0)
    }

    /// Indices of the entries carrying positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > 0.0).collect()
    }
}

impl std::ops::Deref for Histogram {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn validate_entries(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(OtError::Domain("empty histogram".into()));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(OtError::Domain(format!("histogram entry {w} is negative or not finite")));
    }
    Ok(())
}

/// `log Σ exp(xᵢ)`, shifted by the maximum. Returns `-inf` when every entry is
/// `-inf` (or the slice is empty).
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = x.iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

/// Streaming form of [`log_sum_exp`] over an iterator, two passes avoided by
/// rescaling the running sum whenever a new maximum appears.
pub fn log_sum_exp_iter(x: impl IntoIterator<Item = f64>) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut acc = 0.0;
    for v in x {
        if v <= max {
            acc += (v - max).exp();
        } else if v == f64::INFINITY {
            return f64::INFINITY;
        } else {
            acc = acc * (max - v).exp() + 1.0;
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        max + acc.ln()
    }
}

/// Soft-minimum `−ε log Σ exp(−uᵢ/ε)`; the plain minimum when `ε = 0`.
///
/// The result lies in `[min u − ε log n, min u]`.
pub fn softmin(u: &[f64], epsilon: f64) -> Result<f64> {
    if u.is_empty() {
        return Err(OtError::Domain("softmin of an empty vector".into()));
    }
    if !(epsilon >= 0.0) {
        return Err(OtError::Domain(format!("softmin temperature {epsilon} must be >= 0")));
    }
    let min = u.iter().copied().fold(f64::INFINITY, f64::min);
    if epsilon == 0.0 || !min.is_finite() {
        return Ok(min);
    }
    let s: f64 = u.iter().map(|&v| (-(v - min) / epsilon).exp()).sum();
    Ok(min - epsilon * s.ln())
}

/// Discrete entropy `−Σ Pᵢⱼ (log Pᵢⱼ − 1)` with `0 log 0 = 0`; `-inf` if any
/// entry is negative.
pub fn entropy<S, D>(p: &ArrayBase<S, D>) -> f64
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    entropy_of(p.iter().copied())
}

/// [`entropy`] over any sequence of entries.
pub fn entropy_of(p: impl IntoIterator<Item = f64>) -> f64 {
    let mut h = 0.0;
    for v in p {
        if v < 0.0 {
            return f64::NEG_INFINITY;
        }
        if v > 0.0 {
            h -= v * (v.ln() - 1.0);
        }
    }
    h
}

/// Generalized relative entropy `Σ P log(P/Q) + Σ (Q − P)`.
///
/// Returns `+inf` when `P > 0` somewhere `Q = 0`.
pub fn kl_divergence<S, T, D>(p: &ArrayBase<S, D>, q: &ArrayBase<T, D>) -> Result<f64>
where
    S: Data<Elem = f64>,
    T: Data<Elem = f64>,
    D: Dimension,
{
    if p.shape() != q.shape() {
        return Err(OtError::Shape(format!(
            "kl_divergence: shapes {:?} and {:?} differ",
            p.shape(),
            q.shape()
        )));
    }
    let mut kl = 0.0;
    for (&pv, &qv) in p.iter().zip(q.iter()) {
        if pv > 0.0 {
            if qv <= 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += pv * (pv / qv).ln();
        }
        kl += qv - pv;
    }
    Ok(kl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn softmin_examples() {
        assert_eq!(softmin(&[3.0, 1.0, 2.0], 0.0).unwrap(), 1.0);
        let c = 2.5;
        let eps = 0.7;
        let v = softmin(&[c; 5], eps).unwrap();
        assert_abs_diff_eq!(v, c - eps * 5f64.ln(), epsilon = 1e-14);
        // −log(1 + e⁻¹) to 20 digits: 0.31326168751822283405
        assert_abs_diff_eq!(softmin(&[0.0, 1.0], 1.0).unwrap(), -0.313_261_687_518_222_83, epsilon = 1e-15);
        assert!(softmin(&[], 1.0).is_err());
    }

    #[test]
    fn softmin_does_not_overflow() {
        let v = softmin(&[1000.0, 1000.5], 1e-3).unwrap();
        assert!((v - 1000.0).abs() < 1e-12);
        let v = softmin(&[-1e6, 3.0], 1e-8).unwrap();
        assert_eq!(v, -1e6);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&array![[1.0]]), 1.0);
        assert_eq!(entropy(&ndarray::Array2::<f64>::zeros((2, 3))), 0.0);
        assert_abs_diff_eq!(entropy(&array![[0.5, 0.5]]), 2f64.ln() + 1.0, epsilon = 1e-15);
        assert_eq!(entropy(&array![[0.5, -0.1]]), f64::NEG_INFINITY);
    }

    #[test]
    fn kl_examples() {
        let p = array![[0.2, 0.8]];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        assert_abs_diff_eq!(
            kl_divergence(&array![[1.0, 0.0]], &array![[0.5, 0.5]]).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            kl_divergence(&array![[0.0, 0.0]], &array![[0.5, 0.5]]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(kl_divergence(&array![[0.5]], &array![[0.0]]).unwrap(), f64::INFINITY);
        assert!(kl_divergence(&array![[0.5]], &array![[0.5, 0.5]]).is_err());
    }

    #[test]
    fn histogram_modes() {
        assert!(Histogram::new(vec![0.5, 0.4]).is_err());
        assert!(Histogram::new(vec![0.5, -0.5, 1.0]).is_err());
        let h = Histogram::normalized(vec![1.0, 3.0]).unwrap();
        assert_eq!(h.as_slice(), &[0.25, 0.75]);
        assert!(Histogram::normalized(vec![0.0, 0.0]).is_err());
        assert_eq!(Histogram::new(vec![0.0, 1.0]).unwrap().support(), vec![1]);
    }

    #[test]
    fn log_sum_exp_agrees_with_streaming_form() {
        let x = [-3.0, 7.5, 0.25, 7.4, -1e3];
        assert_abs_diff_eq!(log_sum_exp(&x), log_sum_exp_iter(x), epsilon = 1e-13);
        assert_eq!(log_sum_exp_iter([f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
    }
}
