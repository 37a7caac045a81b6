//! Regularizers `J` through their conjugates `J*` and the proximal maps of
//! `τJ*`.

use crate::error::{OtError, Result};

/// Projection onto the `ℓ^∞` ball (`β = 1`) or onto per-site Euclidean balls
/// of 2-vectors (`β = 2`), both of radius `λ`. The step `τ` plays no role
/// since `J*` is an indicator; it is accepted for a uniform prox signature.
pub fn prox_tv_conjugate(g: &[f64], _tau: f64, lambda: f64, beta: u8) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(OtError::Domain(format!("TV strength must be nonnegative, got {lambda}")));
    }
    match beta {
        1 => Ok(g.iter().map(|&v| v.max(-lambda).min(lambda)).collect()),
        2 => {
            if g.len() % 2 != 0 {
                return Err(OtError::Shape(format!("isotropic TV needs 2-vector sites, got length {}", g.len())));
            }
            Ok(project_sites(g, 2, lambda))
        }
        _ => Err(OtError::Domain(format!("β must be 1 or 2, got {beta}"))),
    }
}

fn project_sites(g: &[f64], site: usize, radius: f64) -> Vec<f64> {
    let mut out = g.to_vec();
    for chunk in out.chunks_mut(site) {
        let norm = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            let s = if norm > 0.0 { radius / norm } else { 0.0 };
            chunk.iter_mut().for_each(|v| *v *= s);
        }
    }
    out
}

/// Supported regularizers `J`, parameterized by their strength.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    /// `λ Σ_sites ‖u_s‖₂`.
    TvIso { lambda: f64 },
    /// `λ ‖u‖₁`.
    TvAniso { lambda: f64 },
    /// `(λ/2) ‖u‖²`; `λ = 0` gives `J ≡ 0`.
    Quadratic { lambda: f64 },
    /// Indicator of `‖u‖∞ ≤ ρ`.
    Box { rho: f64 },
    /// Indicator of `u_I = u⁰_I`.
    Pinned { indices: Vec<usize>, values: Vec<f64> },
}

/// Validates the parameters of `kind`.
pub fn make_regularizer(kind: Regularizer) -> Result<Regularizer> {
    match &kind {
        Regularizer::TvIso { lambda } | Regularizer::TvAniso { lambda } | Regularizer::Quadratic { lambda } => {
            if !(lambda.is_finite() && *lambda >= 0.0) {
                return Err(OtError::Domain(format!("regularization strength must be finite and ≥ 0, got {lambda}")));
            }
        }
        Regularizer::Box { rho } => {
            if !(rho.is_finite() && *rho > 0.0) {
                return Err(OtError::Domain(format!("box radius must be positive, got {rho}")));
            }
        }
        Regularizer::Pinned { indices, values } => {
            if indices.len() != values.len() {
                return Err(OtError::Shape(format!("{} pinned indices, {} values", indices.len(), values.len())));
            }
            let mut sorted = indices.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(OtError::Domain("duplicate pinned index".into()));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(OtError::Domain("pinned values must be finite".into()));
            }
        }
    }
    Ok(kind)
}

/// Slack allowed when testing membership in the domain of an indicator.
const FEASIBLE_TOL: f64 = 1e-12;

impl Regularizer {
    pub fn tag(&self) -> &'static str {
        match self {
            Regularizer::TvIso { .. } => "tv_iso",
            Regularizer::TvAniso { .. } => "tv_aniso",
            Regularizer::Quadratic { .. } => "quadratic",
            Regularizer::Box { .. } => "box",
            Regularizer::Pinned { .. } => "pinned",
        }
    }

    /// Same regularizer with its strength multiplied by `s ≥ 0`. Indicator
    /// regularizers are unchanged.
    pub fn scaled(&self, s: f64) -> Regularizer {
        match self {
            Regularizer::TvIso { lambda } => Regularizer::TvIso { lambda: lambda * s },
            Regularizer::TvAniso { lambda } => Regularizer::TvAniso { lambda: lambda * s },
            Regularizer::Quadratic { lambda } => Regularizer::Quadratic { lambda: lambda * s },
            other => other.clone(),
        }
    }

    fn check_pinned(&self, d: usize) -> Result<()> {
        if let Regularizer::Pinned { indices, .. } = self {
            if let Some(&i) = indices.iter().find(|&&i| i >= d) {
                return Err(OtError::Shape(format!("pinned index {i} out of range {d}")));
            }
        }
        Ok(())
    }

    /// `prox_{τJ*}(g)` with sites of `site_dim` consecutive coordinates.
    pub fn prox_conjugate(&self, g: &[f64], tau: f64, site_dim: usize) -> Result<Vec<f64>> {
        self.check_pinned(g.len())?;
        Ok(match self {
            Regularizer::TvIso { lambda } => {
                if site_dim == 2 {
                    prox_tv_conjugate(g, tau, *lambda, 2)?
                } else {
                    project_sites(g, site_dim.max(1), *lambda)
                }
            }
            Regularizer::TvAniso { lambda } => prox_tv_conjugate(g, tau, *lambda, 1)?,
            Regularizer::Quadratic { lambda } => {
                if *lambda == 0.0 {
                    vec![0.0; g.len()]
                } else {
                    g.iter().map(|v| v / (1.0 + tau / lambda)).collect()
                }
            }
            Regularizer::Box { rho } => {
                let t = tau * rho;
                g.iter().map(|&v| v.signum() * (v.abs() - t).max(0.0)).collect()
            }
            Regularizer::Pinned { indices, values } => {
                let mut out = vec![0.0; g.len()];
                for (&i, &v) in indices.iter().zip(values) {
                    out[i] = g[i] - tau * v;
                }
                out
            }
        })
    }

    /// `J*(g)`, with `+∞` outside the domain of indicator conjugates.
    pub fn conjugate_value(&self, g: &[f64], site_dim: usize) -> f64 {
        match self {
            Regularizer::TvIso { lambda } => {
                let site = site_dim.max(1);
                let ok = g.chunks(site).all(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt() <= lambda * (1.0 + FEASIBLE_TOL) + FEASIBLE_TOL);
                if ok { 0.0 } else { f64::INFINITY }
            }
            Regularizer::TvAniso { lambda } => {
                if g.iter().all(|v| v.abs() <= lambda * (1.0 + FEASIBLE_TOL) + FEASIBLE_TOL) { 0.0 } else { f64::INFINITY }
            }
            Regularizer::Quadratic { lambda } => {
                let s = g.iter().map(|v| v * v).sum::<f64>();
                if *lambda == 0.0 {
                    if s == 0.0 { 0.0 } else { f64::INFINITY }
                } else {
                    s / (2.0 * lambda)
                }
            }
            Regularizer::Box { rho } => rho * g.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::Pinned { indices, values } => {
                let mut pinned = vec![false; g.len()];
                let mut total = 0.0;
                for (&i, &v) in indices.iter().zip(values) {
                    if i >= g.len() {
                        return f64::INFINITY;
                    }
                    pinned[i] = true;
                    total += g[i] * v;
                }
                if g.iter().zip(&pinned).any(|(v, &p)| !p && *v != 0.0) { f64::INFINITY } else { total }
            }
        }
    }

    /// `J(u)`, with `+∞` outside the domain of indicator regularizers.
    pub fn value(&self, u: &[f64], site_dim: usize) -> f64 {
        match self {
            Regularizer::TvIso { lambda } => {
                lambda * u.chunks(site_dim.max(1)).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>()
            }
            Regularizer::TvAniso { lambda } => lambda * u.iter().map(|v| v.abs()).sum::<f64>(),
            Regularizer::Quadratic { lambda } => 0.5 * lambda * u.iter().map(|v| v * v).sum::<f64>(),
            Regularizer::Box { rho } => {
                if u.iter().all(|v| v.abs() <= rho * (1.0 + FEASIBLE_TOL)) { 0.0 } else { f64::INFINITY }
            }
            Regularizer::Pinned { indices, values } => {
                let ok = indices.iter().zip(values).all(|(&i, &v)| i < u.len() && (u[i] - v).abs() <= 1e-9);
                if ok { 0.0 } else { f64::INFINITY }
            }
        }
    }
}
