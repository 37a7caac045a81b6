//! Entropic optimal transport through closed-form dual and semi-dual
//! problems: Sinkhorn, Legendre transforms, Wasserstein barycenters,
//! regularized barycenters, gradient flows and semi-discrete transport.

pub mod barycenter;
pub mod cost;
pub mod entropic;
pub mod error;
pub mod flow;
pub mod lbfgs;
pub mod legendre;
pub mod lp;
pub mod regularized;
pub mod semidiscrete;
pub mod simplex;

pub use cost::{CostMatrix, GibbsKernel, GridGibbsKernel, LogKernel};
pub use error::{OtError, Result};
pub use simplex::Histogram;
