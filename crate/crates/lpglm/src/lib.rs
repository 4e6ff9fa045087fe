//! Generalised linear models for time series whose conditional mean is
//! multiplicatively driven by a stationary latent process.
//!
//! The library covers the full workflow: simulation of the latent
//! processes (log-normal AR(1), gamma AR(1), squared ARCH(1)) and of the
//! observed series, GLM pseudo-likelihood fitting by IRLS, method-of-moments
//! estimation of the latent parameters and dispersion, corrected sandwich and
//! parametric-bootstrap standard errors, and conditional-expectation
//! prediction with closed forms, quadrature, or Monte Carlo depending on the
//! (family, latent) pair.

pub mod data;
pub mod design;
pub mod error;
pub mod family;
pub mod glm;
pub mod inference;
pub mod latent;
pub mod moments;
pub mod pipeline;
pub mod predict;
pub mod report;
pub mod specfun;

pub use error::{Error, Result};
pub use family::{Family, FamilySpec};
pub use glm::{Dataset, FitResult};
pub use latent::{LatentKind, LatentSpec};
