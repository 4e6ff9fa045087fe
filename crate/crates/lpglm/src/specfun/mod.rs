//! Special functions and quadrature: modified Bessel functions of the first
//! and third kind, log-gamma, and adaptive integration on the positive
//! half-line.

mod bessel;
mod gamma;
mod quad;

pub use bessel::{bessel_i, bessel_k, ln_bessel_i, ln_bessel_k};
pub use gamma::ln_gamma;
pub use quad::{integrate_positive_halfline, QuadratureSettings};
