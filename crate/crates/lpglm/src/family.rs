//! The bi-parameter exponential family EF(mu, phi) with canonical link:
//! cumulant function, mean/natural-parameter maps, variance function,
//! density evaluation, and random generation.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::ln_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Poisson,
    Gamma,
    Gaussian,
    Bernoulli,
}

impl Family {
    /// Power of the variance function V(mu) = mu^gamma. Bernoulli is the
    /// exception to the power form (V(mu) = mu(1 - mu)) and reports the
    /// nominal value 1; nothing downstream consumes it for that family.
    pub fn variance_power(self) -> f64 {
        match self {
            Family::Poisson => 1.0,
            Family::Gamma => 2.0,
            Family::Gaussian => 0.0,
            Family::Bernoulli => 1.0,
        }
    }

    /// Whether the dispersion is a free parameter (false fixes phi = 1).
    pub fn has_free_dispersion(self) -> bool {
        matches!(self, Family::Gamma | Family::Gaussian)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::Gamma => "gamma",
            Family::Gaussian => "gaussian",
            Family::Bernoulli => "bernoulli",
        }
    }

    fn theta_in_domain(self, theta: f64) -> bool {
        match self {
            Family::Gamma => theta < 0.0,
            _ => theta.is_finite(),
        }
    }

    pub fn mean_in_domain(self, mu: f64) -> bool {
        match self {
            Family::Poisson | Family::Gamma => mu > 0.0 && mu.is_finite(),
            Family::Gaussian => mu.is_finite(),
            Family::Bernoulli => mu > 0.0 && mu < 1.0,
        }
    }

    /// Cumulant function b(theta).
    pub fn cumulant(self, theta: f64) -> Result<f64> {
        if !self.theta_in_domain(theta) {
            return Err(Error::domain(format!(
                "theta={theta} outside the {} natural-parameter domain",
                self.name()
            )));
        }
        Ok(match self {
            Family::Poisson => theta.exp(),
            Family::Gamma => -(-theta).ln(),
            Family::Gaussian => theta * theta / 2.0,
            Family::Bernoulli => {
                // log(1 + e^theta), stable for large |theta|
                if theta > 0.0 {
                    theta + (-theta).exp().ln_1p()
                } else {
                    theta.exp().ln_1p()
                }
            }
        })
    }

    /// b'(theta), the mean as a function of the natural parameter.
    pub fn mean_from_theta(self, theta: f64) -> Result<f64> {
        if !self.theta_in_domain(theta) {
            return Err(Error::domain(format!(
                "theta={theta} outside the {} natural-parameter domain",
                self.name()
            )));
        }
        Ok(match self {
            Family::Poisson => theta.exp(),
            Family::Gamma => -1.0 / theta,
            Family::Gaussian => theta,
            Family::Bernoulli => 1.0 / (1.0 + (-theta).exp()),
        })
    }

    /// g(mu), the natural parameter as a function of the mean.
    pub fn theta_from_mean(self, mu: f64) -> Result<f64> {
        if !self.mean_in_domain(mu) {
            return Err(Error::domain(format!(
                "mu={mu} outside the {} mean domain",
                self.name()
            )));
        }
        Ok(match self {
            Family::Poisson => mu.ln(),
            Family::Gamma => -1.0 / mu,
            Family::Gaussian => mu,
            Family::Bernoulli => (mu / (1.0 - mu)).ln(),
        })
    }

    /// Variance function V(mu) = b''(g(mu)).
    pub fn variance_function(self, mu: f64) -> Result<f64> {
        if !self.mean_in_domain(mu) {
            return Err(Error::domain(format!(
                "mu={mu} outside the {} mean domain",
                self.name()
            )));
        }
        Ok(match self {
            Family::Poisson => mu,
            Family::Gamma => mu * mu,
            Family::Gaussian => 1.0,
            Family::Bernoulli => mu * (1.0 - mu),
        })
    }

    /// b''(theta) evaluated from the natural parameter. Mathematically equal
    /// to `variance_function(mean_from_theta(theta))`, but stays defined when
    /// the mean saturates at a support boundary in floating point.
    pub fn variance_from_theta(self, theta: f64) -> Result<f64> {
        if !self.theta_in_domain(theta) {
            return Err(Error::domain(format!(
                "theta={theta} outside the {} natural-parameter domain",
                self.name()
            )));
        }
        Ok(match self {
            Family::Poisson => theta.exp(),
            Family::Gamma => 1.0 / (theta * theta),
            Family::Gaussian => 1.0,
            Family::Bernoulli => {
                let m = 1.0 / (1.0 + (-theta).exp());
                m * (1.0 - m)
            }
        })
    }

    pub fn y_in_support(self, y: f64) -> bool {
        match self {
            Family::Poisson => y >= 0.0 && y.fract() == 0.0 && y.is_finite(),
            Family::Gamma => y > 0.0 && y.is_finite(),
            Family::Gaussian => y.is_finite(),
            Family::Bernoulli => y == 0.0 || y == 1.0,
        }
    }

    /// The c(y; phi) term of the EF density, so that
    /// log pi(y) = (theta y - b(theta)) / phi + c(y; phi).
    pub fn log_base_measure(self, y: f64, phi: f64) -> Result<f64> {
        check_phi(self, phi)?;
        if !self.y_in_support(y) {
            return Err(Error::domain(format!(
                "y={y} outside the {} support",
                self.name()
            )));
        }
        Ok(match self {
            Family::Poisson => -ln_gamma(y + 1.0)?,
            // Shape 1/phi parameterisation, Var(Y) = phi mu^2.
            Family::Gamma => {
                let inv = 1.0 / phi;
                (inv - 1.0) * y.ln() - inv * phi.ln() - ln_gamma(inv)?
            }
            Family::Gaussian => -y * y / (2.0 * phi) - 0.5 * (2.0 * std::f64::consts::PI * phi).ln(),
            Family::Bernoulli => 0.0,
        })
    }

    /// Exact log density / probability mass of EF(mu, phi) at y, evaluated
    /// from per-family closed forms (kept separate from the cumulant route
    /// used by the pseudo log-likelihood).
    pub fn log_density(self, y: f64, mu: f64, phi: f64) -> Result<f64> {
        check_phi(self, phi)?;
        if !self.y_in_support(y) {
            return Err(Error::domain(format!(
                "y={y} outside the {} support",
                self.name()
            )));
        }
        if !self.mean_in_domain(mu) {
            return Err(Error::domain(format!(
                "mu={mu} outside the {} mean domain",
                self.name()
            )));
        }
        Ok(match self {
            Family::Poisson => y * mu.ln() - mu - ln_gamma(y + 1.0)?,
            Family::Gamma => {
                let shape = 1.0 / phi;
                let rate = shape / mu;
                shape * rate.ln() + (shape - 1.0) * y.ln() - rate * y - ln_gamma(shape)?
            }
            Family::Gaussian => {
                let r = y - mu;
                -r * r / (2.0 * phi) - 0.5 * (2.0 * std::f64::consts::PI * phi).ln()
            }
            Family::Bernoulli => {
                if y == 1.0 {
                    mu.ln()
                } else {
                    (1.0 - mu).ln()
                }
            }
        })
    }

    /// One draw from EF(mu, phi).
    pub fn sample<R: Rng + ?Sized>(self, mu: f64, phi: f64, rng: &mut R) -> Result<f64> {
        check_phi(self, phi)?;
        if !self.mean_in_domain(mu) {
            return Err(Error::domain(format!(
                "mu={mu} outside the {} mean domain",
                self.name()
            )));
        }
        Ok(match self {
            Family::Poisson => rand_distr::Poisson::new(mu)
                .map_err(|e| Error::domain(format!("poisson sampler: {e}")))?
                .sample(rng),
            Family::Gamma => rand_distr::Gamma::new(1.0 / phi, phi * mu)
                .map_err(|e| Error::domain(format!("gamma sampler: {e}")))?
                .sample(rng),
            Family::Gaussian => rand_distr::Normal::new(mu, phi.sqrt())
                .map_err(|e| Error::domain(format!("normal sampler: {e}")))?
                .sample(rng),
            Family::Bernoulli => {
                if rng.gen::<f64>() < mu {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }
}

fn check_phi(family: Family, phi: f64) -> Result<()> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::domain(format!("phi must be positive, got {phi}")));
    }
    if !family.has_free_dispersion() && phi != 1.0 {
        return Err(Error::domain(format!(
            "{} fixes phi = 1, got {phi}",
            family.name()
        )));
    }
    Ok(())
}

/// A family together with its dispersion; the validated pair used across
/// fitting, inference, and prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family: Family,
    pub phi: f64,
    /// Variance-function power gamma in V(mu) = mu^gamma.
    pub gamma_power: f64,
}

impl FamilySpec {
    pub fn new(family: Family, phi: f64) -> Result<Self> {
        check_phi(family, phi)?;
        Ok(FamilySpec {
            family,
            phi,
            gamma_power: family.variance_power(),
        })
    }

    pub fn poisson() -> Self {
        FamilySpec::new(Family::Poisson, 1.0).expect("valid by construction")
    }

    pub fn bernoulli() -> Self {
        FamilySpec::new(Family::Bernoulli, 1.0).expect("valid by construction")
    }

    pub fn gamma(phi: f64) -> Result<Self> {
        FamilySpec::new(Family::Gamma, phi)
    }

    pub fn gaussian(phi: f64) -> Result<Self> {
        FamilySpec::new(Family::Gaussian, phi)
    }

    pub fn log_density(&self, y: f64, mu: f64) -> Result<f64> {
        self.family.log_density(y, mu, self.phi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, mu: f64, rng: &mut R) -> Result<f64> {
        self.family.sample(mu, self.phi, rng)
    }
}
