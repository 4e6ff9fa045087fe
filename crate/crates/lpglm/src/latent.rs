//! The three stationary latent processes with unit mean that drive the
//! conditional mean: log-normal AR(1), gamma AR(1), and the squared ARCH(1).

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{ln_bessel_i, ln_gamma};

/// ARCH(1) squared processes are initialised at nu = 1 and burnt in this many
/// steps; the stationary law has no closed form to draw from directly.
const ARCH_BURN_IN: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentKind {
    Lnar,
    Gar,
    Arch,
}

impl LatentKind {
    pub fn name(self) -> &'static str {
        match self {
            LatentKind::Lnar => "lnar",
            LatentKind::Gar => "gar",
            LatentKind::Arch => "arch",
        }
    }
}

impl std::str::FromStr for LatentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lnar" => Ok(LatentKind::Lnar),
            "gar" => Ok(LatentKind::Gar),
            "arch" => Ok(LatentKind::Arch),
            other => Err(Error::config(format!("unknown latent kind '{other}'"))),
        }
    }
}

/// A fully parameterised latent process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LatentSpec {
    /// nu_t = exp(Z_t), Z_t an AR(1) with N(-sigma^2/2, sigma^2) marginals.
    Lnar { sigma2: f64, rho: f64 },
    /// Gamma AR(1) with Gamma(1/sigma^2, rate 1/sigma^2) marginals and a
    /// Bessel-I transition density.
    Gar { sigma2: f64, rho: f64 },
    /// nu_t = Z_t^2 with Z_t ~ ARCH(1), omega = 1 - rho so E(nu_t) = 1.
    Arch { rho: f64 },
}

impl LatentSpec {
    pub fn lnar(sigma2: f64, rho: f64) -> Result<Self> {
        let spec = LatentSpec::Lnar { sigma2, rho };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gar(sigma2: f64, rho: f64) -> Result<Self> {
        let spec = LatentSpec::Gar { sigma2, rho };
        spec.validate()?;
        Ok(spec)
    }

    pub fn arch(rho: f64) -> Result<Self> {
        let spec = LatentSpec::Arch { rho };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LatentSpec::Lnar { sigma2, rho } => {
                if !(sigma2 > 0.0 && sigma2.is_finite()) {
                    return Err(Error::domain(format!("LNAR requires sigma2 > 0, got {sigma2}")));
                }
                if !(rho > -1.0 && rho < 1.0) {
                    return Err(Error::domain(format!("LNAR requires rho in (-1, 1), got {rho}")));
                }
            }
            LatentSpec::Gar { sigma2, rho } => {
                if !(sigma2 > 0.0 && sigma2.is_finite()) {
                    return Err(Error::domain(format!("GAR requires sigma2 > 0, got {sigma2}")));
                }
                if !(rho > 0.0 && rho < 1.0) {
                    return Err(Error::domain(format!("GAR requires rho in (0, 1), got {rho}")));
                }
            }
            LatentSpec::Arch { rho } => {
                let bound = 1.0 / 3f64.sqrt();
                if !(rho > 0.0 && rho < bound) {
                    return Err(Error::domain(format!(
                        "ARCH requires rho in (0, 1/sqrt(3)) = (0, {bound:.6}), got {rho}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> LatentKind {
        match self {
            LatentSpec::Lnar { .. } => LatentKind::Lnar,
            LatentSpec::Gar { .. } => LatentKind::Gar,
            LatentSpec::Arch { .. } => LatentKind::Arch,
        }
    }

    pub fn rho(&self) -> f64 {
        match *self {
            LatentSpec::Lnar { rho, .. }
            | LatentSpec::Gar { rho, .. }
            | LatentSpec::Arch { rho } => rho,
        }
    }

    pub fn sigma2(&self) -> Option<f64> {
        match *self {
            LatentSpec::Lnar { sigma2, .. } | LatentSpec::Gar { sigma2, .. } => Some(sigma2),
            LatentSpec::Arch { .. } => None,
        }
    }

    /// A stationary path of length `n`. The first value is drawn from the
    /// stationary marginal (ARCH: burnt in), then the transition is iterated.
    pub fn simulate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::domain("simulate requires n >= 1"));
        }
        let mut out = Vec::with_capacity(n);
        match *self {
            LatentSpec::Lnar { sigma2, rho } => {
                let sd = sigma2.sqrt();
                let innov_sd = (sigma2 * (1.0 - rho * rho)).sqrt();
                let intercept = -sigma2 * (1.0 - rho) / 2.0;
                let normal = rand_distr::StandardNormal;
                let e0: f64 = normal.sample(rng);
                let mut z = -sigma2 / 2.0 + sd * e0;
                out.push(z.exp());
                for _ in 1..n {
                    let eps: f64 = normal.sample(rng);
                    z = intercept + rho * z + innov_sd * eps;
                    out.push(z.exp());
                }
            }
            LatentSpec::Gar { sigma2, rho } => {
                let alpha = 1.0 / sigma2;
                let marginal = rand_distr::Gamma::new(alpha, sigma2)
                    .map_err(|e| Error::domain(format!("GAR marginal: {e}")))?;
                let mut nu = marginal.sample(rng);
                out.push(nu);
                for _ in 1..n {
                    nu = gar_transition_sample(sigma2, rho, nu, rng)?;
                    out.push(nu);
                }
            }
            LatentSpec::Arch { rho } => {
                let omega = 1.0 - rho;
                let normal = rand_distr::StandardNormal;
                let mut nu = 1.0f64;
                for _ in 0..ARCH_BURN_IN {
                    let eps: f64 = normal.sample(rng);
                    nu = (omega + rho * nu) * eps * eps;
                }
                for _ in 0..n {
                    let eps: f64 = normal.sample(rng);
                    nu = (omega + rho * nu) * eps * eps;
                    out.push(nu);
                }
            }
        }
        Ok(out)
    }

    /// One draw from the stationary marginal (ARCH: via burn-in).
    pub fn stationary_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(self.simulate(1, rng)?[0])
    }

    /// kappa_j = E(nu_t^j) for j >= 0.
    pub fn moment(&self, j: f64) -> Result<f64> {
        self.validate()?;
        if !(j >= 0.0) {
            return Err(Error::domain(format!("moment order must be >= 0, got {j}")));
        }
        if j == 0.0 {
            return Ok(1.0);
        }
        if j == 1.0 {
            return Ok(1.0); // E(nu_t) = 1 by construction
        }
        match *self {
            LatentSpec::Lnar { sigma2, .. } => Ok((sigma2 * j * (j - 1.0) / 2.0).exp()),
            LatentSpec::Gar { sigma2, .. } => {
                let alpha = 1.0 / sigma2;
                Ok((ln_gamma(alpha + j)? - ln_gamma(alpha)? + j * sigma2.ln()).exp())
            }
            LatentSpec::Arch { rho } => {
                if j == 2.0 {
                    Ok(3.0 * (1.0 - rho * rho) / (1.0 - 3.0 * rho * rho))
                } else {
                    Err(Error::domain(format!(
                        "ARCH moments are available only for j in {{0, 1, 2}}, got {j}"
                    )))
                }
            }
        }
    }

    /// Var(nu_t).
    pub fn variance(&self) -> Result<f64> {
        Ok(self.moment(2.0)? - 1.0)
    }

    /// corr(nu_{t+l}, nu_t); lag 0 returns 1.
    pub fn autocorrelation(&self, lag: usize) -> Result<f64> {
        self.validate()?;
        if lag == 0 {
            return Ok(1.0);
        }
        let l = lag as f64;
        Ok(match *self {
            LatentSpec::Lnar { sigma2, rho } => {
                ((sigma2 * rho.powf(l)).exp() - 1.0) / (sigma2.exp() - 1.0)
            }
            LatentSpec::Gar { rho, .. } | LatentSpec::Arch { rho } => rho.powf(l),
        })
    }

    /// cov(nu_{t+l}, nu_t); lag 0 returns Var(nu_t).
    pub fn autocovariance(&self, lag: usize) -> Result<f64> {
        Ok(self.autocorrelation(lag)? * self.variance()?)
    }

    /// E(nu_{t+l} | nu_t) for a horizon l >= 1; tends to 1 as l grows.
    pub fn conditional_mean(&self, nu_t: f64, horizon: usize) -> Result<f64> {
        self.validate()?;
        if !(nu_t > 0.0) {
            return Err(Error::domain(format!("nu_t must be positive, got {nu_t}")));
        }
        if horizon == 0 {
            return Err(Error::domain("horizon must be >= 1"));
        }
        let l = horizon as f64;
        Ok(match *self {
            LatentSpec::Lnar { sigma2, rho } => {
                let rl = rho.powf(l);
                (rl * sigma2 * (1.0 - rl) / 2.0 + rl * nu_t.ln()).exp()
            }
            LatentSpec::Gar { rho, .. } | LatentSpec::Arch { rho } => {
                1.0 + rho.powf(l) * (nu_t - 1.0)
            }
        })
    }

    /// Log of the stationary marginal density at `nu`. Not available for the
    /// squared ARCH(1) process (no closed form).
    pub fn stationary_log_density(&self, nu: f64) -> Result<f64> {
        self.validate()?;
        if !(nu > 0.0) {
            return Err(Error::domain(format!("nu must be positive, got {nu}")));
        }
        match *self {
            LatentSpec::Lnar { sigma2, .. } => {
                let z = nu.ln();
                Ok(-z
                    - 0.5 * (2.0 * std::f64::consts::PI * sigma2).ln()
                    - (z + sigma2 / 2.0).powi(2) / (2.0 * sigma2))
            }
            LatentSpec::Gar { sigma2, .. } => {
                let alpha = 1.0 / sigma2;
                Ok(alpha * alpha.ln() + (alpha - 1.0) * nu.ln() - alpha * nu - ln_gamma(alpha)?)
            }
            LatentSpec::Arch { .. } => Err(Error::Unsupported(
                "the squared ARCH(1) stationary density has no closed form".into(),
            )),
        }
    }
}

/// One step of the gamma AR(1) transition: a Poisson number of mixture
/// components followed by a gamma draw. Reproduces the Bessel-I conditional
/// density exactly (see `gar_transition_log_density` and its test).
pub fn gar_transition_sample<R: Rng + ?Sized>(
    sigma2: f64,
    rho: f64,
    nu_prev: f64,
    rng: &mut R,
) -> Result<f64> {
    let rate = 1.0 / (sigma2 * (1.0 - rho));
    let lambda = rho * nu_prev * rate;
    let n_mix = if lambda > 0.0 {
        rand_distr::Poisson::new(lambda)
            .map_err(|e| Error::domain(format!("GAR transition poisson: {e}")))?
            .sample(rng)
    } else {
        0.0
    };
    let shape = 1.0 / sigma2 + n_mix;
    Ok(rand_distr::Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::domain(format!("GAR transition gamma: {e}")))?
        .sample(rng))
}

/// Log of the gamma AR(1) conditional density f(nu_t | nu_{t-1}).
pub fn gar_transition_log_density(sigma2: f64, rho: f64, nu: f64, nu_prev: f64) -> Result<f64> {
    if !(nu > 0.0 && nu_prev > 0.0) {
        return Err(Error::domain("GAR transition density requires positive arguments"));
    }
    LatentSpec::Gar { sigma2, rho }.validate()?;
    let rate = 1.0 / (sigma2 * (1.0 - rho));
    let order = 1.0 / sigma2 - 1.0;
    let bessel_arg = 2.0 * rate * (rho * nu * nu_prev).sqrt();
    Ok(rate.ln() + 0.5 * order * (nu / (rho * nu_prev)).ln() - rate * (nu + rho * nu_prev)
        + ln_bessel_i(order, bessel_arg)?)
}
