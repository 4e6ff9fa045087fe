//! Standard errors for the GLM estimator by three routes: the naive GLM
//! information, the corrected sandwich covariance with plug-in latent
//! moments, and a parametric bootstrap.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::family::Family;
use crate::glm::{self, Dataset, FitResult};
use crate::latent::{LatentKind, LatentSpec};
use crate::moments::MomEstimate;

/// Lags are truncated once the latent autocorrelation falls below this;
/// geometric decay makes the truncated tail of the double sum negligible.
const AUTOCORR_CUTOFF: f64 = 1e-8;

/// The three information matrices and the covariance estimates built from
/// them. `sandwich` and `naive` are covariances of beta_hat itself (the 1/n
/// factor is already applied).
#[derive(Debug, Clone)]
pub struct CovarianceReport {
    pub omega_i: DMatrix<f64>,
    pub omega_i_dagger: DMatrix<f64>,
    pub omega_ii: DMatrix<f64>,
    pub sandwich: DMatrix<f64>,
    pub naive: DMatrix<f64>,
    pub se_naive: Vec<f64>,
    pub se_sandwich: Vec<f64>,
    /// Lag at which the Omega_II double sum was truncated.
    pub truncation_lag: usize,
}

/// Sandwich covariance from a fitted GLM and a valid latent-parameter
/// estimate.
pub fn estimate_omegas(
    data: &Dataset,
    fit: &FitResult,
    latent_fit: &MomEstimate,
) -> Result<CovarianceReport> {
    if !fit.converged {
        return Err(Error::Precondition(
            "estimate_omegas requires a converged fit".into(),
        ));
    }
    if !latent_fit.valid {
        return Err(Error::Precondition(format!(
            "estimate_omegas requires a valid latent estimate ({})",
            latent_fit.invalid_reason.as_deref().unwrap_or("invalid")
        )));
    }
    estimate_omegas_with(
        data,
        fit,
        latent_fit.kind,
        latent_fit.sigma2.unwrap_or(0.0),
        latent_fit.rho.unwrap_or(0.0),
        latent_fit.phi_or_fixed(),
    )
}

/// Same computation with raw latent parameters; `sigma2 = 0` is the
/// degenerate no-latent-variation case (all latent moments 1, autocovariance
/// zero), which LatentSpec itself rejects.
pub fn estimate_omegas_with(
    data: &Dataset,
    fit: &FitResult,
    kind: LatentKind,
    sigma2: f64,
    rho: f64,
    phi_hat: f64,
) -> Result<CovarianceReport> {
    let degenerate = kind != LatentKind::Arch && sigma2 == 0.0;
    let spec = if degenerate {
        None
    } else {
        Some(match kind {
            LatentKind::Lnar => LatentSpec::lnar(sigma2, rho)?,
            LatentKind::Gar => LatentSpec::gar(sigma2, rho)?,
            LatentKind::Arch => LatentSpec::arch(rho)?,
        })
    };
    let kappa = |j: f64| -> Result<f64> {
        match &spec {
            Some(s) => s.moment(j),
            None => Ok(1.0),
        }
    };
    let autocov = |l: usize| -> Result<f64> {
        match &spec {
            Some(s) => s.autocovariance(l),
            None => Ok(0.0),
        }
    };
    let autocorr = |l: usize| -> Result<f64> {
        match &spec {
            Some(s) => s.autocorrelation(l),
            None => Ok(0.0),
        }
    };

    let (n, p) = (data.n(), data.p());
    let nf = n as f64;
    let x = data.design();
    let mu = &fit.mu_hat;
    let family = data.family().family;
    let gamma_power = data.family().gamma_power;

    // Omega_I = n^{-1} sum x x' V(mu_t)
    let mut omega_i = DMatrix::zeros(p, p);
    // Omega_I^dag = n^{-1} sum x x' E[V(mu_t nu)]: mu^gamma kappa_gamma for
    // the power-variance families; Bernoulli is the exception and is handled
    // exactly via E[mu nu (1 - mu nu)] = mu - mu^2 kappa_2.
    let mut omega_dag = DMatrix::zeros(p, p);
    let kappa_gamma = kappa(gamma_power)?;
    let kappa2 = kappa(2.0)?;
    for t in 0..n {
        let xt = x.row(t).transpose();
        let v = family.variance_function(mu[t])?;
        let v_dag = match family {
            Family::Bernoulli => mu[t] - mu[t] * mu[t] * kappa2,
            _ => mu[t].powf(gamma_power) * kappa_gamma,
        };
        omega_i.syger(v / nf, &xt, &xt, 1.0);
        omega_dag.syger(v_dag / nf, &xt, &xt, 1.0);
    }
    symmetrize_from_lower(&mut omega_i);
    symmetrize_from_lower(&mut omega_dag);

    // Truncation lag for the Omega_II double sum.
    let mut lag = 0usize;
    while lag + 1 < n {
        if autocorr(lag + 1)?.abs() < AUTOCORR_CUTOFF {
            break;
        }
        lag += 1;
    }
    let omega_ii = omega_ii_truncated(x, mu, &autocov, lag)?;

    let chol = omega_i.clone().cholesky().ok_or_else(|| {
        Error::LinearAlgebra("Omega_I is singular; sandwich covariance undefined".into())
    })?;
    let inv = chol.inverse();
    let meat = &omega_dag * phi_hat + &omega_ii;
    let mut sandwich = (&inv * meat * &inv) / nf;
    symmetrize(&mut sandwich);
    let naive = &inv * (phi_hat / nf);

    let se_naive = (0..p).map(|j| naive[(j, j)].sqrt()).collect();
    let se_sandwich = (0..p).map(|j| sandwich[(j, j)].sqrt()).collect();
    Ok(CovarianceReport {
        omega_i,
        omega_i_dagger: omega_dag,
        omega_ii,
        sandwich,
        naive,
        se_naive,
        se_sandwich,
        truncation_lag: lag,
    })
}

/// n^{-1} sum_{|t-k| <= lag} x_t x_k' mu_t mu_k gamma_nu(|t-k|), assembled
/// lag by lag.
pub(crate) fn omega_ii_truncated<F>(
    x: &DMatrix<f64>,
    mu: &[f64],
    autocov: &F,
    lag: usize,
) -> Result<DMatrix<f64>>
where
    F: Fn(usize) -> Result<f64>,
{
    let (n, p) = (x.nrows(), x.ncols());
    let nf = n as f64;
    let mut omega = DMatrix::zeros(p, p);
    let g0 = autocov(0)?;
    for t in 0..n {
        let xt = x.row(t).transpose();
        omega.syger(g0 * mu[t] * mu[t] / nf, &xt, &xt, 1.0);
    }
    symmetrize_from_lower(&mut omega);
    for l in 1..=lag.min(n - 1) {
        let g = autocov(l)?;
        if g == 0.0 {
            continue;
        }
        let mut cross = DMatrix::zeros(p, p);
        for t in l..n {
            let xt = x.row(t).transpose();
            let xs = x.row(t - l).transpose();
            cross.ger(mu[t] * mu[t - l] / nf, &xt, &xs, 1.0);
        }
        omega += (&cross + cross.transpose()) * g;
    }
    Ok(omega)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// `syger` fills only the lower triangle; mirror it.
fn symmetrize_from_lower(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            m[(i, j)] = m[(j, i)];
        }
    }
}

/// Bootstrap distribution of beta_hat under the fitted model.
#[derive(Debug, Clone)]
pub struct BootstrapReport {
    pub replications: usize,
    /// One row per converged replication, in replication order.
    pub estimates: Vec<Vec<f64>>,
    pub mean_boot: Vec<f64>,
    pub se_boot: Vec<f64>,
    pub failed: usize,
    /// Set when 5% or more of the replications failed to converge.
    pub degraded: bool,
}

/// Parametric bootstrap: simulate the latent path, draw the responses from
/// EF(mu_hat nu, phi_hat), refit, and collect the estimates. Replications
/// run in parallel on deterministic per-replication substreams of the master
/// seed, so the report depends only on (data, fit, latent_fit, b, seed).
pub fn parametric_bootstrap(
    data: &Dataset,
    fit: &FitResult,
    latent_fit: &MomEstimate,
    b: usize,
    master_seed: u64,
) -> Result<BootstrapReport> {
    if b < 2 {
        return Err(Error::Precondition("bootstrap requires B >= 2".into()));
    }
    let spec = latent_fit.latent_spec()?;
    let phi = latent_fit.phi_or_fixed();
    let warm = fit.beta();
    let n = data.n();

    let replicates: Vec<Option<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(rep as u64 + 1);
            bootstrap_one(data, &fit.mu_hat, &warm, &spec, phi, n, &mut rng)
        })
        .collect();

    let estimates: Vec<Vec<f64>> = replicates.iter().flatten().cloned().collect();
    let failed = b - estimates.len();
    if estimates.len() < 2 {
        return Err(Error::Precondition(format!(
            "bootstrap produced only {} converged replications",
            estimates.len()
        )));
    }
    let p = data.p();
    let mut mean = vec![0.0f64; p];
    for est in &estimates {
        for j in 0..p {
            mean[j] += est[j];
        }
    }
    let m = estimates.len() as f64;
    for v in &mut mean {
        *v /= m;
    }
    let mut se = vec![0.0f64; p];
    for est in &estimates {
        for j in 0..p {
            se[j] += (est[j] - mean[j]) * (est[j] - mean[j]);
        }
    }
    for v in &mut se {
        *v = (*v / (m - 1.0)).sqrt();
    }
    Ok(BootstrapReport {
        replications: b,
        estimates,
        mean_boot: mean,
        se_boot: se,
        failed,
        degraded: (failed as f64) / (b as f64) >= 0.05,
    })
}

fn bootstrap_one(
    data: &Dataset,
    mu_hat: &[f64],
    warm: &DVector<f64>,
    spec: &LatentSpec,
    phi: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    let nu = spec.simulate(n, rng).ok()?;
    let family = data.family().family;
    let mut y = Vec::with_capacity(n);
    for t in 0..n {
        y.push(family.sample(mu_hat[t] * nu[t], phi, rng).ok()?);
    }
    let resampled = data.with_response(y).ok()?;
    glm::fit(&resampled, Some(warm))
        .ok()
        .map(|res| res.beta_hat)
}
