//! Modified Bessel functions of the first kind `I_u(x)` and third kind
//! `K_p(u)`, each with a log-scaled variant that stays finite where the
//! unscaled value overflows.

use crate::error::{Error, Result};

use super::gamma::ln_gamma;

const LN10: f64 = std::f64::consts::LN_10;
const RESCALE: f64 = 1e250;
const MAX_SERIES_TERMS: usize = 200_000;

/// Largest finite exponent: exp(x) overflows for x above this.
const MAX_EXP: f64 = 709.78;

/// `I_u(x)` for `x >= 0`. Non-integer orders `u < 0` require `x > 0`.
pub fn bessel_i(u: f64, x: f64) -> Result<f64> {
    let ln = ln_bessel_i(u, x)?;
    if ln > MAX_EXP {
        return Err(Error::Range(format!(
            "bessel_i({u}, {x}) overflows f64; use ln_bessel_i"
        )));
    }
    Ok(ln.exp())
}

/// `log I_u(x)`, finite for `x` up to at least 1e4. Returns `-inf` when
/// `I_u(x) = 0` (`x = 0`, `u > 0`).
pub fn ln_bessel_i(u: f64, x: f64) -> Result<f64> {
    if x.is_nan() || u.is_nan() {
        return Err(Error::domain("bessel_i: NaN argument"));
    }
    if x < 0.0 {
        return Err(Error::domain(format!("bessel_i requires x >= 0, got {x}")));
    }
    let is_int = (u - u.round()).abs() < 1e-12;
    if u < 0.0 {
        if is_int {
            return ln_bessel_i(-u.round(), x);
        }
        if x == 0.0 {
            return Err(Error::domain(
                "bessel_i with non-integer u < 0 requires x > 0",
            ));
        }
        if u > -1.0 {
            // Series is valid: Gamma(k + u + 1) > 0 for all k >= 0.
            return ln_series(u, x);
        }
        // I_{-v}(x) = I_v(x) + (2/pi) sin(v pi) K_v(x), v = -u > 1.
        let v = -u;
        let iv = bessel_i(v, x)?;
        let kv = bessel_k(v, x)?;
        let val = iv + 2.0 / std::f64::consts::PI * (v * std::f64::consts::PI).sin() * kv;
        if val <= 0.0 {
            return Err(Error::Range(format!(
                "ln_bessel_i({u}, {x}): value non-positive"
            )));
        }
        return Ok(val.ln());
    }
    if x == 0.0 {
        return Ok(if u == 0.0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if use_hankel(u, x) {
        ln_hankel(u, x)
    } else {
        ln_series(u, x)
    }
}

// Large-argument expansion only where its leading terms already decay fast;
// for x below 3u^2 the series is the accurate route even though it needs
// O(x) terms.
fn use_hankel(u: f64, x: f64) -> bool {
    x >= 15.0 + u.abs() && x >= 3.0 * u * u + 15.0
}

/// Ascending series sum_k (x/2)^{2k+u} / (Gamma(k+u+1) k!), accumulated in
/// linear space relative to the k = 0 term with periodic rescaling.
fn ln_series(u: f64, x: f64) -> Result<f64> {
    let ln_t0 = u * (x / 2.0).ln() - ln_gamma(u + 1.0)?;
    let q = x * x / 4.0;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut offset = 0.0f64;
    for k in 1..=MAX_SERIES_TERMS {
        let kf = k as f64;
        term *= q / (kf * (u + kf));
        sum += term;
        if term > RESCALE {
            term /= RESCALE;
            sum /= RESCALE;
            offset += 250.0 * LN10;
        }
        // Terms grow until k(u+k) exceeds q; only stop on the decaying side.
        if term < sum * 1e-17 && kf * (u + kf) > q {
            return Ok(ln_t0 + offset + sum.ln());
        }
    }
    Err(Error::Convergence {
        context: format!("bessel_i series (u={u}, x={x})"),
        value: ln_t0 + offset + sum.ln(),
        error_estimate: term / sum,
    })
}

/// Hankel large-argument expansion: I_u(x) ~ e^x / sqrt(2 pi x) * sum.
fn ln_hankel(u: f64, x: f64) -> Result<f64> {
    let mu4 = 4.0 * u * u;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut prev = f64::INFINITY;
    for k in 1..=60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= -(mu4 - odd * odd) / (8.0 * kf * x);
        if term.abs() >= prev {
            break; // past optimal truncation
        }
        prev = term.abs();
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    Ok(x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln())
}

/// `K_p(u)` for `u > 0`; symmetric in the order, `K_{-p} = K_p`.
pub fn bessel_k(p: f64, u: f64) -> Result<f64> {
    let ln = ln_bessel_k(p, u)?;
    if ln > MAX_EXP {
        return Err(Error::Range(format!(
            "bessel_k({p}, {u}) overflows f64; use ln_bessel_k"
        )));
    }
    Ok(ln.exp())
}

/// `log K_p(u)`, stable for `u` up to 1e4 and `|p|` up to several hundred.
pub fn ln_bessel_k(p: f64, u: f64) -> Result<f64> {
    if p.is_nan() || u.is_nan() {
        return Err(Error::domain("bessel_k: NaN argument"));
    }
    if u <= 0.0 {
        return Err(Error::domain(format!("bessel_k requires u > 0, got {u}")));
    }
    let p = p.abs();
    if u > 30.0 && 4.0 * p * p + 3.0 <= 0.5 * u {
        return ln_k_asymptotic(p, u);
    }
    Ok(ln_k_cosh_integral(p, u))
}

/// K_p(u) ~ sqrt(pi/2u) e^{-u} [1 + (4p^2-1)/(8u) + ...] for large u.
fn ln_k_asymptotic(p: f64, u: f64) -> Result<f64> {
    let mu4 = 4.0 * p * p;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..=60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= (mu4 - odd * odd) / (8.0 * kf * u);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    Ok(0.5 * (std::f64::consts::PI / (2.0 * u)).ln() - u + sum.ln())
}

/// K_p(u) = int_0^inf cosh(p s) exp(-u cosh s) ds, evaluated by the
/// trapezoidal rule in log space with step halving. The integrand decays
/// double-exponentially, so the trapezoid converges at spectral rate.
fn ln_k_cosh_integral(p: f64, u: f64) -> f64 {
    let mut h = 0.5;
    let mut prev = trapezoid_ln(p, u, h);
    for _ in 0..10 {
        h *= 0.5;
        let cur = trapezoid_ln(p, u, h);
        if (cur - prev).abs() < 1e-14 * (1.0 + cur.abs()) {
            return cur;
        }
        prev = cur;
    }
    prev
}

fn trapezoid_ln(p: f64, u: f64, h: f64) -> f64 {
    // ln of h * (g(0)/2 + g(h) + g(2h) + ...) with g(s) = cosh(ps) e^{-u cosh s},
    // summed by streaming log-sum-exp.
    let f0 = -u + (0.5f64).ln(); // ln(g(0)/2): cosh(0) = 1
    let mut max = f0;
    let mut acc = 1.0f64;
    let mut j = 1usize;
    loop {
        let s = h * j as f64;
        let f = ln_cosh(p * s) - u * s.cosh();
        if f > max {
            acc = acc * (max - f).exp() + 1.0;
            max = f;
        } else {
            acc += (f - max).exp();
        }
        // The integrand is unimodal; once well past the peak, stop.
        if f < max - 60.0 {
            break;
        }
        j += 1;
        if j > 2_000_000 {
            break;
        }
    }
    h.ln() + max + acc.ln()
}

fn ln_cosh(z: f64) -> f64 {
    let a = z.abs();
    if a > 20.0 {
        a - std::f64::consts::LN_2 + (-2.0 * a).exp().ln_1p()
    } else {
        a.cosh().ln()
    }
}
