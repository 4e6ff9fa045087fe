//! Log-gamma via the Lanczos approximation (g = 7, 9 terms).

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    if x < 0.5 {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x).
        let reflected = ln_gamma_core(1.0 - x);
        return Ok((std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - reflected);
    }
    Ok(ln_gamma_core(x))
}

fn ln_gamma_core(x: f64) -> f64 {
    let z = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((ln_gamma(1.0).unwrap()).abs() < 1e-14);
        assert!((ln_gamma(2.0).unwrap()).abs() < 1e-14);
        assert!((ln_gamma(5.0).unwrap() - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5).unwrap() - 0.5723649429247001).abs() < 1e-14);
        assert!((ln_gamma(10.3).unwrap() - 13.482036786138359).abs() < 1e-12);
    }

    #[test]
    fn recurrence() {
        // ln Gamma(x+1) = ln Gamma(x) + ln x
        for &x in &[0.1, 0.7, 1.3, 4.5, 22.0, 141.5] {
            let lhs = ln_gamma(x + 1.0).unwrap();
            let rhs = ln_gamma(x).unwrap() + x.ln();
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()), "x={x}");
        }
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(ln_gamma(0.0).is_err());
        assert!(ln_gamma(-1.5).is_err());
        assert!(ln_gamma(f64::NAN).is_err());
    }
}
