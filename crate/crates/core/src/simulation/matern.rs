//! Matérn correlation and the modified Bessel function it needs.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// `exp(x) K_nu(x)` for `x > 0`, from `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`
/// by the trapezoidal rule, which converges geometrically for this integrand.
pub fn bessel_k_scaled(nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let h = 0.02;
    let mut sum = 0.5;
    let mut k = 1;
    loop {
        let t = k as f64 * h;
        let term = (-x * (t.cosh() - 1.0) + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
        k += 1;
    }
    sum * h
}

pub fn bessel_k(nu: f64, x: f64) -> f64 {
    bessel_k_scaled(nu, x) * (-x).exp()
}

/// General Matérn formula `(Gamma(nu) 2^(nu-1))^-1 (sqrt(2 nu) d/rho)^nu K_nu(sqrt(2 nu) d/rho)`.
pub fn matern_general(dist: f64, rho: f64, nu: f64) -> f64 {
    if dist == 0.0 {
        return 1.0;
    }
    let x = (2.0 * nu).sqrt() * dist / rho;
    let log = -ln_gamma(nu) - (nu - 1.0) * std::f64::consts::LN_2 + nu * x.ln() - x
        + bessel_k_scaled(nu, x).ln();
    log.exp()
}

/// Matérn correlation; the exponential kernel is used directly at `nu = 0.5`.
pub fn matern(dist: f64, rho: f64, nu: f64) -> Result<f64> {
    if !(rho > 0.0) || !(nu > 0.0) {
        return Err(Error::InvalidSpec(format!("Matérn needs rho > 0 and nu > 0, got {rho}, {nu}")));
    }
    if !(dist >= 0.0) {
        return Err(Error::Input(format!("distance {dist} is negative")));
    }
    if nu == 0.5 {
        return Ok((-dist / rho).exp());
    }
    Ok(matern_general(dist, rho, nu))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_integer_identity() {
        for k in 0..100 {
            let d = 0.01 + 0.05 * k as f64;
            let general = matern_general(d, 0.5, 0.5);
            assert!((general - (-d / 0.5f64).exp()).abs() < 1e-12, "d = {d}");
        }
    }

    #[test]
    fn nu_three_halves_closed_form() {
        for &d in &[0.05, 0.3, 1.0, 4.0] {
            let x = 3f64.sqrt() * d / 0.7;
            let closed = (1.0 + x) * (-x).exp();
            assert!((matern(d, 0.7, 1.5).unwrap() - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn bessel_reference_values() {
        // K_0(1) and K_1(2)
        assert!((bessel_k(0.0, 1.0) - 0.421_024_438_240_708_3).abs() < 1e-14);
        assert!((bessel_k(1.0, 2.0) - 0.139_865_881_816_522_4).abs() < 1e-14);
    }

    #[test]
    fn unit_at_zero_and_decreasing() {
        assert_eq!(matern(0.0, 0.5, 2.5).unwrap(), 1.0);
        let mut last = 1.0;
        for k in 1..50 {
            let v = matern(k as f64 * 0.1, 0.5, 2.5).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(matern(-1.0, 0.5, 0.5).is_err());
        assert!(matern(1.0, 0.0, 0.5).is_err());
    }
}
