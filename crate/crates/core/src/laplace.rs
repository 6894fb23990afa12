//! Asymmetric Laplace limit of the money distribution for identical banks.
//!
//! With `T = M / N` and `rho = R / M`,
//!
//! ```text
//! f(c) = mu e^(-a c)  (c >= 0),    f(c) = mu e^(b c)  (c <= 0)
//! mu = (sqrt(1 + rho) - sqrt(rho))^2 / T
//! a  = (1 - sqrt(rho / (1 + rho))) / T
//! b  = (sqrt((1 + rho) / rho) - 1) / T
//! ```
//!
//! `rho = 0` (no banks) degenerates to the exponential law with `b = inf`.

use serde::{Deserialize, Serialize};

use crate::error::LaplaceError;

/// Decay rate of the debt side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DebtRate {
    Finite(f64),
    /// No debt at all (`rho = 0`).
    Infinite,
}

impl DebtRate {
    pub fn value(self) -> f64 {
        match self {
            DebtRate::Finite(b) => b,
            DebtRate::Infinite => f64::INFINITY,
        }
    }

    /// `1 / b`, zero in the degenerate case.
    pub fn recip(self) -> f64 {
        match self {
            DebtRate::Finite(b) => 1.0 / b,
            DebtRate::Infinite => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceParams {
    pub mu: f64,
    pub a: f64,
    pub b: DebtRate,
    pub temperature: f64,
    pub rho: f64,
}

impl LaplaceParams {
    pub fn is_degenerate(&self) -> bool {
        matches!(self.b, DebtRate::Infinite)
    }

    pub fn pdf(&self, c: f64) -> f64 {
        laplace_pdf(self, c)
    }
}

pub fn laplace_params(temperature: f64, rho: f64) -> Result<LaplaceParams, LaplaceError> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(LaplaceError::BadTemperature(temperature));
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(LaplaceError::BadRho(rho));
    }
    let s = (1.0 + rho).sqrt();
    let r = rho.sqrt();
    // sqrt(1 + rho) - sqrt(rho) without cancellation
    let d = 1.0 / (s + r);
    let mu = d * d / temperature;
    let a = d / (s * temperature);
    let b = if rho == 0.0 { DebtRate::Infinite } else { DebtRate::Finite(d / (r * temperature)) };
    Ok(LaplaceParams { mu, a, b, temperature, rho })
}

pub fn laplace_pdf(params: &LaplaceParams, c: f64) -> f64 {
    if c >= 0.0 {
        params.mu * (-params.a * c).exp()
    } else {
        match params.b {
            DebtRate::Finite(b) => params.mu * (b * c).exp(),
            DebtRate::Infinite => 0.0,
        }
    }
}

/// Equilibrium fractions of individuals with at least one coin and in debt.
pub fn equilibrium_fractions(rho: f64) -> Result<(f64, f64), LaplaceError> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(LaplaceError::BadRho(rho));
    }
    let s = (1.0 + rho).sqrt();
    let r = rho.sqrt();
    Ok((s / (s + r), r / (s + r)))
}

/// Absolute residuals of the three parameter identities
/// `mu/a + mu/b = 1`, `mu/a^2 - mu/b^2 = T`, `mu/a^2 = (1 + rho) T`.
pub fn check_identities(params: &LaplaceParams, temperature: f64, rho: f64) -> [f64; 3] {
    let inv_b = params.b.recip();
    let mu = params.mu;
    let a = params.a;
    [
        (mu / a + mu * inv_b - 1.0).abs(),
        (mu / (a * a) - mu * inv_b * inv_b - temperature).abs(),
        (mu / (a * a) - (1.0 + rho) * temperature).abs(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn figure_one_parameters() {
        let p = laplace_params(500.0, 0.2).unwrap();
        assert_relative_eq!(p.mu, 8.4041e-4, max_relative = 1e-4);
        assert_relative_eq!(p.a, 1.18350e-3, max_relative = 1e-5);
        assert_relative_eq!(p.b.value(), 2.89898e-3, max_relative = 1e-5);
        assert_relative_eq!(laplace_pdf(&p, 1000.0), 2.573e-4, max_relative = 1e-3);
    }

    #[test]
    fn unit_temperature_unit_rho() {
        let p = laplace_params(1.0, 1.0).unwrap();
        assert_relative_eq!(p.mu, (2f64.sqrt() - 1.0).powi(2), epsilon = 1e-15);
        assert_relative_eq!(p.mu, 0.171573, epsilon = 1e-6);
        assert_relative_eq!(p.a, 0.292893, epsilon = 1e-6);
        assert_relative_eq!(p.b.value(), 0.414214, epsilon = 1e-6);
    }

    #[test]
    fn rho_zero_is_exponential() {
        let p = laplace_params(7.0, 0.0).unwrap();
        assert!(p.is_degenerate());
        assert_relative_eq!(p.mu, 1.0 / 7.0);
        assert_relative_eq!(p.a, 1.0 / 7.0);
        assert_eq!(laplace_pdf(&p, -1.0), 0.0);
        let res = check_identities(&p, 7.0, 0.0);
        assert!(res.iter().all(|&r| r < 1e-12), "{res:?}");
    }

    #[test]
    fn pdf_continuous_at_origin() {
        let p = laplace_params(3.0, 0.4).unwrap();
        assert_eq!(laplace_pdf(&p, 0.0), p.mu);
        assert_relative_eq!(laplace_pdf(&p, -1e-12), p.mu, max_relative = 1e-12);
    }

    #[test]
    fn fractions() {
        assert_eq!(equilibrium_fractions(0.0).unwrap(), (1.0, 0.0));
        let (up, um) = equilibrium_fractions(0.2).unwrap();
        assert_relative_eq!(up, 0.710103, epsilon = 1e-6);
        assert_relative_eq!(um, 0.289897, epsilon = 1e-6);
        for rho in [0.01, 0.3, 1.0, 5.0, 123.0] {
            let (up, um) = equilibrium_fractions(rho).unwrap();
            assert!((up + um - 1.0).abs() < 1e-14);
        }
        assert!(equilibrium_fractions(-0.1).is_err());
    }

    #[test]
    fn identities_hold() {
        for (t, rho) in [(500.0, 0.2), (10.0, 1.0)] {
            let p = laplace_params(t, rho).unwrap();
            let res = check_identities(&p, t, rho);
            assert!(res.iter().all(|&r| r < 1e-12), "{res:?}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(laplace_params(0.0, 0.1), Err(LaplaceError::BadTemperature(0.0)));
        assert_eq!(laplace_params(1.0, -0.1), Err(LaplaceError::BadRho(-0.1)));
        assert!(laplace_params(f64::NAN, 0.1).is_err());
    }
}
