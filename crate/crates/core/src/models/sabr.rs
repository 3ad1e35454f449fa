//! Lognormal (β = 1) SABR: the standard asymptotic implied-volatility approximation and the
//! short-maturity local-volatility equivalent, with analytic strike
//! derivatives.

use serde::{Deserialize, Serialize};

use super::StrikeDerivs;
use crate::error::{check_finite, check_positive, Error, Result};

/// Below this `|z|` the ratio `z / x(z)` is evaluated by its Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-4;

/// Below this `|z|` the first two derivatives of `z / x(z)` use the series;
/// the direct quotient formulas lose about `ε / z²` to cancellation.
const DERIV_SERIES_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SabrParams {
    pub alpha: f64,
    pub nu: f64,
    pub rho: f64,
    pub s0: f64,
}

impl SabrParams {
    pub fn new(alpha: f64, nu: f64, rho: f64, s0: f64) -> Result<Self> {
        let p = Self { alpha, nu, rho, s0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("alpha", self.alpha)?;
        check_finite("nu", self.nu)?;
        if self.nu < 0.0 {
            return Err(Error::InvalidParameter {
                name: "nu",
                value: self.nu,
                reason: "must be non-negative",
            });
        }
        check_finite("rho", self.rho)?;
        if self.rho.abs() >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "rho",
                value: self.rho,
                reason: "must lie in (-1, 1)",
            });
        }
        check_positive("s0", self.s0)?;
        Ok(())
    }

    /// Maturity correction `m(T) = 1 + (¼ρνα + (2 − 3ρ²)ν²/24)·T`.
    pub fn maturity_factor(&self, maturity: f64) -> f64 {
        let (a, n, r) = (self.alpha, self.nu, self.rho);
        1.0 + (0.25 * r * n * a + (2.0 - 3.0 * r * r) / 24.0 * n * n) * maturity
    }

    fn z(&self, strike: f64) -> f64 {
        self.nu / self.alpha * (self.s0 / strike).ln()
    }
}

/// Taylor coefficients of `f(z) = z / x(z)` about `z = 0`, through `z⁶`.
fn series_coeffs(rho: f64) -> [f64; 7] {
    let r2 = rho * rho;
    let r4 = r2 * r2;
    let r6 = r4 * r2;
    [
        1.0,
        -rho / 2.0,
        (2.0 - 3.0 * r2) / 12.0,
        -rho * (6.0 * r2 - 5.0) / 24.0,
        -(225.0 * r4 - 240.0 * r2 + 34.0) / 720.0,
        -rho * (210.0 * r4 - 275.0 * r2 + 74.0) / 480.0,
        -(39690.0 * r6 - 61740.0 * r4 + 24381.0 * r2 - 1468.0) / 60480.0,
    ]
}

/// `(f, f′, f″)` from the series.
fn f_series(z: f64, rho: f64) -> (f64, f64, f64) {
    let c = series_coeffs(rho);
    let (mut f, mut f1, mut f2) = (0.0, 0.0, 0.0);
    for k in (0..7).rev() {
        let kf = k as f64;
        f = f * z + c[k];
        if k >= 1 {
            f1 = f1 * z + kf * c[k];
        }
        if k >= 2 {
            f2 = f2 * z + kf * (kf - 1.0) * c[k];
        }
    }
    (f, f1, f2)
}

/// `x(z) = ln((√(1 − 2ρz + z²) + z − ρ) / (1 − ρ))` with its first two
/// derivatives. The argument is rewritten as `1 + u` so that `ln_1p` keeps
/// full relative accuracy as `z → 0`.
fn x_and_derivs(z: f64, rho: f64) -> (f64, f64, f64) {
    let s = (1.0 - 2.0 * rho * z + z * z).sqrt();
    let u = ((z * z - 2.0 * rho * z) / (s + 1.0) + z) / (1.0 - rho);
    let x = u.ln_1p();
    (x, 1.0 / s, (rho - z) / (s * s * s))
}

fn f_level(z: f64, rho: f64) -> f64 {
    if z.abs() < SERIES_THRESHOLD {
        f_series(z, rho).0
    } else {
        z / x_and_derivs(z, rho).0
    }
}

fn f_derivs(z: f64, rho: f64) -> (f64, f64, f64) {
    if z.abs() < DERIV_SERIES_THRESHOLD {
        let (f, f1, f2) = f_series(z, rho);
        (if z.abs() < SERIES_THRESHOLD { f } else { f_level(z, rho) }, f1, f2)
    } else {
        let (x, x1, x2) = x_and_derivs(z, rho);
        let f1 = (x - z * x1) / (x * x);
        let f2 = (-2.0 * x1 - z * x2) / (x * x) + 2.0 * z * x1 * x1 / (x * x * x);
        (z / x, f1, f2)
    }
}

fn check_strike_maturity(strike: f64, maturity: Option<f64>) -> Result<()> {
    check_positive("strike", strike)?;
    if let Some(t) = maturity {
        check_positive("maturity", t)?;
    }
    Ok(())
}

/// Asymptotic lognormal implied volatility `α · f(z) · m(T)`.
pub fn sabr_implied_vol(strike: f64, maturity: f64, p: &SabrParams) -> Result<f64> {
    check_strike_maturity(strike, Some(maturity))?;
    Ok(p.alpha * f_level(p.z(strike), p.rho) * p.maturity_factor(maturity))
}

/// Implied volatility with `∂_K I = −ν f′ m / K` and
/// `∂_KK I = (ν f′ / K² + ν² f″ / (α K²)) m`.
pub fn sabr_implied_vol_derivs(strike: f64, maturity: f64, p: &SabrParams) -> Result<StrikeDerivs> {
    check_strike_maturity(strike, Some(maturity))?;
    let m = p.maturity_factor(maturity);
    let (f, f1, f2) = f_derivs(p.z(strike), p.rho);
    let k2 = strike * strike;
    Ok(StrikeDerivs {
        level: p.alpha * f * m,
        d_strike: -p.nu * f1 * m / strike,
        d2_strike: (p.nu * f1 / k2 + p.nu * p.nu * f2 / (p.alpha * k2)) * m,
    })
}

/// Short-maturity local-volatility equivalent `α √(1 + 2ρνy + ν²y²)`,
/// `y = ln(K/S0)/α`.
pub fn sabr_local_vol(strike: f64, p: &SabrParams) -> Result<f64> {
    check_strike_maturity(strike, None)?;
    let y = (strike / p.s0).ln() / p.alpha;
    Ok(p.alpha * (1.0 + 2.0 * p.rho * p.nu * y + p.nu * p.nu * y * y).sqrt())
}

pub fn sabr_local_vol_derivs(strike: f64, p: &SabrParams) -> Result<StrikeDerivs> {
    let sigma = sabr_local_vol(strike, p)?;
    let (a, n, r) = (p.alpha, p.nu, p.rho);
    let y = (strike / p.s0).ln() / a;
    let y1 = 1.0 / (a * strike);
    let y2 = -1.0 / (a * strike * strike);
    let slope = r * n + n * n * y;
    let d1 = a * a * y1 * slope / sigma;
    let d2 = (a * a * y2 * slope + (a * n * y1).powi(2) - d1 * d1) / sigma;
    Ok(StrikeDerivs {
        level: sigma,
        d_strike: d1,
        d2_strike: d2,
    })
}
