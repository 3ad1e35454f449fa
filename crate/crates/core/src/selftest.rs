//! The numerics suite behind the `selftest` subcommand: implied-vol round
//! trips, finite-difference exactness, Gaussian moment checks of the path
//! engine, and the martingale and put–call parity properties of the mixing
//! estimators. Every check is deterministic (fixed seeds).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gaussian::{simulate_joint_paths, volterra_autocovariance, volterra_cross_covariance, SimGrid};
use crate::models::{bergomi_sigma_path, RoughBergomiParams};
use crate::pricing::{
    bs_price, bs_terms, call_samples, conditionals, implied_curvature_fd, implied_skew_fd, implied_vol,
    log_strike_ladder, mixing_call_price, mixing_forward, mixing_put_price, put_samples, SmileSlice,
};
use crate::stats::PathwiseEstimate;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Volatilities, maturities and moneyness ratios of the round-trip grid,
/// spanning σ ∈ [0.05, 2], T ∈ [0.005, 2], K/S ∈ [0.5, 2].
pub const ROUND_TRIP_VOLS: [f64; 9] = [0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2, 1.6, 2.0];
pub const ROUND_TRIP_MATURITIES: [f64; 7] = [0.005, 0.02, 0.1, 0.25, 0.5, 1.0, 2.0];
pub const ROUND_TRIP_MONEYNESS: [f64; 9] = [0.5, 0.6, 0.8, 0.9, 1.0, 1.1, 1.25, 1.6, 2.0];

/// Below this vega (per unit spot) a double-precision price pins the vol
/// only to about `ε·S/vega`, so the 10⁻¹⁰ vol round trip is checked on the
/// grid points above it and the price residual everywhere.
pub const ROUND_TRIP_MIN_VEGA: f64 = 1e-4;

/// `implied_vol ∘ bs_price` over the documented grid.
pub fn implied_vol_round_trip() -> Check {
    let r = (|| {
        let s = 100.0;
        let (mut worst_vol, mut worst_price, mut n_vol, mut n_all, mut n_flat) = (0.0f64, 0.0f64, 0, 0, 0);
        for &sigma in &ROUND_TRIP_VOLS {
            for &t in &ROUND_TRIP_MATURITIES {
                for &m in &ROUND_TRIP_MONEYNESS {
                    let k = s * m;
                    let b = bs_terms(s, k, t, sigma)?;
                    if b.price <= (s - k).max(0.0) {
                        // no representable time value: σ is unidentifiable
                        n_flat += 1;
                        continue;
                    }
                    let v = implied_vol(b.price, s, k, t)?;
                    worst_price = worst_price.max((bs_price(s, k, t, v)? - b.price).abs() / s);
                    n_all += 1;
                    if b.vega >= ROUND_TRIP_MIN_VEGA * s {
                        worst_vol = worst_vol.max((v - sigma).abs());
                        n_vol += 1;
                    }
                }
            }
        }
        Ok((
            worst_vol < 1e-10 && worst_price < 1e-12,
            format!(
                "max |σ − σ̂| = {worst_vol:.1e} over {n_vol} points (vega ≥ {ROUND_TRIP_MIN_VEGA}·S); \
                 max price residual / S = {worst_price:.1e} over {n_all} points; \
                 {n_flat} points priced at intrinsic skipped"
            ),
        ))
    })();
    Check::from_result("implied-vol round trip", r)
}

/// Deep out-of-the-money call with a tiny price.
pub fn implied_vol_stress() -> Check {
    let r = (|| {
        let target = 1e-6 * 100.0;
        let v = implied_vol(target, 100.0, 200.0, 0.1)?;
        let resid = (bs_price(100.0, 200.0, 0.1, v)? - target).abs() / 100.0;
        Ok((
            resid < 1e-12,
            format!("K = 200, price = 1e-4: σ̂ = {v:.6}, residual / S = {resid:.1e}"),
        ))
    })();
    Check::from_result("implied-vol deep OTM stress", r)
}

/// Finite-difference skew and curvature of `I(k) = a + b k + c k²`.
pub fn fd_quadratic_exactness() -> Check {
    let r = (|| {
        let (a, b, c) = (0.25, -0.3, 0.7);
        let mut worst = 0.0f64;
        for h in [0.05, 0.1, 0.2] {
            let strikes = log_strike_ladder(100.0, h, 1);
            let vols = strikes
                .iter()
                .map(|k| {
                    let x = (k / 100.0f64).ln();
                    a + b * x + c * x * x
                })
                .collect();
            let slice = SmileSlice::new(0.5, strikes, vols, vec![0.0; 3])?;
            worst = worst.max((implied_skew_fd(&slice)?.value - b).abs());
            worst = worst.max((implied_curvature_fd(&slice)?.value - 2.0 * c).abs());
        }
        Ok((worst < 1e-12, format!("max error {worst:.1e} for bumps 0.05, 0.1, 0.2")))
    })();
    Check::from_result("FD exactness on quadratic smiles", r)
}

/// `(value, standard error)` of the sample covariance of two columns.
fn sample_covariance(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    // E[xy] with known zero means, as a pathwise mean
    let e = PathwiseEstimate::mean(x.iter().zip(y).map(|(a, b)| a * b).collect())?;
    Ok((e.value(), e.std_error()))
}

/// Variance of `W^H_t` and covariance with `W_t` against their closed forms,
/// and the lognormal second moment of `σ_t`, each within 3 standard errors.
pub fn gaussian_moments(n_paths: usize) -> Check {
    let r = (|| {
        let mut lines = Vec::new();
        let mut ok = true;
        for (h, seed) in [(0.2, 11u64), (0.5, 12), (0.8, 13)] {
            let grid = SimGrid::uniform(1.0, 16)?;
            let batch = simulate_joint_paths(&grid, h, n_paths, seed)?;
            let p = RoughBergomiParams::new(100.0, 0.3, 1.1, -0.6, h)?;
            let sig = bergomi_sigma_path(&batch, &p)?;
            for idx in [3usize, 15] {
                let t = grid.times()[idx];
                let wh: Vec<f64> = (0..n_paths).map(|q| batch.wh(q)[idx]).collect();
                let w: Vec<f64> = (0..n_paths).map(|q| batch.dw(q)[..=idx].iter().sum()).collect();
                let (var, var_se) = sample_covariance(&wh, &wh)?;
                let (cov, cov_se) = sample_covariance(&wh, &w)?;
                let var_ref = volterra_autocovariance(t, t, h)?;
                let cov_ref = volterra_cross_covariance(t, t, h)?;
                let s2 = PathwiseEstimate::mean((0..n_paths).map(|q| sig.sigma(q)[idx].powi(2)).collect())?;
                let s2_ref = p.sigma0 * p.sigma0 * (p.nu * p.nu * t.powf(2.0 * h)).exp();
                let z = [
                    (var - var_ref) / var_se,
                    (cov - cov_ref) / cov_se,
                    (s2.value() - s2_ref) / s2.std_error(),
                ];
                ok &= z.iter().all(|z| z.abs() <= 3.0);
                lines.push(format!(
                    "H={h} t={t}: z(Var W^H)={:+.2} z(Cov W^H,W)={:+.2} z(E σ²)={:+.2}",
                    z[0], z[1], z[2]
                ));
            }
        }
        Ok((ok, lines.join("; ")))
    })();
    Check::from_result("W^H moment checks", r)
}

/// Mixing forward equals `S0` within 3 standard errors, and put–call parity
/// holds path by path and on averages.
pub fn martingale_and_parity(n_paths: usize) -> Check {
    let r = (|| {
        let mut lines = Vec::new();
        let mut ok = true;
        let cases = [
            (0.5, 1.1, -0.6),
            (0.2, 1.1, -0.6),
            (0.1, 0.8, 0.4),
            (0.3, 1.5, -0.9),
            (0.2, 0.0, -0.6),
        ];
        for (i, &(h, nu, rho)) in cases.iter().enumerate() {
            let p = RoughBergomiParams::new(100.0, 0.3, nu, rho, h)?;
            let grid = SimGrid::uniform(0.25, 32)?;
            let batch = simulate_joint_paths(&grid, h, n_paths, 100 + i as u64)?;
            let sample = bergomi_sigma_path(&batch, &p)?.at(0.25)?;
            let fwd = mixing_forward(&sample, &p)?;
            let fwd_ok = fwd.within(p.s0, 3.0);
            let cond = conditionals(&sample, &p)?;
            let mut worst_path = 0.0f64;
            let mut worst_mean = 0.0f64;
            for k in [70.0, 100.0, 140.0] {
                let calls = call_samples(&cond, k);
                let puts = put_samples(&cond, k);
                for ((c, q), x) in calls.iter().zip(&puts).zip(&cond) {
                    worst_path = worst_path.max((c - q - (x.fwd - k)).abs());
                }
                let c = mixing_call_price(&sample, &p, k)?.value;
                let q = mixing_put_price(&sample, &p, k)?.value;
                worst_mean = worst_mean.max((c - q - (fwd.value - k)).abs());
            }
            let parity_ok = worst_path < 1e-12 * p.s0 && worst_mean < 1e-11 * p.s0;
            ok &= fwd_ok && parity_ok;
            lines.push(format!(
                "H={h} ν={nu} ρ={rho}: E[S_T] = {:.4} ± {:.4}; parity residual path {worst_path:.1e}, mean {worst_mean:.1e}",
                fwd.value, fwd.std_error
            ));
        }
        Ok((ok, lines.join("; ")))
    })();
    Check::from_result("martingale and put-call parity", r)
}

/// Runs the whole suite at its standard sizes.
pub fn run_selftest() -> SelftestReport {
    let start = Instant::now();
    let checks = vec![
        implied_vol_round_trip(),
        implied_vol_stress(),
        fd_quadratic_exactness(),
        gaussian_moments(100_000),
        martingale_and_parity(50_000),
    ];
    SelftestReport {
        checks,
        seconds: start.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_checks_pass() {
        for c in [implied_vol_round_trip(), implied_vol_stress(), fd_quadratic_exactness()] {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn moment_checks_pass_at_reduced_size() {
        let c = gaussian_moments(20_000);
        assert!(c.passed, "{}", c.detail);
        let c = martingale_and_parity(5_000);
        assert!(c.passed, "{}", c.detail);
    }
}
