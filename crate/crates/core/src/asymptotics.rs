//! Short-maturity limits of implied and local skew and curvature, and
//! power-law fits of term structures.
//!
//! All limits are for the at-the-money point, normalised by the rough
//! scaling: skews by `T^{½−H}` and curvatures by `T^{1−2H}`.

use serde::{Deserialize, Serialize};

use crate::error::{check_hurst, check_positive, Error, Result};
use crate::models::{sabr_implied_vol_derivs, sabr_local_vol_derivs, RoughBergomiParams, SabrParams};
use crate::quad::{integrate, integrate_left_singular, Tolerance};

const INNER_TOL: Tolerance = Tolerance::relative(1e-12);
const OUTER_TOL: Tolerance = Tolerance::relative(1e-10);

/// `lim ∂_k I / ∂_k σ_loc = 1 / (H + 3/2)` at the money.
pub fn skew_ratio_limit(hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    Ok(1.0 / (hurst + 1.5))
}

/// `lim T^{½−H} ∂_k I = ρν√(2H) / ((H + ½)(H + 3/2))` for rough Bergomi.
pub fn bergomi_skew_limit(p: &RoughBergomiParams) -> Result<f64> {
    p.validate()?;
    let h = p.hurst;
    Ok(p.rho * p.nu * (2.0 * h).sqrt() / ((h + 0.5) * (h + 1.5)))
}

/// `∫_0^1 ∫_r^1 (u − r)^{H−½} du dr` by nested quadrature; equals
/// `1 / ((H + ½)(H + 3/2))`.
pub fn volterra_double_integral(hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    let e = hurst - 0.5;
    let inner = |r: f64| integrate_left_singular(|_| 1.0, r, 1.0, e, INNER_TOL).unwrap_or(f64::NAN);
    integrate(inner, 0.0, 1.0, OUTER_TOL)
}

/// `C(H) = 3/((H + 3/2)(H + 1)) − 6/(H + 3/2)² + 1/(2(H + 1))`.
pub fn curvature_bracket(hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    let a = hurst + 1.5;
    let b = hurst + 1.0;
    Ok(3.0 / (a * b) - 6.0 / (a * a) + 1.0 / (2.0 * b))
}

/// Limit implied curvature from the local-vol limits:
/// `C(H) · L_skew² / σ0 + L_curv / (2(1 + H))`, where `L_skew²` is
/// `lim u^{1−2H} (∂_x σ̂)²` and `L_curv` is `lim T^{1−2H} ∂_xx σ̂`.
pub fn implied_curv_from_local(hurst: f64, sigma0: f64, lim_skew_local_sq: f64, lim_curv_local: f64) -> Result<f64> {
    check_positive("sigma0", sigma0)?;
    let c = curvature_bracket(hurst)?;
    Ok(c * lim_skew_local_sq / sigma0 + lim_curv_local / (2.0 * (1.0 + hurst)))
}

/// Inverse of [`implied_curv_from_local`]: the limit local-vol curvature
/// from the limit implied skew and curvature, using
/// `L_skew = (H + 3/2) · lim T^{½−H} ∂_k I`.
pub fn local_curv_from_implied(hurst: f64, sigma0: f64, lim_implied_skew: f64, lim_implied_curv: f64) -> Result<f64> {
    check_positive("sigma0", sigma0)?;
    let c = curvature_bracket(hurst)?;
    let skew_local_sq = ((hurst + 1.5) * lim_implied_skew).powi(2);
    Ok(2.0 * (1.0 + hurst) * (lim_implied_curv - c * skew_local_sq / sigma0))
}

/// The three terms of the rough Bergomi ATM implied-curvature limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureTerms {
    /// vol-of-vol convexity, present for every `ρ`
    pub t1: f64,
    /// squared first-order correlation effect, `∝ −ρ²`
    pub t2: f64,
    /// second-order correlation effect, `∝ ρ²`
    pub t3: f64,
}

impl CurvatureTerms {
    pub fn total(&self) -> f64 {
        self.t1 + self.t2 + self.t3
    }
}

/// `lim T^{1−2H} ∂_kk I` for rough Bergomi by quadrature of the Malliavin
/// kernels with `σ` frozen at `σ0` on the unit interval:
/// `D_r σ_u² = 2ν√(2H) σ0² (u − r)^{H−½}`, `D_s σ_r = ν√(2H) σ0 (r − s)^{H−½}`
/// and `D_s D_r σ_u² = 8Hν² σ0² (u − r)^{H−½} (u − s)^{H−½}`.
pub fn bergomi_curvature_limit(p: &RoughBergomiParams) -> Result<CurvatureTerms> {
    p.validate()?;
    let h = p.hurst;
    let s0 = p.sigma0;
    let e = h - 0.5;
    let eta = p.nu * (2.0 * h).sqrt();
    let rho2 = p.rho * p.rho;

    // ∫_r^1 (u − r)^{H−½} du
    let tail = |r: f64| integrate_left_singular(|_| 1.0, r, 1.0, e, INNER_TOL);
    let tail_or_nan = |r: f64| tail(r).unwrap_or(f64::NAN);

    let d_var = 2.0 * eta * s0 * s0;
    let t1_int = integrate(|r| tail_or_nan(r).powi(2), 0.0, 1.0, OUTER_TOL)?;
    let t1 = (d_var * d_var * t1_int) / (4.0 * s0.powi(5));

    let t2_int = integrate(tail_or_nan, 0.0, 1.0, OUTER_TOL)?;
    let t2 = -1.5 * rho2 / s0.powi(5) * (d_var * t2_int).powi(2);

    // ∫_0^1 ∫_s^1 D_s σ_r ∫_r^1 D_r σ_u² du dr ds; the s-integral
    // ∫_0^r (r − s)^{H−½} ds = r^{H+½}/(H+½) is done in closed form.
    let a_int = integrate(|r| r.powf(h + 0.5) / (h + 0.5) * tail_or_nan(r), 0.0, 1.0, OUTER_TOL)?;
    let term_a = eta * s0 * d_var * a_int;
    // σ0 ∫∫∫_{s<r<u} D_s D_r σ_u²; the s-integral
    // ∫_0^r (u − s)^{H−½} ds = (u^{H+½} − (u − r)^{H+½})/(H+½) is closed.
    let b_inner = |r: f64| {
        integrate_left_singular(
            |u| (u.powf(h + 0.5) - (u - r).powf(h + 0.5)) / (h + 0.5),
            r,
            1.0,
            e,
            INNER_TOL,
        )
        .unwrap_or(f64::NAN)
    };
    let b_int = integrate(b_inner, 0.0, 1.0, OUTER_TOL)?;
    let term_b = s0 * 8.0 * h * p.nu * p.nu * s0 * s0 * b_int;
    let t3 = rho2 / s0.powi(4) * (term_a + term_b);
    Ok(CurvatureTerms { t1, t2, t3 })
}

/// Closed forms of the three curvature terms, for cross-checking the
/// quadrature.
pub fn bergomi_curvature_closed_form(p: &RoughBergomiParams) -> Result<CurvatureTerms> {
    p.validate()?;
    let h = p.hurst;
    let (nu2, rho2, s0) = (p.nu * p.nu, p.rho * p.rho, p.sigma0);
    let a = h + 0.5;
    let b = h + 1.5;
    let t1 = h * nu2 / (s0 * a * a * (h + 1.0));
    let t2 = -12.0 * h * rho2 * nu2 / (s0 * a * a * b * b);
    let beta = (libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)).exp();
    let i_a = beta / (a * (2.0 * h + 2.0));
    let i_b = 2.0 / ((2.0 * h + 2.0) * (2.0 * h + 1.0) * a);
    let t3 = 4.0 * h * nu2 * rho2 / s0 * (i_a + i_b);
    Ok(CurvatureTerms { t1, t2, t3 })
}

/// `ρ²ν²/(6α)`: the short-end limit of `∂_xx σ̂ / 3 − ∂_kk I` for SABR.
pub fn sabr_curvature_gap(p: &SabrParams) -> Result<f64> {
    p.validate()?;
    Ok(p.rho * p.rho * p.nu * p.nu / (6.0 * p.alpha))
}

/// ATM log-strike curvatures of the SABR implied and local vols at `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SabrCurvature {
    pub maturity: f64,
    pub implied: f64,
    pub local: f64,
    /// `local / 3 − implied`
    pub gap: f64,
    /// `implied / local`
    pub ratio: f64,
}

pub fn sabr_atm_curvatures(p: &SabrParams, maturity: f64) -> Result<SabrCurvature> {
    let implied = sabr_implied_vol_derivs(p.s0, maturity, p)?.to_log_strike(p.s0).d2_k;
    let local = sabr_local_vol_derivs(p.s0, p)?.to_log_strike(p.s0).d2_k;
    Ok(SabrCurvature {
        maturity,
        implied,
        local,
        gap: local / 3.0 - implied,
        ratio: implied / local,
    })
}

/// Values indexed by maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSeries {
    maturities: Vec<f64>,
    values: Vec<f64>,
    std_errors: Vec<f64>,
    label: String,
}

impl TermSeries {
    pub fn new(label: impl Into<String>, maturities: Vec<f64>, values: Vec<f64>, std_errors: Vec<f64>) -> Result<Self> {
        if maturities.len() != values.len() || maturities.len() != std_errors.len() {
            return Err(Error::InvalidInput("term series arrays differ in length".into()));
        }
        if maturities.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidInput("maturities must be positive".into()));
        }
        if maturities.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("maturities must be strictly increasing".into()));
        }
        Ok(Self {
            maturities,
            values,
            std_errors,
            label: label.into(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn std_errors(&self) -> &[f64] {
        &self.std_errors
    }

    pub fn len(&self) -> usize {
        self.maturities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maturities.is_empty()
    }
}

/// Least-squares fit of `ln |v| = intercept + exponent · ln T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub log_intercept: f64,
    pub r_squared: f64,
    /// `ln |v_i| − fitted` for each point in the window
    pub residuals: Vec<f64>,
    pub n_points: usize,
}

/// Fits a power law to the points of `series` with maturity in
/// `[t_min, t_max]`.
pub fn fit_power_law(series: &TermSeries, window: (f64, f64)) -> Result<PowerLawFit> {
    let (lo, hi) = window;
    let points: Vec<(f64, f64)> = series
        .maturities
        .iter()
        .zip(&series.values)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(t, v)| (*t, *v))
        .collect();
    if points.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "power-law fit needs at least 4 points in [{lo}, {hi}], found {}",
            points.len()
        )));
    }
    if points.iter().any(|(_, v)| !v.is_finite() || *v == 0.0) {
        return Err(Error::InvalidInput("power-law fit needs finite non-zero values".into()));
    }
    let sign = points[0].1.signum();
    if points.iter().any(|(_, v)| v.signum() != sign) {
        return Err(Error::InvalidInput("values change sign inside the fit window".into()));
    }
    let xs: Vec<f64> = points.iter().map(|(t, _)| t.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.abs().ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let exponent = sxy / sxx;
    let log_intercept = my - exponent * mx;
    let residuals: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (log_intercept + exponent * x))
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(PowerLawFit {
        exponent,
        log_intercept,
        r_squared,
        residuals,
        n_points: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bergomi(h: f64, rho: f64) -> RoughBergomiParams {
        RoughBergomiParams::new(100.0, 0.3, 1.1, rho, h).unwrap()
    }

    #[test]
    fn skew_ratio_examples() {
        assert_eq!(skew_ratio_limit(0.5).unwrap(), 0.5);
        assert!((skew_ratio_limit(0.2).unwrap() - 0.588_235_294_117_647).abs() < 1e-15);
        assert!(skew_ratio_limit(0.0).is_err());
    }

    #[test]
    fn bergomi_skew_examples() {
        assert!((bergomi_skew_limit(&bergomi(0.5, -0.6)).unwrap() + 0.33).abs() < 1e-15);
        assert!((bergomi_skew_limit(&bergomi(0.2, -0.6)).unwrap() + 0.350_773_656_422_038_7).abs() < 1e-15);
        assert_eq!(bergomi_skew_limit(&bergomi(0.2, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn double_integral_matches_closed_form() {
        for h in [0.05, 0.2, 0.5, 0.8] {
            let q = volterra_double_integral(h).unwrap();
            assert!((q - 1.0 / ((h + 0.5) * (h + 1.5))).abs() < 1e-9, "{h}: {q}");
        }
        assert!((volterra_double_integral(0.2).unwrap() - 0.840_336_134_453_782).abs() < 1e-9);
    }

    #[test]
    fn bracket_examples() {
        assert!((curvature_bracket(0.5).unwrap() + 1.0 / 6.0).abs() < 1e-15);
        assert!((curvature_bracket(0.2).unwrap() + 0.188_869_665_513).abs() < 1e-11);
    }

    #[test]
    fn transfer_examples() {
        assert!((implied_curv_from_local(0.5, 0.3, 0.0, 0.9).unwrap() - 0.3).abs() < 1e-15);
        let v = implied_curv_from_local(0.5, 0.3, 0.2, 0.9).unwrap();
        assert!((v - (-0.2 / (6.0 * 0.3) + 0.3)).abs() < 1e-15);
    }

    #[test]
    fn curvature_terms_match_oracle() {
        let q = bergomi_curvature_limit(&bergomi(0.5, -0.6)).unwrap();
        assert!((q.t1 - 1.344_444_444_444).abs() < 1e-8, "{q:?}");
        assert!((q.t2 + 2.178).abs() < 1e-8, "{q:?}");
        assert!((q.t3 - 1.452).abs() < 1e-8, "{q:?}");
        let q = bergomi_curvature_limit(&bergomi(0.2, -0.6)).unwrap();
        assert!((q.t1 - 1.371_882_086_167_80).abs() < 1e-8, "{q:?}");
        assert!((q.t2 + 2.460_843_160_793_73).abs() < 1e-8, "{q:?}");
        assert!((q.t3 - 1.644_279_644_825_26).abs() < 1e-8, "{q:?}");
        assert!((q.total() - 0.555_318_570_199_334).abs() < 1e-8);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for h in [0.1, 0.2, 0.35, 0.5, 0.75] {
            let p = bergomi(h, 0.7);
            let q = bergomi_curvature_limit(&p).unwrap();
            let c = bergomi_curvature_closed_form(&p).unwrap();
            for (a, b) in [(q.t1, c.t1), (q.t2, c.t2), (q.t3, c.t3)] {
                assert!((a - b).abs() < 1e-8 * b.abs(), "H {h}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn curvature_limit_degenerate_cases() {
        let q = bergomi_curvature_limit(&bergomi(0.5, 0.0)).unwrap();
        assert_eq!((q.t2, q.t3), (0.0, 0.0));
        assert!((q.t1 - 1.21 * 0.5 / (0.3 * 1.5)).abs() < 1e-9);
        let flat = RoughBergomiParams::new(100.0, 0.3, 0.0, -0.6, 0.3).unwrap();
        assert_eq!(bergomi_curvature_limit(&flat).unwrap().total(), 0.0);
    }

    #[test]
    fn sabr_gap_examples() {
        let p = SabrParams::new(0.3, 0.6, -0.6, 100.0).unwrap();
        assert!((sabr_curvature_gap(&p).unwrap() - 0.072).abs() < 1e-15);
        let c = sabr_atm_curvatures(&p, 1e-4).unwrap();
        assert!((c.gap / 0.072 - 1.0).abs() < 0.01, "{c:?}");
        let p0 = SabrParams::new(0.3, 0.6, 0.0, 100.0).unwrap();
        assert_eq!(sabr_curvature_gap(&p0).unwrap(), 0.0);
        let c0 = sabr_atm_curvatures(&p0, 1e-3).unwrap();
        assert!((c0.ratio - 1.0 / 3.0).abs() < 1e-3, "{c0:?}");
    }

    #[test]
    fn power_law_on_exact_data() {
        let ts: Vec<f64> = (0..10).map(|i| 0.004 * 1.5f64.powi(i)).collect();
        let vs: Vec<f64> = ts.iter().map(|t| 3.0 * t.powf(-0.6)).collect();
        let s = TermSeries::new("synthetic", ts, vs, vec![0.0; 10]).unwrap();
        let fit = fit_power_law(&s, (0.0, 1.0)).unwrap();
        assert!((fit.exponent + 0.6).abs() < 1e-12);
        assert!((fit.log_intercept - 3f64.ln()).abs() < 1e-11);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_rejects_bad_windows() {
        let ts = vec![0.01, 0.02, 0.04, 0.08, 0.16];
        let s = TermSeries::new("x", ts.clone(), vec![1.0, 2.0, -1.0, 3.0, 4.0], vec![0.0; 5]).unwrap();
        assert!(fit_power_law(&s, (0.0, 1.0)).is_err());
        let s = TermSeries::new("x", ts, vec![1.0; 5], vec![0.0; 5]).unwrap();
        assert!(fit_power_law(&s, (0.5, 1.0)).is_err());
        assert!(TermSeries::new("x", vec![0.2, 0.1], vec![1.0; 2], vec![0.0; 2]).is_err());
    }

    proptest! {
        #[test]
        fn skew_ratio_is_decreasing(a in 0.001f64..0.998, d in 0.001f64..0.5) {
            let b = (a + d).min(0.999);
            prop_assume!(b > a);
            let (ra, rb) = (skew_ratio_limit(a).unwrap(), skew_ratio_limit(b).unwrap());
            prop_assert!(rb < ra);
            prop_assert!(ra < 2.0 / 3.0 && rb > 0.4);
        }

        #[test]
        fn bracket_is_finite(h in 0.001f64..0.999) {
            prop_assert!(curvature_bracket(h).unwrap().is_finite());
        }

        #[test]
        fn transfer_round_trip(
            h in 0.01f64..0.99,
            sigma0 in 0.05f64..1.0,
            skew in -2.0f64..2.0,
            curv in -5.0f64..5.0,
        ) {
            let skew_local_sq = ((h + 1.5) * skew).powi(2);
            let implied = implied_curv_from_local(h, sigma0, skew_local_sq, curv).unwrap();
            let back = local_curv_from_implied(h, sigma0, skew, implied).unwrap();
            prop_assert!((back - curv).abs() < 1e-12 * (1.0 + curv.abs() + skew_local_sq / sigma0));
        }

        #[test]
        fn limits_have_rho_parity(h in 0.05f64..0.95, rho in -0.99f64..0.99) {
            let (p, q) = (bergomi(h, rho), bergomi(h, -rho));
            prop_assert_eq!(bergomi_skew_limit(&p).unwrap(), -bergomi_skew_limit(&q).unwrap());
            let (a, b) = (bergomi_curvature_closed_form(&p).unwrap(), bergomi_curvature_closed_form(&q).unwrap());
            prop_assert_eq!(a.total(), b.total());
        }

        #[test]
        fn power_law_is_scale_invariant(c in 0.01f64..100.0, e in -1.0f64..1.0) {
            let ts: Vec<f64> = (0..8).map(|i| 0.004 * 2f64.powi(i)).collect();
            let vs: Vec<f64> = ts.iter().enumerate().map(|(i, t)| t.powf(e) * (1.0 + 0.05 * (i as f64).sin())).collect();
            let scaled: Vec<f64> = vs.iter().map(|v| c * v).collect();
            let a = fit_power_law(&TermSeries::new("a", ts.clone(), vs, vec![0.0; 8]).unwrap(), (0.0, 1.0)).unwrap();
            let b = fit_power_law(&TermSeries::new("b", ts, scaled, vec![0.0; 8]).unwrap(), (0.0, 1.0)).unwrap();
            prop_assert!((a.exponent - b.exponent).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_curvature_has_rho_parity() {
        let a = bergomi_curvature_limit(&bergomi(0.3, 0.5)).unwrap();
        let b = bergomi_curvature_limit(&bergomi(0.3, -0.5)).unwrap();
        assert_eq!(a, b);
    }
}
