//! Zero-rate Black–Scholes toolkit, implied-volatility inversion, and the
//! mixing (conditional Monte Carlo) estimators.
//!
//! Conditional on the Brownian motion `W` that drives the volatility,
//! `ln S_T` is Gaussian with mean `ln S0 + ρ∫σdW − ½∫σ²du` and variance
//! `(1 − ρ²)∫σ²du`. Each path therefore prices as Black–Scholes with forward
//! `S0 · exp(ρ∫σdW − ½ρ²∫σ²du)` and total standard deviation
//! `√((1 − ρ²)∫σ²du)`; only the average over vol paths is random.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::gaussian::PathBatch;
use crate::models::{MaturitySample, RoughBergomiParams, SigmaPath, TerminalState};
use crate::stats::{Estimate, PathwiseEstimate};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Black–Scholes quantities for a zero-rate call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsTerms {
    pub d1: f64,
    pub d2: f64,
    pub price: f64,
    /// `∂C/∂σ`
    pub vega: f64,
}

pub fn bs_terms(spot: f64, strike: f64, maturity: f64, sigma: f64) -> Result<BsTerms> {
    check_positive("spot", spot)?;
    check_positive("strike", strike)?;
    check_positive("maturity", maturity)?;
    check_positive("sigma", sigma)?;
    let sqrt_t = maturity.sqrt();
    let sd = sigma * sqrt_t;
    let d1 = (spot / strike).ln() / sd + 0.5 * sd;
    let d2 = d1 - sd;
    Ok(BsTerms {
        d1,
        d2,
        price: call_total(spot, strike, sd),
        vega: spot * norm_pdf(d1) * sqrt_t,
    })
}

pub fn bs_price(spot: f64, strike: f64, maturity: f64, sigma: f64) -> Result<f64> {
    bs_terms(spot, strike, maturity, sigma).map(|b| b.price)
}

pub fn bs_vega(spot: f64, strike: f64, maturity: f64, sigma: f64) -> Result<f64> {
    bs_terms(spot, strike, maturity, sigma).map(|b| b.vega)
}

/// Call price for total standard deviation `sd = σ√T`; `sd = 0` gives the
/// intrinsic value.
fn call_total(fwd: f64, strike: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return (fwd - strike).max(0.0);
    }
    let d1 = (fwd / strike).ln() / sd + 0.5 * sd;
    let d2 = d1 - sd;
    if strike < fwd {
        // in the money: via the put, which carries no cancellation
        let put = strike * norm_cdf(-d2) - fwd * norm_cdf(-d1);
        fwd - strike + put
    } else {
        fwd * norm_cdf(d1) - strike * norm_cdf(d2)
    }
}

fn put_total(fwd: f64, strike: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return (strike - fwd).max(0.0);
    }
    let d1 = (fwd / strike).ln() / sd + 0.5 * sd;
    let d2 = d1 - sd;
    if strike > fwd {
        let call = fwd * norm_cdf(d1) - strike * norm_cdf(d2);
        strike - fwd + call
    } else {
        strike * norm_cdf(-d2) - fwd * norm_cdf(-d1)
    }
}

/// Black–Scholes implied volatility of a call price.
///
/// In-the-money calls are inverted through the put with the same strike,
/// whose price carries no intrinsic value. The root is found by Newton steps
/// on `σ`, safeguarded by a shrinking bracket with bisection fallback.
pub fn implied_vol(price: f64, spot: f64, strike: f64, maturity: f64) -> Result<f64> {
    check_positive("spot", spot)?;
    check_positive("strike", strike)?;
    check_positive("maturity", maturity)?;
    let lower = (spot - strike).max(0.0);
    if !(price > lower) {
        return Err(Error::PriceOutOfBounds {
            price,
            bound: "lower (intrinsic)",
            limit: lower,
        });
    }
    if !(price < spot) {
        return Err(Error::PriceOutOfBounds {
            price,
            bound: "upper (spot)",
            limit: spot,
        });
    }
    let use_put = strike < spot;
    let target = if use_put { price - spot + strike } else { price };
    let sqrt_t = maturity.sqrt();
    let value = |sigma: f64| {
        let sd = sigma * sqrt_t;
        if use_put {
            put_total(spot, strike, sd)
        } else {
            call_total(spot, strike, sd)
        }
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while value(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Degenerate(format!(
                "no implied volatility below {hi} for price {price}"
            )));
        }
    }
    // Initial guess from the Brenner–Subrahmanyam approximation, clipped into
    // the bracket.
    let mut sigma = price / spot * (2.0 * std::f64::consts::PI / maturity).sqrt();
    if !(sigma > lo && sigma < hi) {
        sigma = 0.5 * (lo + hi);
    }
    for _ in 0..300 {
        let f = value(sigma) - target;
        if f == 0.0 {
            return Ok(sigma);
        }
        if f > 0.0 {
            hi = sigma;
        } else {
            lo = sigma;
        }
        let sd = sigma * sqrt_t;
        let d1 = (spot / strike).ln() / sd + 0.5 * sd;
        let vega = spot * norm_pdf(d1) * sqrt_t;
        let newton = sigma - f / vega;
        let next = if vega > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - sigma).abs() <= 1e-15 * sigma || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        sigma = next;
    }
    if (value(sigma) - target).abs() < 1e-12 * spot {
        Ok(sigma)
    } else {
        Err(Error::Degenerate(format!(
            "implied volatility did not converge for price {price}"
        )))
    }
}

/// Conditional Black–Scholes state of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Conditional {
    /// conditional forward `S0 · exp(ρ∫σdW − ½ρ²∫σ²du)`
    pub fwd: f64,
    /// conditional total standard deviation `√((1 − ρ²)∫σ²du)`
    pub sd: f64,
    /// `σ_T²`
    pub var_t: f64,
}

impl Conditional {
    pub fn new(state: &TerminalState, p: &RoughBergomiParams) -> Self {
        let r = p.rho;
        let q = state.int_var;
        Self {
            fwd: p.s0 * (r * state.int_vol_dw - 0.5 * r * r * q).exp(),
            sd: ((1.0 - r * r) * q).sqrt(),
            var_t: state.sigma * state.sigma,
        }
    }

    /// `d = (ln(K/F) + ½ sd²) / sd`: `P(S_T > K | W) = Φ(−d)`.
    pub fn d(&self, strike: f64) -> f64 {
        ((strike / self.fwd).ln() + 0.5 * self.sd * self.sd) / self.sd
    }
}

pub(crate) fn conditionals(sample: &MaturitySample, p: &RoughBergomiParams) -> Result<Vec<Conditional>> {
    p.validate()?;
    Ok(sample.states().iter().map(|s| Conditional::new(s, p)).collect())
}

/// Conditional paths of one maturity together with the forward control
/// variate: the conditional forward multiplier `F / S0` has mean exactly 1,
/// and most of the noise in a mixing average is linear in it.
pub(crate) struct MixingPaths {
    pub cond: Vec<Conditional>,
    control: PathwiseEstimate,
}

impl MixingPaths {
    pub fn new(sample: &MaturitySample, p: &RoughBergomiParams) -> Result<Self> {
        let cond = conditionals(sample, p)?;
        let control = PathwiseEstimate::mean(cond.iter().map(|c| c.fwd / p.s0).collect())?;
        Ok(Self { cond, control })
    }

    /// Path average of `samples`, adjusted by the forward control.
    pub fn mean(&self, samples: Vec<f64>) -> Result<PathwiseEstimate> {
        Ok(PathwiseEstimate::mean(samples)?.control_variate(&self.control, 1.0))
    }
}

pub(crate) fn call_samples(cond: &[Conditional], strike: f64) -> Vec<f64> {
    cond.iter().map(|c| call_total(c.fwd, strike, c.sd)).collect()
}

pub(crate) fn put_samples(cond: &[Conditional], strike: f64) -> Vec<f64> {
    cond.iter().map(|c| put_total(c.fwd, strike, c.sd)).collect()
}

fn digital_samples(cond: &[Conditional], strike: f64) -> Vec<f64> {
    cond.iter()
        .map(|c| {
            if c.sd > 0.0 {
                norm_cdf(-c.d(strike))
            } else if c.fwd > strike {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Mixing estimate of the call price `E[(S_T − K)⁺]`.
pub fn mixing_call_price(sample: &MaturitySample, p: &RoughBergomiParams, strike: f64) -> Result<Estimate> {
    check_positive("strike", strike)?;
    let cond = conditionals(sample, p)?;
    Ok(PathwiseEstimate::mean(call_samples(&cond, strike))?.estimate())
}

/// Mixing estimate of the put price `E[(K − S_T)⁺]`.
pub fn mixing_put_price(sample: &MaturitySample, p: &RoughBergomiParams, strike: f64) -> Result<Estimate> {
    check_positive("strike", strike)?;
    let cond = conditionals(sample, p)?;
    Ok(PathwiseEstimate::mean(put_samples(&cond, strike))?.estimate())
}

/// Mixing estimate of `E[S_T]`, i.e. `S0` times the mean conditional
/// forward multiplier.
pub fn mixing_forward(sample: &MaturitySample, p: &RoughBergomiParams) -> Result<Estimate> {
    let cond = conditionals(sample, p)?;
    Ok(PathwiseEstimate::mean(cond.iter().map(|c| c.fwd).collect())?.estimate())
}

/// Mixing estimate of the exercise probability `P(S_T > K)`.
pub fn mc_digital(sample: &MaturitySample, p: &RoughBergomiParams, strike: f64) -> Result<Estimate> {
    check_positive("strike", strike)?;
    let cond = conditionals(sample, p)?;
    Ok(PathwiseEstimate::mean(digital_samples(&cond, strike))?.estimate())
}

/// Estimator used for a skew or curvature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkewMethod {
    FiniteDifference,
    Digital,
    Analytic,
}

/// A log-strike derivative of an implied or local volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewEstimate {
    pub maturity: f64,
    pub value: f64,
    pub std_error: f64,
    pub method: SkewMethod,
}

/// Implied-vol inversion of a pathwise price estimate; the influence of the
/// vol is the price influence divided by vega.
fn implied_from_price(
    price: &PathwiseEstimate,
    spot: f64,
    strike: f64,
    maturity: f64,
) -> Result<(PathwiseEstimate, BsTerms)> {
    let vol = implied_vol(price.value(), spot, strike, maturity)?;
    let bs = bs_terms(spot, strike, maturity, vol)?;
    if !(bs.vega > 1e-12 * spot) {
        return Err(Error::Degenerate(format!(
            "vega {} too small to invert at K = {strike}, T = {maturity}",
            bs.vega
        )));
    }
    Ok((price.map(vol, 1.0 / bs.vega), bs))
}

/// ATM implied log-skew `∂_k I` from the digital:
/// `∂_K I = −(P(S_T > K) − Φ(d₂)) / vega` at `K = S0`, times `K`.
pub fn implied_skew_digital(sample: &MaturitySample, p: &RoughBergomiParams) -> Result<SkewEstimate> {
    let paths = MixingPaths::new(sample, p)?;
    let skew = digital_skew_pathwise(&paths, p, sample.maturity())?;
    Ok(SkewEstimate {
        maturity: sample.maturity(),
        value: skew.value(),
        std_error: skew.std_error(),
        method: SkewMethod::Digital,
    })
}

pub(crate) fn digital_skew_pathwise(
    paths: &MixingPaths,
    p: &RoughBergomiParams,
    maturity: f64,
) -> Result<PathwiseEstimate> {
    let strike = p.s0;
    let call = paths.mean(call_samples(&paths.cond, strike))?;
    let digital = paths.mean(digital_samples(&paths.cond, strike))?;
    let (vol, bs) = implied_from_price(&call, p.s0, strike, maturity)?;
    let sigma = vol.value();
    let gap = digital.value() - norm_cdf(bs.d2);
    let value = -strike * gap / bs.vega;
    // ∂/∂σ of the formula, using ∂Φ(d₂)/∂σ = −φ(d₂) d₁/σ and
    // ∂vega/∂σ = vega d₁ d₂ / σ.
    let d_sigma = -strike * (norm_pdf(bs.d2) * bs.d1 / sigma - gap * bs.d1 * bs.d2 / sigma) / bs.vega;
    Ok(PathwiseEstimate::combine(
        &[&digital, &vol],
        value,
        &[-strike / bs.vega, d_sigma],
    ))
}

/// Implied volatilities across strikes at one maturity.
///
/// When built from simulated paths the slice also keeps each vol's per-path
/// influence, so finite differences across strikes get standard errors that
/// account for common random numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct SmileSlice {
    maturity: f64,
    strikes: Vec<f64>,
    vols: Vec<f64>,
    std_errors: Vec<f64>,
    influence: Option<Vec<Vec<f64>>>,
}

impl SmileSlice {
    pub fn new(maturity: f64, strikes: Vec<f64>, vols: Vec<f64>, std_errors: Vec<f64>) -> Result<Self> {
        check_positive("maturity", maturity)?;
        if strikes.len() != vols.len() || strikes.len() != std_errors.len() {
            return Err(Error::InvalidInput("smile arrays differ in length".into()));
        }
        if strikes.is_empty() {
            return Err(Error::InvalidInput("empty smile".into()));
        }
        if strikes.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::InvalidInput("strikes must be positive".into()));
        }
        if strikes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("strikes must be strictly increasing".into()));
        }
        if vols.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput("implied vols must be positive".into()));
        }
        if std_errors.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidInput("standard errors must be non-negative".into()));
        }
        Ok(Self {
            maturity,
            strikes,
            vols,
            std_errors,
            influence: None,
        })
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn vols(&self) -> &[f64] {
        &self.vols
    }

    pub fn std_errors(&self) -> &[f64] {
        &self.std_errors
    }

    /// Per-path influence of each vol, when built from simulated paths.
    pub fn influence(&self) -> Option<&[Vec<f64>]> {
        self.influence.as_deref()
    }

    pub(crate) fn pathwise(&self, i: usize) -> Option<PathwiseEstimate> {
        self.influence
            .as_ref()
            .map(|inf| PathwiseEstimate::from_parts(self.vols[i], inf[i].clone()))
    }
}

/// Mixing implied-vol smile at `strikes`, all priced on the same paths.
pub fn mixing_smile(sample: &MaturitySample, p: &RoughBergomiParams, strikes: &[f64]) -> Result<SmileSlice> {
    let paths = MixingPaths::new(sample, p)?;
    smile_from_paths(&paths, p, sample.maturity(), strikes)
}

pub(crate) fn smile_from_paths(
    paths: &MixingPaths,
    p: &RoughBergomiParams,
    t: f64,
    strikes: &[f64],
) -> Result<SmileSlice> {
    let mut vols = Vec::with_capacity(strikes.len());
    let mut ses = Vec::with_capacity(strikes.len());
    let mut influence = Vec::with_capacity(strikes.len());
    for &k in strikes {
        check_positive("strike", k)?;
        let call = paths.mean(call_samples(&paths.cond, k))?;
        let (vol, _) = implied_from_price(&call, p.s0, k, t)?;
        vols.push(vol.value());
        ses.push(vol.std_error());
        influence.push(vol.influence().to_vec());
    }
    let mut slice = SmileSlice::new(t, strikes.to_vec(), vols, ses)?;
    slice.influence = Some(influence);
    Ok(slice)
}

/// Strikes `S0 · e^{j h}` for `j = −n..=n`.
pub fn log_strike_ladder(s0: f64, h: f64, n_side: usize) -> Vec<f64> {
    let n = n_side as i64;
    (-n..=n).map(|j| s0 * (j as f64 * h).exp()).collect()
}

/// Centre strike index and log-spacing of the three central strikes.
fn central_triplet(slice: &SmileSlice) -> Result<(usize, f64)> {
    let n = slice.strikes.len();
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidInput(format!(
            "finite differences need an odd number (≥ 3) of strikes, got {n}"
        )));
    }
    let m = n / 2;
    let k = &slice.strikes;
    let h_up = (k[m + 1] / k[m]).ln();
    let h_dn = (k[m] / k[m - 1]).ln();
    if (h_up - h_dn).abs() > 1e-9 * h_up {
        return Err(Error::InvalidInput(format!(
            "non-uniform log-strike bumps: {h_dn} below, {h_up} above"
        )));
    }
    Ok((m, 0.5 * (h_up + h_dn)))
}

fn fd_estimate(slice: &SmileSlice, weights: [f64; 3], m: usize) -> (f64, f64) {
    let idx = [m - 1, m, m + 1];
    let value = weights.iter().zip(idx).map(|(w, i)| w * slice.vols[i]).sum();
    let se = match (slice.pathwise(m - 1), slice.pathwise(m), slice.pathwise(m + 1)) {
        (Some(a), Some(b), Some(c)) => PathwiseEstimate::combine(&[&a, &b, &c], value, &weights).std_error(),
        // without path influences the three vols are treated as independent
        _ => weights
            .iter()
            .zip(idx)
            .map(|(w, i)| (w * slice.std_errors[i]).powi(2))
            .sum::<f64>()
            .sqrt(),
    };
    (value, se)
}

/// Centred first difference in log-strike about the middle strike.
pub fn implied_skew_fd(slice: &SmileSlice) -> Result<SkewEstimate> {
    let (m, h) = central_triplet(slice)?;
    let w = 0.5 / h;
    let (value, std_error) = fd_estimate(slice, [-w, 0.0, w], m);
    Ok(SkewEstimate {
        maturity: slice.maturity,
        value,
        std_error,
        method: SkewMethod::FiniteDifference,
    })
}

/// Pathwise form of [`implied_curvature_fd`] for slices built from paths.
pub(crate) fn implied_curvature_pathwise(slice: &SmileSlice) -> Result<PathwiseEstimate> {
    let (m, h) = central_triplet(slice)?;
    let w = 1.0 / (h * h);
    let weights = [w, -2.0 * w, w];
    match (slice.pathwise(m - 1), slice.pathwise(m), slice.pathwise(m + 1)) {
        (Some(a), Some(b), Some(c)) => {
            let value = weights[0] * a.value() + weights[1] * b.value() + weights[2] * c.value();
            Ok(PathwiseEstimate::combine(&[&a, &b, &c], value, &weights))
        }
        _ => Err(Error::InvalidInput("smile slice carries no path influence".into())),
    }
}

/// Centred second difference in log-strike about the middle strike.
pub fn implied_curvature_fd(slice: &SmileSlice) -> Result<SkewEstimate> {
    let (m, h) = central_triplet(slice)?;
    let w = 1.0 / (h * h);
    let (value, std_error) = fd_estimate(slice, [w, -2.0 * w, w], m);
    Ok(SkewEstimate {
        maturity: slice.maturity,
        value,
        std_error,
        method: SkewMethod::FiniteDifference,
    })
}

/// Terminal spots from a plain log-Euler scheme on the simulated grid,
/// using the batch's orthogonal Brownian leg. A cross-check for the mixing
/// estimators only: it carries time-discretization bias.
pub fn log_euler_terminal_spots(batch: &PathBatch, sig: &SigmaPath, p: &RoughBergomiParams) -> Result<Vec<f64>> {
    p.validate()?;
    if sig.n_paths() != batch.n_paths() || sig.grid() != batch.grid() {
        return Err(Error::InvalidInput("sigma paths do not match the batch".into()));
    }
    let n = batch.n_steps();
    let dt = batch.grid().dt();
    let db = batch.orthogonal_increments();
    let rho_bar = (1.0 - p.rho * p.rho).sqrt();
    Ok((0..batch.n_paths())
        .map(|q| {
            let mut log_s = p.s0.ln();
            let mut sigma = p.sigma0;
            for i in 0..n {
                let shock = p.rho * batch.dw(q)[i] + rho_bar * db[q * n + i];
                log_s += sigma * shock - 0.5 * sigma * sigma * dt;
                sigma = sig.sigma(q)[i];
            }
            log_s.exp()
        })
        .collect())
}

/// Plain Monte Carlo call price from terminal spots.
pub fn plain_call_price(spots: &[f64], strike: f64) -> Result<Estimate> {
    Ok(PathwiseEstimate::mean(spots.iter().map(|s| (s - strike).max(0.0)).collect())?.estimate())
}

/// Plain Monte Carlo exercise frequency from terminal spots.
pub fn plain_digital(spots: &[f64], strike: f64) -> Result<Estimate> {
    Ok(PathwiseEstimate::mean(spots.iter().map(|&s| f64::from(u8::from(s > strike))).collect())?.estimate())
}
