//! Local volatility from simulated volatility paths.
//!
//! Conditional on the vol-driving Brownian path, `S_T` is lognormal, so the
//! density of `S_T` at `K` is the path average of
//! `w = φ(d) / (K · sd)` with `d = (ln(K/F) + ½ sd²) / sd`, where `F` and
//! `sd` are the conditional forward and total standard deviation. The
//! local variance is the density-weighted mean of `σ_T²`:
//! `σ²(T, K) = E[σ_T² w] / E[w]`. Differentiating the weights in `K`
//! (`∂_K w = −w (d / sd + 1) / K`) gives the skew
//! `K ∂_K σ = −E[(σ_T² − σ²) w d / sd] / (2 σ E[w])`.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::gaussian::{SimGrid, VolterraFactor};
use crate::models::{simulate_states_on_grid, MaturitySample, RoughBergomiParams};
use crate::pricing::{call_samples, conditionals, norm_pdf, MixingPaths, SkewEstimate, SkewMethod};
use crate::stats::{Estimate, PathwiseEstimate};

/// Effective sample size of the density weights below which a local-vol
/// estimate is flagged as unreliable.
pub const ESS_FLOOR: f64 = 100.0;

/// A density-weighted estimate with its weight diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedEstimate {
    pub value: f64,
    pub std_error: f64,
    /// `(Σ w)² / Σ w²`
    pub ess: f64,
    pub low_ess: bool,
}

/// Local volatility and its log-strike derivatives at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalVolPoint {
    pub maturity: f64,
    pub strike: f64,
    pub vol: Estimate,
    pub skew: Estimate,
    pub curvature: Estimate,
    pub ess: f64,
    pub low_ess: bool,
}

pub(crate) struct Weighted {
    pub vol: PathwiseEstimate,
    pub log_skew: PathwiseEstimate,
    pub ess: f64,
}

pub(crate) fn weighted(paths: &MixingPaths, strike: f64) -> Result<Weighted> {
    check_positive("strike", strike)?;
    let cond = &paths.cond;
    let n = cond.len();
    let mut w = Vec::with_capacity(n);
    let mut vw = Vec::with_capacity(n);
    let mut wd = Vec::with_capacity(n);
    let mut vwd = Vec::with_capacity(n);
    for c in cond.iter() {
        if !(c.sd > 0.0) {
            return Err(Error::Degenerate(
                "conditional variance is zero (|ρ| = 1 or zero maturity); no density weights".into(),
            ));
        }
        let d = c.d(strike);
        let wi = norm_pdf(d) / (strike * c.sd);
        let slope = d / c.sd;
        w.push(wi);
        vw.push(c.var_t * wi);
        wd.push(wi * slope);
        vwd.push(c.var_t * wi * slope);
    }
    let sum_w: f64 = w.iter().sum();
    let sum_w2: f64 = w.iter().map(|x| x * x).sum();
    if !(sum_w > 0.0) {
        return Err(Error::Degenerate(format!("density weights vanish at strike {strike}")));
    }
    let ess = sum_w * sum_w / sum_w2;
    let [b, a, dd, c] = [w, vw, wd, vwd].map(|x| paths.mean(x));
    let (a, b, c, dd) = (a?, b?, c?, dd?);
    // σ = √(a/b) and g = −(c − σ² dd) / (2σ b) with analytic gradients, so
    // that a deterministic σ_T gives exactly cancelling influences
    let (av, bv, cv, dv) = (a.value(), b.value(), c.value(), dd.value());
    let var = av / bv;
    let sigma = var.sqrt();
    let vol = PathwiseEstimate::combine(&[&a, &b], sigma, &[1.0 / (2.0 * sigma * bv), -sigma / (2.0 * bv)]);
    let num = cv - var * dv;
    let g = -num / (2.0 * sigma * bv);
    let b2 = bv * bv;
    let grad = [
        dv / (2.0 * sigma * b2) + num / (4.0 * sigma * var * b2),
        -var * dv / (2.0 * sigma * b2) + num / (4.0 * sigma * b2),
        -1.0 / (2.0 * sigma * bv),
        sigma / (2.0 * bv),
    ];
    let log_skew = PathwiseEstimate::combine(&[&a, &b, &c, &dd], g, &grad);
    Ok(Weighted { vol, log_skew, ess })
}

/// Local volatility `σ(T, K)` from the density-weighted representation.
pub fn mixing_local_vol(sample: &MaturitySample, p: &RoughBergomiParams, strike: f64) -> Result<WeightedEstimate> {
    let paths = MixingPaths::new(sample, p)?;
    let w = weighted(&paths, strike)?;
    Ok(WeightedEstimate {
        value: w.vol.value(),
        std_error: w.vol.std_error(),
        ess: w.ess,
        low_ess: w.ess < ESS_FLOOR,
    })
}

/// Local-vol log-skew `K ∂_K σ(T, K)` by differentiating the weights.
pub fn mixing_local_vol_skew(sample: &MaturitySample, p: &RoughBergomiParams, strike: f64) -> Result<SkewEstimate> {
    let paths = MixingPaths::new(sample, p)?;
    let w = weighted(&paths, strike)?;
    Ok(SkewEstimate {
        maturity: sample.maturity(),
        value: w.log_skew.value(),
        std_error: w.log_skew.std_error(),
        method: SkewMethod::Analytic,
    })
}

/// Centred log-strike difference of a log-skew about `strike`:
/// `(g(k + h) − g(k − h)) / (2h)`, with `g` evaluated on common paths.
pub fn curvature_from_skew<F>(skew_at: F, strike: f64, h: f64) -> Result<PathwiseEstimate>
where
    F: Fn(f64) -> Result<PathwiseEstimate>,
{
    check_positive("strike", strike)?;
    check_positive("h", h)?;
    let up = skew_at(strike * h.exp())?;
    let dn = skew_at(strike * (-h).exp())?;
    let w = 0.5 / h;
    Ok(PathwiseEstimate::linear(&up, w, &dn, -w))
}

/// ATM local-vol log-curvature `∂_kk σ` as the centred difference of the
/// analytic log-skew at `S0 e^{±h}`.
pub fn local_vol_curvature_fd(sample: &MaturitySample, p: &RoughBergomiParams, h: f64) -> Result<SkewEstimate> {
    let paths = MixingPaths::new(sample, p)?;
    let curv = curvature_from_skew(|k| weighted(&paths, k).map(|w| w.log_skew), p.s0, h)?;
    Ok(SkewEstimate {
        maturity: sample.maturity(),
        value: curv.value(),
        std_error: curv.std_error(),
        method: SkewMethod::FiniteDifference,
    })
}

/// Level, log-skew and log-curvature of the local vol at one strike.
pub fn local_vol_point(sample: &MaturitySample, p: &RoughBergomiParams, strike: f64, h: f64) -> Result<LocalVolPoint> {
    let paths = MixingPaths::new(sample, p)?;
    let centre = weighted(&paths, strike)?;
    let curv = curvature_from_skew(|k| weighted(&paths, k).map(|w| w.log_skew), strike, h)?;
    Ok(LocalVolPoint {
        maturity: sample.maturity(),
        strike,
        vol: centre.vol.estimate(),
        skew: centre.log_skew.estimate(),
        curvature: curv.estimate(),
        ess: centre.ess,
        low_ess: centre.ess < ESS_FLOOR,
    })
}

/// Call prices over a `(T, K)` grid, row-major in maturity.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceGrid {
    maturities: Vec<f64>,
    strikes: Vec<f64>,
    prices: Vec<f64>,
    std_errors: Vec<f64>,
    influence: Option<Vec<Vec<f64>>>,
}

fn check_axis(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() || xs.iter().any(|x| !(x.is_finite() && *x > 0.0)) || xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!(
            "{name} must be positive and strictly increasing"
        )));
    }
    Ok(())
}

impl PriceGrid {
    pub fn new(maturities: Vec<f64>, strikes: Vec<f64>, prices: Vec<f64>, std_errors: Vec<f64>) -> Result<Self> {
        check_axis("maturities", &maturities)?;
        check_axis("strikes", &strikes)?;
        let n = maturities.len() * strikes.len();
        if prices.len() != n || std_errors.len() != n {
            return Err(Error::InvalidInput(format!(
                "price grid needs {n} prices and standard errors"
            )));
        }
        Ok(Self {
            maturities,
            strikes,
            prices,
            std_errors,
            influence: None,
        })
    }

    /// Mixing prices on `samples`, which must share their paths (common
    /// random numbers) and be in increasing maturity order.
    pub fn from_mixing(samples: &[MaturitySample], p: &RoughBergomiParams, strikes: &[f64]) -> Result<Self> {
        let n_paths = samples.first().map(|s| s.n_paths()).unwrap_or(0);
        if samples.iter().any(|s| s.n_paths() != n_paths) {
            return Err(Error::InvalidInput("maturity samples differ in path count".into()));
        }
        let maturities: Vec<f64> = samples.iter().map(|s| s.maturity()).collect();
        let mut prices = Vec::new();
        let mut ses = Vec::new();
        let mut influence = Vec::new();
        for s in samples {
            let cond = conditionals(s, p)?;
            for &k in strikes {
                check_positive("strike", k)?;
                let c = PathwiseEstimate::mean(call_samples(&cond, k))?;
                prices.push(c.value());
                ses.push(c.std_error());
                influence.push(c.influence().to_vec());
            }
        }
        let mut grid = Self::new(maturities, strikes.to_vec(), prices, ses)?;
        grid.influence = Some(influence);
        Ok(grid)
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn price(&self, i_t: usize, i_k: usize) -> f64 {
        self.prices[i_t * self.strikes.len() + i_k]
    }

    pub fn std_error(&self, i_t: usize, i_k: usize) -> f64 {
        self.std_errors[i_t * self.strikes.len() + i_k]
    }

    fn pathwise(&self, i_t: usize, i_k: usize) -> PathwiseEstimate {
        let idx = i_t * self.strikes.len() + i_k;
        let inf = self.influence.as_ref().expect("grid built from paths");
        PathwiseEstimate::from_parts(self.prices[idx], inf[idx].clone())
    }
}

fn interior_index(axis: &[f64], x: f64, name: &str) -> Result<usize> {
    let i = axis
        .iter()
        .position(|a| (a - x).abs() <= 1e-12 * x.abs())
        .ok_or_else(|| Error::InvalidInput(format!("{name} {x} is not a grid node")))?;
    if i == 0 || i + 1 == axis.len() {
        return Err(Error::InvalidInput(format!(
            "{name} {x} needs grid neighbours on both sides"
        )));
    }
    Ok(i)
}

/// Weights of the three-point first and second derivatives on a possibly
/// non-uniform stencil `x − a, x, x + b`.
fn stencil(a: f64, b: f64) -> ([f64; 3], [f64; 3]) {
    let first = [-b / (a * (a + b)), (b - a) / (a * b), a / (b * (a + b))];
    let second = [2.0 / (a * (a + b)), -2.0 / (a * b), 2.0 / (b * (a + b))];
    (first, second)
}

/// Dupire local volatility `σ² = 2 ∂_T C / (K² ∂_KK C)` by centred
/// differences at an interior node of a price grid.
pub fn dupire_local_vol_fd(grid: &PriceGrid, maturity: f64, strike: f64) -> Result<Estimate> {
    let it = interior_index(&grid.maturities, maturity, "maturity")?;
    let ik = interior_index(&grid.strikes, strike, "strike")?;
    let t = &grid.maturities;
    let k = &grid.strikes;
    let (dt, _) = stencil(t[it] - t[it - 1], t[it + 1] - t[it]);
    let (_, dkk) = stencil(k[ik] - k[ik - 1], k[ik + 1] - k[ik]);
    let nodes = [(it - 1, ik), (it + 1, ik), (it, ik), (it, ik - 1), (it, ik + 1)];
    let c_t = dt[0] * grid.price(it - 1, ik) + dt[1] * grid.price(it, ik) + dt[2] * grid.price(it + 1, ik);
    let c_kk = dkk[0] * grid.price(it, ik - 1) + dkk[1] * grid.price(it, ik) + dkk[2] * grid.price(it, ik + 1);
    if !(c_kk > 0.0) {
        return Err(Error::Butterfly { strike, value: c_kk });
    }
    if !(c_t > 0.0) {
        return Err(Error::Degenerate(format!(
            "calendar spread ∂_T C = {c_t:e} at T = {maturity}"
        )));
    }
    let f = |x: &[f64]| {
        // x: C(T−), C(T+), C(T, K), C(K−), C(K+)
        let c_t = dt[0] * x[0] + dt[1] * x[2] + dt[2] * x[1];
        let c_kk = dkk[0] * x[3] + dkk[1] * x[2] + dkk[2] * x[4];
        (2.0 * c_t / (strike * strike * c_kk)).sqrt()
    };
    let value = f(&nodes.map(|(a, b)| grid.price(a, b)));
    let std_error = if grid.influence.is_some() {
        let parts = nodes.map(|(a, b)| grid.pathwise(a, b));
        let refs: Vec<&PathwiseEstimate> = parts.iter().collect();
        PathwiseEstimate::apply(&refs, f).std_error()
    } else {
        // independent nodes: first-order propagation of the node errors
        let x = nodes.map(|(a, b)| grid.price(a, b));
        nodes
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                let mut y = x;
                let h = 1e-6 * x[i].abs().max(1e-12);
                y[i] = x[i] + h;
                let up = f(&y);
                y[i] = x[i] - h;
                let dn = f(&y);
                ((up - dn) / (2.0 * h) * grid.std_error(a, b)).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    };
    Ok(Estimate { value, std_error })
}

/// Relative half-width `δT / T` of the calendar stencil used by
/// [`dupire_oracle_check`].
pub const ORACLE_REL_DT: f64 = 0.05;
/// Strike half-width of the butterfly stencil, as a fraction of spot.
pub const ORACLE_REL_DK: f64 = 0.01;

/// Dupire and mixing local vol at one `(T, K)` node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub maturity: f64,
    pub strike: f64,
    pub dupire: Estimate,
    pub mixing: Estimate,
    /// Difference over `√(se_dupire² + se_mixing²)`.
    pub z: f64,
}

/// Compares mixing local vol with Dupire finite differences of mixing call
/// prices on the tensor grid `maturities × strikes`.
///
/// Each maturity `T` gets one grid of `factor.n_steps()` steps carrying
/// `T − δT`, `T` and `T + δT` (`δ ≈ ORACLE_REL_DT`, rounded to whole
/// steps), so the
/// calendar spread compares prices of one discrete model with
/// `dt / T` the same at every node; all grids share the unit draws of
/// `seed`. Strike stencils are `K ± ORACLE_REL_DK · S0`.
pub fn dupire_oracle_check(
    factor: &VolterraFactor,
    p: &RoughBergomiParams,
    maturities: &[f64],
    strikes: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<OracleComparison>> {
    let n = factor.n_steps();
    let k_steps = (ORACLE_REL_DT / (1.0 + ORACLE_REL_DT) * n as f64).round() as usize;
    let dk = ORACLE_REL_DK * p.s0;
    let stencil_strikes: Vec<f64> = strikes.iter().flat_map(|&k| [k - dk, k, k + dk]).collect();
    let mut out = Vec::with_capacity(maturities.len() * strikes.len());
    for &t in maturities {
        check_positive("maturity", t)?;
        if k_steps == 0 || 2 * k_steps >= n {
            return Err(Error::InvalidInput(format!(
                "{n} steps cannot resolve the calendar stencil"
            )));
        }
        // T sits exactly k_steps before the end of the grid
        let grid = SimGrid::uniform(t * n as f64 / (n - k_steps) as f64, n)?;
        let times: Vec<f64> = [n - 2 * k_steps, n - k_steps, n]
            .iter()
            .map(|&i| grid.times()[i - 1])
            .collect();
        let samples = simulate_states_on_grid(factor, p, &grid, &times, n_paths, seed)?;
        let mut axis = stencil_strikes.clone();
        axis.sort_by(f64::total_cmp);
        axis.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        let prices = PriceGrid::from_mixing(&samples, p, &axis)?;
        let node_t = samples[1].maturity();
        for &k in strikes {
            let dupire = dupire_local_vol_fd(&prices, node_t, k)?;
            let m = mixing_local_vol(&samples[1], p, k)?;
            let mixing = Estimate {
                value: m.value,
                std_error: m.std_error,
            };
            let z = (dupire.value - mixing.value) / dupire.std_error.hypot(mixing.std_error);
            out.push(OracleComparison {
                maturity: node_t,
                strike: k,
                dupire,
                mixing,
                z,
            });
        }
    }
    Ok(out)
}

/// `∫ E[w(K)] dK` over all strikes: the weights are a density in `K`, so
/// this is one up to quadrature error.
pub fn weight_normalization(sample: &MaturitySample, p: &RoughBergomiParams) -> Result<f64> {
    use crate::quad::{integrate, Tolerance};
    let cond = conditionals(sample, p)?;
    let n = cond.len() as f64;
    // per path, w dK = φ(d) dd, so in d-space each path integrates to one;
    // integrate in log-strike to stay independent of that identity
    let mean_w_k = |x: f64| {
        let strike = p.s0 * x.exp();
        cond.iter().map(|c| norm_pdf(c.d(strike)) / c.sd).sum::<f64>() / n
    };
    let spread = cond.iter().map(|c| c.sd).fold(0.0, f64::max);
    let half_width = 12.0 * spread + cond.iter().map(|c| (c.fwd / p.s0).ln().abs()).fold(0.0, f64::max);
    integrate(mean_w_k, -half_width, half_width, Tolerance::relative(1e-10))
}
