//! Experiment harness: a JSON-configurable run over a maturity ladder that
//! produces a CSV table, an SVG plot and a JSON metadata file.
//!
//! Three experiments are available:
//!
//! * `skew-ratio` — rough Bergomi ATM implied skew (digital and finite
//!   difference), local-vol skew, and their ratio against `1/(H + 3/2)`;
//! * `sabr-curvature` — analytic SABR implied and local ATM curvatures, their
//!   gap and ratio;
//! * `power-law` — rough Bergomi implied and local ATM curvatures with
//!   power-law fits on the short end, plus the curvature transfer check.
//!
//! All maturities of a Monte Carlo run share their Gaussian draws (see
//! [`simulate_terminal_states`]), so results do not depend on the thread
//! count and differences across maturities are smooth.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    curvature_bracket, fit_power_law, sabr_atm_curvatures, sabr_curvature_gap, skew_ratio_limit, PowerLawFit,
    SabrCurvature, TermSeries,
};
use crate::error::{Error, Result};
use crate::gaussian::{VolterraFactor, MAX_STEPS};
use crate::local_vol::weighted;
use crate::models::{simulate_terminal_states, MaturitySample, RoughBergomiParams, SabrParams};
use crate::plot::{emit_plot, PlotStyle, RefLine, Scale};
use crate::pricing::{
    digital_skew_pathwise, implied_curvature_pathwise, implied_skew_fd, log_strike_ladder, smile_from_paths,
    MixingPaths,
};
use crate::stats::{Estimate, PathwiseEstimate};

/// Smallest path count accepted for Monte Carlo experiments.
pub const MIN_PATHS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    SkewRatio,
    SabrCurvature,
    PowerLaw,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::SkewRatio => "skew-ratio",
            ExperimentId::SabrCurvature => "sabr-curvature",
            ExperimentId::PowerLaw => "power-law",
        }
    }

    fn needs_bergomi(self) -> bool {
        !matches!(self, ExperimentId::SabrCurvature)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    RoughBergomi(RoughBergomiParams),
    Sabr(SabrParams),
}

/// Maturities of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Ladder {
    /// `points` maturities in geometric progression from `first` to `last`.
    Geometric {
        first: f64,
        last: f64,
        points: usize,
    },
    Explicit {
        maturities: Vec<f64>,
    },
}

impl Ladder {
    pub fn maturities(&self) -> Vec<f64> {
        match self {
            Ladder::Geometric { first, last, points } => match *points {
                0 => vec![],
                1 => vec![*first],
                n => (0..n)
                    .map(|i| {
                        if i + 1 == n {
                            *last
                        } else {
                            first * (last / first).powf(i as f64 / (n - 1) as f64)
                        }
                    })
                    .collect(),
            },
            Ladder::Explicit { maturities } => maturities.clone(),
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            Ladder::Geometric { first, last, points } => {
                if !(first.is_finite() && *first > 0.0) {
                    out.push(format!("ladder.first must be positive, got {first}"));
                }
                if !(last.is_finite() && last > first) {
                    out.push(format!("ladder.last must exceed ladder.first, got {last}"));
                }
                if *points < 2 {
                    out.push(format!("ladder.points must be at least 2, got {points}"));
                }
            }
            Ladder::Explicit { maturities } => {
                if maturities.is_empty() {
                    out.push("ladder.maturities is empty".into());
                }
                if maturities.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                    out.push("ladder.maturities must be positive".into());
                }
                if maturities.windows(2).any(|w| w[1] <= w[0]) {
                    out.push("ladder.maturities must be strictly increasing".into());
                }
            }
        }
        out
    }
}

/// Maturity range `[min, max]` used by the short-end fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub min: f64,
    pub max: f64,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self { min: 0.0, max: 0.25 }
    }
}

impl FitWindow {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.min && t <= self.max
    }
}

fn default_ladder() -> Ladder {
    Ladder::Geometric {
        first: 0.004,
        last: 1.0,
        points: 24,
    }
}

fn default_paths() -> usize {
    200_000
}

fn default_steps() -> usize {
    256
}

fn default_seed() -> u64 {
    20_240_601
}

fn default_skew_bump() -> f64 {
    0.005
}

fn default_curvature_bump() -> f64 {
    0.01
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_max_flagged() -> f64 {
    0.25
}

/// A complete, validated-on-use experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub model: ModelConfig,
    #[serde(default = "default_ladder")]
    pub ladder: Ladder,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Log-strike bump of the finite-difference implied skew.
    #[serde(default = "default_skew_bump")]
    pub skew_bump: f64,
    /// Log-strike bump of the finite-difference curvatures.
    #[serde(default = "default_curvature_bump")]
    pub curvature_bump: f64,
    #[serde(default)]
    pub fit_window: FitWindow,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Largest tolerated fraction of flagged rows before a run counts as a
    /// numerical failure.
    #[serde(default = "default_max_flagged")]
    pub max_flagged_fraction: f64,
}

impl ExperimentConfig {
    /// Default configuration of each experiment: `S0 = 100`, `σ0 = 0.3`,
    /// `ν = 1.1`, `ρ = −0.6`, `H = 0.2` for the rough Bergomi runs and
    /// `α = 0.3`, `ν = 0.6`, `ρ = −0.6` for SABR.
    pub fn preset(experiment: ExperimentId) -> Self {
        let (model, ladder) = match experiment {
            ExperimentId::SabrCurvature => (
                ModelConfig::Sabr(SabrParams {
                    alpha: 0.3,
                    nu: 0.6,
                    rho: -0.6,
                    s0: 100.0,
                }),
                Ladder::Geometric {
                    first: 1e-4,
                    last: 1.0,
                    points: 25,
                },
            ),
            _ => (
                ModelConfig::RoughBergomi(RoughBergomiParams {
                    s0: 100.0,
                    sigma0: 0.3,
                    nu: 1.1,
                    rho: -0.6,
                    hurst: 0.2,
                }),
                default_ladder(),
            ),
        };
        Self {
            experiment,
            model,
            ladder,
            n_paths: default_paths(),
            n_steps: default_steps(),
            seed: default_seed(),
            skew_bump: default_skew_bump(),
            curvature_bump: default_curvature_bump(),
            fit_window: FitWindow::default(),
            out_dir: default_out_dir(),
            max_flagged_fraction: default_max_flagged(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        match (&self.model, self.experiment.needs_bergomi()) {
            (ModelConfig::RoughBergomi(p), true) => {
                errs.extend(bergomi_problems(p));
            }
            (ModelConfig::Sabr(p), false) => {
                if let Err(e) = p.validate() {
                    errs.push(format!("model: {e}"));
                }
            }
            (ModelConfig::Sabr(_), true) => errs.push(format!(
                "experiment {} needs a rough-bergomi model",
                self.experiment.name()
            )),
            (ModelConfig::RoughBergomi(_), false) => {
                errs.push(format!("experiment {} needs a sabr model", self.experiment.name()))
            }
        }
        let ladder_problems = self.ladder.problems();
        let ladder_ok = ladder_problems.is_empty();
        errs.extend(ladder_problems);
        if self.experiment.needs_bergomi() {
            if self.n_paths < MIN_PATHS {
                errs.push(format!("n_paths must be at least {MIN_PATHS}, got {}", self.n_paths));
            }
            if self.n_steps == 0 || self.n_steps > MAX_STEPS {
                errs.push(format!("n_steps must be in 1..={MAX_STEPS}, got {}", self.n_steps));
            }
            for (name, h) in [("skew_bump", self.skew_bump), ("curvature_bump", self.curvature_bump)] {
                if !(h.is_finite() && h > 0.0 && h <= 0.5) {
                    errs.push(format!("{name} must lie in (0, 0.5], got {h}"));
                }
            }
            let w = self.fit_window;
            if !(w.min.is_finite() && w.max.is_finite() && w.min >= 0.0 && w.max > w.min) {
                errs.push(format!("fit_window needs 0 <= min < max, got [{}, {}]", w.min, w.max));
            } else if ladder_ok {
                let inside = self.ladder.maturities().iter().filter(|t| w.contains(**t)).count();
                if inside < 4 {
                    errs.push(format!(
                        "fit_window [{}, {}] holds {inside} ladder maturities; at least 4 are needed",
                        w.min, w.max
                    ));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.max_flagged_fraction) {
            errs.push(format!(
                "max_flagged_fraction must lie in [0, 1], got {}",
                self.max_flagged_fraction
            ));
        }
        if self.out_dir.as_os_str().is_empty() {
            errs.push("out_dir is empty".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn bergomi(&self) -> Result<RoughBergomiParams> {
        match self.model {
            ModelConfig::RoughBergomi(p) => Ok(p),
            ModelConfig::Sabr(_) => Err(Error::Config(vec!["a rough-bergomi model is required".into()])),
        }
    }
}

fn bergomi_problems(p: &RoughBergomiParams) -> Vec<String> {
    let checks = [
        ("s0", p.s0.is_finite() && p.s0 > 0.0, "must be positive"),
        ("sigma0", p.sigma0.is_finite() && p.sigma0 > 0.0, "must be positive"),
        ("nu", p.nu.is_finite() && p.nu >= 0.0, "must be non-negative"),
        ("rho", p.rho.is_finite() && p.rho.abs() <= 1.0, "must lie in [-1, 1]"),
        (
            "hurst",
            p.hurst.is_finite() && p.hurst > 0.0 && p.hurst < 1.0,
            "must lie in (0, 1)",
        ),
    ];
    let values = [p.s0, p.sigma0, p.nu, p.rho, p.hurst];
    checks
        .iter()
        .zip(values)
        .filter(|((_, ok, _), _)| !ok)
        .map(|((name, _, reason), v)| format!("model.{name} = {v}: {reason}"))
        .collect()
}

/// Validates `config` and simulates its ladder.
pub fn simulate_ladder(config: &ExperimentConfig) -> Result<Vec<MaturitySample>> {
    config.validate()?;
    let p = config.bergomi()?;
    let factor = VolterraFactor::new(p.hurst, config.n_steps)?;
    simulate_terminal_states(&factor, &p, &config.ladder.maturities(), config.n_paths, config.seed)
}

/// One maturity of the skew-ratio experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewRatioRow {
    pub maturity: f64,
    /// Implied log-skew from the digital.
    pub skew_iv: Estimate,
    /// Implied log-skew by centred difference of the smile.
    pub skew_iv_fd: Estimate,
    pub skew_lv: Estimate,
    /// `skew_iv / skew_lv`; NaN when flagged.
    pub ratio: Estimate,
    /// Local skew indistinguishable from zero, so the ratio is undefined.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewRatioReport {
    pub params: RoughBergomiParams,
    /// `1/(H + 3/2)`
    pub limit: f64,
    pub rows: Vec<SkewRatioRow>,
    /// Short-end level of the ratio: intercept of a weighted least-squares
    /// line in `T^{2H}` over the fit window.
    pub level: Option<Estimate>,
    pub warnings: Vec<String>,
}

/// Whether a local skew is too close to zero to divide by.
fn negligible(x: &PathwiseEstimate) -> bool {
    x.value().abs() < (3.0 * x.std_error()).max(1e-10)
}

/// Skew-ratio table from simulated samples (one per ladder maturity).
pub fn skew_ratio_report(
    p: &RoughBergomiParams,
    samples: &[MaturitySample],
    skew_bump: f64,
    window: FitWindow,
) -> Result<SkewRatioReport> {
    let strikes = log_strike_ladder(p.s0, skew_bump, 1);
    let per_maturity: Vec<(SkewRatioRow, Option<PathwiseEstimate>)> = samples
        .par_iter()
        .map(|s| {
            let t = s.maturity();
            let paths = MixingPaths::new(s, p)?;
            let dig = digital_skew_pathwise(&paths, p, t)?;
            let fd = implied_skew_fd(&smile_from_paths(&paths, p, t, &strikes)?)?;
            let lv = weighted(&paths, p.s0)?.log_skew;
            let flagged = negligible(&lv);
            let ratio = (!flagged).then(|| PathwiseEstimate::ratio(&dig, &lv));
            let row = SkewRatioRow {
                maturity: t,
                skew_iv: dig.estimate(),
                skew_iv_fd: Estimate {
                    value: fd.value,
                    std_error: fd.std_error,
                },
                skew_lv: lv.estimate(),
                ratio: ratio.as_ref().map(PathwiseEstimate::estimate).unwrap_or(Estimate {
                    value: f64::NAN,
                    std_error: f64::NAN,
                }),
                flagged,
            };
            Ok((row, ratio))
        })
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let fit_points: Vec<(f64, &PathwiseEstimate)> = per_maturity
        .iter()
        .filter_map(|(row, r)| {
            r.as_ref()
                .filter(|_| window.contains(row.maturity))
                .map(|r| (row.maturity, r))
        })
        .collect();
    let level = match short_end_level(&fit_points, p.hurst) {
        Ok(e) => Some(e),
        Err(e) => {
            warnings.push(format!("no short-end level: {e}"));
            None
        }
    };
    let flagged = per_maturity.iter().filter(|(r, _)| r.flagged).count();
    if flagged > 0 {
        warnings.push(format!(
            "{flagged} maturities with a local skew indistinguishable from zero"
        ));
    }
    Ok(SkewRatioReport {
        params: *p,
        limit: skew_ratio_limit(p.hurst)?,
        rows: per_maturity.into_iter().map(|(r, _)| r).collect(),
        level,
        warnings,
    })
}

/// Intercept of the weighted least-squares line `r ≈ a + b T^{2H}`: the
/// leading correction to the short-end ratio is of order `T^{2H}`. Weights
/// are inverse squared standard errors; the standard error of `a` uses the
/// joint path influence of all points.
fn short_end_level(points: &[(f64, &PathwiseEstimate)], hurst: f64) -> Result<Estimate> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 unflagged ratios in the fit window, found {}",
            points.len()
        )));
    }
    let xs: Vec<f64> = points.iter().map(|(t, _)| t.powf(2.0 * hurst)).collect();
    let ws: Vec<f64> = points
        .iter()
        .map(|(_, r)| {
            let se = r.std_error();
            if se > 0.0 {
                1.0 / (se * se)
            } else {
                1.0
            }
        })
        .collect();
    let sw: f64 = ws.iter().sum();
    let sx: f64 = ws.iter().zip(&xs).map(|(w, x)| w * x).sum();
    let sxx: f64 = ws.iter().zip(&xs).map(|(w, x)| w * x * x).sum();
    let det = sw * sxx - sx * sx;
    if !(det > 0.0) {
        return Err(Error::Degenerate("short-end fit has a singular design".into()));
    }
    // a = Σ c_i r_i with c_i = w_i (Σwx² − x_i Σwx) / det
    let coeffs: Vec<f64> = ws.iter().zip(&xs).map(|(w, x)| w * (sxx - x * sx) / det).collect();
    let value = coeffs.iter().zip(points).map(|(c, (_, r))| c * r.value()).sum();
    let parts: Vec<&PathwiseEstimate> = points.iter().map(|(_, r)| *r).collect();
    Ok(PathwiseEstimate::combine(&parts, value, &coeffs).estimate())
}

/// Validates `config`, simulates, and tabulates the skew ratio.
pub fn run_skew_ratio(config: &ExperimentConfig) -> Result<SkewRatioReport> {
    let samples = simulate_ladder(config)?;
    skew_ratio_report(&config.bergomi()?, &samples, config.skew_bump, config.fit_window)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SabrCurvatureReport {
    pub params: SabrParams,
    pub rows: Vec<SabrCurvature>,
    /// `ρ²ν²/(6α)`
    pub gap_limit: f64,
    /// `1/3`, reported for uncorrelated models only.
    pub ratio_limit: Option<f64>,
}

/// Analytic SABR curvature table; no simulation.
pub fn run_sabr_curvature(config: &ExperimentConfig) -> Result<SabrCurvatureReport> {
    config.validate()?;
    let p = match config.model {
        ModelConfig::Sabr(p) => p,
        ModelConfig::RoughBergomi(_) => return Err(Error::Config(vec!["a sabr model is required".into()])),
    };
    let rows = config
        .ladder
        .maturities()
        .iter()
        .map(|&t| sabr_atm_curvatures(&p, t))
        .collect::<Result<_>>()?;
    Ok(SabrCurvatureReport {
        params: p,
        rows,
        gap_limit: sabr_curvature_gap(&p)?,
        ratio_limit: (p.rho == 0.0).then_some(1.0 / 3.0),
    })
}

/// One maturity of the power-law experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawRow {
    pub maturity: f64,
    /// Implied log-curvature by centred second difference of the smile.
    pub curv_iv: Estimate,
    /// Local-vol log-curvature by centred difference of the analytic skew.
    pub curv_lv: Estimate,
    /// Implied log-skew from the digital.
    pub skew_iv: Estimate,
    /// Local curvature predicted from `curv_iv` and `skew_iv` by the
    /// short-end transfer formula.
    pub curv_lv_from_iv: Estimate,
    /// `curv_lv_from_iv − curv_lv` with the joint path influence.
    pub transfer_gap: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawReport {
    pub params: RoughBergomiParams,
    pub rows: Vec<PowerLawRow>,
    pub implied_fit: PowerLawFit,
    pub local_fit: PowerLawFit,
    pub skew_fit: PowerLawFit,
    /// Window actually used by the fits, after any shrinking.
    pub window: FitWindow,
    pub warnings: Vec<String>,
}

impl PowerLawReport {
    pub fn exponent_difference(&self) -> f64 {
        self.implied_fit.exponent - self.local_fit.exponent
    }
}

/// `2(1 + H) [c − C(H) (H + 3/2)² s² / σ0]`: the local curvature implied by
/// an implied curvature `c` and skew `s`, together with its gradient in
/// `(c, s)`. The relation is homogeneous under the short-end scaling, so it
/// applies to unscaled values at a common maturity.
fn transfer(hurst: f64, sigma0: f64, curv_iv: f64, skew_iv: f64) -> Result<(f64, [f64; 2])> {
    let k = 2.0 * (1.0 + hurst);
    let q = curvature_bracket(hurst)? * (hurst + 1.5).powi(2) / sigma0;
    Ok((k * (curv_iv - q * skew_iv * skew_iv), [k, -2.0 * k * q * skew_iv]))
}

/// Power-law table from simulated samples (one per ladder maturity).
pub fn power_law_report(
    p: &RoughBergomiParams,
    samples: &[MaturitySample],
    curvature_bump: f64,
    window: FitWindow,
) -> Result<PowerLawReport> {
    let strikes = log_strike_ladder(p.s0, curvature_bump, 1);
    let rows: Vec<PowerLawRow> = samples
        .par_iter()
        .map(|s| {
            let t = s.maturity();
            let paths = MixingPaths::new(s, p)?;
            let curv_iv = implied_curvature_pathwise(&smile_from_paths(&paths, p, t, &strikes)?)?;
            let skew_iv = digital_skew_pathwise(&paths, p, t)?;
            let curv_lv = crate::local_vol::curvature_from_skew(
                |k| weighted(&paths, k).map(|w| w.log_skew),
                p.s0,
                curvature_bump,
            )?;
            let (pred, grad) = transfer(p.hurst, p.sigma0, curv_iv.value(), skew_iv.value())?;
            let predicted = PathwiseEstimate::combine(&[&curv_iv, &skew_iv], pred, &grad);
            let gap = PathwiseEstimate::linear(&predicted, 1.0, &curv_lv, -1.0);
            Ok(PowerLawRow {
                maturity: t,
                curv_iv: curv_iv.estimate(),
                curv_lv: curv_lv.estimate(),
                skew_iv: skew_iv.estimate(),
                curv_lv_from_iv: predicted.estimate(),
                transfer_gap: gap.estimate(),
            })
        })
        .collect::<Result<_>>()?;
    let maturities: Vec<f64> = rows.iter().map(|r| r.maturity).collect();
    let series = |label: &str, f: fn(&PowerLawRow) -> Estimate| {
        TermSeries::new(
            label,
            maturities.clone(),
            rows.iter().map(|r| f(r).value).collect(),
            rows.iter().map(|r| f(r).std_error).collect(),
        )
    };
    let implied = series("implied curvature", |r| r.curv_iv)?;
    let local = series("local curvature", |r| r.curv_lv)?;
    let skew = series("implied skew", |r| r.skew_iv)?;
    let mut warnings = Vec::new();
    // shrink the window from above until no fitted series changes sign
    let mut used = window;
    let fits = loop {
        let attempt = (|| {
            Ok::<_, Error>((
                fit_power_law(&implied, (used.min, used.max))?,
                fit_power_law(&local, (used.min, used.max))?,
                fit_power_law(&skew, (used.min, used.max))?,
            ))
        })();
        match attempt {
            Ok(f) => break f,
            Err(e) => {
                let next = maturities
                    .iter()
                    .copied()
                    .filter(|t| *t < used.max)
                    .fold(f64::NAN, f64::max);
                let inside = maturities.iter().filter(|t| **t >= used.min && **t <= next).count();
                if next.is_nan() || inside < 4 {
                    return Err(e);
                }
                warnings.push(format!("{e}; fit window shrunk to [{}, {next}]", used.min));
                used.max = next;
            }
        }
    };
    Ok(PowerLawReport {
        params: *p,
        rows,
        implied_fit: fits.0,
        local_fit: fits.1,
        skew_fit: fits.2,
        window: used,
        warnings,
    })
}

/// Validates `config`, simulates, and fits the curvature power laws.
pub fn run_power_law(config: &ExperimentConfig) -> Result<PowerLawReport> {
    let samples = simulate_ladder(config)?;
    power_law_report(&config.bergomi()?, &samples, config.curvature_bump, config.fit_window)
}

/// The result of any experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Report {
    SkewRatio(SkewRatioReport),
    SabrCurvature(SabrCurvatureReport),
    PowerLaw(PowerLawReport),
}

/// Runs the experiment named in `config`.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    Ok(match config.experiment {
        ExperimentId::SkewRatio => Report::SkewRatio(run_skew_ratio(config)?),
        ExperimentId::SabrCurvature => Report::SabrCurvature(run_sabr_curvature(config)?),
        ExperimentId::PowerLaw => Report::PowerLaw(run_power_law(config)?),
    })
}

/// Column names of each experiment's CSV table.
pub fn csv_columns(experiment: ExperimentId) -> &'static [&'static str] {
    match experiment {
        ExperimentId::SkewRatio => &[
            "T",
            "skew_iv",
            "se_iv",
            "skew_lv",
            "se_lv",
            "ratio",
            "se_ratio",
            "skew_iv_fd",
            "se_iv_fd",
            "flag",
        ],
        ExperimentId::SabrCurvature => &[
            "T",
            "curv_iv",
            "se_curv_iv",
            "curv_lv",
            "se_curv_lv",
            "gap",
            "se_gap",
            "ratio",
            "se_ratio",
        ],
        ExperimentId::PowerLaw => &[
            "T",
            "curv_iv",
            "se_curv_iv",
            "curv_lv",
            "se_curv_lv",
            "skew_iv",
            "se_skew_iv",
            "curv_lv_from_iv",
            "se_curv_lv_from_iv",
            "transfer_gap",
            "se_transfer_gap",
        ],
    }
}

/// Formats a number for CSV: shortest round-trip representation, `.`
/// decimal separator, `NaN` for undefined values.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn csv_line(out: &mut String, fields: &[String]) {
    out.push_str(&fields.join(","));
    out.push('\n');
}

impl Report {
    pub fn experiment(&self) -> ExperimentId {
        match self {
            Report::SkewRatio(_) => ExperimentId::SkewRatio,
            Report::SabrCurvature(_) => ExperimentId::SabrCurvature,
            Report::PowerLaw(_) => ExperimentId::PowerLaw,
        }
    }

    pub fn n_rows(&self) -> usize {
        match self {
            Report::SkewRatio(r) => r.rows.len(),
            Report::SabrCurvature(r) => r.rows.len(),
            Report::PowerLaw(r) => r.rows.len(),
        }
    }

    /// Rows whose estimate is flagged as unreliable.
    pub fn flagged(&self) -> usize {
        match self {
            Report::SkewRatio(r) => r.rows.iter().filter(|x| x.flagged).count(),
            _ => 0,
        }
    }

    pub fn warnings(&self) -> &[String] {
        match self {
            Report::SkewRatio(r) => &r.warnings,
            Report::SabrCurvature(_) => &[],
            Report::PowerLaw(r) => &r.warnings,
        }
    }

    /// Whether the flagged fraction exceeds `max_fraction`.
    pub fn exceeds_flag_limit(&self, max_fraction: f64) -> bool {
        self.n_rows() > 0 && self.flagged() as f64 > max_fraction * self.n_rows() as f64
    }

    pub fn csv(&self) -> String {
        let mut out = String::new();
        csv_line(
            &mut out,
            &csv_columns(self.experiment())
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>(),
        );
        match self {
            Report::SkewRatio(r) => {
                for x in &r.rows {
                    csv_line(
                        &mut out,
                        &[
                            num(x.maturity),
                            num(x.skew_iv.value),
                            num(x.skew_iv.std_error),
                            num(x.skew_lv.value),
                            num(x.skew_lv.std_error),
                            num(x.ratio.value),
                            num(x.ratio.std_error),
                            num(x.skew_iv_fd.value),
                            num(x.skew_iv_fd.std_error),
                            u8::from(x.flagged).to_string(),
                        ],
                    );
                }
            }
            Report::SabrCurvature(r) => {
                for x in &r.rows {
                    csv_line(
                        &mut out,
                        &[
                            num(x.maturity),
                            num(x.implied),
                            num(0.0),
                            num(x.local),
                            num(0.0),
                            num(x.gap),
                            num(0.0),
                            num(x.ratio),
                            num(0.0),
                        ],
                    );
                }
            }
            Report::PowerLaw(r) => {
                for x in &r.rows {
                    csv_line(
                        &mut out,
                        &[
                            num(x.maturity),
                            num(x.curv_iv.value),
                            num(x.curv_iv.std_error),
                            num(x.curv_lv.value),
                            num(x.curv_lv.std_error),
                            num(x.skew_iv.value),
                            num(x.skew_iv.std_error),
                            num(x.curv_lv_from_iv.value),
                            num(x.curv_lv_from_iv.std_error),
                            num(x.transfer_gap.value),
                            num(x.transfer_gap.std_error),
                        ],
                    );
                }
            }
        }
        out
    }

    /// The series drawn in the SVG and the plot style.
    pub fn plot_data(&self) -> Result<(Vec<TermSeries>, PlotStyle)> {
        let est_series = |label: &str, ts: Vec<f64>, es: Vec<Estimate>| {
            TermSeries::new(
                label,
                ts,
                es.iter().map(|e| e.value).collect(),
                es.iter().map(|e| e.std_error).collect(),
            )
        };
        Ok(match self {
            Report::SkewRatio(r) => {
                let ts = r.rows.iter().map(|x| x.maturity).collect();
                let ratio = est_series("skew ratio", ts, r.rows.iter().map(|x| x.ratio).collect())?;
                let h = r.params.hurst;
                (
                    vec![ratio],
                    PlotStyle {
                        title: format!("ATM implied / local skew, H = {h}"),
                        x_label: "T".into(),
                        y_label: "ratio".into(),
                        x_scale: Scale::Log,
                        y_scale: Scale::Linear,
                        ref_lines: vec![RefLine {
                            label: format!("1/(H+3/2) = {:.4}", r.limit),
                            value: r.limit,
                        }],
                    },
                )
            }
            Report::SabrCurvature(r) => {
                let ts: Vec<f64> = r.rows.iter().map(|x| x.maturity).collect();
                let zeros = vec![0.0; ts.len()];
                let mut series = vec![TermSeries::new(
                    "curvature gap",
                    ts.clone(),
                    r.rows.iter().map(|x| x.gap).collect(),
                    zeros.clone(),
                )?];
                let mut refs = vec![RefLine {
                    label: format!("gap limit = {:.4}", r.gap_limit),
                    value: r.gap_limit,
                }];
                if let Some(limit) = r.ratio_limit {
                    series.push(TermSeries::new(
                        "curvature ratio",
                        ts,
                        r.rows.iter().map(|x| x.ratio).collect(),
                        zeros,
                    )?);
                    refs.push(RefLine {
                        label: "ratio limit = 1/3".into(),
                        value: limit,
                    });
                }
                (
                    series,
                    PlotStyle {
                        title: "SABR ATM curvatures".into(),
                        x_label: "T".into(),
                        y_label: "curvature".into(),
                        x_scale: Scale::Log,
                        y_scale: Scale::Linear,
                        ref_lines: refs,
                    },
                )
            }
            Report::PowerLaw(r) => {
                let ts: Vec<f64> = r.rows.iter().map(|x| x.maturity).collect();
                let implied = est_series(
                    "implied curvature",
                    ts.clone(),
                    r.rows.iter().map(|x| x.curv_iv).collect(),
                )?;
                let local = est_series("local curvature", ts, r.rows.iter().map(|x| x.curv_lv).collect())?;
                (
                    vec![implied, local],
                    PlotStyle {
                        title: format!("ATM curvatures, H = {}", r.params.hurst),
                        x_label: "T".into(),
                        y_label: "curvature".into(),
                        x_scale: Scale::Log,
                        y_scale: Scale::Log,
                        ref_lines: vec![],
                    },
                )
            }
        })
    }

    pub fn svg(&self) -> Result<String> {
        let (series, style) = self.plot_data()?;
        emit_plot(&series, &style)
    }

    /// Headline numbers of the run.
    pub fn summary(&self) -> serde_json::Value {
        match self {
            Report::SkewRatio(r) => serde_json::json!({
                "limit": r.limit,
                "level": r.level,
                "flagged": self.flagged(),
            }),
            Report::SabrCurvature(r) => serde_json::json!({
                "gap_limit": r.gap_limit,
                "ratio_limit": r.ratio_limit,
            }),
            Report::PowerLaw(r) => serde_json::json!({
                "implied_exponent": r.implied_fit.exponent,
                "local_exponent": r.local_fit.exponent,
                "skew_exponent": r.skew_fit.exponent,
                "exponent_difference": r.exponent_difference(),
                "window": r.window,
            }),
        }
    }
}

/// Which artifacts to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    CsvSvg,
}

/// Writes `<out>/<experiment>.csv`, optionally `.svg`, and `.meta.json`
/// (config echo, versions, wall time, headline numbers); returns the paths.
pub fn write_outputs(
    config: &ExperimentConfig,
    report: &Report,
    format: OutputFormat,
    wall_seconds: f64,
) -> Result<Vec<PathBuf>> {
    let dir = &config.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = report.experiment().name();
    let mut written = Vec::new();
    let mut put = |file: String, body: &str| -> Result<()> {
        let path = dir.join(file);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    put(format!("{name}.csv"), &report.csv())?;
    if format == OutputFormat::CsvSvg {
        put(format!("{name}.svg"), &report.svg()?)?;
    }
    let meta = serde_json::json!({
        "experiment": name,
        "config": config,
        "versions": {
            "volskew": env!("CARGO_PKG_VERSION"),
            "csv_columns": csv_columns(report.experiment()),
        },
        "wall_time_seconds": wall_seconds,
        "summary": report.summary(),
        "warnings": report.warnings(),
    });
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    put(format!("{name}.meta.json"), &text)?;
    Ok(written)
}

/// Reads a JSON config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
    ExperimentConfig::from_json(&text)
}

/// A compact text rendering of a report for terminals.
pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", report.experiment().name());
    match report {
        Report::SkewRatio(r) => {
            let _ = writeln!(out, "limit 1/(H+3/2) = {:.6}", r.limit);
            if let Some(l) = r.level {
                let _ = writeln!(out, "short-end level = {:.6} ± {:.6}", l.value, l.std_error);
            }
        }
        Report::SabrCurvature(r) => {
            let _ = writeln!(out, "gap limit = {:.6}", r.gap_limit);
            if let Some(first) = r.rows.first() {
                let _ = writeln!(out, "gap at T = {} : {:.6}", first.maturity, first.gap);
            }
        }
        Report::PowerLaw(r) => {
            let _ = writeln!(
                out,
                "exponents: implied {:.4}, local {:.4}, skew {:.4} (window [{}, {}])",
                r.implied_fit.exponent, r.local_fit.exponent, r.skew_fit.exponent, r.window.min, r.window.max
            );
        }
    }
    for w in report.warnings() {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
