//! Short-maturity skew and curvature of implied and local volatility.
//!
//! The crate simulates the rough Bergomi model exactly on a grid
//! ([`gaussian`], [`models`]), prices vanillas by conditional Monte Carlo
//! ([`pricing`]), extracts local volatility and its strike derivatives from
//! the same paths ([`local_vol`]), evaluates the closed-form short-end limits
//! they should approach ([`asymptotics`]), and packages all of it as
//! reproducible experiments ([`experiments`], [`plot`], [`selftest`]).

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod experiments;
pub mod gaussian;
pub mod local_vol;
pub mod models;
pub mod plot;
pub mod pricing;
pub mod quad;
pub mod selftest;
pub mod stats;

pub use asymptotics::{
    bergomi_curvature_limit, bergomi_skew_limit, curvature_bracket, fit_power_law, implied_curv_from_local,
    local_curv_from_implied, sabr_curvature_gap, skew_ratio_limit, CurvatureTerms, PowerLawFit, SabrCurvature,
    TermSeries,
};
pub use error::{Error, Result};
pub use experiments::{
    ExperimentConfig, ExperimentId, FitWindow, Ladder, ModelConfig, OutputFormat, PowerLawReport, Report,
    SabrCurvatureReport, SkewRatioReport,
};
pub use gaussian::{simulate_joint_paths, PathBatch, SimGrid, VolterraFactor};
pub use local_vol::{dupire_oracle_check, LocalVolPoint, OracleComparison, PriceGrid, WeightedEstimate};
pub use models::{MaturitySample, RoughBergomiParams, SabrParams, SigmaPath, TerminalState};
pub use plot::{emit_plot, PlotStyle, RefLine, Scale};
pub use pricing::{implied_vol, SkewEstimate, SkewMethod, SmileSlice};
pub use stats::{Estimate, PathwiseEstimate};
