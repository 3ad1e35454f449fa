//! Volatility models: rough Bergomi path construction and closed-form
//! lognormal SABR analytics.

mod bergomi;
mod sabr;

pub use bergomi::{
    bergomi_sigma_path, simulate_states_on_grid, simulate_terminal_states, MaturitySample, RoughBergomiParams,
    SigmaPath, TerminalState,
};
pub use sabr::{
    sabr_implied_vol, sabr_implied_vol_derivs, sabr_local_vol, sabr_local_vol_derivs, SabrParams, SERIES_THRESHOLD,
};

/// A volatility level with its first two strike derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrikeDerivs {
    pub level: f64,
    pub d_strike: f64,
    pub d2_strike: f64,
}

/// The same quantity differentiated in log-strike `k = ln K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogStrikeDerivs {
    pub level: f64,
    pub d_k: f64,
    pub d2_k: f64,
}

impl StrikeDerivs {
    /// `d/dk = K d/dK` and `d²/dk² = K d/dK + K² d²/dK²`.
    pub fn to_log_strike(self, strike: f64) -> LogStrikeDerivs {
        log_strike_convert(self.level, self.d_strike, self.d2_strike, strike)
    }
}

pub fn log_strike_convert(level: f64, d_strike: f64, d2_strike: f64, strike: f64) -> LogStrikeDerivs {
    LogStrikeDerivs {
        level,
        d_k: strike * d_strike,
        d2_k: strike * d_strike + strike * strike * d2_strike,
    }
}
