use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("{0}")]
    InvalidInput(String),

    #[error("maturity {requested} is not on the simulation grid (grid maturity {grid_maturity})")]
    MaturityOffGrid { requested: f64, grid_maturity: f64 },

    #[error("price {price} violates the {bound} no-arbitrage bound {limit}")]
    PriceOutOfBounds {
        price: f64,
        bound: &'static str,
        limit: f64,
    },

    #[error("covariance factorization failed at pivot {pivot}: {value:e}")]
    Factorization { pivot: usize, value: f64 },

    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("butterfly violation at strike {strike}: d2C/dK2 = {value:e}")]
    Butterfly { strike: f64, value: f64 },

    #[error("configuration invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// Process exit code for this error: 2 for configuration problems, 3
    /// for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } => 1,
            _ => 3,
        }
    }
}

pub(crate) fn check_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite",
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<f64> {
    check_finite(name, value)?;
    if value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive",
        })
    }
}

pub(crate) fn check_hurst(value: f64) -> Result<f64> {
    check_finite("hurst", value)?;
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name: "hurst",
            value,
            reason: "must lie in (0, 1)",
        })
    }
}
