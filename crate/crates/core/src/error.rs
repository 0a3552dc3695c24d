use thiserror::Error;

pub type Result<T> = std::result::Result<T, LhpError>;

/// Which validity boundary of the variable-conductance model was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeBoundary {
    /// Two-phase length shrank to zero.
    CondenserEmpty,
    /// Two-phase length reached the condenser length (fixed conductance mode).
    CondenserFull,
    /// Compensation chamber ran out of liquid.
    ChamberDry,
    /// Compensation chamber completely flooded.
    ChamberFlooded,
}

impl std::fmt::Display for ModeBoundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModeBoundary::CondenserEmpty => "two-phase length reached zero",
            ModeBoundary::CondenserFull => "two-phase length reached the condenser length (fixed conductance mode)",
            ModeBoundary::ChamberDry => "compensation chamber liquid volume reached zero",
            ModeBoundary::ChamberFlooded => "compensation chamber liquid volume reached the chamber volume",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum LhpError {
    #[error("{correlation} correlation evaluated at {t_celsius} °C, outside [{min}, {max}] °C")]
    PropertyOutOfRange {
        correlation: &'static str,
        t_celsius: f64,
        min: f64,
        max: f64,
    },

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model validity: {0}")]
    ModelValidity(String),

    #[error("mode boundary: {0}")]
    ModeBoundary(ModeBoundary),

    #[error("fixed-point iteration for {quantity} did not converge in {iterations} iterations (last step {last_step:e} K)")]
    FixedPointDivergence {
        quantity: &'static str,
        iterations: usize,
        last_step: f64,
    },

    #[error("{what} did not converge after {iterations} iterations, residual norm {residual:e}")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("inconsistent operating point: {0}")]
    InconsistentOperatingPoint(String),

    #[error("identified parameter {name} = {value} is not positive")]
    Infeasible { name: &'static str, value: f64 },

    #[error("at t = {t} s: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<LhpError>,
    },

    #[error("signal alignment: {0}")]
    Alignment(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl LhpError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        LhpError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn at(self, t: f64) -> Self {
        match self {
            e @ LhpError::AtTime { .. } => e,
            e => LhpError::AtTime {
                t,
                source: Box::new(e),
            },
        }
    }

    /// Strips any timestamp wrapper.
    pub fn root(&self) -> &LhpError {
        match self {
            LhpError::AtTime { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self.root(), LhpError::Config { .. })
    }

    pub fn mode_boundary(&self) -> Option<ModeBoundary> {
        match self.root() {
            LhpError::ModeBoundary(b) => Some(*b),
            _ => None,
        }
    }
}
