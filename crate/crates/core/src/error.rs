use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} outside supported range [{min}, {max}]")]
    Range {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown species `{0}`")]
    UnknownSpecies(String),

    #[error("thermo data line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("equilibrium did not converge after {iterations} iterations (stationarity residual {stationarity:e}, element residual {elements:e})")]
    NonConvergence {
        iterations: usize,
        stationarity: f64,
        elements: f64,
    },

    #[error("enthalpy target {target:e} J/kg not bracketed on [{t_low}, {t_high}] K (h = {h_low:e}, {h_high:e})")]
    Bracket {
        target: f64,
        t_low: f64,
        t_high: f64,
        h_low: f64,
        h_high: f64,
    },

    #[error("capture radius {r0} m outside actuator range [{min}, {max}]")]
    Saturation { r0: f64, min: f64, max: f64 },

    #[error("no nozzle expansion: Pt4 = {pt4} Pa <= ambient {p0} Pa")]
    NoExpansion { pt4: f64, p0: f64 },

    #[error("fuel grain burnout: port radius {r3} m reached limit {r3_max} m")]
    Burnout { r3: f64, r3_max: f64 },

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("non-finite {what} at step {step}")]
    NonFinite { step: usize, what: &'static str },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
