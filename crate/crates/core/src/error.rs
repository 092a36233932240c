use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed cross-section record for material '{material}': field '{field}' {reason}")]
    MalformedRecord {
        material: String,
        field: String,
        reason: String,
    },

    #[error(
        "inconsistent cross sections for material '{material}', group {group}: \
         sigma_t = {sigma_t} but sigma_a + sum(sigma_s) = {sum}"
    )]
    Inconsistent {
        material: String,
        /// 1-based group number (1 = fast, 2 = thermal).
        group: usize,
        sigma_t: f64,
        sum: f64,
    },

    #[error("negative density {0} g/cc")]
    NegativeDensity(f64),

    #[error("material '{0}' not present in cross-section library")]
    MissingMaterial(String),

    #[error("parameter point (U = {u}, W = {w}) outside bounds U in [{u_min}, {u_max}], W in [{w_min}, {w_max}]")]
    OutOfBounds {
        u: f64,
        w: f64,
        u_min: f64,
        u_max: f64,
        w_min: f64,
        w_max: f64,
    },

    #[error("degenerate medium: {0}")]
    DegenerateMedium(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("PPO update rejected: {0}")]
    NonFinite(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
