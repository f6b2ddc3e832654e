use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("time bin {bin} out of range 1..={n_bins}")]
    BinOutOfRange { bin: usize, n_bins: usize },

    #[error("degenerate discretization: {0}")]
    DegenerateBins(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid loss specification: {0}")]
    InvalidLossSpec(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(
        "non-finite gradient at epoch {epoch} ({player} player, {clamps} clamp events so far)"
    )]
    NonFiniteGradient {
        epoch: usize,
        player: &'static str,
        clamps: u64,
    },

    #[error("outside the valid parameter domain: {0}")]
    Domain(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("no admissible pairs for concordance")]
    NoAdmissiblePairs,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDistribution(_) => "invalid_distribution",
            Error::BinOutOfRange { .. } => "bin_out_of_range",
            Error::DegenerateBins(_) => "degenerate_bins",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidLossSpec(_) => "invalid_loss_spec",
            Error::Parse { .. } => "parse",
            Error::NonFiniteGradient { .. } => "non_finite_gradient",
            Error::Domain(_) => "domain",
            Error::MissingData(_) => "missing_data",
            Error::NoAdmissiblePairs => "no_admissible_pairs",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
