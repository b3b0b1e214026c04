use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} is not SPD")]
    NotSpd { what: String },

    #[error("rate row sum: row {row} sums to {sum:e}")]
    RateRowSum { row: usize, sum: f64 },

    #[error("negative rate {value} at ({from}, {to})")]
    NegativeRate { from: usize, to: usize, value: f64 },

    #[error("simplex violation in {what}: {detail}")]
    Simplex { what: String, detail: String },

    #[error("invalid step: {0}")]
    InvalidStep(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("observation time {time} is not on the grid (h = {step})")]
    OffGrid { time: f64, step: f64 },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid observations: {0}")]
    InvalidObservations(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),

    #[error("non-finite {what} at grid index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("filter degenerate at grid index {index}: all mode probabilities vanished")]
    DegenerateFilter { index: usize },

    #[error("thinning bound violated: exit rate {rate} exceeds bound {bound} at t = {time}")]
    ThinningBound { rate: f64, bound: f64, time: f64 },

    #[error("empty sample store")]
    EmptyStore,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("sweep {sweep}: {source}")]
    Sweep {
        sweep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Sweep { source, .. } => source.exit_code(),
            Error::NonFinite { .. }
            | Error::DegenerateFilter { .. }
            | Error::ThinningBound { .. } => 3,
            Error::Io(_) => 4,
            _ => 2,
        }
    }

    pub(crate) fn not_spd(what: impl Into<String>) -> Self {
        Error::NotSpd { what: what.into() }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(io::Error::other(e.to_string()))
        } else {
            Error::Parse(e.to_string())
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                other => Error::Parse(format!("{other:?}")),
            }
        } else {
            Error::Parse(e.to_string())
        }
    }
}
