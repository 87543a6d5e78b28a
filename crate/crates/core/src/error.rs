use std::io;

/// Errors produced by the layout, bandit, decoder and session pipelines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("grid size {n_g} exceeds frame dimensions {width}x{height}")]
    GridTooLarge { n_g: usize, width: usize, height: usize },

    #[error("position ({x}, {y}) lies outside the {n_g}x{n_g} grid")]
    OutOfGrid { x: i64, y: i64, n_g: usize },

    #[error("no feasible position for object {object}")]
    Infeasible { object: usize },

    #[error("design matrix is not positive definite")]
    Singular,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("class {0} has no training samples")]
    MissingClass(usize),

    #[error("requested samples [{start}, {end}) were overwritten (oldest resident sample is {oldest})")]
    Overwritten { start: u64, end: u64, oldest: u64 },

    #[error("requested samples [{start}, {end}) are not written yet (counter is {counter})")]
    NotYetWritten { start: u64, end: u64, counter: u64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
