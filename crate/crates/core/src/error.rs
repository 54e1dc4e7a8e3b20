use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("state space too large: {0}")]
    TooLarge(String),
    #[error("singular {block} block (pivot {pivot:e})")]
    Singular { block: String, pivot: f64 },
    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e} in {block}")]
    Residual {
        block: String,
        residual: f64,
        tolerance: f64,
    },
    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("undefined correlation: denominator {0:e} below threshold")]
    UndefinedCorrelation(f64),
    #[error("no T = R crossing found in [{lo}, {hi}]")]
    NoCrossing { lo: f64, hi: f64 },
    #[error("grid error: {0}")]
    Grid(String),
    #[error("steady state did not converge: {0}")]
    NoConvergence(String),
    #[error("sample {index} (seed {seed}, stream {index}) failed: {source}")]
    Sample {
        index: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
