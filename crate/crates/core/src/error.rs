use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: expected 3 whitespace-separated fields, found {found}")]
    MalformedLine { line: usize, found: usize },

    #[error("line {line}: duplicate triple ({k}, {q}, {v})")]
    DuplicateTriple {
        line: usize,
        k: String,
        q: String,
        v: String,
    },

    #[error("line {line}: ({k}, {q}) already maps to {existing}, cannot also map to {v}")]
    NotFunctional {
        line: usize,
        k: String,
        q: String,
        existing: String,
        v: String,
    },

    #[error("database is empty")]
    EmptyDatabase,

    #[error("infeasible database config: {n_triples} triples need distinct (k,q) pairs but only {capacity} exist")]
    InfeasibleConfig { n_triples: usize, capacity: usize },

    #[error("index {index} out of range for axis of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid rank {rank} for tensor: {reason}")]
    InvalidRank { rank: usize, reason: String },

    #[error("invalid layer config: {0}")]
    InvalidConfig(String),

    #[error("token id {id} out of range for vocabulary of size {n_vocab}")]
    TokenOutOfRange { id: usize, n_vocab: usize },

    #[error("threshold {0} outside [0.5, 1]")]
    TauOutOfRange(f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("scale numerically unreachable: c = {c} would exceed the exponent guard")]
    ScaleUnreachable { c: f64 },

    #[error("failed to sample well-separated sphere points after {attempts} attempts")]
    SamplingFailed { attempts: usize },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("nothing to render: {0}")]
    EmptyGrid(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
