use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown example `{0}` (known: p1, p2, p1xp1, bl1p2, bl2p2, bl3p2)")]
    UnknownExample(String),

    #[error("invalid polytope: {}", .0.join("; "))]
    InvalidPolytope(Vec<String>),

    #[error("polytope parse error on line {line}: {msg}")]
    PolytopeParse { line: usize, msg: String },

    #[error("weight is not positive on P: g({at:?}) = {value}")]
    WeightNotPositive { at: Vec<f64>, value: f64 },

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("convexity violated at node {node} (x = {x:?}): relative eigenvalue {eig:.3e}")]
    Convexity { node: usize, x: Vec<f64>, eig: f64 },

    #[error("weight evaluated at a point where g <= 0 (node {node})")]
    WeightDomain { node: usize },

    #[error("truncation tail {tail:.3e} exceeds tolerance {tol:.3e}; enlarge the box")]
    Truncation { tail: f64, tol: f64 },

    #[error("s-quadrature not converged: Richardson gap {gap:.3e}")]
    Quadrature { gap: f64 },

    #[error("singular Gram matrix in extremal projection")]
    SingularGram,

    #[error("linear solve failed: {0}")]
    Linear(String),

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("translation leaves the box: |s|*|xi| = {shift} > R/4 = {limit}")]
    TranslationRange { shift: f64, limit: f64 },

    #[error("shooting bracket failure: {0}")]
    Bracket(String),

    #[error("malformed record: {0}")]
    Record(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
