use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("welfare argmax is ambiguous: regimes {0:?} are tied")]
    AmbiguousArgmax(Vec<usize>),

    #[error("q is off the simplex: {0}")]
    OffSimplex(String),

    #[error("linear program infeasible: observed distribution is inconsistent with the model (Assumption B fails)")]
    Infeasible,

    #[error("numeric failure in LP solve: {0}")]
    Numeric(String),

    #[error("cycle detected in welfare ordering (numerical contradiction): {0:?}")]
    Cycle(Vec<usize>),

    #[error("internal consistency check failed: {0}")]
    Inconsistency(String),

    #[error("assumptions jointly exclude every latent state (contradiction)")]
    EmptyMask,

    #[error("insufficient data in cell {cell} at period {t}: {n} < {n_min} observations")]
    InsufficientData { t: usize, cell: String, n: usize, n_min: usize },

    #[error("no observations with instrument value {0}")]
    EmptyInstrumentCell(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
