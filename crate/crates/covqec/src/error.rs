use thiserror::Error;

/// Errors surfaced by the numerical layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("dimension overflow building a {0}-subsystem space")]
    DimensionOverflow(usize),

    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),

    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("not trace one (trace {0:.6})")]
    NotTraceOne(f64),

    #[error("not an isometry (||V^dag V - I|| = {0:.3e})")]
    NotIsometry(f64),

    #[error("channel is not trace preserving (deviation {0:.3e})")]
    NotTracePreserving(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sdp solver failure: {0}")]
    Solver(String),

    #[error("ill-posed problem data: {0}")]
    IllPosed(String),

    #[error("descriptor error: {0}")]
    Descriptor(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
