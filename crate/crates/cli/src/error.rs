use crate::expr::ParseError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] kqlab_core::Error),

    #[error("weight '{name}': {source}")]
    Weight { name: String, source: ParseError },

    #[error("config: {0}")]
    Config(String),

    #[error("chain link '{link}' violated at k = {k}, m = {m}: slack {slack:e} below -{tol:e}")]
    ChainViolation {
        link: &'static str,
        k: u32,
        m: u32,
        slack: f64,
        tol: f64,
    },

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type LabResult<T> = std::result::Result<T, LabError>;
