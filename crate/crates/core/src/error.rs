use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate parametrization at (t, s) = ({t}, {s}): tangent vectors are dependent")]
    DegenerateParametrization { t: f64, s: f64 },

    #[error("squares are not transverse: min |Q| = {min_form} < nu = {nu}")]
    NotTransverse { min_form: f64, nu: f64 },

    #[error("poisoned estimate: non-finite sample at x = {x:?}")]
    Poisoned { x: Vec<f64> },

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("unknown scenario kind `{0}`")]
    UnknownScenario(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("division guard: {0}")]
    DivisionGuard(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what}: {values:?}")))
    }
}
