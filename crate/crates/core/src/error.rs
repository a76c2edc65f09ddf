use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {name}: {value} ({reason})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("expected a {expected} problem, found {found}")]
    FamilyMismatch {
        expected: crate::allocation::Family,
        found: crate::allocation::Family,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no feasible root: spend stays {side} the budget {budget} across the search bracket")]
    NoFeasibleRoot { budget: f64, side: &'static str },

    #[error("bisection did not converge: best c = {best_c}, residual = {residual}")]
    NonConvergence { best_c: f64, residual: f64 },

    #[error("privacy budget exceeded: consumed {consumed} + requested {requested} > cap {cap}")]
    BudgetExceeded {
        consumed: f64,
        requested: f64,
        cap: f64,
    },

    #[error("invalid config: {0}")]
    Config(String),
}

/// Rejects non-finite and negative values.
pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite",
        });
    }
    if value < 0.0 {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be non-negative",
        });
    }
    Ok(value)
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite",
        });
    }
    if value <= 0.0 {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive",
        });
    }
    Ok(value)
}
