use thiserror::Error;

use crate::fockstate::StateError;
use crate::infotheory::InfoError;

/// A parameter outside its admissible range.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid {name} = {value}: {reason}")]
pub struct ConfigError {
    pub name: &'static str,
    pub value: f64,
    pub reason: &'static str,
}

impl ConfigError {
    pub(crate) fn new(name: &'static str, value: f64, reason: &'static str) -> Self {
        Self { name, value, reason }
    }
}

/// Checks `low < value <= high` (or `low <= value` when `low_inclusive`).
pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    low: f64,
    low_inclusive: bool,
    high: f64,
) -> std::result::Result<f64, ConfigError> {
    let above = if low_inclusive { value >= low } else { value > low };
    if value.is_finite() && above && value <= high {
        Ok(value)
    } else {
        let reason = if low_inclusive {
            "must lie in the closed unit interval"
        } else {
            "must lie in (0, 1]"
        };
        Err(ConfigError::new(name, value, reason))
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
