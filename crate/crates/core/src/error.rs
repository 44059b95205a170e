//! Error and diagnostic types shared across the crate.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// A single failed invariant, reported by the validation routines.
///
/// `cell_index` is `None` for scenario-level problems (e.g. `x0 <= 0`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub cell_index: Option<usize>,
    pub message: String,
}

impl Violation {
    pub fn cell(index: usize, message: impl Into<String>) -> Self {
        Self {
            cell_index: Some(index),
            message: message.into(),
        }
    }

    pub fn global(message: impl Into<String>) -> Self {
        Self {
            cell_index: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.cell_index {
            Some(i) => write!(f, "cell {}: {}", i, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

fn render_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Structurally malformed arguments (dimension mismatches, empty grids,
    /// non-tiling segments and the like).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Arguments outside the mathematical domain of an operation
    /// (wealth outside the utility domain, time outside the horizon).
    #[error("domain error: {0}")]
    Domain(String),

    /// A scenario or schedule failed validation; every broken invariant is listed.
    #[error("validation failed: {}", render_violations(.0))]
    Validation(Vec<Violation>),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
