//! Diagnostics that operations attach to their results instead of logging.

use serde::{Deserialize, Serialize};

/// A non-fatal observation made while processing a record.
///
/// Operations that tolerate dirty data (clock skew, missing logs, unparseable
/// sources) return these alongside their result so callers can surface them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// What the diagnostic is about, e.g. a job ref or file path.
    pub context: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(context: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { context: context.into(), message: message.into() }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.context, self.message)
    }
}
