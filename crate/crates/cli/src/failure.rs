use std::fmt;

use sgcr_core::Error;

/// A message plus the process exit code it maps to:
/// 2 bad config or missing input, 3 degenerate data, 4 numerical failure.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    /// Tags a core error with the stage that raised it.
    pub fn stage(stage: &str, err: Error) -> Self {
        let code = match err {
            Error::Degenerate(_) | Error::TooFewGaussians { .. } | Error::EmptySet | Error::DimensionMismatch(..) => 3,
            Error::Numerical(_) => 4,
            _ => 2,
        };
        Failure {
            code,
            message: format!("{stage}: {err}"),
        }
    }

    pub fn io(stage: &str, what: &std::path::Path, err: std::io::Error) -> Self {
        Failure {
            code: 2,
            message: format!("{stage}: {}: {err}", what.display()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
