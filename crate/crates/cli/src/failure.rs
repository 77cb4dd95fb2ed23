//! Machine-readable failures: `{code, message, context}` on stderr.

use serde::Serialize;
use serde_json::{json, Value};

/// Process exit codes.
pub mod exit {
    /// Numerical failure inside a computation.
    pub const COMPUTE: i32 = 1;
    /// Bad input: flags, config, CSV, measurements.
    pub const INPUT: i32 = 2;
    /// A fit ran but did not converge; its result is still written.
    pub const NOT_CONVERGED: i32 = 3;
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub code: String,
    pub message: String,
    pub context: Value,
    #[serde(skip)]
    pub exit_code: i32,
}

impl Failure {
    fn new(code: &str, message: impl Into<String>, exit_code: i32) -> Self {
        Failure {
            code: code.to_string(),
            message: message.into(),
            context: Value::Object(Default::default()),
            exit_code,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("usage", message, exit::INPUT)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message, exit::INPUT)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new("io", message, exit::INPUT)
    }

    pub fn csv(message: impl Into<String>, row: usize, column: Option<usize>) -> Self {
        Self::new("csv_parse", message, exit::INPUT).with_context(json!({ "row": row, "column": column }))
    }

    pub fn not_converged(message: impl Into<String>) -> Self {
        Self::new("fit_not_converged", message, exit::NOT_CONVERGED)
    }

    pub fn with_context(mut self, context: Value) -> Self {
        self.context = context;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("failure serializes")
    }
}

impl From<tqd::Error> for Failure {
    fn from(err: tqd::Error) -> Self {
        use tqd::Error as E;
        let exit_code = match err {
            E::Usage(_) | E::InvalidSpec(_) | E::Trace(_) | E::UnderDetermined { .. } => exit::INPUT,
            _ => exit::COMPUTE,
        };
        let context = match &err {
            E::UnderDetermined { rank, missing } => json!({ "rank": rank, "admissible_completions": missing }),
            E::Quadrature { estimate, tolerance, evaluations, context } => json!({
                "estimate": estimate,
                "tolerance": tolerance,
                "evaluations": evaluations,
                "detail": context,
            }),
            E::NotHermitian { deviation } => json!({ "deviation": deviation }),
            _ => json!({}),
        };
        Failure {
            code: err.code().to_string(),
            message: err.to_string(),
            context,
            exit_code,
        }
    }
}
