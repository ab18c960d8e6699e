use crate::model_graph::Violation;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // Transparent so callers that add their own context (e.g. the file path)
    // don't end up printing the underlying message twice.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("invalid graph:{}", render_violations(.0))]
    InvalidGraph(Vec<Violation>),

    #[error("unknown tensor id `{0}`")]
    UnknownTensor(String),

    #[error("unknown op id `{0}`")]
    UnknownOp(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("op `{op}`: {msg}")]
    Op { op: String, msg: String },

    #[error("bad execution order: {0}")]
    BadOrder(String),

    #[error("planning: {0}")]
    Plan(String),

    #[error("structural: {0}")]
    Structural(String),

    #[error("model zoo: {0}")]
    Zoo(String),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

fn render_violations(violations: &[Violation]) -> String {
    let mut out = String::new();
    for v in violations {
        out.push_str("\n  - ");
        out.push_str(&v.to_string());
    }
    out
}

impl Error {
    /// Convenience constructor for per-op errors.
    pub fn op(op: &str, msg: impl Into<String>) -> Self {
        Error::Op {
            op: op.to_string(),
            msg: msg.into(),
        }
    }
}
