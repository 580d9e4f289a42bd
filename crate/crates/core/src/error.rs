use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum XambaError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("numeric error at {node}: {msg}")]
    Numeric { node: String, msg: String },
    #[error("missing input node {0}")]
    MissingInput(usize),
    #[error("arity error: {kind} expects {expected} inputs, got {got}")]
    Arity { kind: String, expected: String, got: usize },
    #[error("shape inference failed at node {node}: {msg}")]
    ShapeInference { node: usize, msg: String },
    #[error("unsupported rewrite at node {node}: {msg}")]
    UnsupportedRewrite { node: usize, msg: String },
    #[error("unsupported cost: {0}")]
    UnsupportedCost(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt data: {0}")]
    Corruption(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("signature mismatch: {0}")]
    Signature(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, XambaError>;
