use thiserror::Error;

/// Errors shared by every module of the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor dimension is zero or the element count overflows.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A slice or index falls outside the tensor.
    #[error("bounds error: {0}")]
    Bounds(String),

    /// A layer precondition is violated. `layer` is the index in the
    /// network's layer list when the failure is attributable to one.
    #[error("shape error{}: {msg}", fmt_layer(.layer))]
    Shape { layer: Option<usize>, msg: String },

    /// The utterance is shorter than the receptive field.
    #[error("input too short: need at least {needed} time frames, got {got}")]
    InputTooShort { needed: usize, got: usize },

    /// Network description file does not parse.
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    /// Network description parses but fails shape inference.
    #[error("semantic error at layer {layer}: {msg}")]
    Semantic { layer: usize, msg: String },

    /// densify applied to a net that is already dense.
    #[error("network is already dense")]
    AlreadyDense,

    /// A layer arrangement the densify pass cannot rewrite.
    #[error("unsupported feature: {0}")]
    Unsupported(String),

    /// An operation was given a net in the wrong mode.
    #[error("mode mismatch: expected {expected} network, got {found}")]
    ModeMismatch { expected: &'static str, found: &'static str },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn fmt_layer(layer: &Option<usize>) -> String {
    match layer {
        Some(i) => format!(" at layer {i}"),
        None => String::new(),
    }
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape { layer: None, msg: msg.into() }
    }

    pub fn shape_at(layer: usize, msg: impl Into<String>) -> Self {
        Error::Shape { layer: Some(layer), msg: msg.into() }
    }

    /// Attach a layer index to a shape error that does not carry one yet.
    pub fn at_layer(self, index: usize) -> Self {
        match self {
            Error::Shape { layer: None, msg } => Error::Shape { layer: Some(index), msg },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
