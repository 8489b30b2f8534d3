use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("quantization code {code} outside [-{max}, {max}]")]
    CodeRange { code: i32, max: i32 },

    #[error("layer {layer} does not fit in {memory}: needs {needed} bytes, has {available} (deficit {} bytes)", needed - available)]
    Capacity {
        layer: usize,
        memory: &'static str,
        needed: u64,
        available: u64,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_layer(self, layer: usize) -> Self {
        match self {
            e @ Error::Layer { .. } => e,
            e => Error::Layer {
                layer,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, skipping layer context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Layer { source, .. } => source.root(),
            e => e,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
