use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("pole: {0}")]
    Pole(String),
    #[error("term budget of {max_terms} exhausted: {what}")]
    Budget { max_terms: usize, what: String },
    #[error("zero argument: {0}")]
    ZeroArgument(String),
    #[error("divergent series: {0}")]
    DivergentSeries(String),
    #[error("invalid base: {0}")]
    InvalidBase(String),
    #[error("invalid number `{0}`")]
    InvalidNumber(String),
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("identity {id}: undeclared symbol `{symbol}`")]
    UndeclaredSymbol { id: String, symbol: String },
    #[error("duplicate identity id `{0}`")]
    DuplicateId(String),
    #[error("no identity with id `{0}`")]
    NotFound(String),
    #[error("sampling exhausted for {id} after {attempts} rejections")]
    SamplingExhausted { id: String, attempts: usize },
    #[error("catalog error in {file}: {message}")]
    Catalog { file: String, message: String },
    #[error("{path}: {source}")]
    Eval {
        path: String,
        #[source]
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Wrap with an AST location, prepending to an existing path.
    pub fn at(self, segment: &str) -> Error {
        match self {
            Error::Eval { path, source } => Error::Eval {
                path: format!("{segment}/{path}"),
                source,
            },
            other => Error::Eval {
                path: segment.to_string(),
                source: Box::new(other),
            },
        }
    }

    /// The underlying error with any AST path stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Eval { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
        Error::Syntax {
            line,
            column,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
