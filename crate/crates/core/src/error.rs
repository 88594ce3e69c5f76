use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("STL parse error at byte {offset}: {message}")]
    StlParse { offset: usize, message: String },

    #[error("geometry contains no triangles")]
    EmptyGeometry,

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("singular system: {zero_modes} zero-energy mode(s) ({detail})")]
    Singular { zero_modes: usize, detail: String },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("point ({x}, {y}, {z}) lies outside the cell grid")]
    OutsideGrid { x: f64, y: f64, z: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid index {index} (k = {k})")]
    InvalidIndex { index: usize, k: usize },

    #[error("boundary region does not intersect any active cell: {0}")]
    EmptyRegion(String),

    #[error("model has not been solved: {0}")]
    Unsolved(String),

    #[error("job file error: {0}")]
    Job(String),

    #[error("matrix file error at line {line}: {message}")]
    MatrixFormat { line: usize, message: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Whether the error stems from user input rather than from a failed computation.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::StlParse { .. }
            | Error::EmptyGeometry
            | Error::Job(_)
            | Error::MatrixFormat { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::InvalidIndex { .. }
            | Error::Unsolved(_) => true,
            Error::Stage { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}
