use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at record {record}: {message}")]
    Parse { record: usize, message: String },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("degenerate correspondences: {0}")]
    DegenerateCorrespondences(String),

    #[error("no correspondences within {max_pair_dist} m at the first iteration")]
    NoOverlap { max_pair_dist: f64 },

    #[error("insufficient geometry: {0}")]
    InsufficientGeometry(String),

    #[error("views are disconnected; components: {components:?}")]
    DisconnectedViews { components: Vec<Vec<usize>> },

    #[error("too sparse: {points} points, need at least {required}")]
    TooSparse { points: usize, required: usize },

    #[error("invalid plane: {0}")]
    InvalidPlane(String),

    #[error("cloth simulation did not converge: residual {residual} m after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("degenerate surface: {0}")]
    DegenerateSurface(String),

    #[error("reference mesh is empty")]
    EmptyReference,

    #[error("deformation field has no valid vertices")]
    NoValidVertices,

    #[error("motion vector is undefined: zero motion on a horizontal plane")]
    UndefinedMotionVector,

    #[error("invalid interval: {0}")]
    InvalidInterval(String),

    #[error("id mismatch: {0}")]
    IdMismatch(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn parse(record: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            record,
            message: message.into(),
        }
    }

    pub fn param(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
