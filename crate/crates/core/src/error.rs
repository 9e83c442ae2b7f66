use std::path::PathBuf;

use crate::grid::GridCell;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument `{param}`: {reason}")]
    InvalidArgument { param: &'static str, reason: String },

    #[error("cell {cell} is outside the {rows}x{cols} grid")]
    CellOutOfBounds { cell: GridCell, rows: usize, cols: usize },

    #[error("no trainable configuration: every grid cell is masked")]
    NoTrainableConfiguration,

    #[error("trial record for cell {0} has no epochs")]
    EmptyRecord(GridCell),

    #[error("missing records for cells {missing:?}; duplicate records for cells {duplicate:?}")]
    CellCoverage { missing: Vec<GridCell>, duplicate: Vec<GridCell> },

    #[error("incomplete trials for cells {0:?}")]
    IncompleteTrials(Vec<GridCell>),

    #[error("scheduler contract violated: {0}")]
    Contract(String),

    #[error("{method} requires {requirement}")]
    MissingSurface { method: &'static str, requirement: &'static str },

    #[error("schema violation in field `{field}`: {reason}")]
    Schema { field: &'static str, reason: String },

    #[error("{}:{line}: {reason}", path.display())]
    Corrupt { path: PathBuf, line: usize, reason: String },

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("internal invariant broken: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invalid(param: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            param,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
