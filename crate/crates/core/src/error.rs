use thiserror::Error;

/// Errors produced by any stage of the change-detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("spatial index is empty")]
    EmptyIndex,
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("depth must be > 0, got {0}")]
    InvalidDepth(f64),
    #[error("point cloud has no normals")]
    MissingNormals,
    #[error("point cloud has no colors")]
    MissingColors,
    #[error("supervoxel graph has no priors assigned")]
    UnsetPriors,
    #[error("labelings refer to different graphs ({0} vs {1} nodes)")]
    GraphMismatch(usize, usize),
    #[error("ground truth voxel set is empty but prediction is not")]
    EmptyGroundTruth,
    #[error("invalid scene spec: {0}")]
    SpecViolation(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("matrix is not a rotation (line {0})")]
    InvalidRotation(usize),
    #[error("scene contains no renderable geometry")]
    EmptyScene,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("pipeline stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
