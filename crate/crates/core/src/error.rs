use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the reconstruction stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("face {face} references vertex {vertex} but the mesh has {count} vertices")]
    VertexOutOfRange { face: usize, vertex: usize, count: usize },
    #[error("face {face} is degenerate: {vertices:?}")]
    DegenerateFace { face: usize, vertices: [usize; 3] },
    #[error("edge ({0}, {1}) is non-manifold: shared by {2} faces")]
    NonManifoldEdge(usize, usize, usize),
    #[error("vertex {0} has no incident edge")]
    IsolatedVertex(usize),
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("mesh has zero surface area")]
    ZeroArea,

    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("k = {k} exceeds the number of indexed points ({n})")]
    TooManyNeighbors { k: usize, n: usize },
    #[error("point set is empty")]
    EmptyPointSet,

    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("voxel budget too small: {0}")]
    BudgetTooSmall(String),

    #[error("part data mismatch: {0}")]
    PartMismatch(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
