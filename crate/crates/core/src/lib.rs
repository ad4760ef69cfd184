//! Discovery of 3D objects as changes between two aligned scans of the same
//! scene: depth-map differencing, dominant rigid-motion estimation, and
//! transformation-consistency graph cuts over a supervoxel graph, followed
//! by connected-component object extraction and evaluation.

pub mod detect;
pub mod discover;
pub mod error;
pub mod eval;
pub mod features;
pub mod geom;
pub mod kdtree;
pub mod maxflow;
pub mod motion;
pub mod optimize;
pub mod pipeline;
pub mod ply;
pub mod render;
pub mod supervoxel;
pub mod synth;

pub use error::{Error, Result};
pub use geom::{Point3, PointCloud, RigidTransform, TriangleMesh, VoxelKey};
pub use pipeline::{Mode, PipelineConfig, RunReport};
pub use render::{CameraPose, DepthMap};
