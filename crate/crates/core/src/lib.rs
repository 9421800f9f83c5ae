//! Surface reconstruction from point clouds by optimizing an edge-convolution
//! network that deforms a closed initial mesh onto the points.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops over xyz components read better than zipped iterators here.
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod corrupt;
pub mod diff;
pub mod error;
pub mod fixtures;
pub mod geom;
pub mod io;
pub mod loss;
pub mod mesh;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod remesh;
pub mod spatial;

pub use error::{Error, Result};
pub use mesh::{Mesh, PointCloud};
