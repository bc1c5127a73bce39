//! Range-aware unsigned distance fields with surface-oriented semantic
//! segmentation: training-data generation from labeled triangle meshes, a
//! small reverse-mode autodiff engine, the network itself, training, dense
//! point / mesh extraction and reconstruction and segmentation metrics.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values,
// and per-axis index loops read better than zipped iterators in geometry code.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dataset;
pub mod error;
pub mod extraction;
pub mod geom;
pub mod metrics;
pub mod model;
pub mod pointnet;
pub mod scenes;
pub mod training;
pub mod tensor;

pub use error::{Error, Result};
