//! kNN neighborhoods and the per-point feature extractor.

mod encoder;
mod kdtree;

pub use encoder::{EncoderConfig, EncoderLayout, Hierarchy, Level, LEVELS, RELPOS_WIDTH};
pub use kdtree::KdTree;
