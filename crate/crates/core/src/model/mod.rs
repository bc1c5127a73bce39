//! The range-aware distance head, the surface-oriented semantic head and
//! their ablations, on top of the point-feature encoder.

mod config;
mod net;

pub use config::{ModelConfig, RangeInput, POOLED_WIDTH, RANGE_WIDTH, SEM_HIDDEN, UDF_HIDDEN};
pub use net::{
    INITIAL_DISTANCE,
    idw_baseline_interpolate, range_input, FeatureCloud, HeadOutput, NeighborBundle, Prediction,
    QueryBatch, RangeUdf,
};

#[cfg(test)]
mod tests;
