//! Turning a distance field into geometry: dense point clouds by gradient
//! projection, meshes by marching cubes over the `d = level` shell, and
//! per-point semantic labels.

mod dense;
mod field;
mod mesh;
mod tables;
#[cfg(test)]
mod tests;

pub use dense::{extract_dense_points, project_points, project_step, DenseConfig, DensePoints};
pub use field::{ConstantField, DistanceField, GradientMode, ModelField, PlaneField, SphereField};
pub use mesh::{evaluate_grid, extract_mesh, marching_cubes, Grid};

use crate::model::{FeatureCloud, RangeUdf};
use crate::{Error, Result};

pub const DEFAULT_LEVEL: f64 = 0.003;
pub const DEFAULT_RESOLUTION: usize = 128;

/// Argmax semantic class of every point.
pub fn label_points(model: &RangeUdf<f32>, cloud: &FeatureCloud, points: &[[f32; 3]]) -> Result<Vec<u32>> {
    if model.config().classes < 2 {
        return Err(Error::Validation(
            "labeling needs a model with at least two classes".into(),
        ));
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    Ok(model.predict(cloud, points)?.labels())
}
