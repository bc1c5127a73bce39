//! Triangle meshes: loading, unit-cube normalization, exact closest-point
//! queries through a BVH, and area-weighted surface sampling.

mod bvh;
mod closest;
pub mod io;
mod mesh;
mod sample;
pub mod vec3;

pub use bvh::{NearestHit, SpatialIndex};
pub use closest::{closest_point_triangle, ClosestPoint, Region};
pub use io::{load_mesh, write_labels, write_mesh_ply};
pub use mesh::{normalize_unit_cube, Aabb, CubeTransform, TriangleMesh};
pub use sample::{sample_surface, SurfaceSamples};
pub(crate) use sample::sample_surface_with;
