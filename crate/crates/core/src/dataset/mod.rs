//! Supervised query samples around labeled meshes and their file format.

mod format;
mod generate;

pub use format::{read_query_set, write_query_set, QUERY_SET_VERSION};
pub use generate::{
    generate_query_set, label_positions, make_scene_record, scene_record_from, QueryConfig, QuerySample, QuerySet,
    SceneRecord,
};
