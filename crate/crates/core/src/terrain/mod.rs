//! Per-epoch DTMs, signed epoch-to-epoch change, rates and change regions.

mod distance;
mod field_file;
mod mesh;
mod regions;

pub use distance::{closest_point_on_triangle, mesh_distance, DeformationField, DistanceParams};
pub use field_file::{read_field_ply, write_field_ply};
pub use mesh::{build_dtm, Dtm, ProjectionPlane, TriangleMesh};
pub use regions::{
    field_stats, field_stats_unmasked, fill_volumes, rate_field, region_volume, significant_regions, FieldStats, Region,
};
