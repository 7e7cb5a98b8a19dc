//! Deformation fields on disk: the compared DTM as a PLY mesh whose vertices
//! carry `displacement_m`, `rate_mm_day` and `valid`, with the epoch pair,
//! interval and projection plane in header comments.

use super::distance::DeformationField;
use super::mesh::{ProjectionPlane, TriangleMesh};
use super::regions::rate_field;
use crate::cloud::{parse_mesh_ply, ply_comments, write_mesh_ply_with_comments, PlyEncoding, Vec3};
use crate::error::{Error, Result};

pub const DISPLACEMENT: &str = "displacement_m";
pub const RATE: &str = "rate_mm_day";
pub const VALID: &str = "valid";

pub fn write_field_ply(mesh: &TriangleMesh, field: &DeformationField) -> Result<Vec<u8>> {
    if field.values.len() != mesh.vertices.len() || field.valid.len() != mesh.vertices.len() {
        return Err(Error::param("field does not match mesh"));
    }
    let mut cloud = mesh.to_cloud();
    cloud.epoch_id = field.compared_epoch.clone();
    cloud.set_scalar(DISPLACEMENT, field.values.clone())?;
    cloud.set_scalar(RATE, rate_field(field)?)?;
    cloud.set_scalar(VALID, field.valid.iter().map(|&v| f64::from(u8::from(v))).collect())?;
    let n = mesh.plane.normal;
    let comments = [
        format!("reference_epoch {}", field.reference_epoch),
        format!("interval_days {}", field.interval_days),
        format!("plane {} {} {} {}", n.x, n.y, n.z, mesh.plane.offset),
    ];
    Ok(write_mesh_ply_with_comments(
        &cloud,
        &mesh.triangles,
        PlyEncoding::BinaryLittleEndian,
        true,
        &comments,
    ))
}

/// Inverse of [`write_field_ply`]. Rates are recomputed from displacement
/// and interval; a missing plane comment falls back to the best-fit plane.
pub fn read_field_ply(bytes: &[u8]) -> Result<(TriangleMesh, DeformationField)> {
    let comments = ply_comments(bytes)?;
    let (cloud, faces) = parse_mesh_ply(bytes)?;
    let value = |key: &str| comments.iter().find_map(|c| c.strip_prefix(key).map(str::trim));
    let interval_days: f64 = value("interval_days ")
        .ok_or_else(|| Error::Format("field file lacks an interval_days comment".into()))?
        .parse()
        .map_err(|_| Error::Format("invalid interval_days comment".into()))?;
    let plane = match value("plane ") {
        Some(text) => {
            let v: Vec<f64> = text
                .split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::Format(format!("invalid plane comment `{text}`")))
                })
                .collect::<Result<_>>()?;
            if v.len() != 4 {
                return Err(Error::Format(format!("invalid plane comment `{text}`")));
            }
            Some(ProjectionPlane::new(Vec3::new(v[0], v[1], v[2]), v[3])?)
        }
        None => None,
    };
    let values = cloud
        .scalar(DISPLACEMENT)
        .ok_or_else(|| Error::Format(format!("field file lacks `{DISPLACEMENT}`")))?
        .to_vec();
    let valid = match cloud.scalar(VALID) {
        Some(v) => v.iter().map(|&x| x != 0.0).collect(),
        None => values.iter().map(|x| x.is_finite()).collect(),
    };
    let field = DeformationField {
        values,
        valid,
        interval_days,
        compared_epoch: cloud.epoch_id.clone(),
        reference_epoch: value("reference_epoch ").unwrap_or_default().to_string(),
    };
    let mesh = TriangleMesh::from_parts(&cloud, faces, plane)?;
    Ok((mesh, field))
}
