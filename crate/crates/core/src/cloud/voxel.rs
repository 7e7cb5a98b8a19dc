use std::collections::HashMap;

use super::{Point3, PointCloud, Vec3};
use crate::error::{Error, Result};

pub(crate) fn voxel_key(p: &Point3, cell: f64) -> (i64, i64, i64) {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

/// One centroid per occupied cubic cell, in order of first occupancy.
/// Scalar channels are averaged; normals and labels are dropped.
pub fn voxel_downsample(cloud: &PointCloud, cell: f64) -> Result<PointCloud> {
    if !(cell > 0.0) || !cell.is_finite() {
        return Err(Error::param(format!("voxel cell must be positive, got {cell}")));
    }
    let mut slot: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut sums: Vec<(Vec3, usize)> = Vec::new();
    let mut members: Vec<usize> = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        let next = sums.len();
        let s = *slot.entry(voxel_key(p, cell)).or_insert(next);
        if s == next {
            sums.push((Vec3::zeros(), 0));
        }
        sums[s].0 += p.coords;
        sums[s].1 += 1;
        members.push(s);
    }
    let points = sums.iter().map(|(sum, n)| Point3::from(sum / *n as f64)).collect();
    let mut out = PointCloud::new(points);
    out.epoch_id = cloud.epoch_id.clone();
    out.origin_shift = cloud.origin_shift;
    for (name, values) in &cloud.scalars {
        let mut acc = vec![0.0; sums.len()];
        for (v, &s) in values.iter().zip(&members) {
            acc[s] += v;
        }
        for (a, (_, n)) in acc.iter_mut().zip(&sums) {
            *a /= *n as f64;
        }
        out.scalars.insert(name.clone(), acc);
    }
    Ok(out)
}
