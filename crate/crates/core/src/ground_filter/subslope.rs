use std::collections::BTreeMap;

use nalgebra::{Rotation3, Unit};
use serde::{Deserialize, Serialize};

use crate::cloud::{fit_plane, Point3, PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::registration::RigidTransform;

pub type CellId = (i64, i64);

/// A horizontal grid cell of the slope with its own best-fit plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubSlope {
    pub cell_id: CellId,
    /// Points owned by the cell (including merged sparse neighbors) followed
    /// by overlap-margin points owned by other cells.
    pub member_indices: Vec<usize>,
    /// How many leading entries of `member_indices` the cell owns.
    pub owned: usize,
    pub normal: Vec3,
    pub centroid: Point3,
    /// Minimal rotation taking `normal` to +z.
    pub level_rotation: RigidTransform,
}

impl SubSlope {
    /// Offset `d` of the plane `normal · p = d`.
    pub fn offset(&self) -> f64 {
        self.normal.dot(&self.centroid.coords)
    }

    pub fn plane_distance(&self, p: &Point3) -> f64 {
        (p - self.centroid).dot(&self.normal)
    }

    pub fn owned_indices(&self) -> &[usize] {
        &self.member_indices[..self.owned]
    }
}

/// Smallest rotation taking unit `n` to +z; a half turn about x when `n` is −z.
pub fn leveling_rotation(n: &Vec3) -> Result<RigidTransform> {
    let norm = n.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidPlane("plane normal is zero or not finite".into()));
    }
    let n = n / norm;
    let z = Vec3::z();
    let axis = n.cross(&z);
    let s = axis.norm();
    let c = n.dot(&z);
    let rotation = if s < 1e-15 {
        if c > 0.0 {
            Rotation3::identity()
        } else {
            Rotation3::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI)
        }
    } else {
        Rotation3::from_axis_angle(&Unit::new_normalize(axis), s.atan2(c))
    };
    Ok(RigidTransform::new(rotation.into_inner(), Vec3::zeros()))
}

fn cell_of(p: &Point3, cell: f64) -> CellId {
    ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
}

/// Buckets the cloud on a horizontal grid of `cell_size`, merges cells with
/// fewer than `min_points` into the nearest populated cell, fits a plane per
/// cell and adds neighbors' points lying within `margin` of the cell border.
pub fn partition_subslopes(
    cloud: &PointCloud,
    cell_size: f64,
    margin: f64,
    min_points: usize,
) -> Result<Vec<SubSlope>> {
    if !(cell_size > 0.0) {
        return Err(Error::param(format!("cell size must be positive, got {cell_size}")));
    }
    if !(margin >= 0.0) {
        return Err(Error::param("margin must be non-negative"));
    }
    let min_points = min_points.max(3);
    if cloud.len() < min_points {
        return Err(Error::TooSparse {
            points: cloud.len(),
            required: min_points,
        });
    }
    let mut cells: BTreeMap<CellId, Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        cells.entry(cell_of(p, cell_size)).or_default().push(i);
    }
    let mut populated: Vec<CellId> = cells
        .iter()
        .filter(|(_, v)| v.len() >= min_points)
        .map(|(k, _)| *k)
        .collect();
    if populated.is_empty() {
        // every cell is sparse: the largest one absorbs the rest
        let best = cells
            .iter()
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))
            .map(|(k, _)| *k)
            .unwrap();
        populated.push(best);
    }
    let mut owned: BTreeMap<CellId, Vec<usize>> = populated.iter().map(|k| (*k, cells[k].clone())).collect();
    for (id, members) in &cells {
        if owned.contains_key(id) {
            continue;
        }
        let nearest = populated
            .iter()
            .min_by_key(|c| ((c.0 - id.0).pow(2) + (c.1 - id.1).pow(2), **c))
            .unwrap();
        owned.get_mut(nearest).unwrap().extend_from_slice(members);
    }

    let mut out = Vec::with_capacity(owned.len());
    for (id, mut members) in owned {
        members.sort_unstable();
        let (centroid, normal) = fit_plane(members.iter().map(|&i| cloud.points[i]))
            .ok_or_else(|| Error::InvalidPlane(format!("cell {id:?} has a degenerate point set")))?;
        let level_rotation = leveling_rotation(&normal)?;
        let (x0, y0) = (id.0 as f64 * cell_size - margin, id.1 as f64 * cell_size - margin);
        let (x1, y1) = (x0 + cell_size + 2.0 * margin, y0 + cell_size + 2.0 * margin);
        let n_owned = members.len();
        if margin > 0.0 {
            let mut extra: Vec<usize> = Vec::new();
            for (other, idx) in &cells {
                if *other == id
                    || (other.0 - id.0).abs() > 1 + (margin / cell_size) as i64
                    || (other.1 - id.1).abs() > 1 + (margin / cell_size) as i64
                {
                    continue;
                }
                extra.extend(idx.iter().copied().filter(|&i| {
                    let p = cloud.points[i];
                    p.x >= x0 && p.x < x1 && p.y >= y0 && p.y < y1
                }));
            }
            extra.sort_unstable();
            extra.retain(|i| members.binary_search(i).is_err());
            members.extend(extra);
        }
        out.push(SubSlope {
            cell_id: id,
            member_indices: members,
            owned: n_owned,
            normal,
            centroid,
            level_rotation,
        });
    }
    Ok(out)
}

/// Member points rotated about the centroid so the fitted plane is horizontal.
pub fn level_subslope(sub: &SubSlope, cloud: &PointCloud) -> Result<Vec<Point3>> {
    if !sub.level_rotation.is_proper(1e-9) {
        return Err(Error::InvalidPlane("leveling rotation is not a proper rotation".into()));
    }
    if let Some(&bad) = sub.member_indices.iter().find(|&&i| i >= cloud.len()) {
        return Err(Error::param(format!("member index {bad} out of range")));
    }
    let r = &sub.level_rotation.rotation;
    Ok(sub
        .member_indices
        .iter()
        .map(|&i| sub.centroid + r * (cloud.points[i] - sub.centroid))
        .collect())
}

/// Inverse of [`level_subslope`] for a single point.
pub fn unlevel_point(sub: &SubSlope, p: &Point3) -> Point3 {
    sub.centroid + sub.level_rotation.rotation.transpose() * (p - sub.centroid)
}
