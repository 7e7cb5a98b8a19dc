//! Point-cloud data model and the low-level machinery shared by every stage:
//! file I/O, an exact KD-tree, normal estimation and voxel downsampling.
//!
//! Coordinates are stored as `f64` relative to an `origin_shift`; the absolute
//! position of point `i` is `points[i] + origin_shift`.

mod io;
mod kdtree;
pub(crate) mod normals;
mod voxel;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    parse_cloud, parse_mesh_ply, ply_comments, write_cloud, write_mesh_ply, write_mesh_ply_with_comments, CloudFormat,
    PlyEncoding,
};
pub use kdtree::{Neighbor, SpatialIndex};
pub(crate) use normals::sorted_eigen;
pub use normals::{estimate_normals, estimate_normals_with_curvature, NormalEstimate};
pub use voxel::voxel_downsample;

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = Vector3<f64>;

/// Per-point class tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    Ground,
    Vegetation,
    Unknown,
}

/// Epoch-tagged point cloud.
///
/// `normals[i]` is `None` when the neighborhood of point `i` was degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub normals: Option<Vec<Option<Vec3>>>,
    pub scalars: BTreeMap<String, Vec<f64>>,
    pub labels: Option<Vec<PointClass>>,
    pub epoch_id: String,
    pub origin_shift: Vec3,
}

impl Default for PointCloud {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            normals: None,
            scalars: BTreeMap::new(),
            labels: None,
            epoch_id: String::new(),
            origin_shift: Vec3::zeros(),
        }
    }

    pub fn from_xyz(coords: &[[f64; 3]]) -> Self {
        Self::new(coords.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect())
    }

    pub fn with_epoch(mut self, epoch_id: impl Into<String>) -> Self {
        self.epoch_id = epoch_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Absolute coordinates of point `i` (origin shift added back).
    pub fn absolute(&self, i: usize) -> Point3 {
        self.points[i] + self.origin_shift
    }

    /// Adds a named scalar channel, replacing any existing one.
    pub fn set_scalar(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::param(format!(
                "scalar channel has {} values for {} points",
                values.len(),
                self.len()
            )));
        }
        self.scalars.insert(name.into(), values);
        Ok(())
    }

    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalars.get(name).map(Vec::as_slice)
    }

    /// Checks finiteness, unit normals and channel lengths.
    pub fn validate(&self) -> Result<()> {
        if let Some((i, _)) = self
            .points
            .iter()
            .enumerate()
            .find(|(_, p)| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::param(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.len() {
                return Err(Error::param("normal count differs from point count"));
            }
            for (i, n) in normals.iter().enumerate() {
                if let Some(n) = n {
                    if (n.norm() - 1.0).abs() > 1e-6 {
                        return Err(Error::param(format!("normal {i} is not unit length")));
                    }
                }
            }
        }
        for (name, values) in &self.scalars {
            if values.len() != self.len() {
                return Err(Error::param(format!("scalar channel `{name}` has wrong length")));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.len() {
                return Err(Error::param("label count differs from point count"));
            }
        }
        Ok(())
    }

    /// Keeps the points at `indices` (in that order) along with every per-point channel.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self.normals.as_ref().map(|n| indices.iter().map(|&i| n[i]).collect()),
            scalars: self
                .scalars
                .iter()
                .map(|(k, v)| (k.clone(), indices.iter().map(|&i| v[i]).collect()))
                .collect(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            epoch_id: self.epoch_id.clone(),
            origin_shift: self.origin_shift,
        }
    }

    /// Re-expresses the cloud relative to a different origin shift without
    /// changing any absolute coordinate.
    pub fn rebased(&self, origin_shift: Vec3) -> PointCloud {
        let delta = self.origin_shift - origin_shift;
        let mut out = self.clone();
        for p in &mut out.points {
            *p += delta;
        }
        out.origin_shift = origin_shift;
        out
    }

    /// Concatenates clouds that share an origin shift. Channels present in
    /// every input are kept; others are dropped.
    pub fn concat(clouds: &[&PointCloud]) -> PointCloud {
        let Some(first) = clouds.first() else {
            return PointCloud::default();
        };
        let mut out = PointCloud::new(Vec::new());
        out.epoch_id = first.epoch_id.clone();
        out.origin_shift = first.origin_shift;
        for c in clouds {
            let c = c.rebased(first.origin_shift);
            out.points.extend_from_slice(&c.points);
        }
        if clouds.iter().all(|c| c.normals.is_some()) {
            out.normals = Some(
                clouds
                    .iter()
                    .flat_map(|c| c.normals.as_ref().unwrap().iter().copied())
                    .collect(),
            );
        }
        if clouds.iter().all(|c| c.labels.is_some()) {
            out.labels = Some(
                clouds
                    .iter()
                    .flat_map(|c| c.labels.as_ref().unwrap().iter().copied())
                    .collect(),
            );
        }
        for name in first.scalars.keys() {
            if clouds.iter().all(|c| c.scalars.contains_key(name)) {
                let values = clouds.iter().flat_map(|c| c.scalars[name].iter().copied()).collect();
                out.scalars.insert(name.clone(), values);
            }
        }
        out
    }

    pub fn centroid(&self) -> Option<Point3> {
        centroid(&self.points)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        bounds(&self.points)
    }

    /// Length of the bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        self.bounds().map(|(lo, hi)| (hi - lo).norm()).unwrap_or(0.0)
    }
}

pub fn centroid(points: &[Point3]) -> Option<Point3> {
    if points.is_empty() {
        return None;
    }
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p.coords);
    Some(Point3::from(sum / points.len() as f64))
}

pub fn bounds(points: &[Point3]) -> Option<(Point3, Point3)> {
    let first = points.first()?;
    Some(
        points
            .iter()
            .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
    )
}

/// Mean and covariance (population) of a point set.
pub fn covariance(points: impl IntoIterator<Item = Point3> + Clone) -> Option<(Point3, Matrix3<f64>)> {
    let mut n = 0usize;
    let mut sum = Vec3::zeros();
    for p in points.clone() {
        sum += p.coords;
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    Some((Point3::from(mean), cov / n as f64))
}

/// Least-squares plane through a point set: `(centroid, unit normal)` with the
/// normal oriented to non-negative z (ties broken toward -y, then +x).
pub fn fit_plane(points: impl IntoIterator<Item = Point3> + Clone) -> Option<(Point3, Vec3)> {
    let (mean, cov) = covariance(points)?;
    let eig = cov.symmetric_eigen();
    let (imin, _) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    let mut n: Vec3 = eig.eigenvectors.column(imin).into_owned();
    let norm = n.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    n /= norm;
    Some((mean, orient_up(n)))
}

pub(crate) fn orient_up(n: Vec3) -> Vec3 {
    const EPS: f64 = 1e-12;
    let flip = if n.z.abs() > EPS {
        n.z < 0.0
    } else if n.y.abs() > EPS {
        n.y > 0.0
    } else {
        n.x < 0.0
    };
    if flip {
        -n
    } else {
        n
    }
}

/// Acquisition campaign metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch_id: String,
    pub acquisition_date: NaiveDate,
    pub station_count: u32,
}

impl EpochRecord {
    pub fn new(epoch_id: impl Into<String>, acquisition_date: NaiveDate, station_count: u32) -> Self {
        Self {
            epoch_id: epoch_id.into(),
            acquisition_date,
            station_count,
        }
    }
}

/// Verifies that an ordered epoch series has strictly increasing dates and
/// positive station counts.
pub fn validate_epochs(epochs: &[EpochRecord]) -> Result<()> {
    for e in epochs {
        if e.station_count == 0 {
            return Err(Error::param(format!("epoch {} has no stations", e.epoch_id)));
        }
    }
    for w in epochs.windows(2) {
        if w[1].acquisition_date <= w[0].acquisition_date {
            return Err(Error::InvalidInterval(format!(
                "epoch {} ({}) does not follow {} ({})",
                w[1].epoch_id, w[1].acquisition_date, w[0].epoch_id, w[0].acquisition_date
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_keeps_channels_aligned() {
        let mut c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        c.set_scalar("s", vec![10.0, 11.0, 12.0]).unwrap();
        let s = c.select(&[2, 0]);
        assert_eq!(s.points, vec![Point3::new(2.0, 0.0, 0.0), Point3::origin()]);
        assert_eq!(s.scalar("s").unwrap(), &[12.0, 10.0]);
    }

    #[test]
    fn rebase_preserves_absolute_coordinates() {
        let mut c = PointCloud::from_xyz(&[[1.5, 2.0, -3.0]]);
        c.origin_shift = Vec3::new(100.0, 200.0, 0.0);
        let r = c.rebased(Vec3::new(90.0, 0.0, 1.0));
        assert!((r.absolute(0) - c.absolute(0)).norm() < 1e-12);
    }

    #[test]
    fn scalar_length_checked() {
        let mut c = PointCloud::from_xyz(&[[0.0; 3]]);
        assert!(c.set_scalar("x", vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn plane_fit_orients_up() {
        let pts: Vec<Point3> = (0..5)
            .flat_map(|i| (0..5).map(move |j| Point3::new(i as f64, j as f64, 2.0)))
            .collect();
        let (c, n) = fit_plane(pts.iter().copied()).unwrap();
        assert!((c.z - 2.0).abs() < 1e-12);
        assert!((n - Vec3::z()).norm() < 1e-9);
    }

    #[test]
    fn epoch_dates_must_increase() {
        let d = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).unwrap();
        let ok = vec![
            EpochRecord::new("I", d(2013, 3, 14), 6),
            EpochRecord::new("II", d(2013, 8, 17), 4),
        ];
        assert!(validate_epochs(&ok).is_ok());
        let bad = vec![ok[1].clone(), ok[0].clone()];
        assert!(validate_epochs(&bad).is_err());
    }
}
