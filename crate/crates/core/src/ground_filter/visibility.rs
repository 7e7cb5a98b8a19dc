//! Ambient-visibility vegetation detector: points under or at the edge of
//! canopy see less of the sky hemisphere than their neighbors, so a sharp
//! local change in visibility marks vegetation.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GroundLabeling;
use crate::cloud::{fit_plane, Point3, PointClass, PointCloud, SpatialIndex, Vec3};
use crate::error::{Error, Result};

type Voxel = (i64, i64, i64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisibilityParams {
    pub directions: usize,
    /// Occupancy voxel edge, meters.
    pub voxel: f64,
    /// Neighbors compared when taking the visibility gradient.
    pub neighbors: usize,
    pub threshold: f64,
}

impl Default for VisibilityParams {
    fn default() -> Self {
        Self {
            directions: 32,
            voxel: 0.25,
            neighbors: 8,
            threshold: 0.3,
        }
    }
}

/// Evenly spread directions on the hemisphere around `up` (golden-angle spiral).
pub fn hemisphere_directions(up: &Vec3, count: usize) -> Vec<Vec3> {
    let up = up.normalize();
    let helper = if up.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = up.cross(&helper).normalize();
    let e2 = up.cross(&e1);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = i as f64 * golden;
            e1 * (r * phi.cos()) + e2 * (r * phi.sin()) + up * z
        })
        .collect()
}

pub(crate) struct Occupancy {
    cells: HashSet<Voxel>,
    size: f64,
    lo: Voxel,
    hi: Voxel,
}

impl Occupancy {
    pub(crate) fn new(points: &[Point3], size: f64) -> Self {
        let key = |p: &Point3| {
            (
                (p.x / size).floor() as i64,
                (p.y / size).floor() as i64,
                (p.z / size).floor() as i64,
            )
        };
        let cells: HashSet<Voxel> = points.iter().map(key).collect();
        let mut lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut hi = (i64::MIN, i64::MIN, i64::MIN);
        for c in &cells {
            lo = (lo.0.min(c.0), lo.1.min(c.1), lo.2.min(c.2));
            hi = (hi.0.max(c.0), hi.1.max(c.1), hi.2.max(c.2));
        }
        Occupancy { cells, size, lo, hi }
    }

    /// Whether the ray from `origin` along `dir` enters an occupied voxel
    /// (other than the one containing `origin`) before leaving the occupied
    /// bounding box. Exact voxel traversal.
    pub(crate) fn blocked(&self, origin: &Point3, dir: &Vec3) -> bool {
        let s = self.size;
        let mut cell = [
            (origin.x / s).floor() as i64,
            (origin.y / s).floor() as i64,
            (origin.z / s).floor() as i64,
        ];
        let lo = [self.lo.0, self.lo.1, self.lo.2];
        let hi = [self.hi.0, self.hi.1, self.hi.2];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            let d = dir[a];
            if d > 0.0 {
                step[a] = 1;
                t_max[a] = ((cell[a] + 1) as f64 * s - origin[a]) / d;
                t_delta[a] = s / d;
            } else if d < 0.0 {
                step[a] = -1;
                t_max[a] = (cell[a] as f64 * s - origin[a]) / d;
                t_delta[a] = -s / d;
            }
        }
        loop {
            let a = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if !t_max[a].is_finite() {
                return false;
            }
            cell[a] += step[a];
            t_max[a] += t_delta[a];
            // left the occupied box for good along this axis
            if (step[a] > 0 && cell[a] > hi[a]) || (step[a] < 0 && cell[a] < lo[a]) {
                return false;
            }
            if self.cells.contains(&(cell[0], cell[1], cell[2])) {
                return true;
            }
        }
    }
}

/// Fraction of hemisphere directions (about the cloud's plane normal) that
/// escape the occupancy grid, per point. Rays start 1.5 voxels above the
/// point so they clear its own surface.
pub fn ambient_visibility(cloud: &PointCloud, params: &VisibilityParams) -> Result<Vec<f64>> {
    if params.directions < 8 {
        return Err(Error::param(format!(
            "need at least 8 directions, got {}",
            params.directions
        )));
    }
    if !(params.voxel > 0.0) {
        return Err(Error::param("voxel size must be positive"));
    }
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    let up = fit_plane(cloud.points.iter().copied()).map_or(Vec3::z(), |(_, n)| n);
    let dirs = hemisphere_directions(&up, params.directions);
    let occ = Occupancy::new(&cloud.points, params.voxel);
    let lift = up * (1.5 * params.voxel);
    Ok(cloud
        .points
        .par_iter()
        .map(|p| {
            let o = p + lift;
            let free = dirs.iter().filter(|d| !occ.blocked(&o, d)).count();
            free as f64 / dirs.len() as f64
        })
        .collect())
}

/// Largest visibility difference between each point and its nearest neighbors.
pub fn visibility_gradient(cloud: &PointCloud, visibility: &[f64], neighbors: usize) -> Result<Vec<f64>> {
    if visibility.len() != cloud.len() {
        return Err(Error::param("visibility does not match cloud"));
    }
    if cloud.is_empty() {
        return Ok(Vec::new());
    }
    let index = SpatialIndex::from_cloud(cloud);
    cloud
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = index.nearest_neighbors(p, neighbors + 1)?;
            Ok(nn
                .iter()
                .map(|n| (visibility[n.index] - visibility[i]).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}

/// Labels a point vegetation when its visibility gradient exceeds the threshold.
pub fn visibility_gradient_filter(cloud: &PointCloud, params: &VisibilityParams) -> Result<GroundLabeling> {
    let vis = ambient_visibility(cloud, params)?;
    let grad = visibility_gradient(cloud, &vis, params.neighbors)?;
    Ok(GroundLabeling::new(
        grad.iter()
            .map(|&g| {
                if g > params.threshold {
                    PointClass::Vegetation
                } else {
                    PointClass::Ground
                }
            })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_cover_the_upper_hemisphere() {
        let up = Vec3::new(0.3, -0.2, 1.0).normalize();
        let d = hemisphere_directions(&up, 32);
        assert_eq!(d.len(), 32);
        for v in &d {
            assert!((v.norm() - 1.0).abs() < 1e-12);
            assert!(v.dot(&up) > 0.0);
        }
        let mean: Vec3 = d.iter().sum::<Vec3>() / 32.0;
        assert!(mean.normalize().dot(&up) > 0.99);
    }

    #[test]
    fn isolated_plane_is_uniformly_visible() {
        let mut pts = Vec::new();
        for i in 0..40 {
            for j in 0..40 {
                pts.push([i as f64 * 0.2 + 0.01, j as f64 * 0.2 + 0.01, 0.01]);
            }
        }
        let c = PointCloud::from_xyz(&pts);
        let params = VisibilityParams::default();
        let vis = ambient_visibility(&c, &params).unwrap();
        assert!(vis.iter().all(|&v| v == 1.0));
        let l = visibility_gradient_filter(&c, &params).unwrap();
        assert_eq!(l.vegetation_count, 0);
    }

    #[test]
    fn too_few_directions_rejected() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]);
        let params = VisibilityParams {
            directions: 4,
            ..Default::default()
        };
        assert!(ambient_visibility(&c, &params).is_err());
    }

    /// Slab test against every occupied voxel: the ray is blocked when it
    /// enters one at t > 0 other than its own.
    fn brute_blocked(occ: &Occupancy, o: &Point3, d: &Vec3) -> bool {
        let s = occ.size;
        let own = (
            (o.x / s).floor() as i64,
            (o.y / s).floor() as i64,
            (o.z / s).floor() as i64,
        );
        occ.cells.iter().filter(|&&c| c != own).any(|&(i, j, k)| {
            let lo = [i as f64 * s, j as f64 * s, k as f64 * s];
            let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
            for a in 0..3 {
                if d[a] == 0.0 {
                    if o[a] < lo[a] || o[a] > lo[a] + s {
                        return false;
                    }
                } else {
                    let (u, v) = ((lo[a] - o[a]) / d[a], (lo[a] + s - o[a]) / d[a]);
                    t0 = t0.max(u.min(v));
                    t1 = t1.min(u.max(v));
                }
            }
            t0 <= t1
        })
    }

    #[test]
    fn voxel_traversal_matches_exhaustive_ray_cast() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3> = (0..150)
            .map(|_| {
                Point3::new(
                    rng.random_range(0.0..3.0),
                    rng.random_range(0.0..3.0),
                    rng.random_range(0.0..2.0),
                )
            })
            .collect();
        let occ = Occupancy::new(&pts, 0.25);
        let mut blocked = 0;
        for _ in 0..3000 {
            let o = Point3::new(
                rng.random_range(-0.5..3.5),
                rng.random_range(-0.5..3.5),
                rng.random_range(-0.5..2.5),
            );
            let d = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let want = brute_blocked(&occ, &o, &d);
            assert_eq!(occ.blocked(&o, &d), want, "origin {o:?} dir {d:?}");
            blocked += want as usize;
        }
        assert!(blocked > 300 && blocked < 2700, "{blocked}");
    }

    #[test]
    fn canopy_edges_stand_out() {
        let mut pts = Vec::new();
        for i in 0..60 {
            for j in 0..60 {
                pts.push([i as f64 * 0.2 + 0.01, j as f64 * 0.2 + 0.01, 0.01]);
            }
        }
        let ground = pts.len();
        // a 2 x 2 m foliage volume between 0.8 and 1.8 m up
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1500 {
            pts.push([
                rng.random_range(5.0..7.0),
                rng.random_range(5.0..7.0),
                rng.random_range(0.8..1.8),
            ]);
        }
        let c = PointCloud::from_xyz(&pts);
        let params = VisibilityParams::default();
        let vis = ambient_visibility(&c, &params).unwrap();
        let grad = visibility_gradient(&c, &vis, params.neighbors).unwrap();
        let far = |p: &Point3| (p.x - 6.0).abs().max((p.y - 6.0).abs()) > 4.0;
        let interior: Vec<f64> = (0..ground).filter(|&i| far(&c.points[i])).map(|i| grad[i]).collect();
        let interior_max = interior.iter().cloned().fold(0.0, f64::max);
        let mut canopy: Vec<f64> = grad[ground..].to_vec();
        canopy.sort_by(f64::total_cmp);
        let median = canopy[canopy.len() / 2];
        assert!(median > interior_max, "canopy median {median}");
        let shadow_edge = (0..ground).filter(|&i| {
            let p = c.points[i];
            (p.x - 5.0).abs() < 0.15 && p.y > 5.5 && p.y < 6.5
        });
        for i in shadow_edge {
            assert!(grad[i] > interior_max, "shadow edge point {i}: {}", grad[i]);
        }
    }
}
