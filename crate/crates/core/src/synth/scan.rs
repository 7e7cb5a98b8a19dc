//! Terrestrial scanner simulation: per-station visibility, range limit and
//! measurement noise, output in the station's own frame.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::registration::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanParams {
    /// Isotropic Gaussian noise per axis, meters.
    pub noise_sigma: f64,
    /// Points farther than this from the station are not measured.
    pub max_range: Option<f64>,
    /// Keep only the nearest return per angular bin.
    pub occlusion: bool,
    pub angular_bin_deg: f64,
    pub seed: u64,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            noise_sigma: 0.006,
            max_range: None,
            occlusion: true,
            angular_bin_deg: 0.05,
            seed: 0,
        }
    }
}

/// A leveled scanner at `position` whose local +x axis points horizontally
/// toward `look_at`. The pose maps station coordinates to world coordinates.
pub fn leveled_station(position: Point3, look_at: Point3) -> RigidTransform {
    let d = look_at - position;
    let yaw = d.y.atan2(d.x);
    RigidTransform::from_axis_angle(&Vec3::z(), yaw, position.coords)
}

fn station_seed(seed: u64, station: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (station as u64).wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// One station-frame cloud per pose; labels and scalars follow the kept points.
pub fn simulate_stations(cloud: &PointCloud, poses: &[RigidTransform], params: &ScanParams) -> Result<Vec<PointCloud>> {
    if poses.is_empty() {
        return Err(Error::param("at least one station pose is required"));
    }
    if !(params.noise_sigma >= 0.0) {
        return Err(Error::param("noise sigma must be non-negative"));
    }
    if params.occlusion && !(params.angular_bin_deg > 0.0) {
        return Err(Error::param("angular bin must be positive"));
    }
    let bin = params.angular_bin_deg.to_radians();
    let mut out = Vec::with_capacity(poses.len());
    for (k, pose) in poses.iter().enumerate() {
        let to_local = pose.inverse();
        let local: Vec<Point3> = (0..cloud.len()).map(|i| to_local.apply(&cloud.absolute(i))).collect();
        let mut keep: Vec<usize> = (0..local.len())
            .filter(|&i| params.max_range.is_none_or(|r| local[i].coords.norm() <= r))
            .collect();
        if params.occlusion {
            let mut nearest: HashMap<(i64, i64), usize> = HashMap::new();
            for &i in &keep {
                let p = local[i];
                let az = p.y.atan2(p.x);
                let el = p.z.atan2(p.x.hypot(p.y));
                let key = ((az / bin).floor() as i64, (el / bin).floor() as i64);
                let r = p.coords.norm_squared();
                nearest
                    .entry(key)
                    .and_modify(|j| {
                        let rj = local[*j].coords.norm_squared();
                        if r < rj || (r == rj && i < *j) {
                            *j = i;
                        }
                    })
                    .or_insert(i);
            }
            keep = nearest.into_values().collect();
            keep.sort_unstable();
        }
        let mut scan = cloud.select(&keep);
        scan.origin_shift = Vec3::zeros();
        scan.normals = None;
        for (dst, &i) in scan.points.iter_mut().zip(&keep) {
            *dst = local[i];
        }
        if params.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, params.noise_sigma).map_err(|e| Error::param(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(station_seed(params.seed, k));
            for p in &mut scan.points {
                *p += Vec3::new(
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                );
            }
        }
        out.push(scan);
    }
    Ok(out)
}
