//! Injected landslides: a cosine-tapered elliptical displacement field along
//! the local surface normal.

use serde::{Deserialize, Serialize};

use super::{SceneTruth, TerrainSpec};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// An elliptical landslide footprint in horizontal map coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    /// Map-plane (x, y) center, meters.
    pub center: [f64; 2],
    /// Horizontal semi-axis along the motion azimuth, meters.
    pub radius_along: f64,
    pub radius_across: f64,
    /// Peak signed displacement along the outward surface normal
    /// (positive = deposition), meters.
    pub depth: f64,
    /// Compass azimuth of the motion axis, degrees clockwise from +y.
    pub azimuth_deg: f64,
    /// Width of the cosine taper as a fraction of the normalized radius.
    pub taper: f64,
}

impl RegionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0.0 || !self.depth.is_finite() {
            return Err(Error::param("landslide depth must be non-zero"));
        }
        if !(self.radius_along > 0.0 && self.radius_across > 0.0) {
            return Err(Error::param("landslide radii must be positive"));
        }
        if !(self.taper > 0.0 && self.taper <= 1.0) {
            return Err(Error::param(format!("taper must lie in (0, 1], got {}", self.taper)));
        }
        Ok(())
    }

    /// Unit horizontal motion direction.
    pub fn along(&self) -> [f64; 2] {
        let az = self.azimuth_deg.to_radians();
        [az.sin(), az.cos()]
    }

    /// Normalized elliptical radius of map point `(x, y)`.
    pub fn normalized_radius(&self, x: f64, y: f64) -> f64 {
        let [ax, ay] = self.along();
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let a = dx * ax + dy * ay;
        let c = -dx * ay + dy * ax;
        ((a / self.radius_along).powi(2) + (c / self.radius_across).powi(2)).sqrt()
    }

    /// Displacement weight in `[0, 1]`: 1 on the plateau, cosine taper to 0
    /// at the rim.
    pub fn profile(&self, x: f64, y: f64) -> f64 {
        let rho = self.normalized_radius(x, y);
        let inner = 1.0 - self.taper;
        if rho <= inner {
            1.0
        } else if rho >= 1.0 {
            0.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * (rho - inner) / self.taper).cos())
        }
    }

    pub fn displacement_at(&self, x: f64, y: f64) -> f64 {
        self.depth * self.profile(x, y)
    }

    /// Integral of |displacement| over base-plane area on `terrain`, by
    /// midpoint quadrature with cells of side `step`.
    pub fn volume_on(&self, terrain: &TerrainSpec, step: f64) -> f64 {
        let (ea, eb) = (terrain.extent[0] / 2.0, terrain.extent[1] / 2.0);
        let na = (2.0 * ea / step).ceil() as i64;
        let nb = (2.0 * eb / step).ceil() as i64;
        let (sa, sb) = (2.0 * ea / na as f64, 2.0 * eb / nb as f64);
        let mut total = 0.0;
        for j in 0..nb {
            let b = -eb + (j as f64 + 0.5) * sb;
            for i in 0..na {
                let a = -ea + (i as f64 + 0.5) * sa;
                let p = terrain.surface_point(a, b);
                total += self.profile(p.x, p.y);
            }
        }
        total * sa * sb * self.depth.abs()
    }
}

/// Displaces every point of `cloud` inside the footprint along the terrain's
/// local normal and adds the signed amount to the truth field.
pub fn apply_landslide(
    cloud: &PointCloud,
    truth: &SceneTruth,
    terrain: &TerrainSpec,
    region: &RegionSpec,
) -> Result<(PointCloud, SceneTruth)> {
    region.validate()?;
    if truth.displacement.len() != cloud.len() {
        return Err(Error::param("truth does not match cloud"));
    }
    let mut out = cloud.clone();
    let mut t = truth.clone();
    for (i, p) in out.points.iter_mut().enumerate() {
        let abs = *p + cloud.origin_shift;
        let d = region.displacement_at(abs.x, abs.y);
        if d != 0.0 {
            let (a, b, _) = terrain.plane_coords(&abs);
            *p += terrain.surface_normal(a, b) * d;
            t.displacement[i] += d;
        }
    }
    out.normals = None;
    t.regions.push(*region);
    Ok((out, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gen_terrain;

    fn region() -> RegionSpec {
        RegionSpec {
            center: [0.0, 0.0],
            radius_along: 10.0,
            radius_across: 10.0,
            depth: 0.5,
            azimuth_deg: 180.0,
            taper: 0.1,
        }
    }

    #[test]
    fn plateau_peak_and_zero_outside() {
        let r = region();
        assert_eq!(r.displacement_at(0.0, 0.0), 0.5);
        assert_eq!(r.displacement_at(8.9, 0.0), 0.5);
        assert_eq!(r.displacement_at(10.0, 0.0), 0.0);
        assert_eq!(r.displacement_at(0.0, -12.0), 0.0);
        let mid = r.displacement_at(9.5, 0.0);
        assert!((mid - 0.25).abs() < 1e-12);
    }

    #[test]
    fn elongation_follows_azimuth() {
        let r = RegionSpec {
            radius_along: 20.0,
            radius_across: 5.0,
            azimuth_deg: 90.0,
            ..region()
        };
        // motion toward +x: long axis along x
        assert!(r.profile(15.0, 0.0) > 0.0);
        assert_eq!(r.profile(0.0, 6.0), 0.0);
    }

    #[test]
    fn truth_integral_matches_point_sum() {
        let terrain = TerrainSpec {
            extent: [50.0, 50.0],
            density: 100.0,
            roughness: 0.5,
            ..Default::default()
        };
        let (c, t) = gen_terrain(&terrain).unwrap();
        let r = region();
        let (_, t2) = apply_landslide(&c, &t, &terrain, &r).unwrap();
        let cell = terrain.extent[0] * terrain.extent[1] / c.len() as f64;
        let sum: f64 = t2.displacement.iter().map(|d| d.abs()).sum::<f64>() * cell;
        let want = r.volume_on(&terrain, 0.05);
        assert!((sum - want).abs() <= 0.05 * want, "{sum} vs {want}");
        // planar-base estimate: horizontal ellipse stretched by 1/cos(slope)
        let planar = std::f64::consts::PI * 100.0 * 0.5 / terrain.slope_deg.to_radians().cos();
        assert!((want - planar).abs() < 0.15 * planar);
    }

    #[test]
    fn disjoint_regions_add() {
        let terrain = TerrainSpec {
            extent: [60.0, 30.0],
            density: 10.0,
            roughness: 0.2,
            ..Default::default()
        };
        let (c, t) = gen_terrain(&terrain).unwrap();
        let a = RegionSpec {
            center: [-15.0, 0.0],
            radius_along: 5.0,
            radius_across: 5.0,
            ..region()
        };
        let b = RegionSpec {
            center: [15.0, 0.0],
            depth: -0.3,
            ..a
        };
        let (ca, ta) = apply_landslide(&c, &t, &terrain, &a).unwrap();
        let (_, tab) = apply_landslide(&ca, &ta, &terrain, &b).unwrap();
        let (_, tb) = apply_landslide(&c, &t, &terrain, &b).unwrap();
        for i in 0..c.len() {
            assert!(ta.displacement[i] == 0.0 || tb.displacement[i] == 0.0);
            assert!((tab.displacement[i] - ta.displacement[i] - tb.displacement[i]).abs() < 1e-12);
        }
        assert_eq!(tab.regions.len(), 2);
    }

    #[test]
    fn displacement_is_along_local_normal() {
        let terrain = TerrainSpec {
            extent: [30.0, 30.0],
            density: 4.0,
            ..Default::default()
        };
        let (c, t) = gen_terrain(&terrain).unwrap();
        let (d, td) = apply_landslide(&c, &t, &terrain, &region()).unwrap();
        for i in 0..c.len() {
            let moved = (d.points[i] - c.points[i]).norm();
            assert!((moved - td.displacement[i].abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_depth_rejected() {
        let r = RegionSpec { depth: 0.0, ..region() };
        assert!(r.validate().is_err());
    }
}
