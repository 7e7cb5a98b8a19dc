//! Procedural slope: fractal value noise on an inclined base plane.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SceneTruth;
use crate::cloud::{Point3, PointClass, PointCloud, Vec3};
use crate::error::{Error, Result};

const OCTAVES: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainSpec {
    /// In-plane extent (along strike, along dip), meters.
    pub extent: [f64; 2],
    pub slope_deg: f64,
    /// Peak relief above or below the base plane, meters.
    pub roughness: f64,
    /// Longest noise wavelength, meters.
    pub wavelength: f64,
    /// Points per square meter of base-plane area.
    pub density: f64,
    pub seed: u64,
}

impl Default for TerrainSpec {
    fn default() -> Self {
        Self {
            extent: [60.0, 60.0],
            slope_deg: 40.0,
            roughness: 1.5,
            wavelength: 12.0,
            density: 154.0,
            seed: 1,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn lattice(seed: u64, octave: u32, i: i64, j: i64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(octave as u64 ^ splitmix64(i as u64 ^ splitmix64(j as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn value_noise(seed: u64, octave: u32, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (i, j) = (fx as i64, fy as i64);
    let (u, v) = (fade(x - fx), fade(y - fy));
    let a = lattice(seed, octave, i, j);
    let b = lattice(seed, octave, i + 1, j);
    let c = lattice(seed, octave, i, j + 1);
    let d = lattice(seed, octave, i + 1, j + 1);
    let top = a + (b - a) * u;
    let bottom = c + (d - c) * u;
    top + (bottom - top) * v
}

impl TerrainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0) {
            return Err(Error::param(format!("density must be positive, got {}", self.density)));
        }
        if !(self.extent[0] > 0.0 && self.extent[1] > 0.0) {
            return Err(Error::param("extent must be positive"));
        }
        if !(0.0..90.0).contains(&self.slope_deg) {
            return Err(Error::param(format!(
                "slope must lie in [0, 90), got {}",
                self.slope_deg
            )));
        }
        if !(self.roughness >= 0.0) || !(self.wavelength > 0.0) {
            return Err(Error::param("roughness must be non-negative and wavelength positive"));
        }
        Ok(())
    }

    /// Strike, up-dip and outward normal of the base plane.
    pub fn axes(&self) -> (Vec3, Vec3, Vec3) {
        let s = self.slope_deg.to_radians();
        (
            Vec3::x(),
            Vec3::new(0.0, s.cos(), s.sin()),
            Vec3::new(0.0, -s.sin(), s.cos()),
        )
    }

    /// Relief above the base plane at in-plane coordinates `(a, b)`.
    pub fn height(&self, a: f64, b: f64) -> f64 {
        if self.roughness == 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        let mut norm = 0.0;
        let mut amp = 1.0;
        let mut freq = 1.0 / self.wavelength;
        for o in 0..OCTAVES {
            total += amp * value_noise(self.seed, o, a * freq, b * freq);
            norm += amp;
            amp *= 0.5;
            freq *= 2.0;
        }
        self.roughness * total / norm
    }

    pub fn surface_point(&self, a: f64, b: f64) -> Point3 {
        let (u, v, n) = self.axes();
        Point3::from(u * a + v * b + n * self.height(a, b))
    }

    /// Unit outward normal of the relief surface.
    pub fn surface_normal(&self, a: f64, b: f64) -> Vec3 {
        let h = 1e-4;
        let du = (self.surface_point(a + h, b) - self.surface_point(a - h, b)) / (2.0 * h);
        let dv = (self.surface_point(a, b + h) - self.surface_point(a, b - h)) / (2.0 * h);
        du.cross(&dv).normalize()
    }

    /// In-plane coordinates and offset along the base normal of `p`.
    pub fn plane_coords(&self, p: &Point3) -> (f64, f64, f64) {
        let (u, v, n) = self.axes();
        (p.coords.dot(&u), p.coords.dot(&v), p.coords.dot(&n))
    }

    /// Offset of `p` above the relief surface, measured along the base normal.
    pub fn height_above_ground(&self, p: &Point3) -> f64 {
        let (a, b, h) = self.plane_coords(p);
        h - self.height(a, b)
    }
}

/// Samples the relief surface on a jittered grid (one point per cell of
/// area `1 / density`), centered on the origin. All points are ground.
pub fn gen_terrain(spec: &TerrainSpec) -> Result<(PointCloud, SceneTruth)> {
    sample_terrain(spec, spec.seed)
}

/// [`gen_terrain`] with an independent jitter seed: another sampling of the
/// same surface.
pub fn sample_terrain(spec: &TerrainSpec, sample_seed: u64) -> Result<(PointCloud, SceneTruth)> {
    spec.validate()?;
    let cell = 1.0 / spec.density.sqrt();
    let na = (spec.extent[0] / cell).round().max(1.0) as usize;
    let nb = (spec.extent[1] / cell).round().max(1.0) as usize;
    let (ca, cb) = (spec.extent[0] / na as f64, spec.extent[1] / nb as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut points = Vec::with_capacity(na * nb);
    for j in 0..nb {
        for i in 0..na {
            let a = -spec.extent[0] / 2.0 + (i as f64 + rng.random::<f64>()) * ca;
            let b = -spec.extent[1] / 2.0 + (j as f64 + rng.random::<f64>()) * cb;
            points.push(spec.surface_point(a, b));
        }
    }
    let n = points.len();
    let mut cloud = PointCloud::new(points);
    cloud.labels = Some(vec![PointClass::Ground; n]);
    Ok((cloud, SceneTruth::ground_only(n)))
}

/// Appends clustered vegetation blobs standing `height_range` above the
/// relief so that they make up `coverage` of the output points.
pub fn add_vegetation(
    cloud: &PointCloud,
    truth: &SceneTruth,
    terrain: &TerrainSpec,
    coverage: f64,
    height_range: [f64; 2],
    seed: u64,
) -> Result<(PointCloud, SceneTruth)> {
    if !(0.0..1.0).contains(&coverage) {
        return Err(Error::param(format!("coverage must lie in [0, 1), got {coverage}")));
    }
    if !(height_range[0] > 0.0 && height_range[1] >= height_range[0]) {
        return Err(Error::param("vegetation height range must be positive and ordered"));
    }
    if truth.labels.len() != cloud.len() {
        return Err(Error::param("truth does not match cloud"));
    }
    if coverage == 0.0 || cloud.is_empty() {
        return Ok((cloud.clone(), truth.clone()));
    }
    let count = (cloud.len() as f64 * coverage / (1.0 - coverage)).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ea, eb) = (terrain.extent[0] / 2.0, terrain.extent[1] / 2.0);
    // bushes of 1-3 m radius holding roughly 150 points each
    let blobs = (count / 150).max(1);
    let centers: Vec<(f64, f64, f64)> = (0..blobs)
        .map(|_| {
            let r: f64 = rng.random_range(1.0..3.0);
            (rng.random_range(-ea + r..ea - r), rng.random_range(-eb + r..eb - r), r)
        })
        .collect();
    let (_, _, n) = terrain.axes();
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let (ca, cb, r) = centers[rng.random_range(0..blobs)];
        let (da, db) = loop {
            let (x, y): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if x * x + y * y <= 1.0 {
                break (x * r, y * r);
            }
        };
        let h = rng.random_range(height_range[0]..=height_range[1]);
        let ground = terrain.surface_point(ca + da, cb + db);
        points.push(ground + n * h);
    }
    let local: Vec<Point3> = points.iter().map(|p| p - cloud.origin_shift).collect();
    let mut veg = PointCloud::new(local);
    veg.origin_shift = cloud.origin_shift;
    veg.labels = Some(vec![PointClass::Vegetation; count]);
    for (name, _) in &cloud.scalars {
        veg.set_scalar(name.clone(), vec![0.0; count])?;
    }
    let mut out = PointCloud::concat(&[cloud, &veg]);
    out.epoch_id = cloud.epoch_id.clone();
    let mut t = truth.clone();
    t.labels.extend(std::iter::repeat_n(PointClass::Vegetation, count));
    t.displacement.extend(std::iter::repeat_n(0.0, count));
    Ok((out, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_sets_point_count() {
        let spec = TerrainSpec {
            extent: [10.0, 10.0],
            density: 154.0,
            ..Default::default()
        };
        let (c, t) = gen_terrain(&spec).unwrap();
        let want = 15400.0;
        assert!((c.len() as f64 - want).abs() <= 0.05 * want, "{}", c.len());
        assert_eq!(t.labels.len(), c.len());
    }

    #[test]
    fn zero_roughness_lies_on_base_plane() {
        let spec = TerrainSpec {
            extent: [20.0, 15.0],
            roughness: 0.0,
            density: 20.0,
            ..Default::default()
        };
        let (c, _) = gen_terrain(&spec).unwrap();
        let (_, _, n) = spec.axes();
        assert!(c.points.iter().all(|p| p.coords.dot(&n).abs() < 1e-9));
    }

    #[test]
    fn same_seed_same_cloud() {
        let spec = TerrainSpec {
            extent: [12.0, 12.0],
            density: 30.0,
            ..Default::default()
        };
        let (a, _) = gen_terrain(&spec).unwrap();
        let (b, _) = gen_terrain(&spec).unwrap();
        assert_eq!(a, b);
        let (c, _) = gen_terrain(&TerrainSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn relief_is_bounded_by_roughness() {
        let spec = TerrainSpec::default();
        for i in -20..20 {
            for j in -20..20 {
                assert!(spec.height(i as f64 * 1.37, j as f64 * 0.91).abs() <= spec.roughness + 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_positive_density() {
        let spec = TerrainSpec {
            density: 0.0,
            ..Default::default()
        };
        assert!(gen_terrain(&spec).is_err());
    }

    #[test]
    fn vegetation_fraction_and_height() {
        let spec = TerrainSpec {
            extent: [30.0, 30.0],
            density: 40.0,
            slope_deg: 70.0,
            ..Default::default()
        };
        let (c, t) = gen_terrain(&spec).unwrap();
        let (v, vt) = add_vegetation(&c, &t, &spec, 0.15, [0.5, 2.0], 9).unwrap();
        let veg = vt.labels.iter().filter(|&&l| l == PointClass::Vegetation).count();
        let frac = veg as f64 / v.len() as f64;
        assert!((frac - 0.15).abs() <= 0.03, "{frac}");
        for (p, l) in v.points.iter().zip(&vt.labels) {
            if *l == PointClass::Vegetation {
                assert!(spec.height_above_ground(p) >= 0.5 - 1e-9);
            }
        }
        assert_eq!(&v.points[..c.len()], &c.points[..]);
    }

    #[test]
    fn zero_coverage_is_identity() {
        let spec = TerrainSpec {
            extent: [10.0, 10.0],
            density: 10.0,
            ..Default::default()
        };
        let (c, t) = gen_terrain(&spec).unwrap();
        let (v, vt) = add_vegetation(&c, &t, &spec, 0.0, [0.5, 2.0], 1).unwrap();
        assert_eq!(v, c);
        assert_eq!(vt, t);
    }
}
