//! Landslide extent along and across the motion direction, and the
//! shape-angle classes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terrain::{Region, TriangleMesh};

/// Where the in-plane motion direction comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MotionDirection {
    /// Downhill direction of the projection plane. The deformation field only
    /// carries offsets along the surface normal, so this is the default.
    SteepestDescent,
    /// Map azimuth in degrees clockwise from north (+y), projected onto the plane.
    Azimuth(f64),
    /// Explicit direction in the plane's `(e1, e2)` coordinates.
    InPlane([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeMeasure {
    pub w_m: f64,
    pub l_m: f64,
    pub theta_deg: f64,
    /// Unit motion direction in the plane's `(e1, e2)` coordinates.
    pub motion_vector: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShapeClass {
    VL,
    L,
    W,
    VW,
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapeClass::VL => "VL",
            ShapeClass::L => "L",
            ShapeClass::W => "W",
            ShapeClass::VW => "VW",
        })
    }
}

/// θ = arctan(L / W), degrees.
pub fn shape_angle(w_m: f64, l_m: f64) -> Result<f64> {
    if !(w_m > 0.0 && l_m > 0.0 && w_m.is_finite() && l_m.is_finite()) {
        return Err(Error::param(format!(
            "width and length must be positive, got W={w_m}, L={l_m}"
        )));
    }
    Ok(l_m.atan2(w_m).to_degrees())
}

/// Lower bounds inclusive: VL [67.5, 90), L [45, 67.5), W [22.5, 45), VW (0, 22.5).
pub fn classify_shape(theta_deg: f64) -> Result<ShapeClass> {
    if !(theta_deg > 0.0 && theta_deg < 90.0) {
        return Err(Error::param(format!(
            "shape angle must lie in (0, 90), got {theta_deg}"
        )));
    }
    Ok(if theta_deg >= 67.5 {
        ShapeClass::VL
    } else if theta_deg >= 45.0 {
        ShapeClass::L
    } else if theta_deg >= 22.5 {
        ShapeClass::W
    } else {
        ShapeClass::VW
    })
}

/// L is the spread of the region's vertices along the motion direction, W
/// the spread across it, both measured in the projection plane.
pub fn region_extent(region: &Region, mesh: &TriangleMesh, motion: MotionDirection) -> Result<ShapeMeasure> {
    if region.vertex_set.is_empty() {
        return Err(Error::param("region has no vertices"));
    }
    let dir = match motion {
        MotionDirection::SteepestDescent => mesh.plane.steepest_descent(),
        MotionDirection::Azimuth(a) => mesh.plane.azimuth_direction(a),
        MotionDirection::InPlane(d) => {
            let len = d[0].hypot(d[1]);
            (len > 0.0 && len.is_finite()).then(|| [d[0] / len, d[1] / len])
        }
    }
    .ok_or(Error::UndefinedMotionVector)?;
    let axes = mesh.plane.axes();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &i in &region.vertex_set {
        let p = mesh
            .vertices
            .get(i)
            .ok_or_else(|| Error::param(format!("region vertex {i} out of range")))?;
        let uv = mesh.project_local(p, &axes);
        let along = uv[0] * dir[0] + uv[1] * dir[1];
        let across = -uv[0] * dir[1] + uv[1] * dir[0];
        lo = [lo[0].min(along), lo[1].min(across)];
        hi = [hi[0].max(along), hi[1].max(across)];
    }
    let (l_m, w_m) = (hi[0] - lo[0], hi[1] - lo[1]);
    Ok(ShapeMeasure {
        w_m,
        l_m,
        theta_deg: shape_angle(w_m, l_m)?,
        motion_vector: dir,
    })
}

/// Cruden & Varnes movement types, supplied by the analyst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CrudenType {
    FA,
    TO,
    S,
    SP,
    FL,
    RS,
    TS,
}

impl FromStr for CrudenType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "FA" => CrudenType::FA,
            "TO" => CrudenType::TO,
            "S" => CrudenType::S,
            "SP" => CrudenType::SP,
            "FL" => CrudenType::FL,
            "RS" => CrudenType::RS,
            "TS" => CrudenType::TS,
            other => return Err(Error::param(format!("unknown movement type `{other}`"))),
        })
    }
}

impl fmt::Display for CrudenType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionAnnotation {
    pub region_id: usize,
    pub cruden_type: Option<CrudenType>,
}

impl FromStr for MotionAnnotation {
    type Err = Error;
    /// `id=TYPE`, e.g. `3=TS`.
    fn from_str(s: &str) -> Result<Self> {
        let (id, ty) = s
            .split_once('=')
            .ok_or_else(|| Error::param(format!("annotation must look like id=TYPE, got `{s}`")))?;
        Ok(Self {
            region_id: id
                .trim()
                .parse()
                .map_err(|_| Error::param(format!("bad region id `{id}`")))?,
            cruden_type: Some(ty.parse()?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{PointCloud, Vec3};
    use crate::terrain::ProjectionPlane;
    use proptest::prelude::*;

    fn region_of(n: usize) -> Region {
        Region {
            id: 1,
            vertex_set: (0..n).collect(),
            area_m2: 1.0,
            mean_rate_mm_day: 3.0,
            volume_m3: None,
            w_m: None,
            l_m: None,
        }
    }

    fn rect_mesh(w: f64, l: f64, angle_deg: f64, plane: ProjectionPlane) -> TriangleMesh {
        let (c, s) = (angle_deg.to_radians().cos(), angle_deg.to_radians().sin());
        let (e1, e2) = plane.axes();
        let mut pts = Vec::new();
        for i in 0..=10 {
            for j in 0..=20 {
                // x across (width), y along (length) before rotation
                let (x, y) = (w * i as f64 / 10.0, l * j as f64 / 20.0);
                let (u, v) = (c * x - s * y, s * x + c * y);
                let p = e1 * u + e2 * v + plane.normal * 3.0;
                pts.push([p.x, p.y, p.z]);
            }
        }
        TriangleMesh::from_parts(&PointCloud::from_xyz(&pts), Vec::new(), Some(plane)).unwrap()
    }

    #[test]
    fn rectangle_extents() {
        let plane = ProjectionPlane::new(Vec3::z(), 0.0).unwrap();
        let m = rect_mesh(10.0, 20.0, 0.0, plane);
        let (e1, e2) = plane.axes();
        let along = [Vec3::y().dot(&e1), Vec3::y().dot(&e2)];
        let s = region_extent(&region_of(m.vertices.len()), &m, MotionDirection::InPlane(along)).unwrap();
        assert!((s.w_m - 10.0).abs() < 1e-9 && (s.l_m - 20.0).abs() < 1e-9);
    }

    #[test]
    fn rotated_rectangle_keeps_extents() {
        let s40 = 40f64.to_radians();
        let plane = ProjectionPlane::new(Vec3::new(0.0, -s40.sin(), s40.cos()), 0.0).unwrap();
        let m = rect_mesh(10.0, 20.0, 37.0, plane);
        let a = 37f64.to_radians();
        // the length axis (0, 1) rotated by 37 degrees
        let dir = [-a.sin(), a.cos()];
        let s = region_extent(&region_of(m.vertices.len()), &m, MotionDirection::InPlane(dir)).unwrap();
        assert!((s.w_m - 10.0).abs() < 1e-6 && (s.l_m - 20.0).abs() < 1e-6, "{s:?}");
        assert_eq!(classify_shape(s.theta_deg).unwrap(), ShapeClass::L);
    }

    #[test]
    fn steepest_descent_on_a_slope() {
        let s40 = 40f64.to_radians();
        let plane = ProjectionPlane::new(Vec3::new(0.0, -s40.sin(), s40.cos()), 0.0).unwrap();
        let m = rect_mesh(10.0, 20.0, 0.0, plane);
        let s = region_extent(&region_of(m.vertices.len()), &m, MotionDirection::SteepestDescent).unwrap();
        assert!((s.l_m - 20.0).abs() < 1e-9 && (s.w_m - 10.0).abs() < 1e-9);
        // the slope dips toward -y, i.e. azimuth 180
        let s = region_extent(&region_of(m.vertices.len()), &m, MotionDirection::Azimuth(180.0)).unwrap();
        assert!((s.l_m - 20.0).abs() < 1e-9);
    }

    #[test]
    fn flat_plane_without_direction_is_undefined() {
        let plane = ProjectionPlane::new(Vec3::z(), 0.0).unwrap();
        let m = rect_mesh(10.0, 20.0, 0.0, plane);
        assert!(matches!(
            region_extent(&region_of(m.vertices.len()), &m, MotionDirection::SteepestDescent),
            Err(Error::UndefinedMotionVector)
        ));
    }

    #[test]
    fn angles_and_classes() {
        assert!((shape_angle(3.0, 3.0).unwrap() - 45.0).abs() < 1e-12);
        assert!((shape_angle(31.1, 56.0).unwrap() - 60.95).abs() < 0.05);
        assert!((shape_angle(16.4, 44.8).unwrap() - 69.89).abs() < 0.05);
        assert!(shape_angle(0.0, 1.0).is_err());
        assert_eq!(classify_shape(45.0).unwrap(), ShapeClass::L);
        assert_eq!(classify_shape(67.5).unwrap(), ShapeClass::VL);
        assert_eq!(classify_shape(22.5).unwrap(), ShapeClass::W);
        assert_eq!(classify_shape(22.4999).unwrap(), ShapeClass::VW);
        assert!(classify_shape(0.0).is_err() && classify_shape(90.0).is_err());
    }

    #[test]
    fn annotations_parse() {
        let a: MotionAnnotation = "3=ts".parse().unwrap();
        assert_eq!(
            a,
            MotionAnnotation {
                region_id: 3,
                cruden_type: Some(CrudenType::TS)
            }
        );
        assert!("3".parse::<MotionAnnotation>().is_err());
        assert!("x=RS".parse::<MotionAnnotation>().is_err());
        assert!("1=XX".parse::<MotionAnnotation>().is_err());
    }

    proptest! {
        #[test]
        fn classes_partition_the_open_interval(theta in 1e-9f64..89.999999) {
            let c = classify_shape(theta).unwrap();
            let want = [(67.5, ShapeClass::VL), (45.0, ShapeClass::L), (22.5, ShapeClass::W), (0.0, ShapeClass::VW)]
                .into_iter()
                .find(|(lo, _)| theta >= *lo)
                .unwrap()
                .1;
            prop_assert_eq!(c, want);
        }

        #[test]
        fn class_follows_aspect(w in 0.1f64..100.0, l in 0.1f64..100.0, k in 0.01f64..100.0) {
            let c = classify_shape(shape_angle(w, l).unwrap()).unwrap();
            if l > w {
                prop_assert!(matches!(c, ShapeClass::L | ShapeClass::VL));
            } else if l < w {
                prop_assert!(matches!(c, ShapeClass::W | ShapeClass::VW));
            }
            let scaled = classify_shape(shape_angle(k * w, k * l).unwrap()).unwrap();
            // scaling may only move θ by rounding; compare away from class edges
            let t = shape_angle(w, l).unwrap();
            if [22.5, 45.0, 67.5].iter().all(|e| (t - e).abs() > 1e-9) {
                prop_assert_eq!(c, scaled);
            }
        }
    }
}
