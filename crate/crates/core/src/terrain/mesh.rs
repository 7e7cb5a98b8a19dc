//! 2.5D TIN construction over a projection plane.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation};

use crate::cloud::{fit_plane, Point3, PointCloud, Vec3};
use crate::error::{Error, Result};

/// Plane `normal · x = offset` in absolute coordinates. The normal is the
/// oriented "outward" direction that defines the deposition sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPlane {
    pub normal: Vec3,
    pub offset: f64,
}

impl ProjectionPlane {
    pub fn new(normal: Vec3, offset: f64) -> Result<Self> {
        let len = normal.norm();
        if !(len > 0.0 && len.is_finite() && offset.is_finite()) {
            return Err(Error::InvalidPlane(format!("normal {normal:?}, offset {offset}")));
        }
        Ok(Self {
            normal: normal / len,
            offset: offset / len,
        })
    }

    /// Least-squares plane of the cloud, normal oriented upward (z ≥ 0; for
    /// vertical planes, toward +y, then +x).
    pub fn fit(cloud: &PointCloud) -> Result<Self> {
        let (c, mut n) = fit_plane(cloud.points.iter().copied())
            .ok_or_else(|| Error::DegenerateSurface("cannot fit a plane to fewer than 3 points".into()))?;
        let key = if n.z.abs() > 1e-12 {
            n.z
        } else if n.y.abs() > 1e-12 {
            n.y
        } else {
            n.x
        };
        if key < 0.0 {
            n = -n;
        }
        let abs = c.coords + cloud.origin_shift;
        Self::new(n, n.dot(&abs))
    }

    /// In-plane axes `(e1, e2)` with `e1 × e2 = normal`; `e1` is horizontal
    /// (along strike) unless the plane itself is horizontal.
    pub fn axes(&self) -> (Vec3, Vec3) {
        let n = self.normal;
        let strike = Vec3::z().cross(&n);
        let e1 = if strike.norm() > 1e-9 {
            strike.normalize()
        } else {
            Vec3::x()
        };
        (e1, n.cross(&e1))
    }

    /// Signed height of an absolute point above the plane.
    pub fn height(&self, p: &Point3) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }

    /// Downhill direction in `(e1, e2)` coordinates; `None` for a horizontal plane.
    pub fn steepest_descent(&self) -> Option<[f64; 2]> {
        let (e1, e2) = self.axes();
        let down = -Vec3::z() + self.normal * self.normal.z;
        let d = [down.dot(&e1), down.dot(&e2)];
        let len = d[0].hypot(d[1]);
        (len > 1e-9).then(|| [d[0] / len, d[1] / len])
    }

    /// In-plane direction of a map azimuth (degrees clockwise from +y),
    /// projected onto the plane along its normal, in `(e1, e2)` coordinates.
    pub fn azimuth_direction(&self, azimuth_deg: f64) -> Option<[f64; 2]> {
        let a = azimuth_deg.to_radians();
        let h = Vec3::new(a.sin(), a.cos(), 0.0);
        let (e1, e2) = self.axes();
        let d = [h.dot(&e1), h.dot(&e2)];
        let len = d[0].hypot(d[1]);
        (len > 1e-9).then(|| [d[0] / len, d[1] / len])
    }
}

/// Triangle mesh in local coordinates (absolute = vertex + `origin_shift`).
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
    pub plane: ProjectionPlane,
    pub origin_shift: Vec3,
    pub epoch_id: String,
}

impl TriangleMesh {
    /// Mesh over the points of `cloud` with the given faces. Without a plane,
    /// the best-fit plane of the vertices is used.
    pub fn from_parts(cloud: &PointCloud, triangles: Vec<[usize; 3]>, plane: Option<ProjectionPlane>) -> Result<Self> {
        let plane = match plane {
            Some(p) => p,
            None => ProjectionPlane::fit(cloud)?,
        };
        let mesh = Self {
            vertices: cloud.points.clone(),
            triangles,
            plane,
            origin_shift: cloud.origin_shift,
            epoch_id: cloud.epoch_id.clone(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::Format(format!("triangle {k} references a vertex out of range")));
            }
            if !(self.area(k) > 0.0) {
                return Err(Error::DegenerateSurface(format!("triangle {k} has zero area")));
            }
        }
        Ok(())
    }

    /// Vertices as a cloud (no scalars).
    pub fn to_cloud(&self) -> PointCloud {
        let mut c = PointCloud::new(self.vertices.clone());
        c.origin_shift = self.origin_shift;
        c.epoch_id = self.epoch_id.clone();
        c
    }

    pub fn absolute(&self, i: usize) -> Point3 {
        self.vertices[i] + self.origin_shift
    }

    /// In-plane coordinates of a point given in this mesh's local frame.
    pub(crate) fn project_local(&self, p: &Point3, axes: &(Vec3, Vec3)) -> [f64; 2] {
        [axes.0.dot(&p.coords), axes.1.dot(&p.coords)]
    }

    /// Surface area of triangle `k`.
    pub fn area(&self, k: usize) -> f64 {
        let [a, b, c] = self.triangles[k].map(|i| self.vertices[i]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Area of triangle `k` projected onto the projection plane.
    pub fn projected_area(&self, k: usize) -> f64 {
        let [a, b, c] = self.triangles[k].map(|i| self.vertices[i]);
        0.5 * (b - a).cross(&(c - a)).dot(&self.plane.normal).abs()
    }

    /// Sorted, deduplicated vertex adjacency along triangle edges.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

/// A triangulated DTM plus the number of input points dropped because they
/// projected onto an earlier point.
#[derive(Debug, Clone, PartialEq)]
pub struct Dtm {
    pub mesh: TriangleMesh,
    pub duplicates_dropped: usize,
}

/// Minimum of twice the projected area over the squared longest edge.
const SLIVER_RATIO: f64 = 1e-9;

struct Site {
    pos: Point2<f64>,
    index: usize,
}

impl HasPosition for Site {
    type Scalar = f64;
    fn position(&self) -> Point2<f64> {
        self.pos
    }
}

/// Delaunay TIN of the points projected onto `plane` (default: best-fit
/// plane). Vertices keep their 3D coordinates; triangles with any edge longer
/// than `max_edge` are discarded so that data gaps stay holes.
pub fn build_dtm(cloud: &PointCloud, plane: Option<ProjectionPlane>, max_edge: f64) -> Result<Dtm> {
    if !(max_edge > 0.0) {
        return Err(Error::param("max_edge must be positive"));
    }
    if cloud.len() < 3 {
        return Err(Error::DegenerateSurface(format!(
            "{} points cannot span a surface",
            cloud.len()
        )));
    }
    let plane = match plane {
        Some(p) => p,
        None => ProjectionPlane::fit(cloud)?,
    };
    let axes = plane.axes();

    let mut seen = HashSet::with_capacity(cloud.len());
    let mut keep = Vec::with_capacity(cloud.len());
    let mut sites = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.points.iter().enumerate() {
        let uv = [axes.0.dot(&p.coords), axes.1.dot(&p.coords)];
        if !seen.insert((uv[0].to_bits(), uv[1].to_bits())) {
            continue;
        }
        sites.push(Site {
            pos: Point2::new(uv[0], uv[1]),
            index: keep.len(),
        });
        keep.push(i);
    }
    let duplicates_dropped = cloud.len() - keep.len();
    if duplicates_dropped > 0 {
        log::warn!("build_dtm: dropped {duplicates_dropped} points with duplicate projections");
    }

    let tin: DelaunayTriangulation<Site> = DelaunayTriangulation::bulk_load(sites)
        .map_err(|e| Error::DegenerateSurface(format!("triangulation failed: {e:?}")))?;
    if tin.num_inner_faces() == 0 {
        return Err(Error::DegenerateSurface("points are collinear in projection".into()));
    }

    let vertices: Vec<Point3> = keep.iter().map(|&i| cloud.points[i]).collect();
    let max2 = max_edge * max_edge;
    let mut triangles: Vec<[usize; 3]> = tin
        .inner_faces()
        .map(|f| f.vertices().map(|v| v.data().index))
        .filter(|t| {
            let [a, b, c] = t.map(|i| vertices[i]);
            (a - b).norm_squared() <= max2 && (b - c).norm_squared() <= max2 && (c - a).norm_squared() <= max2
        })
        .filter(|t| {
            // near-collinear hull slivers from rounding in the projection
            let [a, b, c] = t.map(|i| vertices[i]);
            let twice_area = (b - a).cross(&(c - a)).dot(&plane.normal);
            let longest = (a - b)
                .norm_squared()
                .max((b - c).norm_squared())
                .max((c - a).norm_squared());
            twice_area > SLIVER_RATIO * longest
        })
        .collect();
    triangles.sort_unstable();

    let mut out = PointCloud::new(vertices);
    out.origin_shift = cloud.origin_shift;
    out.epoch_id = cloud.epoch_id.clone();
    Ok(Dtm {
        mesh: TriangleMesh::from_parts(&out, triangles, Some(plane))?,
        duplicates_dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, step: f64) -> PointCloud {
        let mut pts = Vec::new();
        for j in 0..n {
            for i in 0..n {
                pts.push([i as f64 * step, j as f64 * step, 0.1 * i as f64]);
            }
        }
        PointCloud::from_xyz(&pts)
    }

    #[test]
    fn three_points_make_one_triangle() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.2]]);
        let d = build_dtm(&c, None, 10.0).unwrap();
        assert_eq!(d.mesh.triangles.len(), 1);
    }

    #[test]
    fn grid_triangle_count_and_empty_circumcircles() {
        let n = 12;
        let c = grid(n, 1.0);
        let d = build_dtm(&c, None, 5.0).unwrap();
        let m = &d.mesh;
        assert_eq!(m.triangles.len(), 2 * (n - 1) * (n - 1));
        let axes = m.plane.axes();
        let uv: Vec<[f64; 2]> = m.vertices.iter().map(|p| m.project_local(p, &axes)).collect();
        for t in &m.triangles {
            let [a, b, c] = t.map(|i| uv[i]);
            // circumcircle by the standard determinant formula
            let dd = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
            let sq = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1];
            let ux = (sq(a) * (b[1] - c[1]) + sq(b) * (c[1] - a[1]) + sq(c) * (a[1] - b[1])) / dd;
            let uy = (sq(a) * (c[0] - b[0]) + sq(b) * (a[0] - c[0]) + sq(c) * (b[0] - a[0])) / dd;
            let r2 = (a[0] - ux).powi(2) + (a[1] - uy).powi(2);
            for (k, p) in uv.iter().enumerate() {
                if t.contains(&k) {
                    continue;
                }
                let d2 = (p[0] - ux).powi(2) + (p[1] - uy).powi(2);
                assert!(d2 >= r2 - 1e-9, "vertex {k} inside circumcircle of {t:?}");
            }
        }
    }

    #[test]
    fn duplicates_are_dropped_and_counted() {
        let c = PointCloud::from_xyz(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
        ]);
        let plane = ProjectionPlane::new(Vec3::z(), 0.0).unwrap();
        let d = build_dtm(&c, Some(plane), 10.0).unwrap();
        assert_eq!(d.duplicates_dropped, 1);
        assert_eq!(d.mesh.vertices.len(), 4);
        assert_eq!(d.mesh.triangles.len(), 2);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [3.0, 3.0, 0.0]]);
        let plane = ProjectionPlane::new(Vec3::z(), 0.0).unwrap();
        assert!(matches!(
            build_dtm(&c, Some(plane), 10.0),
            Err(Error::DegenerateSurface(_))
        ));
        assert!(matches!(
            build_dtm(&c.select(&[0, 1]), None, 10.0),
            Err(Error::DegenerateSurface(_))
        ));
    }

    #[test]
    fn long_edges_leave_holes() {
        let mut c = grid(10, 1.0);
        // remove a 4 x 4 block of interior points
        let keep: Vec<usize> = (0..c.len())
            .filter(|&k| {
                let (i, j) = (k % 10, k / 10);
                !((3..7).contains(&i) && (3..7).contains(&j))
            })
            .collect();
        c = c.select(&keep);
        let full = build_dtm(&c, None, 100.0).unwrap().mesh;
        let holed = build_dtm(&c, None, 2.0).unwrap().mesh;
        assert!(holed.triangles.len() < full.triangles.len());
        for t in &holed.triangles {
            let [a, b, cc] = t.map(|i| holed.vertices[i]);
            assert!((a - b).norm() <= 2.0 && (b - cc).norm() <= 2.0 && (cc - a).norm() <= 2.0);
        }
    }

    #[test]
    fn triangles_face_the_plane_normal() {
        let d = build_dtm(&grid(6, 0.5), None, 5.0).unwrap();
        let m = &d.mesh;
        assert!(m.plane.normal.z > 0.0);
        for t in &m.triangles {
            let [a, b, c] = t.map(|i| m.vertices[i]);
            assert!((b - a).cross(&(c - a)).dot(&m.plane.normal) > 0.0);
        }
    }

    #[test]
    fn plane_helpers() {
        let s = 40f64.to_radians();
        let p = ProjectionPlane::new(Vec3::new(0.0, -s.sin(), s.cos()), 0.0).unwrap();
        let (e1, e2) = p.axes();
        assert!((e1.cross(&e2) - p.normal).norm() < 1e-12);
        let d = p.steepest_descent().unwrap();
        assert!(d[0].abs() < 1e-12 && (d[1] + 1.0).abs() < 1e-12);
        let flat = ProjectionPlane::new(Vec3::z(), 0.0).unwrap();
        assert!(flat.steepest_descent().is_none());
        assert!(ProjectionPlane::new(Vec3::zeros(), 0.0).is_err());
    }
}
