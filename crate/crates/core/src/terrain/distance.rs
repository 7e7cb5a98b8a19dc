//! Signed vertex-to-mesh distances between two epochs' DTMs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mesh::TriangleMesh;
use crate::cloud::{Point3, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceParams {
    /// Vertices farther than this from the reference surface are invalid.
    pub max_dist: f64,
    /// Also invalidate vertices whose projection falls outside every
    /// reference triangle (holes, unscanned margins).
    pub footprint_guard: bool,
}

impl Default for DistanceParams {
    fn default() -> Self {
        Self {
            max_dist: 5.0,
            footprint_guard: true,
        }
    }
}

/// Per-vertex signed change of the compared surface relative to the
/// reference (deposition positive, erosion negative).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationField {
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub interval_days: f64,
    pub compared_epoch: String,
    pub reference_epoch: String,
}

impl DeformationField {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Closest point to `p` on triangle `abc` (exact, region-based).
pub fn closest_point_on_triangle(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> Point3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Uniform grid over the projected triangle bounding boxes.
struct TriangleGrid {
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    cells: Vec<Vec<u32>>,
    uv: Vec<[f64; 2]>,
}

impl TriangleGrid {
    fn new(mesh: &TriangleMesh) -> Self {
        let axes = mesh.plane.axes();
        let uv: Vec<[f64; 2]> = mesh.vertices.iter().map(|p| mesh.project_local(p, &axes)).collect();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for t in &mesh.triangles {
            for &i in t {
                for a in 0..2 {
                    lo[a] = lo[a].min(uv[i][a]);
                    hi[a] = hi[a].max(uv[i][a]);
                }
            }
        }
        let total: f64 = (0..mesh.triangles.len()).map(|k| mesh.projected_area(k)).sum();
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let mut cell = (2.0 * (total / mesh.triangles.len() as f64).sqrt()).max(span / 2048.0);
        if !(cell > 0.0) {
            cell = span;
        }
        let dims = [
            ((hi[0] - lo[0]) / cell).floor() as usize + 1,
            ((hi[1] - lo[1]) / cell).floor() as usize + 1,
        ];
        let mut cells = vec![Vec::new(); dims[0] * dims[1]];
        for (k, t) in mesh.triangles.iter().enumerate() {
            let mut tlo = [f64::INFINITY; 2];
            let mut thi = [f64::NEG_INFINITY; 2];
            for &i in t {
                for a in 0..2 {
                    tlo[a] = tlo[a].min(uv[i][a]);
                    thi[a] = thi[a].max(uv[i][a]);
                }
            }
            let (i0, j0) = (((tlo[0] - lo[0]) / cell) as usize, ((tlo[1] - lo[1]) / cell) as usize);
            let i1 = (((thi[0] - lo[0]) / cell) as usize).min(dims[0] - 1);
            let j1 = (((thi[1] - lo[1]) / cell) as usize).min(dims[1] - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    cells[j * dims[0] + i].push(k as u32);
                }
            }
        }
        Self {
            origin: lo,
            cell,
            dims,
            cells,
            uv,
        }
    }

    fn cell_of(&self, q: [f64; 2]) -> ([i64; 2], bool) {
        let mut c = [0i64; 2];
        let mut inside = true;
        for a in 0..2 {
            let k = ((q[a] - self.origin[a]) / self.cell).floor() as i64;
            let clamped = k.clamp(0, self.dims[a] as i64 - 1);
            inside &= k == clamped;
            c[a] = clamped;
        }
        (c, inside)
    }

    fn bucket(&self, i: i64, j: i64) -> &[u32] {
        if i < 0 || j < 0 || i >= self.dims[0] as i64 || j >= self.dims[1] as i64 {
            return &[];
        }
        &self.cells[j as usize * self.dims[0] + i as usize]
    }

    /// Whether `q` lies inside (or on the border of) a projected triangle.
    fn covers(&self, mesh: &TriangleMesh, q: [f64; 2]) -> bool {
        let (c, inside) = self.cell_of(q);
        if !inside {
            return false;
        }
        self.bucket(c[0], c[1]).iter().any(|&k| {
            let [a, b, cc] = mesh.triangles[k as usize].map(|i| self.uv[i]);
            let cross =
                |o: [f64; 2], p: [f64; 2], r: [f64; 2]| (p[0] - o[0]) * (r[1] - o[1]) - (p[1] - o[1]) * (r[0] - o[0]);
            let area = cross(a, b, cc);
            let tol = -1e-9 * area.abs();
            cross(a, b, q) >= tol && cross(b, cc, q) >= tol && cross(cc, a, q) >= tol
        })
    }

    /// Nearest triangle to `p` (reference-local coordinates) and its closest
    /// point, by rings of cells ordered by a lower bound on the distance.
    fn nearest(&self, mesh: &TriangleMesh, p: &Point3, q: [f64; 2]) -> (usize, Point3, f64) {
        let (c, _) = self.cell_of(q);
        let max_ring = self.dims[0].max(self.dims[1]) as i64;
        let mut best = (usize::MAX, *p, f64::INFINITY);
        let test = |k: u32, best: &mut (usize, Point3, f64)| {
            let [a, b, cc] = mesh.triangles[k as usize].map(|i| mesh.vertices[i]);
            let cp = closest_point_on_triangle(p, &a, &b, &cc);
            let d2 = (p - cp).norm_squared();
            if d2 < best.2 || (d2 == best.2 && (k as usize) < best.0) {
                *best = (k as usize, cp, d2);
            }
        };
        for r in 0..=max_ring {
            let bound = (r - 1).max(0) as f64 * self.cell;
            if bound * bound > best.2 {
                break;
            }
            for j in c[1] - r..=c[1] + r {
                for i in c[0] - r..=c[0] + r {
                    if (i - c[0]).abs() != r && (j - c[1]).abs() != r {
                        continue;
                    }
                    for &k in self.bucket(i, j) {
                        test(k, &mut best);
                    }
                }
            }
        }
        best
    }
}

/// Signed distance of every compared vertex to the nearest point of the
/// reference surface, positive on the side the reference triangles face.
pub fn mesh_distance(
    compared: &TriangleMesh,
    reference: &TriangleMesh,
    params: &DistanceParams,
    interval_days: f64,
) -> Result<DeformationField> {
    if reference.triangles.is_empty() {
        return Err(Error::EmptyReference);
    }
    if !(params.max_dist > 0.0) {
        return Err(Error::param("max_dist must be positive"));
    }
    if !(interval_days > 0.0 && interval_days.is_finite()) {
        return Err(Error::InvalidInterval(format!(
            "interval must be positive, got {interval_days}"
        )));
    }
    let grid = TriangleGrid::new(reference);
    let axes = reference.plane.axes();
    let delta: Vec3 = compared.origin_shift - reference.origin_shift;
    let normals: Vec<Vec3> = reference
        .triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| reference.vertices[i]);
            let n = (b - a).cross(&(c - a)).normalize();
            if n.dot(&reference.plane.normal) < 0.0 {
                -n
            } else {
                n
            }
        })
        .collect();
    let (values, valid): (Vec<f64>, Vec<bool>) = compared
        .vertices
        .par_iter()
        .map(|v| {
            let p = v + delta;
            let q = reference.project_local(&p, &axes);
            let (k, cp, d2) = grid.nearest(reference, &p, q);
            let d = d2.sqrt();
            let signed = if (p - cp).dot(&normals[k]) < 0.0 { -d } else { d };
            let ok = d <= params.max_dist && (!params.footprint_guard || grid.covers(reference, q));
            (signed, ok)
        })
        .unzip();
    Ok(DeformationField {
        values,
        valid,
        interval_days,
        compared_epoch: compared.epoch_id.clone(),
        reference_epoch: reference.epoch_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;
    use crate::terrain::{build_dtm, ProjectionPlane};
    use proptest::prelude::*;

    fn plane_mesh(n: usize, step: f64, z: f64, skip: impl Fn(usize, usize) -> bool) -> TriangleMesh {
        let mut pts = Vec::new();
        for j in 0..n {
            for i in 0..n {
                if !skip(i, j) {
                    pts.push([i as f64 * step, j as f64 * step, z]);
                }
            }
        }
        let plane = ProjectionPlane::new(Vec3::z(), 0.0).unwrap();
        build_dtm(&PointCloud::from_xyz(&pts), Some(plane), 1.5 * step)
            .unwrap()
            .mesh
    }

    fn brute_distance(p: &Point3, m: &TriangleMesh) -> f64 {
        m.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| m.vertices[i]);
                (p - closest_point_on_triangle(p, &a, &b, &c)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn identical_meshes_have_zero_distance() {
        let m = plane_mesh(10, 1.0, 0.0, |_, _| false);
        let f = mesh_distance(&m, &m, &DistanceParams::default(), 10.0).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        assert!(f.valid.iter().all(|&v| v));
    }

    #[test]
    fn raised_plane_is_deposition() {
        let r = plane_mesh(10, 1.0, 0.0, |_, _| false);
        let c = plane_mesh(10, 1.0, 0.3, |_, _| false);
        let f = mesh_distance(&c, &r, &DistanceParams::default(), 10.0).unwrap();
        assert!(f.values.iter().all(|&v| (v - 0.3).abs() < 1e-12));
        let f = mesh_distance(&r, &c, &DistanceParams::default(), 10.0).unwrap();
        assert!(f.values.iter().all(|&v| (v + 0.3).abs() < 1e-12));
    }

    #[test]
    fn vertices_over_a_wide_hole_are_invalid() {
        // 21 x 21 m reference with a 17 x 17 m hole; the compared center
        // vertex is 8 m from the nearest remaining triangle.
        let r = plane_mesh(22, 1.0, 0.0, |i, j| (3..=18).contains(&i) && (3..=18).contains(&j));
        let c = plane_mesh(22, 1.0, 0.0, |_, _| false);
        let params = DistanceParams {
            max_dist: 5.0,
            footprint_guard: false,
        };
        let f = mesh_distance(&c, &r, &params, 10.0).unwrap();
        let center = c.vertices.iter().position(|p| p.x == 10.0 && p.y == 10.0).unwrap();
        assert!((f.values[center].abs() - 8.0).abs() < 1e-12);
        assert!(!f.valid[center]);
        assert!(f.values.iter().zip(&f.valid).all(|(v, ok)| !ok || v.abs() <= 5.0));
    }

    #[test]
    fn footprint_guard_masks_narrow_holes() {
        let r = plane_mesh(12, 1.0, 0.0, |i, j| (5..=6).contains(&i) && (5..=6).contains(&j));
        let c = plane_mesh(12, 1.0, 0.0, |_, _| false);
        let guarded = mesh_distance(&c, &r, &DistanceParams::default(), 10.0).unwrap();
        let open = mesh_distance(
            &c,
            &r,
            &DistanceParams {
                footprint_guard: false,
                ..Default::default()
            },
            10.0,
        )
        .unwrap();
        let inside_hole = c.vertices.iter().position(|p| p.x == 5.0 && p.y == 5.0).unwrap();
        assert!(open.valid[inside_hole]);
        assert!(!guarded.valid[inside_hole]);
        assert!(guarded.valid_count() < open.valid_count());
        // vertices on the hole rim lie on reference triangles
        let rim = c.vertices.iter().position(|p| p.x == 4.0 && p.y == 4.0).unwrap();
        assert!(guarded.valid[rim]);
    }

    #[test]
    fn shifted_frames_are_reconciled() {
        let r = plane_mesh(8, 1.0, 0.0, |_, _| false);
        let mut c = plane_mesh(8, 1.0, 0.25, |_, _| false);
        let s = Vec3::new(1000.0, -500.0, 20.0);
        for v in &mut c.vertices {
            *v -= s;
        }
        c.origin_shift = s;
        let f = mesh_distance(&c, &r, &DistanceParams::default(), 10.0).unwrap();
        assert!(f.values.iter().all(|&v| (v - 0.25).abs() < 1e-9));
    }

    #[test]
    fn bad_inputs() {
        let m = plane_mesh(4, 1.0, 0.0, |_, _| false);
        let mut empty = m.clone();
        empty.triangles.clear();
        assert!(matches!(
            mesh_distance(&m, &empty, &DistanceParams::default(), 1.0),
            Err(Error::EmptyReference)
        ));
        assert!(mesh_distance(&m, &m, &DistanceParams::default(), 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn grid_search_matches_brute_force(
            coords in proptest::collection::vec((-1.0f64..11.0, -1.0f64..11.0, -3.0f64..3.0), 1..40),
            bump in 0.0f64..2.0,
        ) {
            let mut pts = Vec::new();
            for j in 0..11 {
                for i in 0..11 {
                    let (x, y) = (i as f64, j as f64);
                    pts.push([x, y, bump * ((x * 0.7).sin() + (y * 0.4).cos())]);
                }
            }
            let reference = build_dtm(&PointCloud::from_xyz(&pts), None, 10.0).unwrap().mesh;
            let compared = PointCloud::from_xyz(&coords.iter().map(|&(x, y, z)| [x, y, z]).collect::<Vec<_>>());
            let cmesh = TriangleMesh {
                vertices: compared.points.clone(),
                triangles: Vec::new(),
                plane: reference.plane,
                origin_shift: compared.origin_shift,
                epoch_id: String::new(),
            };
            let params = DistanceParams { max_dist: 100.0, footprint_guard: false };
            let f = mesh_distance(&cmesh, &reference, &params, 1.0).unwrap();
            for (p, v) in compared.points.iter().zip(&f.values) {
                let want = brute_distance(p, &reference);
                prop_assert!((v.abs() - want).abs() < 1e-9, "{} vs {}", v, want);
            }
        }
    }
}
