//! Cloth simulation filter on a leveled point set: the cloud is turned upside
//! down, a grid of particles joined by springs falls onto it under gravity,
//! and points close to the settled cloth are ground.

use serde::{Deserialize, Serialize};

use super::GroundLabeling;
use crate::cloud::{Point3, PointClass};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClothParams {
    /// Particle spacing, meters.
    pub grid_resolution: f64,
    /// Spring stiffness class, 1 (soft) to 3 (stiff).
    pub rigidness: u8,
    pub time_step: f64,
    /// Points closer than this to the cloth are ground, meters.
    pub class_threshold: f64,
    pub max_iterations: usize,
    pub gravity: f64,
    /// The cloth has settled once no particle moves farther than this in one
    /// iteration, meters.
    pub convergence_tol: f64,
    pub damping: f64,
}

impl Default for ClothParams {
    fn default() -> Self {
        Self {
            grid_resolution: 0.5,
            rigidness: 2,
            time_step: 0.65,
            class_threshold: 0.5,
            max_iterations: 500,
            gravity: 0.2,
            convergence_tol: 0.005,
            damping: 0.01,
        }
    }
}

impl ClothParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_resolution > 0.0 && self.time_step > 0.0 && self.gravity > 0.0) {
            return Err(Error::param("cloth resolution, time step and gravity must be positive"));
        }
        if !(1..=3).contains(&self.rigidness) {
            return Err(Error::param(format!(
                "rigidness must be 1, 2 or 3, got {}",
                self.rigidness
            )));
        }
        if !(self.class_threshold > 0.0) || self.max_iterations == 0 || !(self.convergence_tol > 0.0) {
            return Err(Error::param(
                "class threshold, iteration cap and tolerance must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::param("damping must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// The settled cloth as a height grid in the inverted frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Cloth {
    pub origin: (f64, f64),
    pub resolution: f64,
    pub cols: usize,
    pub rows: usize,
    /// Row-major particle heights (inverted frame).
    pub heights: Vec<f64>,
    pub iterations: usize,
}

impl Cloth {
    /// Bilinear cloth height at `(x, y)`, clamped to the grid.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let fx = ((x - self.origin.0) / self.resolution).clamp(0.0, (self.cols - 1) as f64);
        let fy = ((y - self.origin.1) / self.resolution).clamp(0.0, (self.rows - 1) as f64);
        let (i, j) = (
            (fx.floor() as usize).min(self.cols.saturating_sub(2)),
            (fy.floor() as usize).min(self.rows.saturating_sub(2)),
        );
        if self.cols == 1 || self.rows == 1 {
            let k = (fy.round() as usize) * self.cols + fx.round() as usize;
            return self.heights[k];
        }
        let (u, v) = (fx - i as f64, fy - j as f64);
        let h = |a: usize, b: usize| self.heights[b * self.cols + a];
        let top = h(i, j) * (1.0 - u) + h(i + 1, j) * u;
        let bot = h(i, j + 1) * (1.0 - u) + h(i + 1, j + 1) * u;
        top * (1.0 - v) + bot * v
    }
}

/// Highest inverted point per particle footprint; empty particles take the
/// mean of the nearest ring of filled ones.
fn collision_heights(points: &[Point3], origin: (f64, f64), res: f64, cols: usize, rows: usize) -> Vec<f64> {
    let mut ihv = vec![f64::NEG_INFINITY; cols * rows];
    for p in points {
        let i = (((p.x - origin.0) / res).round() as usize).min(cols - 1);
        let j = (((p.y - origin.1) / res).round() as usize).min(rows - 1);
        let k = j * cols + i;
        ihv[k] = ihv[k].max(-p.z);
    }
    let filled = ihv.clone();
    for j in 0..rows {
        for i in 0..cols {
            if filled[j * cols + i].is_finite() {
                continue;
            }
            let max_ring = cols.max(rows);
            for ring in 1..=max_ring {
                let (mut sum, mut n) = (0.0, 0usize);
                let r = ring as i64;
                for dj in -r..=r {
                    for di in -r..=r {
                        if di.abs() != r && dj.abs() != r {
                            continue;
                        }
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if a < 0 || b < 0 || a >= cols as i64 || b >= rows as i64 {
                            continue;
                        }
                        let v = filled[b as usize * cols + a as usize];
                        if v.is_finite() {
                            sum += v;
                            n += 1;
                        }
                    }
                }
                if n > 0 {
                    ihv[j * cols + i] = sum / n as f64;
                    break;
                }
            }
        }
    }
    ihv
}

/// Drops the cloth onto the inverted `points` and returns it once settled.
pub fn simulate_cloth(points: &[Point3], params: &ClothParams) -> Result<Cloth> {
    params.validate()?;
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let res = params.grid_resolution;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut top = f64::NEG_INFINITY;
    for p in points {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
        top = top.max(-p.z);
    }
    let cols = ((x1 - x0) / res).ceil() as usize + 1;
    let rows = ((y1 - y0) / res).ceil() as usize + 1;
    let origin = (x0, y0);
    let ihv = collision_heights(points, origin, res, cols, rows);

    let n = cols * rows;
    let start = top + res;
    let mut z = vec![start; n];
    let mut prev = z.clone();
    let mut movable = vec![true; n];
    let drop = params.gravity * params.time_step * params.time_step;
    let keep = 1.0 - params.damping;

    let mut springs = Vec::with_capacity(2 * n);
    for j in 0..rows {
        for i in 0..cols {
            let k = j * cols + i;
            if i + 1 < cols {
                springs.push((k, k + 1));
            }
            if j + 1 < rows {
                springs.push((k, k + cols));
            }
        }
    }

    let mut residual = f64::INFINITY;
    for it in 1..=params.max_iterations {
        let before = z.clone();
        for k in 0..n {
            if movable[k] {
                let next = z[k] + (z[k] - prev[k]) * keep - drop;
                prev[k] = z[k];
                z[k] = next;
            }
        }
        for _ in 0..params.rigidness {
            for &(a, b) in &springs {
                let d = z[b] - z[a];
                match (movable[a], movable[b]) {
                    (true, true) => {
                        z[a] += d / 4.0;
                        z[b] -= d / 4.0;
                    }
                    (true, false) => z[a] += d / 2.0,
                    (false, true) => z[b] -= d / 2.0,
                    (false, false) => {}
                }
            }
        }
        for k in 0..n {
            if movable[k] && z[k] <= ihv[k] {
                z[k] = ihv[k];
                prev[k] = ihv[k];
                movable[k] = false;
            }
        }
        residual = z.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if residual < params.convergence_tol && it > 1 {
            return Ok(Cloth {
                origin,
                resolution: res,
                cols,
                rows,
                heights: z,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        residual,
        iterations: params.max_iterations,
    })
}

/// Ground/vegetation labels for a leveled point set.
pub fn csf_classify(points: &[Point3], params: &ClothParams) -> Result<GroundLabeling> {
    let cloth = simulate_cloth(points, params)?;
    let labels = points
        .iter()
        .map(|p| {
            let d = (-p.z - cloth.height_at(p.x, p.y)).abs();
            if d < params.class_threshold {
                PointClass::Ground
            } else {
                PointClass::Vegetation
            }
        })
        .collect();
    Ok(GroundLabeling::new(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane(n: usize, spacing: f64) -> Vec<Point3> {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(Point3::new(
                    i as f64 * spacing,
                    j as f64 * spacing,
                    0.01 * ((i * 7 + j * 3) % 5) as f64,
                ));
            }
        }
        pts
    }

    #[test]
    fn flat_plane_is_all_ground() {
        let l = csf_classify(&plane(40, 0.25), &ClothParams::default()).unwrap();
        assert_eq!(l.vegetation_count, 0);
        assert_eq!(l.ground_count, 1600);
    }

    #[test]
    fn elevated_blobs_are_vegetation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = plane(60, 0.25);
        let ground = pts.len();
        for c in [(4.0, 4.0), (10.0, 11.0), (12.0, 3.0)] {
            for _ in 0..200 {
                let (dx, dy): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                pts.push(Point3::new(c.0 + dx, c.1 + dy, rng.random_range(0.5..2.0)));
            }
        }
        let l = csf_classify(&pts, &ClothParams::default()).unwrap();
        let correct = l
            .labels
            .iter()
            .enumerate()
            .filter(|(i, c)| (*i < ground) == (**c == PointClass::Ground))
            .count();
        assert!(correct as f64 / pts.len() as f64 >= 0.95, "{correct}");
    }

    #[test]
    fn infinite_threshold_labels_everything_ground() {
        let mut pts = plane(20, 0.25);
        pts.push(Point3::new(2.0, 2.0, 5.0));
        let params = ClothParams {
            class_threshold: f64::INFINITY,
            ..Default::default()
        };
        assert_eq!(csf_classify(&pts, &params).unwrap().vegetation_count, 0);
    }

    #[test]
    fn deterministic() {
        let pts = plane(30, 0.3);
        let a = simulate_cloth(&pts, &ClothParams::default()).unwrap();
        let b = simulate_cloth(&pts, &ClothParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(5.0, 5.0, -50.0)];
        let params = ClothParams {
            max_iterations: 2,
            ..Default::default()
        };
        match simulate_cloth(&pts, &params) {
            Err(Error::NoConvergence { residual, iterations }) => {
                assert!(residual > 0.0);
                assert_eq!(iterations, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_rigidness_rejected() {
        let params = ClothParams {
            rigidness: 4,
            ..Default::default()
        };
        assert!(csf_classify(&plane(3, 1.0), &params).is_err());
    }
}
