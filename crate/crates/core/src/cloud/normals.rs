use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use super::{Point3, PointCloud, SpatialIndex, Vec3};
use crate::error::{Error, Result};

/// Ratio below which the middle covariance eigenvalue counts as zero
/// (neighborhood collapsed onto a line or a point).
const COLLINEAR_RATIO: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub normals: Vec<Option<Vec3>>,
    /// Surface variation `λ0 / (λ0 + λ1 + λ2)`; zero for invalid normals.
    pub curvature: Vec<f64>,
}

/// Eigen-decomposition sorted ascending: `(values, vectors as columns)`.
pub(crate) fn sorted_eigen(cov: &Matrix3<f64>) -> ([f64; 3], [Vec3; 3]) {
    let eig = SymmetricEigen::new(*cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.map(|i| eig.eigenvalues[i]);
    let vectors = order.map(|i| eig.eigenvectors.column(i).normalize());
    (values, vectors)
}

/// Normal from the neighborhood covariance; `None` when the neighborhood is
/// collinear or degenerate.
pub(crate) fn neighborhood_normal(
    points: &[Point3],
    neighbors: impl Iterator<Item = usize> + Clone,
) -> Option<(Vec3, f64)> {
    let (_, cov) = super::covariance(neighbors.map(|i| points[i]))?;
    let (vals, vecs) = sorted_eigen(&cov);
    if !(vals[2] > 0.0) || vals[1] <= COLLINEAR_RATIO * vals[2] {
        return None;
    }
    let sum = vals[0].max(0.0) + vals[1] + vals[2];
    Some((vecs[0], vals[0].max(0.0) / sum))
}

pub fn estimate_normals_with_curvature(cloud: &PointCloud, k: usize, viewpoint: &Point3) -> Result<NormalEstimate> {
    if k < 3 {
        return Err(Error::param(format!("normal estimation needs k >= 3, got {k}")));
    }
    if cloud.len() < k {
        return Err(Error::TooSparse {
            points: cloud.len(),
            required: k,
        });
    }
    let index = SpatialIndex::from_cloud(cloud);
    let results: Vec<(Option<Vec3>, f64)> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let p = cloud.points[i];
            let nn = index.nearest_neighbors(&p, k).expect("index is non-empty");
            match neighborhood_normal(&cloud.points, nn.iter().map(|n| n.index)) {
                Some((mut n, curv)) => {
                    if n.dot(&(viewpoint - p)) < 0.0 {
                        n = -n;
                    }
                    (Some(n), curv)
                }
                None => (None, 0.0),
            }
        })
        .collect();
    let (normals, curvature) = results.into_iter().unzip();
    Ok(NormalEstimate { normals, curvature })
}

/// Returns a copy of `cloud` with normals from `k`-neighborhood PCA, each
/// oriented toward `viewpoint`.
pub fn estimate_normals(cloud: &PointCloud, k: usize, viewpoint: &Point3) -> Result<PointCloud> {
    let est = estimate_normals_with_curvature(cloud, k, viewpoint)?;
    let mut out = cloud.clone();
    out.normals = Some(est.normals);
    Ok(out)
}
