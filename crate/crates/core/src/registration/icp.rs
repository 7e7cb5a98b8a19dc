use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nalgebra::{Matrix6, Rotation3, Vector6};

use super::{fit_rigid, RigidTransform};
use crate::cloud::normals::neighborhood_normal;
use crate::cloud::{Point3, PointCloud, SpatialIndex, Vec3};
use crate::error::{Error, Result};

/// Residual minimized by ICP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcpMetric {
    /// Distance to the nearest target point; closed-form rigid fit per step.
    #[default]
    PointToPoint,
    /// Distance to the tangent plane at the nearest target point; one
    /// linearized least-squares step per iteration. Residuals, `rmse` and the
    /// trace are inlier plane distances, and `convergence_eps` bounds the
    /// per-step displacement of any source point instead of the objective
    /// improvement.
    PointToPlane,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iter: usize,
    /// Stop once the RMS objective improves by less than this (meters).
    pub convergence_eps: f64,
    /// Pairs farther apart than this are rejected (meters).
    pub max_pair_dist: f64,
    pub metric: IcpMetric,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            convergence_eps: 1e-7,
            max_pair_dist: 1.0,
            metric: IcpMetric::PointToPoint,
        }
    }
}

/// Neighbors used for target normals under [`IcpMetric::PointToPlane`].
const PLANE_NORMAL_K: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Maps source absolute coordinates into the target frame.
    pub transform: RigidTransform,
    /// RMS residual over the final inlier pairs, meters.
    pub rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub inlier_count: usize,
    /// Point-to-point: truncated RMS objective `sqrt(mean(min(d², τ²)))` at
    /// the initial pose and after every accepted iteration; non-increasing.
    /// Point-to-plane: inlier plane RMS per iteration.
    pub rmse_trace: Vec<f64>,
}

impl RegistrationResult {
    pub fn identity() -> Self {
        Self {
            transform: RigidTransform::identity(),
            rmse: 0.0,
            iterations: 0,
            converged: true,
            inlier_count: 0,
            rmse_trace: Vec::new(),
        }
    }
}

/// Nearest-neighbor pairing of transformed `source` points against `target`.
/// Returns inlier pairs `(source idx, target idx, d²)` and the truncated
/// objective sum.
pub(crate) fn pair_points(
    source: &[Point3],
    target: &SpatialIndex,
    transform: &RigidTransform,
    max_pair_dist: f64,
) -> (Vec<(usize, usize, f64)>, f64) {
    let tau2 = max_pair_dist * max_pair_dist;
    let found: Vec<Option<(usize, f64)>> = source
        .par_iter()
        .map(|p| target.nearest_within(&transform.apply(p), max_pair_dist))
        .collect();
    let mut pairs = Vec::new();
    let mut objective = 0.0;
    for (i, f) in found.into_iter().enumerate() {
        match f {
            Some((j, d2)) if d2 <= tau2 => {
                objective += d2;
                pairs.push((i, j, d2));
            }
            _ => objective += tau2,
        }
    }
    (pairs, objective)
}

/// Truncated RMS objective of `transform` (local frame of `target`).
pub(crate) fn truncated_rms(source: &[Point3], target: &SpatialIndex, transform: &RigidTransform, tau: f64) -> f64 {
    if source.is_empty() {
        return 0.0;
    }
    let (_, obj) = pair_points(source, target, transform, tau);
    (obj / source.len() as f64).sqrt()
}

/// Unit PCA normals of the target points; `None` where the neighborhood is
/// degenerate.
fn target_normals(points: &[Point3], index: &SpatialIndex) -> Vec<Option<Vec3>> {
    let k = PLANE_NORMAL_K.min(points.len());
    points
        .par_iter()
        .map(|p| {
            let nn = index.nearest_neighbors(p, k).ok()?;
            neighborhood_normal(points, nn.iter().map(|n| n.index)).map(|(n, _)| n)
        })
        .collect()
}

/// Pairing for the point-to-plane metric: nearest target point within
/// `max_pair_dist`, residual measured to its tangent plane (the point
/// distance where the target has no normal). Returns pairs with squared
/// residuals.
fn pair_points_plane(
    source: &[Point3],
    target: &SpatialIndex,
    normals: &[Option<Vec3>],
    transform: &RigidTransform,
    max_pair_dist: f64,
) -> Vec<(usize, usize, f64)> {
    let (mut pairs, _) = pair_points(source, target, transform, max_pair_dist);
    let tp = target.points();
    for (i, j, r2) in pairs.iter_mut() {
        if let Some(n) = normals[*j] {
            *r2 = (transform.apply(&source[*i]) - tp[*j]).dot(&n).powi(2);
        }
    }
    pairs
}

/// Gauss-Newton increment `(rotation vector, translation)` of the
/// small-angle point-to-plane problem around `transform`; `None` when the
/// normal equations are singular.
fn plane_step(
    source: &[Point3],
    target_points: &[Point3],
    normals: &[Option<Vec3>],
    pairs: &[(usize, usize, f64)],
    transform: &RigidTransform,
) -> Option<(Vec3, Vec3)> {
    let mut ata = Matrix6::<f64>::zeros();
    let mut atb = Vector6::<f64>::zeros();
    for &(i, j, _) in pairs {
        let p = transform.apply(&source[i]);
        let q = target_points[j];
        let n = match normals[j] {
            Some(n) => n,
            None => {
                let d = q - p;
                let len = d.norm();
                if len == 0.0 {
                    continue;
                }
                d / len
            }
        };
        let c = p.coords.cross(&n);
        let a = Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z);
        ata += a * a.transpose();
        atb += a * (q - p).dot(&n);
    }
    let x = ata.cholesky()?.solve(&atb);
    Some((Vec3::new(x[0], x[1], x[2]), Vec3::new(x[3], x[4], x[5])))
}

fn apply_increment(transform: &RigidTransform, omega: Vec3, v: Vec3) -> RigidTransform {
    let step = RigidTransform::new(Rotation3::new(omega).into_inner(), v);
    step.compose(transform).orthonormalized()
}

fn rms(pairs: &[(usize, usize, f64)]) -> f64 {
    if pairs.is_empty() {
        0.0
    } else {
        (pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64).sqrt()
    }
}

/// ICP in the target's local frame, starting from `initial`.
pub(crate) fn icp_local(
    source: &[Point3],
    target_points: &[Point3],
    target: &SpatialIndex,
    params: &IcpParams,
    initial: RigidTransform,
) -> Result<RegistrationResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(params.max_pair_dist > 0.0) {
        return Err(Error::param("max_pair_dist must be positive"));
    }
    match params.metric {
        IcpMetric::PointToPoint => icp_point_to_point(source, target_points, target, params, initial),
        IcpMetric::PointToPlane => icp_point_to_plane(source, target_points, target, params, initial),
    }
}

/// A step is kept only when it does not raise the truncated objective.
fn icp_point_to_point(
    source: &[Point3],
    target_points: &[Point3],
    target: &SpatialIndex,
    params: &IcpParams,
    initial: RigidTransform,
) -> Result<RegistrationResult> {
    let n = source.len() as f64;
    let mut transform = initial;
    let (mut pairs, mut objective) = pair_points(source, target, &transform, params.max_pair_dist);
    if pairs.is_empty() {
        return Err(Error::NoOverlap {
            max_pair_dist: params.max_pair_dist,
        });
    }
    let mut trace = vec![(objective / n).sqrt()];
    let mut iterations = 0;
    let mut converged = false;

    for it in 1..=params.max_iter.max(1) {
        let matched: Vec<(Point3, Point3)> = pairs.iter().map(|&(i, j, _)| (source[i], target_points[j])).collect();
        let Ok(candidate) = fit_rigid(&matched) else {
            break;
        };
        let (new_pairs, new_objective) = pair_points(source, target, &candidate, params.max_pair_dist);
        if new_objective > objective {
            // only floating-point noise can get here; keep the better pose
            iterations = it;
            converged = true;
            break;
        }
        let improvement = (objective / n).sqrt() - (new_objective / n).sqrt();
        transform = candidate;
        pairs = new_pairs;
        objective = new_objective;
        iterations = it;
        trace.push((objective / n).sqrt());
        if improvement < params.convergence_eps {
            converged = true;
            break;
        }
    }

    Ok(RegistrationResult {
        transform,
        rmse: rms(&pairs),
        iterations,
        converged,
        inlier_count: pairs.len(),
        rmse_trace: trace,
    })
}

/// Alternates pairing and one Gauss-Newton step until the step moves no
/// source point by more than `convergence_eps`. There is no global
/// objective: unpaired points cost nothing, so the fixed point is not pulled
/// toward poses that merely pair more points.
fn icp_point_to_plane(
    source: &[Point3],
    target_points: &[Point3],
    target: &SpatialIndex,
    params: &IcpParams,
    initial: RigidTransform,
) -> Result<RegistrationResult> {
    let normals = target_normals(target_points, target);
    let radius = source.iter().map(|p| p.coords.norm()).fold(0.0, f64::max);
    let mut transform = initial;
    let mut pairs = pair_points_plane(source, target, &normals, &transform, params.max_pair_dist);
    if pairs.is_empty() {
        return Err(Error::NoOverlap {
            max_pair_dist: params.max_pair_dist,
        });
    }
    let mut trace = vec![rms(&pairs)];
    let mut iterations = 0;
    let mut converged = false;
    // bound on the displacement of any source point between two poses
    let moved = |a: &RigidTransform, b: &RigidTransform| {
        let d = a.compose(&b.inverse());
        d.angle() * radius + d.translation.norm()
    };
    let mut previous: Option<RigidTransform> = None;

    for it in 1..=params.max_iter.max(1) {
        let Some((w, v)) = plane_step(source, target_points, &normals, &pairs, &transform) else {
            break;
        };
        let candidate = apply_increment(&transform, w, v);
        let new_pairs = pair_points_plane(source, target, &normals, &candidate, params.max_pair_dist);
        if new_pairs.is_empty() {
            break;
        }
        iterations = it;
        if moved(&candidate, &transform) < params.convergence_eps {
            transform = candidate;
            pairs = new_pairs;
            trace.push(rms(&pairs));
            converged = true;
            break;
        }
        // pairings flipping back and forth: settle on the better of the two
        if let Some(p) = &previous {
            if moved(&candidate, p) < params.convergence_eps {
                if rms(&new_pairs) < rms(&pairs) {
                    transform = candidate;
                    pairs = new_pairs;
                    trace.push(rms(&pairs));
                }
                converged = true;
                break;
            }
        }
        previous = Some(transform);
        transform = candidate;
        pairs = new_pairs;
        trace.push(rms(&pairs));
    }

    Ok(RegistrationResult {
        transform,
        rmse: rms(&pairs),
        iterations,
        converged,
        inlier_count: pairs.len(),
        rmse_trace: trace,
    })
}

/// Iterative closest point from the identity pose.
pub fn icp(source: &PointCloud, target: &PointCloud, params: &IcpParams) -> Result<RegistrationResult> {
    icp_with_initial(source, target, params, &RigidTransform::identity())
}

/// ICP starting from an absolute-frame initial guess.
pub fn icp_with_initial(
    source: &PointCloud,
    target: &PointCloud,
    params: &IcpParams,
    initial: &RigidTransform,
) -> Result<RegistrationResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let shift = target.origin_shift;
    let src = source.rebased(shift);
    let index = SpatialIndex::from_cloud(target);
    let mut result = icp_local(
        &src.points,
        &target.points,
        &index,
        params,
        initial.in_shifted_frame(&shift),
    )?;
    result.transform = RigidTransform::from_shifted_frame(&result.transform, &shift);
    Ok(result)
}
