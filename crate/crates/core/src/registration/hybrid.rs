//! Coarse-to-fine global registration: keypoints are matched by exact
//! bipartite assignment under a cost that blends descriptor distance with
//! Euclidean distance at the current pose, the blend sliding from
//! feature-dominated to purely Euclidean; plain ICP finishes.

use serde::{Deserialize, Serialize};

use super::coarse::{best_verified_fit, consistent_sets, verification_sample, VERIFY_SAMPLE};
use super::features::{prepare_cloud, FeatureParams, PreparedCloud, DESCRIPTOR_BITS};
use super::hungarian::min_cost_assignment;
use super::icp::{icp_local, truncated_rms};
use super::{IcpParams, RegistrationResult, RigidTransform};
use crate::cloud::{Point3, PointCloud, SpatialIndex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridParams {
    pub alpha_start: f64,
    pub alpha_steps: usize,
    pub icp: IcpParams,
    pub features: FeatureParams,
    /// Consistency tolerance in multiples of the median point spacing.
    pub consistency_factor: f64,
}

impl Default for HybridParams {
    fn default() -> Self {
        Self {
            alpha_start: 0.8,
            alpha_steps: 5,
            icp: IcpParams::default(),
            features: FeatureParams::default(),
            consistency_factor: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridResult {
    pub registration: RegistrationResult,
    /// Blend weight used at each outer step.
    pub alpha_trace: Vec<f64>,
    /// Whether the pose proposed at each outer step lowered the objective.
    pub accepted: Vec<bool>,
    /// Current pose after each outer step (absolute frame).
    pub pose_trace: Vec<RigidTransform>,
}

/// Linear schedule from `start` down to exactly 0 over `steps` values.
pub fn alpha_schedule(start: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::param("alpha_steps must be at least 1"));
    }
    if !(0.0..=1.0).contains(&start) {
        return Err(Error::param(format!("alpha_start must lie in [0, 1], got {start}")));
    }
    if steps == 1 {
        return Ok(vec![0.0]);
    }
    let last = (steps - 1) as f64;
    Ok((0..steps).map(|k| start * (last - k as f64) / last).collect())
}

/// One outer step: bipartite matching under the blended cost, consistency
/// pruning, rigid fit of the best-verified consistent set. Returns the pose
/// and its objective on `sample`.
#[allow(clippy::too_many_arguments)]
fn hybrid_step(
    source: &PreparedCloud,
    target: &PreparedCloud,
    pose: &RigidTransform,
    alpha: f64,
    diameter: f64,
    consistency_eps: f64,
    sample: &[Point3],
    tau: f64,
) -> Option<(RigidTransform, f64)> {
    let sk: Vec<Point3> = source.keypoint_positions();
    let tk: Vec<Point3> = target.keypoint_positions();
    let (sd, td) = (&source.features.descriptors, &target.features.descriptors);
    let (rows, cols) = (sk.len(), tk.len());
    if rows < 3 || cols < 3 {
        return None;
    }
    let moved: Vec<Point3> = sk.iter().map(|p| pose.apply(p)).collect();
    let mut cost = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let feat = sd[i].hamming(&td[j]) as f64 / DESCRIPTOR_BITS as f64;
            let euc = (moved[i] - tk[j]).norm() / diameter;
            cost.push((alpha * feat * feat + (1.0 - alpha) * euc * euc).sqrt());
        }
    }
    let assignment = min_cost_assignment(&cost, rows, cols);
    let pairs: Vec<(Point3, Point3)> = assignment.iter().map(|&(i, j)| (sk[i], tk[j])).collect();
    let sets = consistent_sets(&pairs, consistency_eps, 32);
    best_verified_fit(&pairs, &sets, sample, &target.index, tau).map(|(t, _, obj)| (t, obj))
}

/// Hybrid-metric global registration followed by plain ICP on all points.
///
/// A proposed pose replaces the current one only when it lowers the
/// truncated objective. Whenever some step was accepted, ICP from the
/// identity is also run at working resolution and the lower objective wins,
/// so the method never does worse than plain ICP by its own measure.
pub fn register_global_hybrid(source: &PointCloud, target: &PointCloud, params: &HybridParams) -> Result<HybridResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let alphas = alpha_schedule(params.alpha_start, params.alpha_steps)?;
    let shift = target.origin_shift;
    let src_full = source.rebased(shift);
    let src = prepare_cloud(&src_full, &params.features)?;
    let tgt = prepare_cloud(target, &params.features)?;
    if src.features.len() < 3 || tgt.features.len() < 3 {
        return Err(Error::InsufficientGeometry("too few describable keypoints".into()));
    }
    let diameter = src.cloud.diameter().max(tgt.cloud.diameter());
    let eps = params.consistency_factor * src.spacing.max(tgt.spacing);
    let tau = params.icp.max_pair_dist;
    let sample = verification_sample(&src.cloud.points, VERIFY_SAMPLE);

    let mut pose = RigidTransform::identity();
    let mut objective = truncated_rms(&sample, &tgt.index, &pose, tau);
    let mut accepted = Vec::with_capacity(alphas.len());
    let mut pose_trace = Vec::with_capacity(alphas.len());
    for &alpha in &alphas {
        let step = hybrid_step(&src, &tgt, &pose, alpha, diameter, eps, &sample, tau);
        let better = step.filter(|(_, obj)| *obj < objective);
        accepted.push(better.is_some());
        if let Some((c, obj)) = better {
            log::debug!("hybrid alpha={alpha:.2}: objective {objective:.4} -> {obj:.4}");
            pose = c;
            objective = obj;
        }
        pose_trace.push(RigidTransform::from_shifted_frame(&pose, &shift));
    }

    let coarse_icp =
        |init: RigidTransform| icp_local(&src.cloud.points, &tgt.cloud.points, &tgt.index, &params.icp, init);
    let guided = coarse_icp(pose);
    let start = if accepted.iter().any(|&a| a) {
        let score = |r: &RegistrationResult| truncated_rms(&sample, &tgt.index, &r.transform, tau);
        match (guided, coarse_icp(RigidTransform::identity())) {
            (Ok(g), Ok(p)) => {
                if score(&p) < score(&g) {
                    p.transform
                } else {
                    g.transform
                }
            }
            (Ok(g), Err(_)) => g.transform,
            (Err(_), Ok(p)) => p.transform,
            (Err(e), Err(_)) => return Err(e),
        }
    } else {
        guided?.transform
    };

    let full_index = SpatialIndex::from_cloud(target);
    let mut registration = icp_local(&src_full.points, &target.points, &full_index, &params.icp, start)?;
    registration.transform = RigidTransform::from_shifted_frame(&registration.transform, &shift);
    Ok(HybridResult {
        registration,
        alpha_trace: alphas,
        accepted,
        pose_trace,
    })
}
