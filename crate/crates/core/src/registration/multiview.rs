//! Hierarchical multi-station registration: the most similar pair of view
//! clusters is aligned and merged until a single cluster remains.

use serde::{Deserialize, Serialize};

use super::coarse::{coarse_match, mutual_matches, CoarseParams};
use super::features::{prepare_cloud, PreparedCloud};
use super::icp::icp_local;
use super::{IcpMetric, IcpParams, RigidTransform};
use crate::cloud::{PointCloud, SpatialIndex, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiviewParams {
    pub coarse: CoarseParams,
    /// ICP on the working-resolution clusters after coarse alignment.
    pub icp: IcpParams,
    /// Final ICP on all points.
    pub fine_icp: IcpParams,
    /// Minimum fraction of source points paired within the fine ICP distance
    /// for an alignment to count as an overlap.
    pub min_overlap: f64,
    /// Maximum fine-ICP residual RMS for an accepted alignment (meters, in
    /// the fine metric).
    pub max_rmse: f64,
}

impl Default for MultiviewParams {
    fn default() -> Self {
        Self {
            coarse: CoarseParams::default(),
            icp: IcpParams {
                max_iter: 100,
                convergence_eps: 1e-6,
                max_pair_dist: 1.0,
                metric: IcpMetric::PointToPoint,
            },
            fine_icp: IcpParams {
                max_iter: 100,
                convergence_eps: 1e-5,
                max_pair_dist: 0.2,
                metric: IcpMetric::PointToPlane,
            },
            min_overlap: 0.2,
            max_rmse: 0.03,
        }
    }
}

struct Cluster {
    members: Vec<usize>,
    /// Member-to-cluster-frame transforms, aligned with `members`.
    poses: Vec<RigidTransform>,
    merged: PointCloud,
    prepared: PreparedCloud,
}

impl Cluster {
    fn anchor(&self) -> usize {
        self.members[0]
    }
}

fn similarity(a: &PreparedCloud, b: &PreparedCloud) -> f64 {
    let denom = a.features.len().min(b.features.len());
    if denom == 0 {
        return 0.0;
    }
    mutual_matches(a, b).len() as f64 / denom as f64
}

/// Aligns `source` onto `target` (shared local frame) and checks the overlap.
fn align(source: &Cluster, target: &Cluster, params: &MultiviewParams) -> Option<RigidTransform> {
    let coarse = coarse_match(&source.prepared, &target.prepared, &params.coarse).ok()?;
    let mid = icp_local(
        &source.prepared.cloud.points,
        &target.prepared.cloud.points,
        &target.prepared.index,
        &params.icp,
        coarse.transform,
    )
    .ok()?;
    let index = SpatialIndex::from_cloud(&target.merged);
    let fine = icp_local(
        &source.merged.points,
        &target.merged.points,
        &index,
        &params.fine_icp,
        mid.transform,
    )
    .ok()?;
    let overlap = fine.inlier_count as f64 / source.merged.len() as f64;
    log::debug!(
        "views {:?} -> {:?}: overlap {:.3}, rmse {:.4}",
        source.members,
        target.members,
        overlap,
        fine.rmse
    );
    (overlap >= params.min_overlap && fine.rmse <= params.max_rmse).then_some(fine.transform)
}

/// One transform per input cloud mapping its absolute coordinates into the
/// frame of `clouds[0]`.
pub fn register_multiview(clouds: &[PointCloud], params: &MultiviewParams) -> Result<Vec<RigidTransform>> {
    if clouds.is_empty() {
        return Err(Error::param("no clouds to register"));
    }
    if clouds.iter().any(|c| c.is_empty()) {
        return Err(Error::EmptyCloud);
    }
    if clouds.len() == 1 {
        return Ok(vec![RigidTransform::identity()]);
    }
    let shift: Vec3 = clouds[0].origin_shift;
    let mut clusters: Vec<Cluster> = Vec::with_capacity(clouds.len());
    for (i, c) in clouds.iter().enumerate() {
        let merged = c.rebased(shift);
        let prepared = prepare_cloud(&merged, &params.coarse.features)?;
        clusters.push(Cluster {
            members: vec![i],
            poses: vec![RigidTransform::identity()],
            merged,
            prepared,
        });
    }

    while clusters.len() > 1 {
        let mut candidates = Vec::new();
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                candidates.push((similarity(&clusters[a].prepared, &clusters[b].prepared), a, b));
            }
        }
        candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));

        let mut merged_pair = None;
        for &(_, a, b) in &candidates {
            // the cluster holding the lower-numbered view stays fixed
            let (t, s) = if clusters[a].anchor() < clusters[b].anchor() {
                (a, b)
            } else {
                (b, a)
            };
            if let Some(x) = align(&clusters[s], &clusters[t], params) {
                merged_pair = Some((t, s, x));
                break;
            }
        }
        let Some((t, s, x)) = merged_pair else {
            let mut components: Vec<Vec<usize>> = clusters.iter().map(|c| c.members.clone()).collect();
            components.sort();
            return Err(Error::DisconnectedViews { components });
        };

        let source = clusters.remove(s);
        let t = if s < t { t - 1 } else { t };
        let target = &mut clusters[t];
        let moved = x.transform_cloud(&source.merged);
        target.merged = PointCloud::concat(&[&target.merged, &moved]);
        for (m, p) in source.members.into_iter().zip(source.poses) {
            target.members.push(m);
            target.poses.push(x.compose(&p));
        }
        target.prepared = prepare_cloud(&target.merged, &params.coarse.features)?;
    }

    let cluster = clusters.pop().unwrap();
    let mut out = vec![RigidTransform::identity(); clouds.len()];
    for (m, p) in cluster.members.iter().zip(&cluster.poses) {
        out[*m] = RigidTransform::from_shifted_frame(p, &shift);
    }
    Ok(out)
}
