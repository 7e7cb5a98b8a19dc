//! Descriptor matching and correspondence pruning for coarse alignment.

use serde::{Deserialize, Serialize};

use super::features::{prepare_cloud, FeatureParams, PreparedCloud};
use super::icp::truncated_rms;
use super::{fit_rigid, RigidTransform};
use crate::cloud::{Point3, PointCloud, SpatialIndex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoarseParams {
    pub features: FeatureParams,
    /// Pairwise-distance tolerance of the consistency test, in multiples of
    /// the median point spacing.
    pub consistency_factor: f64,
    /// Seeds tried by the greedy consistent-set search.
    pub consistency_seeds: usize,
    /// Truncation distance of the overlap objective that arbitrates between
    /// candidate consistent sets, meters.
    pub verify_dist: f64,
    /// Candidate matches per keypoint, each direction (1 = mutual nearest only).
    pub match_k: usize,
}

/// Source points used to score candidate alignments.
pub(crate) const VERIFY_SAMPLE: usize = 3000;

impl Default for CoarseParams {
    fn default() -> Self {
        Self {
            features: FeatureParams::default(),
            consistency_factor: 3.0,
            consistency_seeds: 32,
            verify_dist: 1.0,
            match_k: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseMatch {
    /// Source-to-target transform in the prepared clouds' shared local frame.
    pub transform: RigidTransform,
    /// Keypoint-index pairs `(source, target)` kept after pruning.
    pub inliers: Vec<(usize, usize)>,
    pub candidate_matches: usize,
}

/// Mutual nearest neighbors in Hamming space, as pairs of positions into the
/// two feature sets. Ties go to the lower index.
pub fn mutual_matches(source: &PreparedCloud, target: &PreparedCloud) -> Vec<(usize, usize)> {
    let (a, b) = (&source.features.descriptors, &target.features.descriptors);
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let best = |d: &super::BinaryDescriptor, set: &[super::BinaryDescriptor]| {
        set.iter()
            .enumerate()
            .min_by_key(|(j, e)| (d.hamming(e), *j))
            .map(|(j, _)| j)
            .unwrap()
    };
    let back: Vec<usize> = b.iter().map(|d| best(d, a)).collect();
    a.iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let j = best(d, b);
            (back[j] == i).then_some((i, j))
        })
        .collect()
}

/// Union of each keypoint's `k` nearest descriptors in the other set, both
/// directions, sorted. With `k = 1` this is [`mutual_matches`].
pub fn candidate_matches(source: &PreparedCloud, target: &PreparedCloud, k: usize) -> Vec<(usize, usize)> {
    if k <= 1 {
        return mutual_matches(source, target);
    }
    let (a, b) = (&source.features.descriptors, &target.features.descriptors);
    let best_k = |d: &super::BinaryDescriptor, set: &[super::BinaryDescriptor]| {
        let mut ranked: Vec<(u32, usize)> = set.iter().enumerate().map(|(j, e)| (d.hamming(e), j)).collect();
        let k = k.min(ranked.len());
        if k > 0 {
            ranked.select_nth_unstable(k - 1);
        }
        ranked.truncate(k);
        ranked.into_iter().map(|(_, j)| j)
    };
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (i, d) in a.iter().enumerate() {
        out.extend(best_k(d, b).map(|j| (i, j)));
    }
    for (j, d) in b.iter().enumerate() {
        out.extend(best_k(d, a).map(|i| (i, j)));
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Mutually consistent subsets of `pairs`: within each, every two members
/// preserve their separation within `eps`. One greedy growth per seed, up to
/// `seeds` seeds taken by decreasing connectivity among the pairs not yet in
/// any grown set, so that one dense cluster of mutually consistent (but
/// possibly wrong) pairs cannot claim every seed. Distinct sets, largest
/// first.
pub fn consistent_sets(pairs: &[(Point3, Point3)], eps: f64, seeds: usize) -> Vec<Vec<usize>> {
    let n = pairs.len();
    let mut adj = vec![false; n * n];
    let mut degree = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            let ds = (pairs[i].0 - pairs[j].0).norm();
            let dt = (pairs[i].1 - pairs[j].1).norm();
            if (ds - dt).abs() <= eps {
                adj[i * n + j] = true;
                adj[j * n + i] = true;
                degree[i] += 1;
                degree[j] += 1;
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| degree[b].cmp(&degree[a]).then(a.cmp(&b)));

    let mut covered = vec![false; n];
    let mut sets: Vec<Vec<usize>> = Vec::new();
    let mut tried = 0;
    for &seed in &order {
        if tried == seeds.max(1) {
            break;
        }
        if covered[seed] {
            continue;
        }
        tried += 1;
        let mut set = vec![seed];
        for &c in &order {
            if c != seed && set.iter().all(|&m| adj[c * n + m]) {
                set.push(c);
            }
        }
        set.sort_unstable();
        for &m in &set {
            covered[m] = true;
        }
        if !sets.contains(&set) {
            sets.push(set);
        }
    }
    sets.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    sets
}

/// Largest set found by [`consistent_sets`].
pub fn consistent_subset(pairs: &[(Point3, Point3)], eps: f64, seeds: usize) -> Vec<usize> {
    consistent_sets(pairs, eps, seeds)
        .into_iter()
        .next()
        .unwrap_or_default()
}

/// Every source `stride`-th point, at most `cap` points.
pub(crate) fn verification_sample(points: &[Point3], cap: usize) -> Vec<Point3> {
    let stride = points.len().div_ceil(cap.max(1)).max(1);
    points.iter().step_by(stride).copied().collect()
}

/// Fits every consistent set of at least three pairs and keeps the fit with
/// the lowest truncated objective of `sample` against `target`.
pub(crate) fn best_verified_fit(
    pairs: &[(Point3, Point3)],
    sets: &[Vec<usize>],
    sample: &[Point3],
    target: &SpatialIndex,
    tau: f64,
) -> Option<(RigidTransform, Vec<usize>, f64)> {
    let mut best: Option<(RigidTransform, Vec<usize>, f64)> = None;
    for set in sets.iter().filter(|s| s.len() >= 3) {
        let kept: Vec<(Point3, Point3)> = set.iter().map(|&k| pairs[k]).collect();
        let Ok(t) = fit_rigid(&kept) else { continue };
        let obj = truncated_rms(sample, target, &t, tau);
        if best.as_ref().is_none_or(|b| obj < b.2) {
            best = Some((t, set.clone(), obj));
        }
    }
    best
}

/// Coarse alignment of two prepared clouds that share an origin shift.
pub fn coarse_match(source: &PreparedCloud, target: &PreparedCloud, params: &CoarseParams) -> Result<CoarseMatch> {
    let matches = candidate_matches(source, target, params.match_k);
    if matches.len() < 3 {
        return Err(Error::InsufficientGeometry(format!(
            "only {} descriptor matches",
            matches.len()
        )));
    }
    let sk = source.keypoint_positions();
    let tk = target.keypoint_positions();
    let pairs: Vec<(Point3, Point3)> = matches.iter().map(|&(i, j)| (sk[i], tk[j])).collect();
    let eps = params.consistency_factor * source.spacing.max(target.spacing);
    let sets = consistent_sets(&pairs, eps, params.consistency_seeds);
    let largest = sets.first().map_or(0, |s| s.len());
    if largest < 3 {
        return Err(Error::InsufficientGeometry(format!(
            "only {largest} geometrically consistent matches"
        )));
    }
    let sample = verification_sample(&source.cloud.points, VERIFY_SAMPLE);
    let (transform, keep, _) = best_verified_fit(&pairs, &sets, &sample, &target.index, params.verify_dist)
        .ok_or_else(|| Error::InsufficientGeometry("consistent matches are degenerate".into()))?;
    Ok(CoarseMatch {
        transform,
        inliers: keep.iter().map(|&k| matches[k]).collect(),
        candidate_matches: matches.len(),
    })
}

/// Descriptor-based initial alignment; the result maps source absolute
/// coordinates into the target frame.
pub fn coarse_register(source: &PointCloud, target: &PointCloud, params: &CoarseParams) -> Result<RigidTransform> {
    let shift = target.origin_shift;
    let src = prepare_cloud(&source.rebased(shift), &params.features)?;
    let tgt = prepare_cloud(target, &params.features)?;
    let m = coarse_match(&src, &tgt, params)?;
    log::debug!(
        "coarse: {} of {} matches consistent",
        m.inliers.len(),
        m.candidate_matches
    );
    Ok(RigidTransform::from_shifted_frame(&m.transform, &shift))
}
