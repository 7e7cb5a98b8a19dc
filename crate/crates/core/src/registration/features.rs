//! Rotation-invariant binary shape descriptors.
//!
//! Each keypoint gets a local reference frame from the distance-weighted
//! covariance of its spherical neighborhood (z = least-variance axis signed by
//! the point normal, x = greatest-variance axis signed by the first moment).
//! Neighbors are binned on a cylindrical grid (azimuth × equal-area radial ×
//! elevation) and each bin becomes one bit: set when its count exceeds the
//! median bin count of that descriptor.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{
    estimate_normals_with_curvature, fit_plane, voxel_downsample, Point3, PointCloud, SpatialIndex, Vec3,
};
use crate::error::{Error, Result};

pub const AZIMUTH_BINS: usize = 8;
pub const RADIAL_BINS: usize = 4;
pub const ELEVATION_BINS: usize = 4;
pub const DESCRIPTOR_BITS: usize = AZIMUTH_BINS * RADIAL_BINS * ELEVATION_BINS;

/// Elevation bin edges as fractions of the support radius. The middle bin
/// straddles the tangent plane so flat patches never sit on an edge.
const ELEVATION_EDGES: [f64; ELEVATION_BINS - 1] = [-0.08, 0.0, 0.08];

/// Keypoints with fewer supporting neighbors are dropped.
pub const MIN_SUPPORT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryDescriptor([u64; 2]);

impl BinaryDescriptor {
    pub fn from_bits(bits: &[bool]) -> Self {
        let mut words = [0u64; 2];
        for (i, &b) in bits.iter().enumerate().take(DESCRIPTOR_BITS) {
            if b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        BinaryDescriptor(words)
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.0[0].count_ones() + self.0[1].count_ones()
    }

    pub fn hamming(&self, other: &BinaryDescriptor) -> u32 {
        (self.0[0] ^ other.0[0]).count_ones() + (self.0[1] ^ other.0[1]).count_ones()
    }

    pub const fn len(&self) -> usize {
        DESCRIPTOR_BITS
    }

    pub const fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub keypoint_indices: Vec<usize>,
    pub descriptors: Vec<BinaryDescriptor>,
    pub radius: f64,
    /// Requested keypoints that lacked support or a valid normal.
    pub dropped: Vec<usize>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.keypoint_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoint_indices.is_empty()
    }
}

fn elevation_bin(h: f64) -> usize {
    ELEVATION_EDGES.iter().take_while(|&&e| h >= e).count()
}

fn describe(
    points: &[Point3],
    index: &SpatialIndex,
    key: usize,
    normal: &Vec3,
    radius: f64,
) -> Option<BinaryDescriptor> {
    let p = points[key];
    let support = index.within_radius(&p, radius);
    if support.len() < MIN_SUPPORT {
        return None;
    }

    let mut cov = nalgebra::Matrix3::zeros();
    let mut wsum = 0.0;
    for nb in &support {
        let w = radius - nb.distance;
        let d = points[nb.index] - p;
        cov += w * d * d.transpose();
        wsum += w;
    }
    if !(wsum > 0.0) {
        return None;
    }
    let (vals, vecs) = crate::cloud::sorted_eigen(&(cov / wsum));
    if !(vals[2] > 0.0) || vals[1] <= 1e-12 * vals[2] {
        return None;
    }
    let mut z = vecs[0];
    if z.dot(normal) < 0.0 {
        z = -z;
    }
    let mut x = vecs[2];
    let moment: f64 = support
        .iter()
        .map(|nb| (radius - nb.distance) * (points[nb.index] - p).dot(&x))
        .sum();
    if moment < 0.0 {
        x = -x;
    }
    let y = z.cross(&x);

    let mut counts = [0u32; DESCRIPTOR_BITS];
    for nb in &support {
        if nb.index == key {
            continue;
        }
        let d = points[nb.index] - p;
        let (lx, ly, lz) = (d.dot(&x), d.dot(&y), d.dot(&z));
        let rho2 = (lx * lx + ly * ly) / (radius * radius);
        let rb = ((rho2 * RADIAL_BINS as f64) as usize).min(RADIAL_BINS - 1);
        let mut az = ly.atan2(lx);
        if az < 0.0 {
            az += TAU;
        }
        let ab = ((az / TAU * AZIMUTH_BINS as f64) as usize).min(AZIMUTH_BINS - 1);
        let eb = elevation_bin(lz / radius);
        counts[(eb * RADIAL_BINS + rb) * AZIMUTH_BINS + ab] += 1;
    }
    let mut sorted = counts;
    sorted.sort_unstable();
    let median = (sorted[DESCRIPTOR_BITS / 2 - 1] + sorted[DESCRIPTOR_BITS / 2]) as f64 / 2.0;
    let bits: Vec<bool> = counts.iter().map(|&c| c as f64 > median).collect();
    Some(BinaryDescriptor::from_bits(&bits))
}

/// Descriptors for `keypoints` of a cloud that carries normals.
pub fn extract_descriptors(cloud: &PointCloud, keypoints: &[usize], radius: f64) -> Result<FeatureSet> {
    let index = SpatialIndex::from_cloud(cloud);
    extract_with_index(cloud, &index, keypoints, radius)
}

pub(crate) fn extract_with_index(
    cloud: &PointCloud,
    index: &SpatialIndex,
    keypoints: &[usize],
    radius: f64,
) -> Result<FeatureSet> {
    if !(radius > 0.0) {
        return Err(Error::param(format!(
            "descriptor radius must be positive, got {radius}"
        )));
    }
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| Error::param("descriptor extraction needs normals"))?;
    if let Some(&bad) = keypoints.iter().find(|&&k| k >= cloud.len()) {
        return Err(Error::param(format!("keypoint {bad} out of range")));
    }
    let described: Vec<Option<BinaryDescriptor>> = keypoints
        .par_iter()
        .map(|&k| normals[k].and_then(|n| describe(&cloud.points, index, k, &n, radius)))
        .collect();
    let mut set = FeatureSet {
        keypoint_indices: Vec::new(),
        descriptors: Vec::new(),
        radius,
        dropped: Vec::new(),
    };
    for (&k, d) in keypoints.iter().zip(described) {
        match d {
            Some(d) => {
                set.keypoint_indices.push(k);
                set.descriptors.push(d);
            }
            None => set.dropped.push(k),
        }
    }
    if !set.dropped.is_empty() {
        log::debug!("{} keypoints dropped for lack of support", set.dropped.len());
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureParams {
    /// Working resolution for registration (meters).
    pub voxel: f64,
    pub normal_k: usize,
    pub descriptor_radius: f64,
    /// Keypoints are local curvature maxima within this radius.
    pub nms_radius: f64,
    pub max_keypoints: usize,
    pub min_curvature: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            voxel: 0.4,
            normal_k: 40,
            descriptor_radius: 5.0,
            nms_radius: 2.5,
            max_keypoints: 500,
            min_curvature: 1e-4,
        }
    }
}

/// A downsampled cloud with normals, curvature, keypoints and descriptors.
#[derive(Debug, Clone)]
pub struct PreparedCloud {
    pub cloud: PointCloud,
    pub index: SpatialIndex,
    pub curvature: Vec<f64>,
    pub features: FeatureSet,
    /// Median nearest-neighbor spacing of `cloud`.
    pub spacing: f64,
}

impl PreparedCloud {
    pub fn keypoint_positions(&self) -> Vec<Point3> {
        self.features
            .keypoint_indices
            .iter()
            .map(|&i| self.cloud.points[i])
            .collect()
    }
}

/// Local curvature maxima, strongest first.
pub fn select_keypoints(
    points: &[Point3],
    index: &SpatialIndex,
    curvature: &[f64],
    nms_radius: f64,
    min_curvature: f64,
    max_keypoints: usize,
) -> Vec<usize> {
    let is_peak: Vec<bool> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let c = curvature[i];
            c >= min_curvature
                && index.within_radius(&points[i], nms_radius).iter().all(|nb| {
                    let o = curvature[nb.index];
                    nb.index == i || o < c || (o == c && nb.index > i)
                })
        })
        .collect();
    let mut peaks: Vec<usize> = (0..points.len()).filter(|&i| is_peak[i]).collect();
    peaks.sort_by(|&a, &b| curvature[b].total_cmp(&curvature[a]).then(a.cmp(&b)));
    peaks.truncate(max_keypoints);
    peaks
}

pub(crate) fn median_spacing(points: &[Point3], index: &SpatialIndex) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mut d: Vec<f64> = points
        .par_iter()
        .map(|p| index.nearest_neighbors(p, 2).map(|nn| nn[1].distance).unwrap_or(0.0))
        .collect();
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Downsamples, estimates normals (oriented to the side of the best-fit
/// plane normal) and extracts keypoint descriptors.
pub fn prepare_cloud(cloud: &PointCloud, params: &FeatureParams) -> Result<PreparedCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut down = voxel_downsample(cloud, params.voxel)?;
    down.scalars.clear();
    if down.len() < params.normal_k.max(3) {
        return Err(Error::InsufficientGeometry(format!(
            "only {} points after downsampling",
            down.len()
        )));
    }
    let (center, up) = fit_plane(down.points.iter().copied())
        .ok_or_else(|| Error::InsufficientGeometry("cannot fit a reference plane".into()))?;
    let viewpoint = center + up * 1e6;
    let est = estimate_normals_with_curvature(&down, params.normal_k, &viewpoint)?;
    down.normals = Some(est.normals);
    let index = SpatialIndex::from_cloud(&down);
    let keys = select_keypoints(
        &down.points,
        &index,
        &est.curvature,
        params.nms_radius,
        params.min_curvature,
        params.max_keypoints,
    );
    let features = extract_with_index(&down, &index, &keys, params.descriptor_radius)?;
    let spacing = median_spacing(&down.points, &index);
    Ok(PreparedCloud {
        cloud: down,
        index,
        curvature: est.curvature,
        features,
        spacing,
    })
}
