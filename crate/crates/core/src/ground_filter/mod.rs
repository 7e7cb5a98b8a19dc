//! Separating slope (ground) points from vegetation: the slope is cut into
//! horizontal cells, each cell is leveled and cloth-filtered, and labels are
//! merged back. A visibility-gradient detector is the alternative path.

mod csf;
mod subslope;
mod visibility;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointClass, PointCloud};
use crate::error::{Error, Result};

pub use csf::{csf_classify, simulate_cloth, Cloth, ClothParams};
pub use subslope::{level_subslope, leveling_rotation, partition_subslopes, unlevel_point, CellId, SubSlope};
pub use visibility::{
    ambient_visibility, hemisphere_directions, visibility_gradient, visibility_gradient_filter, VisibilityParams,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundLabeling {
    pub labels: Vec<PointClass>,
    pub ground_count: usize,
    pub vegetation_count: usize,
}

impl GroundLabeling {
    pub fn new(labels: Vec<PointClass>) -> Self {
        let ground_count = labels.iter().filter(|&&l| l == PointClass::Ground).count();
        let vegetation_count = labels.iter().filter(|&&l| l == PointClass::Vegetation).count();
        Self {
            labels,
            ground_count,
            vegetation_count,
        }
    }

    /// Share of labels equal to `truth`.
    pub fn accuracy(&self, truth: &[PointClass]) -> f64 {
        if truth.is_empty() {
            return 1.0;
        }
        let hits = self.labels.iter().zip(truth).filter(|(a, b)| a == b).count();
        hits as f64 / truth.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    pub cell_size: f64,
    /// Overlap band around each cell, meters.
    pub margin: f64,
    pub min_points: usize,
    pub cloth: ClothParams,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            cell_size: 10.0,
            margin: 1.0,
            min_points: 50,
            cloth: ClothParams::default(),
        }
    }
}

/// Sub-slope cloth filtering. Points in overlap bands take the label from the
/// cell whose plane they lie closest to (ties to the lower cell id).
/// Returns `(ground, removed, labeling)`.
pub fn filter_vegetation(
    cloud: &PointCloud,
    params: &FilterParams,
) -> Result<(PointCloud, PointCloud, GroundLabeling)> {
    params.cloth.validate()?;
    let subs = partition_subslopes(cloud, params.cell_size, params.margin, params.min_points)?;
    let per_cell: Vec<Vec<PointClass>> = subs
        .par_iter()
        .map(|s| {
            let leveled = level_subslope(s, cloud)?;
            csf_classify(&leveled, &params.cloth)
                .map(|l| l.labels)
                .map_err(|e| e.in_stage(&format!("cell {:?}", s.cell_id)))
        })
        .collect::<Result<_>>()?;

    // (plane distance, cell id, label) of the best claim so far per point
    let mut best: Vec<Option<(f64, CellId, PointClass)>> = vec![None; cloud.len()];
    for (s, labels) in subs.iter().zip(&per_cell) {
        for (&i, &label) in s.member_indices.iter().zip(labels) {
            let claim = (s.plane_distance(&cloud.points[i]).abs(), s.cell_id, label);
            let better = match best[i] {
                None => true,
                Some((d, id, _)) => claim.0 < d || (claim.0 == d && claim.1 < id),
            };
            if better {
                best[i] = Some(claim);
            }
        }
    }
    let labels: Vec<PointClass> = best
        .into_iter()
        .map(|b| b.map(|(_, _, l)| l).expect("every point belongs to a cell"))
        .collect();
    let labeling = GroundLabeling::new(labels);
    let (ground, removed) = split_by_labels(cloud, &labeling);
    Ok((ground, removed, labeling))
}

/// `(ground, vegetation)` sub-clouds carrying the labels.
pub fn split_by_labels(cloud: &PointCloud, labeling: &GroundLabeling) -> (PointCloud, PointCloud) {
    let (g, v): (Vec<usize>, Vec<usize>) = (0..cloud.len()).partition(|&i| labeling.labels[i] == PointClass::Ground);
    let mut labeled = cloud.clone();
    labeled.labels = Some(labeling.labels.clone());
    (labeled.select(&g), labeled.select(&v))
}

/// A forced relabeling of one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub index: usize,
    pub label: PointClass,
}

/// Mask text: one `+index` (force ground) or `-index` (force vegetation) per
/// line; blank lines and `#` comments are ignored.
pub fn parse_mask(text: &str) -> Result<Vec<MaskEntry>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (label, rest) = match line.as_bytes()[0] {
            b'+' => (PointClass::Ground, &line[1..]),
            b'-' => (PointClass::Vegetation, &line[1..]),
            _ => {
                return Err(Error::parse(
                    n + 1,
                    format!("mask entry must start with + or -, got {line:?}"),
                ))
            }
        };
        let index = rest
            .trim()
            .parse()
            .map_err(|_| Error::parse(n + 1, format!("bad point index {rest:?}")))?;
        out.push(MaskEntry { index, label });
    }
    Ok(out)
}

pub fn read_mask(path: &Path) -> Result<Vec<MaskEntry>> {
    parse_mask(&std::fs::read_to_string(path)?)
}

/// Applies forced labels in file order (later entries win).
pub fn apply_mask(labeling: &GroundLabeling, mask: &[MaskEntry]) -> Result<GroundLabeling> {
    let mut labels = labeling.labels.clone();
    for m in mask {
        let slot = labels.get_mut(m.index).ok_or_else(|| {
            Error::param(format!(
                "mask index {} out of range for {} points",
                m.index,
                labeling.labels.len()
            ))
        })?;
        *slot = m.label;
    }
    Ok(GroundLabeling::new(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_parsing() {
        let m = parse_mask("# forced\n+3\n-10\n\n+ 7 # trailing\n").unwrap();
        assert_eq!(
            m,
            vec![
                MaskEntry {
                    index: 3,
                    label: PointClass::Ground
                },
                MaskEntry {
                    index: 10,
                    label: PointClass::Vegetation
                },
                MaskEntry {
                    index: 7,
                    label: PointClass::Ground
                },
            ]
        );
        assert!(matches!(parse_mask("+1\n5\n"), Err(Error::Parse { record: 2, .. })));
        assert!(parse_mask("-x").is_err());
    }

    #[test]
    fn mask_overrides_labels() {
        let l = GroundLabeling::new(vec![PointClass::Ground, PointClass::Vegetation, PointClass::Ground]);
        let m = parse_mask("-0\n+1\n").unwrap();
        let out = apply_mask(&l, &m).unwrap();
        assert_eq!(
            out.labels,
            vec![PointClass::Vegetation, PointClass::Ground, PointClass::Ground]
        );
        assert_eq!((out.ground_count, out.vegetation_count), (2, 1));
        assert!(apply_mask(&l, &parse_mask("+3").unwrap()).is_err());
    }

    #[test]
    fn accuracy_counts_matches() {
        let l = GroundLabeling::new(vec![PointClass::Ground, PointClass::Vegetation]);
        assert_eq!(l.accuracy(&[PointClass::Ground, PointClass::Ground]), 0.5);
    }
}
