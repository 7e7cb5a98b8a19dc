//! The monitoring report: epoch-pair statistics, region table, error budget
//! and the parameters that produced them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::budget::ErrorBudget;
use super::shape::{classify_shape, CrudenType, MotionAnnotation, ShapeClass, ShapeMeasure};
use crate::cloud::EpochRecord;
use crate::error::{Error, Result};
use crate::terrain::{field_stats, field_stats_unmasked, DeformationField, FieldStats, Region};

/// Change statistics between two epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub reference_epoch: String,
    pub compared_epoch: String,
    pub interval_days: f64,
    pub mean_m: f64,
    pub std_m: f64,
    pub valid_count: usize,
    /// Statistics over every vertex, including masked ones.
    pub unmasked_mean_m: f64,
    pub unmasked_std_m: f64,
    pub vertex_count: usize,
}

pub fn summarize_pair(field: &DeformationField) -> Result<PairSummary> {
    let FieldStats { mean, std, valid_count } = field_stats(field)?;
    let all = field_stats_unmasked(field)?;
    Ok(PairSummary {
        reference_epoch: field.reference_epoch.clone(),
        compared_epoch: field.compared_epoch.clone(),
        interval_days: field.interval_days,
        mean_m: mean,
        std_m: std,
        valid_count,
        unmasked_mean_m: all.mean,
        unmasked_std_m: all.std,
        vertex_count: all.valid_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub id: usize,
    pub reference_epoch: String,
    pub compared_epoch: String,
    pub vertex_count: usize,
    pub area_m2: f64,
    pub mean_rate_mm_day: f64,
    pub volume_m3: Option<f64>,
    pub w_m: f64,
    pub l_m: f64,
    pub theta_deg: f64,
    pub shape_class: ShapeClass,
    pub cruden_type: Option<CrudenType>,
    /// Class with the optional movement type, e.g. `L-RS`.
    pub type_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub epochs: Vec<EpochRecord>,
    pub pairs: Vec<PairSummary>,
    pub regions: Vec<RegionRow>,
    pub error_budget: Option<ErrorBudget>,
    pub parameters: serde_json::Value,
}

/// Everything a report is assembled from. Regions carry the index of their
/// epoch pair; shapes and annotations refer to regions by id.
#[derive(Debug, Clone, Copy)]
pub struct ReportInputs<'a> {
    pub epochs: &'a [EpochRecord],
    pub pairs: &'a [PairSummary],
    pub regions: &'a [(usize, Region)],
    pub shapes: &'a [(usize, ShapeMeasure)],
    pub annotations: &'a [MotionAnnotation],
    pub budget: Option<ErrorBudget>,
    pub parameters: &'a serde_json::Value,
}

pub fn build_report(inputs: ReportInputs<'_>) -> Result<Report> {
    let mut shapes: BTreeMap<usize, &ShapeMeasure> = BTreeMap::new();
    for (id, s) in inputs.shapes {
        if shapes.insert(*id, s).is_some() {
            return Err(Error::IdMismatch(format!("two shapes for region {id}")));
        }
    }
    let mut notes: BTreeMap<usize, Option<CrudenType>> = BTreeMap::new();
    for a in inputs.annotations {
        notes.insert(a.region_id, a.cruden_type);
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut rows = Vec::with_capacity(inputs.regions.len());
    for (pair, r) in inputs.regions {
        if !seen.insert(r.id) {
            return Err(Error::IdMismatch(format!("region id {} appears twice", r.id)));
        }
        let p = inputs
            .pairs
            .get(*pair)
            .ok_or_else(|| Error::IdMismatch(format!("region {} refers to missing pair {pair}", r.id)))?;
        let s = shapes
            .get(&r.id)
            .ok_or_else(|| Error::IdMismatch(format!("no shape for region {}", r.id)))?;
        let shape_class = classify_shape(s.theta_deg)?;
        let cruden_type = notes.get(&r.id).copied().flatten();
        let type_label = match cruden_type {
            Some(c) => format!("{shape_class}-{c}"),
            None => shape_class.to_string(),
        };
        rows.push(RegionRow {
            id: r.id,
            reference_epoch: p.reference_epoch.clone(),
            compared_epoch: p.compared_epoch.clone(),
            vertex_count: r.vertex_set.len(),
            area_m2: r.area_m2,
            mean_rate_mm_day: r.mean_rate_mm_day,
            volume_m3: r.volume_m3,
            w_m: s.w_m,
            l_m: s.l_m,
            theta_deg: s.theta_deg,
            shape_class,
            cruden_type,
            type_label,
        });
    }
    if let Some(id) = shapes.keys().find(|id| !seen.contains(id)) {
        return Err(Error::IdMismatch(format!("shape for unknown region {id}")));
    }
    if let Some(id) = notes.keys().find(|id| !seen.contains(id)) {
        return Err(Error::IdMismatch(format!("annotation for unknown region {id}")));
    }
    Ok(Report {
        epochs: inputs.epochs.to_vec(),
        pairs: inputs.pairs.to_vec(),
        regions: rows,
        error_budget: inputs.budget,
        parameters: inputs.parameters.clone(),
    })
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Aligned-column rendering of the two tables and the budget.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:<10} {:>8} {:>10} {:>10} {:>8}",
            "reference", "compared", "days", "mean(cm)", "std(cm)", "valid"
        );
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{:<10} {:<10} {:>8} {:>10.1} {:>10.1} {:>8}",
                p.reference_epoch,
                p.compared_epoch,
                p.interval_days,
                p.mean_m * 100.0,
                p.std_m * 100.0,
                p.valid_count
            );
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:>4} {:>8} {:>8} {:>10} {:>10} {:>8}",
            "area", "W(m)", "L(m)", "vol(m3)", "rate", "type"
        );
        for r in &self.regions {
            let vol = r.volume_m3.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
            let _ = writeln!(
                out,
                "{:>4} {:>8.1} {:>8.1} {:>10} {:>10.2} {:>8}",
                r.id, r.w_m, r.l_m, vol, r.mean_rate_mm_day, r.type_label
            );
        }
        if let Some(b) = &self.error_budget {
            let _ = writeln!(out, "\nsigma = {:.1} mm", b.sigma_mm);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{error_budget, shape_angle};

    fn pair() -> PairSummary {
        PairSummary {
            reference_epoch: "I".into(),
            compared_epoch: "II".into(),
            interval_days: 156.0,
            mean_m: -0.003,
            std_m: 0.627,
            valid_count: 10,
            unmasked_mean_m: -0.003,
            unmasked_std_m: 0.627,
            vertex_count: 10,
        }
    }

    fn region(id: usize, volume: f64) -> Region {
        Region {
            id,
            vertex_set: vec![1, 2, 3],
            area_m2: 100.0,
            mean_rate_mm_day: 4.0,
            volume_m3: Some(volume),
            w_m: None,
            l_m: None,
        }
    }

    fn shape(w: f64, l: f64) -> ShapeMeasure {
        ShapeMeasure {
            w_m: w,
            l_m: l,
            theta_deg: shape_angle(w, l).unwrap(),
            motion_vector: [0.0, -1.0],
        }
    }

    #[test]
    fn empty_report_is_valid() {
        let params = serde_json::json!({});
        let r = build_report(ReportInputs {
            epochs: &[],
            pairs: &[],
            regions: &[],
            shapes: &[],
            annotations: &[],
            budget: None,
            parameters: &params,
        })
        .unwrap();
        assert!(r.regions.is_empty() && r.pairs.is_empty());
        assert_eq!(Report::from_json(&r.to_json().unwrap()).unwrap(), r);
    }

    #[test]
    fn annotated_row_and_round_trip() {
        let params = serde_json::json!({"threshold_mm_day": 2.0, "max_edge": 2.0});
        let pairs = [pair()];
        let regions = [(0, region(1, 648.2))];
        let shapes = [(1, shape(31.1, 56.0))];
        let notes = [MotionAnnotation {
            region_id: 1,
            cruden_type: Some(CrudenType::RS),
        }];
        let r = build_report(ReportInputs {
            epochs: &[],
            pairs: &pairs,
            regions: &regions,
            shapes: &shapes,
            annotations: &notes,
            budget: Some(error_budget(6.0, 30.0, 60.0, 10.0, 10.0).unwrap()),
            parameters: &params,
        })
        .unwrap();
        assert_eq!(r.regions[0].type_label, "L-RS");
        assert_eq!(r.regions[0].volume_m3, Some(648.2));
        let text = r.to_text();
        assert!(text.contains("L-RS") && text.contains("648.2") && text.contains("76.0"));
        assert_eq!(Report::from_json(&r.to_json().unwrap()).unwrap(), r);
    }

    #[test]
    fn mismatched_ids_are_rejected() {
        let params = serde_json::Value::Null;
        let pairs = [pair()];
        let base = ReportInputs {
            epochs: &[],
            pairs: &pairs,
            regions: &[],
            shapes: &[],
            annotations: &[],
            budget: None,
            parameters: &params,
        };
        let regions = [(0, region(1, 1.0))];
        let missing_shape = ReportInputs {
            regions: &regions,
            ..base
        };
        assert!(matches!(build_report(missing_shape), Err(Error::IdMismatch(_))));
        let stray = [(2, shape(1.0, 2.0))];
        assert!(matches!(
            build_report(ReportInputs { shapes: &stray, ..base }),
            Err(Error::IdMismatch(_))
        ));
        let bad_pair = [(3, region(1, 1.0))];
        let shapes = [(1, shape(1.0, 2.0))];
        assert!(matches!(
            build_report(ReportInputs {
                regions: &bad_pair,
                shapes: &shapes,
                ..base
            }),
            Err(Error::IdMismatch(_))
        ));
        let notes = [MotionAnnotation {
            region_id: 9,
            cruden_type: None,
        }];
        assert!(matches!(
            build_report(ReportInputs {
                regions: &regions,
                shapes: &shapes,
                annotations: &notes,
                ..base
            }),
            Err(Error::IdMismatch(_))
        ));
    }
}
