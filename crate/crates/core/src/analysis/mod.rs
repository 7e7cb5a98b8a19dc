//! Shape classification of change regions, error budget, epoch intervals
//! and the report document.

mod budget;
mod report;
mod shape;

pub use budget::{error_budget, error_budget_with, interval_days, relative_error, ErrorBudget, DEFAULT_MULTIPLICITIES};
pub use report::{build_report, summarize_pair, PairSummary, RegionRow, Report, ReportInputs};
pub use shape::{
    classify_shape, region_extent, shape_angle, CrudenType, MotionAnnotation, MotionDirection, ShapeClass, ShapeMeasure,
};
