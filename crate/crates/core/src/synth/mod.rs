//! Synthetic scenes with known ground truth, the registration benchmark and
//! the end-to-end monitoring pipeline.

mod bench;
mod landslide;
mod pipeline;
mod scan;
mod terrain;

use serde::{Deserialize, Serialize};

use crate::cloud::PointClass;
use crate::registration::RigidTransform;

pub use bench::{
    basin_pair, epoch_pair, register_pair, run_table2_benchmark, trial_seed, BenchConfig, BenchReport, Method,
    MethodOutcome, MethodRow, TrialRecord,
};
pub use landslide::{apply_landslide, RegionSpec};
pub use pipeline::{
    run_pipeline, EpochInput, EpochTruth, ManifestEntry, PairProducts, PipelineConfig, PipelineOutput, SceneConfig,
    SceneEpoch,
};
pub use scan::{leveled_station, simulate_stations, ScanParams};
pub use terrain::{add_vegetation, gen_terrain, sample_terrain, TerrainSpec};

/// Generator-side truth aligned with a synthetic cloud.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub labels: Vec<PointClass>,
    pub station_poses: Vec<RigidTransform>,
    /// Signed displacement along the surface normal per point, meters.
    pub displacement: Vec<f64>,
    pub regions: Vec<RegionSpec>,
}

/// A synthetic cloud's generator and truth, as exchanged between the
/// `synth` command-line steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub terrain: TerrainSpec,
    pub truth: SceneTruth,
}

impl SceneTruth {
    pub fn ground_only(n: usize) -> Self {
        Self {
            labels: vec![PointClass::Ground; n],
            displacement: vec![0.0; n],
            ..Default::default()
        }
    }
}
