//! End-to-end monitoring run: station scans → per-epoch merge → epoch
//! alignment → vegetation filter → DTMs → deformation fields → regions →
//! shapes → report. Every intermediate lands under the run directory and is
//! listed in `manifest.json` with the stage that wrote it.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{add_vegetation, apply_landslide, leveled_station, sample_terrain, simulate_stations};
use super::{RegionSpec, ScanParams, TerrainSpec};
use crate::analysis::{
    build_report, error_budget, interval_days, region_extent, summarize_pair, MotionAnnotation, MotionDirection,
    Report, ReportInputs, ShapeMeasure,
};
use crate::cloud::{
    parse_cloud, validate_epochs, write_cloud, write_mesh_ply, CloudFormat, EpochRecord, PlyEncoding, Point3,
    PointCloud,
};
use crate::error::{Error, Result};
use crate::ground_filter::{filter_vegetation, FilterParams};
use crate::registration::{
    icp_with_initial, register_global_hybrid, register_multiview, HybridParams, IcpMetric, IcpParams, MultiviewParams,
    RigidTransform,
};
use crate::terrain::{
    build_dtm, fill_volumes, mesh_distance, rate_field, significant_regions, write_field_ply, DeformationField,
    DistanceParams, ProjectionPlane, Region, TriangleMesh,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochInput {
    pub epoch_id: String,
    pub date: NaiveDate,
    /// Station scans (XYZ or PLY). Left empty when a synthetic scene
    /// provides the stations.
    #[serde(default)]
    pub scans: Vec<PathBuf>,
}

/// One synthetic campaign: scanner positions and the landslides that have
/// happened by then (in addition to those of earlier epochs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEpoch {
    pub stations: Vec<[f64; 3]>,
    #[serde(default)]
    pub landslides: Vec<RegionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub terrain: TerrainSpec,
    pub vegetation_coverage: f64,
    pub vegetation_height: [f64; 2],
    /// Noise, range and occlusion of the simulated scanner; the seed is
    /// derived from the run seed.
    pub scan: ScanParams,
    /// Parallel to the config's epoch list.
    pub epochs: Vec<SceneEpoch>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            terrain: TerrainSpec::default(),
            vegetation_coverage: 0.0,
            vegetation_height: [0.5, 3.0],
            scan: ScanParams::default(),
            epochs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub run_dir: PathBuf,
    pub rng_seed: u64,
    /// Chronological; the first epoch is the reference frame.
    pub epochs: Vec<EpochInput>,
    pub scene: Option<SceneConfig>,
    pub multiview: MultiviewParams,
    pub hybrid: HybridParams,
    /// Refinement after the hybrid alignment of each epoch.
    pub fine_icp: IcpParams,
    pub filter: FilterParams,
    pub max_edge: f64,
    pub distance: DistanceParams,
    pub threshold_mm_day: f64,
    pub min_area_m2: f64,
    /// Motion azimuth in the reference frame; steepest descent when absent.
    pub motion_azimuth_deg: Option<f64>,
    /// `id=TYPE` movement annotations for the region table.
    pub annotations: Vec<String>,
    /// `[m_tls, m_mreg, m_treg, m_veg, m_mesh]` in millimeters.
    pub budget_mm: Option<[f64; 5]>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            run_dir: PathBuf::from("run"),
            rng_seed: 0,
            epochs: Vec::new(),
            scene: None,
            multiview: MultiviewParams::default(),
            hybrid: HybridParams::default(),
            fine_icp: IcpParams {
                metric: IcpMetric::PointToPlane,
                max_pair_dist: 0.2,
                max_iter: 100,
                convergence_eps: 1e-5,
            },
            filter: FilterParams::default(),
            max_edge: 2.0,
            distance: DistanceParams::default(),
            threshold_mm_day: 2.0,
            min_area_m2: 25.0,
            motion_azimuth_deg: None,
            annotations: Vec::new(),
            budget_mm: None,
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config; relative paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.run_dir);
        for e in &mut config.epochs {
            e.scans.iter_mut().for_each(resolve);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs.len() < 2 {
            return Err(Error::param("at least two epochs are required"));
        }
        match &self.scene {
            Some(scene) => {
                if scene.epochs.len() != self.epochs.len() {
                    return Err(Error::param(format!(
                        "scene has {} epochs, config lists {}",
                        scene.epochs.len(),
                        self.epochs.len()
                    )));
                }
                if self.epochs.iter().any(|e| !e.scans.is_empty()) {
                    return Err(Error::param("scan files and a synthetic scene are mutually exclusive"));
                }
                if scene.epochs.iter().any(|e| e.stations.is_empty()) {
                    return Err(Error::param("every synthetic epoch needs a station"));
                }
                scene.terrain.validate()?;
                for r in scene.epochs.iter().flat_map(|e| &e.landslides) {
                    r.validate()?;
                }
            }
            None => {
                if let Some(e) = self.epochs.iter().find(|e| e.scans.is_empty()) {
                    return Err(Error::param(format!("epoch {} has no scans", e.epoch_id)));
                }
            }
        }
        validate_epochs(&self.epoch_records())?;
        let mut ids: Vec<&str> = self.epochs.iter().map(|e| e.epoch_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("epoch ids must be unique"));
        }
        if !(self.max_edge > 0.0) {
            return Err(Error::param("max_edge must be positive"));
        }
        if !(self.threshold_mm_day > 0.0) {
            return Err(Error::param("threshold must be positive"));
        }
        if !(self.min_area_m2 >= 0.0) {
            return Err(Error::param("min_area must be non-negative"));
        }
        self.parsed_annotations()?;
        Ok(())
    }

    fn epoch_records(&self) -> Vec<EpochRecord> {
        self.epochs
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let stations = match &self.scene {
                    Some(s) => s.epochs.get(k).map_or(0, |se| se.stations.len()),
                    None => e.scans.len(),
                };
                EpochRecord::new(e.epoch_id.clone(), e.date, stations as u32)
            })
            .collect()
    }

    fn parsed_annotations(&self) -> Result<Vec<MotionAnnotation>> {
        self.annotations.iter().map(|s| s.parse()).collect()
    }

    /// The config as recorded in the report: everything except the run
    /// directory, so that the report does not depend on where it was written.
    fn report_parameters(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("run_dir");
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the run directory.
    pub path: String,
    pub stage: String,
}

/// True acquisition geometry of one synthetic epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTruth {
    pub epoch_id: String,
    /// Station-to-world poses.
    pub station_poses: Vec<RigidTransform>,
    /// Landslides in effect at this epoch, cumulative.
    pub landslides: Vec<RegionSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairProducts {
    pub reference_epoch: String,
    pub compared_epoch: String,
    /// Compared-epoch DTM, whose vertices carry the field.
    pub mesh: TriangleMesh,
    pub field: DeformationField,
    pub regions: Vec<Region>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: Report,
    pub manifest: Vec<ManifestEntry>,
    /// Maps each epoch's merged frame (its first station) into the reference
    /// frame.
    pub epoch_to_reference: Vec<RigidTransform>,
    pub pairs: Vec<PairProducts>,
    pub truth: Option<Vec<EpochTruth>>,
}

struct RunDir {
    root: PathBuf,
    manifest: Vec<ManifestEntry>,
}

impl RunDir {
    fn write(&mut self, stage: &str, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, bytes)?;
        self.manifest.push(ManifestEntry {
            path: rel.to_string(),
            stage: stage.to_string(),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, stage: &str, rel: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(stage, rel, s.as_bytes())
    }
}

/// Deterministic sub-seed for stream `k` of `purpose`.
fn derived_seed(master: u64, purpose: u64, k: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((purpose << 32) | k as u64);
    rng.next_u64()
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Simulates every station of every epoch. Each station sees an independent
/// sampling of the surface so that no two scans share points.
fn synthesize(
    config: &PipelineConfig,
    scene: &SceneConfig,
    run: &mut RunDir,
) -> Result<(Vec<Vec<PointCloud>>, Vec<EpochTruth>)> {
    let terrain = TerrainSpec {
        seed: derived_seed(config.rng_seed, 1, 0),
        ..scene.terrain
    };
    let mut scans = Vec::with_capacity(scene.epochs.len());
    let mut truth = Vec::with_capacity(scene.epochs.len());
    let mut landslides: Vec<RegionSpec> = Vec::new();
    let mut station_counter = 0;
    for (k, (input, se)) in config.epochs.iter().zip(&scene.epochs).enumerate() {
        landslides.extend(se.landslides.iter().copied());
        let mut poses = Vec::with_capacity(se.stations.len());
        let mut clouds = Vec::with_capacity(se.stations.len());
        for (s, pos) in se.stations.iter().enumerate() {
            let (mut cloud, mut t) = sample_terrain(&terrain, derived_seed(config.rng_seed, 2, station_counter))?;
            for r in &landslides {
                (cloud, t) = apply_landslide(&cloud, &t, &terrain, r)?;
            }
            if scene.vegetation_coverage > 0.0 {
                let veg_seed = derived_seed(config.rng_seed, 3, station_counter);
                (cloud, _) = add_vegetation(
                    &cloud,
                    &t,
                    &terrain,
                    scene.vegetation_coverage,
                    scene.vegetation_height,
                    veg_seed,
                )?;
            }
            let pose = leveled_station(Point3::new(pos[0], pos[1], pos[2]), Point3::origin());
            let params = ScanParams {
                seed: derived_seed(config.rng_seed, 4, station_counter),
                ..scene.scan
            };
            let scan = simulate_stations(&cloud, &[pose], &params)?
                .remove(0)
                .with_epoch(input.epoch_id.clone());
            run.write(
                "synthesize",
                &format!("scans/{}_{}.ply", input.epoch_id, s),
                &write_cloud(&scan, CloudFormat::Ply, false),
            )?;
            clouds.push(scan);
            poses.push(pose);
            station_counter += 1;
        }
        log::info!("synthesized epoch {} ({k}): {} stations", input.epoch_id, clouds.len());
        scans.push(clouds);
        truth.push(EpochTruth {
            epoch_id: input.epoch_id.clone(),
            station_poses: poses,
            landslides: landslides.clone(),
        });
    }
    run.write_json("synthesize", "truth.json", &truth)?;
    Ok((scans, truth))
}

fn load_scans(config: &PipelineConfig) -> Result<Vec<Vec<PointCloud>>> {
    config
        .epochs
        .iter()
        .map(|e| {
            e.scans
                .iter()
                .map(|p| {
                    let bytes = std::fs::read(p)?;
                    Ok(parse_cloud(&bytes, CloudFormat::from_path(p))?.with_epoch(e.epoch_id.clone()))
                })
                .collect()
        })
        .collect()
}

fn merge(clouds: &[PointCloud], poses: &[RigidTransform], epoch_id: &str) -> PointCloud {
    let moved: Vec<PointCloud> = clouds.iter().zip(poses).map(|(c, t)| t.transform_cloud(c)).collect();
    let refs: Vec<&PointCloud> = moved.iter().collect();
    let mut merged = PointCloud::concat(&refs);
    merged.labels = None;
    merged.scalars.clear();
    merged.with_epoch(epoch_id)
}

fn transforms_json(poses: &[RigidTransform]) -> Vec<[f64; 16]> {
    poses.iter().map(|t| t.to_row_major()).collect()
}

/// Runs every stage; any failure aborts with the stage name attached.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput> {
    stage("config", config.validate())?;
    let records = config.epoch_records();
    let annotations = config.parsed_annotations()?;
    let mut run = RunDir {
        root: config.run_dir.clone(),
        manifest: Vec::new(),
    };
    stage("config", std::fs::create_dir_all(&run.root).map_err(Error::from))?;
    stage(
        "config",
        run.write("config", "config.json", config.to_json()?.as_bytes()),
    )?;

    let (scans, truth) = match &config.scene {
        Some(scene) => {
            let (s, t) = stage("synthesize", synthesize(config, scene, &mut run))?;
            (s, Some(t))
        }
        None => (stage("load", load_scans(config))?, None),
    };

    // per-epoch multi-station merge
    let mut merged = Vec::with_capacity(scans.len());
    for (input, clouds) in config.epochs.iter().zip(&scans) {
        let poses = stage("register_multiview", register_multiview(clouds, &config.multiview))?;
        let cloud = merge(clouds, &poses, &input.epoch_id);
        stage(
            "register_multiview",
            (|| {
                run.write_json(
                    "register_multiview",
                    &format!("multiview/{}_transforms.json", input.epoch_id),
                    &transforms_json(&poses),
                )?;
                run.write(
                    "register_multiview",
                    &format!("merged/{}.ply", input.epoch_id),
                    &write_cloud(&cloud, CloudFormat::Ply, false),
                )
            })(),
        )?;
        merged.push(cloud);
    }

    // every epoch into the reference frame
    let mut epoch_to_reference = vec![RigidTransform::identity()];
    for (k, cloud) in merged.iter().enumerate().skip(1) {
        let coarse = stage(
            "register_global",
            register_global_hybrid(cloud, &merged[0], &config.hybrid),
        )?;
        let fine = stage(
            "register_global",
            icp_with_initial(cloud, &merged[0], &config.fine_icp, &coarse.registration.transform),
        )?;
        log::info!(
            "epoch {} aligned: hybrid rmse {:.4}, fine rmse {:.4} m",
            config.epochs[k].epoch_id,
            coarse.registration.rmse,
            fine.rmse
        );
        epoch_to_reference.push(fine.transform);
    }
    stage(
        "register_global",
        run.write_json(
            "register_global",
            "global_transforms.json",
            &transforms_json(&epoch_to_reference),
        ),
    )?;

    // vegetation filtering in the reference frame
    let mut ground = Vec::with_capacity(merged.len());
    for (input, (cloud, t)) in config.epochs.iter().zip(merged.iter().zip(&epoch_to_reference)) {
        let aligned = t.transform_cloud(cloud).with_epoch(input.epoch_id.clone());
        let (g, removed, _) = stage("filter_vegetation", filter_vegetation(&aligned, &config.filter))?;
        stage(
            "filter_vegetation",
            (|| {
                run.write(
                    "filter_vegetation",
                    &format!("ground/{}.ply", input.epoch_id),
                    &write_cloud(&g, CloudFormat::Ply, false),
                )?;
                run.write(
                    "filter_vegetation",
                    &format!("removed/{}.ply", input.epoch_id),
                    &write_cloud(&removed, CloudFormat::Ply, false),
                )
            })(),
        )?;
        ground.push(g);
    }

    // DTMs over one shared projection plane
    let plane = stage("build_dtm", ProjectionPlane::fit(&ground[0]))?;
    let mut meshes = Vec::with_capacity(ground.len());
    for (input, g) in config.epochs.iter().zip(&ground) {
        let dtm = stage("build_dtm", build_dtm(g, Some(plane), config.max_edge))?;
        let bytes = write_mesh_ply(
            &dtm.mesh.to_cloud(),
            &dtm.mesh.triangles,
            PlyEncoding::BinaryLittleEndian,
            false,
        );
        stage(
            "build_dtm",
            run.write("build_dtm", &format!("dtm/{}.ply", input.epoch_id), &bytes),
        )?;
        meshes.push(dtm.mesh);
    }

    // adjacent-pair fields, regions and shapes
    let motion = match config.motion_azimuth_deg {
        Some(az) => MotionDirection::Azimuth(az),
        None => MotionDirection::SteepestDescent,
    };
    let mut pairs = Vec::new();
    let mut summaries = Vec::new();
    let mut all_regions: Vec<(usize, Region)> = Vec::new();
    let mut shapes: Vec<(usize, ShapeMeasure)> = Vec::new();
    for k in 0..meshes.len() - 1 {
        let (reference, compared) = (&config.epochs[k], &config.epochs[k + 1]);
        let days = stage("mesh_distance", interval_days(reference.date, compared.date))?;
        let field = stage(
            "mesh_distance",
            mesh_distance(&meshes[k + 1], &meshes[k], &config.distance, f64::from(days)),
        )?;
        let rates = stage("rate_field", rate_field(&field))?;
        let pair_name = format!("{}_{}", reference.epoch_id, compared.epoch_id);
        let bytes = stage("mesh_distance", write_field_ply(&meshes[k + 1], &field))?;
        stage(
            "mesh_distance",
            run.write("mesh_distance", &format!("fields/{pair_name}.ply"), &bytes),
        )?;

        let mut regions = stage(
            "significant_regions",
            significant_regions(&meshes[k + 1], &rates, config.threshold_mm_day, config.min_area_m2),
        )?;
        stage(
            "significant_regions",
            fill_volumes(&mut regions, &field, &meshes[k + 1]),
        )?;
        let offset = all_regions.len();
        for r in &mut regions {
            r.id += offset;
            let s = stage("classify_shape", region_extent(r, &meshes[k + 1], motion))?;
            r.w_m = Some(s.w_m);
            r.l_m = Some(s.l_m);
            shapes.push((r.id, s));
            all_regions.push((k, r.clone()));
        }
        stage(
            "significant_regions",
            run.write_json("significant_regions", &format!("regions/{pair_name}.json"), &regions),
        )?;
        summaries.push(stage("build_report", summarize_pair(&field))?);
        pairs.push(PairProducts {
            reference_epoch: reference.epoch_id.clone(),
            compared_epoch: compared.epoch_id.clone(),
            mesh: meshes[k + 1].clone(),
            field,
            regions,
        });
    }

    let budget = match config.budget_mm {
        Some(b) => Some(stage("build_report", error_budget(b[0], b[1], b[2], b[3], b[4]))?),
        None => None,
    };
    let parameters = config.report_parameters()?;
    let report = stage(
        "build_report",
        build_report(ReportInputs {
            epochs: &records,
            pairs: &summaries,
            regions: &all_regions,
            shapes: &shapes,
            annotations: &annotations,
            budget,
            parameters: &parameters,
        }),
    )?;
    stage(
        "build_report",
        (|| {
            run.write("build_report", "report.json", report.to_json()?.as_bytes())?;
            run.write("build_report", "report.txt", report.to_text().as_bytes())
        })(),
    )?;

    let mut manifest = run.manifest.clone();
    manifest.push(ManifestEntry {
        path: "manifest.json".into(),
        stage: "manifest".into(),
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    stage(
        "manifest",
        std::fs::write(run.root.join("manifest.json"), text).map_err(Error::from),
    )?;

    Ok(PipelineOutput {
        report,
        manifest,
        epoch_to_reference,
        pairs,
        truth,
    })
}
