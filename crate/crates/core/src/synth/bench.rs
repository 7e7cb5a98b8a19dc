//! Seeded registration benchmark over synthetic epoch pairs: plain ICP,
//! coarse alignment followed by ICP, and hybrid-metric global registration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_landslide, sample_terrain, simulate_stations, RegionSpec, ScanParams, TerrainSpec};
use crate::cloud::{Point3, PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::registration::{
    coarse_register, evaluate_registration_at, icp, icp_with_initial, register_global_hybrid, CoarseParams,
    HybridParams, IcpParams, RegistrationResult, RigidTransform, DEFAULT_SUCCESS_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Icp,
    CoarseIcp,
    Hybrid,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Icp, Method::CoarseIcp, Method::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Method::Icp => "icp",
            Method::CoarseIcp => "coarse+icp",
            Method::Hybrid => "hybrid",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::param(format!("unknown method `{s}` (icp, coarse+icp, hybrid)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub trials: usize,
    pub seed: u64,
    pub terrain: TerrainSpec,
    /// Rotation about a near-vertical axis, degrees, drawn uniformly.
    pub rotation_deg: [f64; 2],
    /// Translation magnitude as a fraction of the cloud diameter.
    pub translation: [f64; 2],
    /// Fraction of the surface disturbed between the two epochs.
    pub change_fraction: f64,
    pub noise_sigma: f64,
    pub success_threshold: f64,
    pub icp: IcpParams,
    pub coarse: CoarseParams,
    pub hybrid: HybridParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let icp = IcpParams {
            max_iter: 100,
            convergence_eps: 1e-6,
            max_pair_dist: 2.0,
            ..Default::default()
        };
        Self {
            trials: 10,
            seed: 0,
            terrain: TerrainSpec {
                extent: [60.0, 60.0],
                density: 25.0,
                ..TerrainSpec::default()
            },
            rotation_deg: [60.0, 60.0],
            translation: [0.0, 0.2],
            change_fraction: 0.3,
            noise_sigma: 0.006,
            success_threshold: DEFAULT_SUCCESS_THRESHOLD,
            icp,
            coarse: CoarseParams::default(),
            hybrid: HybridParams {
                icp,
                ..HybridParams::default()
            },
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        self.terrain.validate()?;
        if !(0.0..1.0).contains(&self.change_fraction) {
            return Err(Error::param("change fraction must lie in [0, 1)"));
        }
        if self.rotation_deg[0] > self.rotation_deg[1] || self.translation[0] > self.translation[1] {
            return Err(Error::param("ranges must be ordered"));
        }
        if !(self.success_threshold > 0.0) {
            return Err(Error::param("success threshold must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub success: bool,
    /// `None` when the method returned an error.
    pub pose_rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub truth: RigidTransform,
    pub outcomes: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: Method,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean pose RMSE over successful trials.
    pub mean_pose_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub rows: Vec<MethodRow>,
    pub trials: Vec<TrialRecord>,
}

impl BenchReport {
    pub fn row(&self, method: Method) -> &MethodRow {
        self.rows
            .iter()
            .find(|r| r.method == method)
            .expect("every method has a row")
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<12} {:>8} {:>10} {:>12}\n", "method", "trials", "success%", "rmse_m");
        for r in &self.rows {
            let rmse = r.mean_pose_rmse.map_or("-".to_string(), |v| format!("{v:.4}"));
            s += &format!(
                "{:<12} {:>8} {:>10.1} {:>12}\n",
                r.method.name(),
                r.trials,
                100.0 * r.success_rate,
                rmse
            );
        }
        s
    }
}

/// Seed of trial `k`, independent of how trials are scheduled.
pub fn trial_seed(master: u64, k: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(k as u64 + 1);
    rng.random()
}

/// A synthetic epoch pair: `(source, target, truth)` where `truth` maps the
/// source onto the target.
pub fn epoch_pair(config: &BenchConfig, seed: u64) -> Result<(PointCloud, PointCloud, RigidTransform)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terrain = TerrainSpec {
        seed: rng.random(),
        ..config.terrain
    };
    let (target, _) = sample_terrain(&terrain, rng.random())?;
    let (mut later, mut truth_field) = sample_terrain(&terrain, rng.random())?;

    // scatter disturbances until they cover the requested share of the area
    let area = terrain.extent[0] * terrain.extent[1] * terrain.slope_deg.to_radians().cos();
    let mut covered = 0.0;
    let (ha, hb) = (
        terrain.extent[0] / 2.0,
        terrain.extent[1] / 2.0 * terrain.slope_deg.to_radians().cos(),
    );
    while covered < config.change_fraction * area {
        let r = rng.random_range(4.0..8.0);
        let spec = RegionSpec {
            center: [rng.random_range(-ha + r..ha - r), rng.random_range(-hb + r..hb - r)],
            radius_along: r,
            radius_across: r * rng.random_range(0.6..1.0),
            depth: rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            azimuth_deg: rng.random_range(0.0..360.0),
            taper: 0.3,
        };
        (later, truth_field) = apply_landslide(&later, &truth_field, &terrain, &spec)?;
        covered += std::f64::consts::PI * spec.radius_along * spec.radius_across;
    }

    let diameter = target.diameter();
    let angle = rng
        .random_range(config.rotation_deg[0]..=config.rotation_deg[1])
        .to_radians()
        * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let axis = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 1.0);
    let dir = Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-0.3..0.3),
    );
    let t = dir.normalize() * rng.random_range(config.translation[0]..=config.translation[1]) * diameter;
    let truth = RigidTransform::from_axis_angle(&axis, angle, t);

    let scan = ScanParams {
        noise_sigma: config.noise_sigma,
        occlusion: false,
        seed: rng.random(),
        ..ScanParams::default()
    };
    let source = simulate_stations(&later, &[truth], &scan)?.remove(0);
    Ok((source, target, truth))
}

/// A noise-free pair inside the ICP basin: the source is the target sampling
/// moved by `truth⁻¹`, with a rotation of at most `max_rotation_deg` about a
/// random axis and a translation of at most `max_translation` diameters.
///
/// Points are drawn i.i.d. uniformly over the surface rather than on the
/// jittered grid: an identical grid-like sampling on both sides has spurious
/// one-cell-shift fixed points for point-to-point ICP.
pub fn basin_pair(
    terrain: &TerrainSpec,
    seed: u64,
    max_rotation_deg: f64,
    max_translation: f64,
) -> Result<(PointCloud, PointCloud, RigidTransform)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = TerrainSpec {
        seed: rng.random(),
        ..*terrain
    };
    spec.validate()?;
    let n = (spec.density * spec.extent[0] * spec.extent[1]).round() as usize;
    let (ha, hb) = (spec.extent[0] / 2.0, spec.extent[1] / 2.0);
    let points: Vec<Point3> = (0..n)
        .map(|_| spec.surface_point(rng.random_range(-ha..ha), rng.random_range(-hb..hb)))
        .collect();
    let target = PointCloud::new(points);
    let diameter = target.diameter();
    let unit = |rng: &mut ChaCha8Rng| loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    };
    let axis = unit(&mut rng);
    let angle = rng.random_range(0.0..=max_rotation_deg).to_radians();
    let t = unit(&mut rng) * rng.random_range(0.0..=max_translation) * diameter;
    // rotate about the cloud centroid so the translation bound means what it says
    let c = target
        .centroid()
        .map_or(Vec3::zeros(), |c| c.coords + target.origin_shift);
    let rot = RigidTransform::from_axis_angle(&axis, angle, Vec3::zeros());
    let truth = RigidTransform::new(rot.rotation, c - rot.rotation * c + t);
    let source = truth.inverse().transform_cloud(&target);
    Ok((source, target, truth))
}

/// Registers `source` onto `target` with one of the benchmarked methods.
pub fn register_pair(
    method: Method,
    source: &PointCloud,
    target: &PointCloud,
    icp_params: &IcpParams,
    coarse: &CoarseParams,
    hybrid: &HybridParams,
) -> Result<RegistrationResult> {
    Ok(match method {
        Method::Icp => icp(source, target, icp_params)?,
        Method::CoarseIcp => {
            let init = coarse_register(source, target, coarse)?;
            icp_with_initial(source, target, icp_params, &init)?
        }
        Method::Hybrid => register_global_hybrid(source, target, hybrid)?.registration,
    })
}

fn run_method(
    method: Method,
    source: &PointCloud,
    target: &PointCloud,
    config: &BenchConfig,
) -> Result<RigidTransform> {
    Ok(register_pair(method, source, target, &config.icp, &config.coarse, &config.hybrid)?.transform)
}

fn run_trial(config: &BenchConfig, k: usize) -> Result<TrialRecord> {
    let seed = trial_seed(config.seed, k);
    let (source, target, truth) = epoch_pair(config, seed)?;
    let center = source.centroid().unwrap_or_else(Point3::origin);
    let diameter = source.diameter();
    let outcomes = Method::ALL
        .iter()
        .map(|&method| match run_method(method, &source, &target, config) {
            Ok(t) => {
                let e = evaluate_registration_at(&t, &truth, &center, diameter, config.success_threshold)?;
                Ok(MethodOutcome {
                    method,
                    success: e.success,
                    pose_rmse: Some(e.pose_rmse),
                    error: None,
                })
            }
            Err(err) => Ok(MethodOutcome {
                method,
                success: false,
                pose_rmse: None,
                error: Some(err.to_string()),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialRecord {
        trial: k,
        seed,
        truth,
        outcomes,
    })
}

/// Runs every method on `config.trials` seeded epoch pairs.
pub fn run_table2_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let trials: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(|k| run_trial(config, k))
        .collect::<Result<_>>()?;
    let rows = Method::ALL
        .iter()
        .map(|&m| {
            let outs: Vec<&MethodOutcome> = trials
                .iter()
                .flat_map(|t| t.outcomes.iter().filter(move |o| o.method == m))
                .collect();
            let ok: Vec<f64> = outs.iter().filter(|o| o.success).filter_map(|o| o.pose_rmse).collect();
            MethodRow {
                method: m,
                trials: outs.len(),
                successes: ok.len(),
                success_rate: if outs.is_empty() {
                    0.0
                } else {
                    ok.len() as f64 / outs.len() as f64
                },
                mean_pose_rmse: (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64),
            }
        })
        .collect();
    Ok(BenchReport {
        config: config.clone(),
        rows,
        trials,
    })
}
