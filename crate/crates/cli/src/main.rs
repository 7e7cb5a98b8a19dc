use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use slidemon::analysis::{
    build_report, error_budget, region_extent, summarize_pair, MotionAnnotation, MotionDirection, ReportInputs,
};
use slidemon::cloud::{
    parse_cloud, parse_mesh_ply, write_cloud, write_mesh_ply, CloudFormat, PlyEncoding, Point3, PointCloud,
};
use slidemon::ground_filter::{apply_mask, filter_vegetation, read_mask, split_by_labels, FilterParams};
use slidemon::registration::{register_multiview, CoarseParams, HybridParams, IcpParams, MultiviewParams};
use slidemon::synth::{
    add_vegetation, apply_landslide, gen_terrain, leveled_station, register_pair, run_pipeline, run_table2_benchmark,
    simulate_stations, BenchConfig, Method, PipelineConfig, RegionSpec, ScanParams, Scene, TerrainSpec,
};
use slidemon::terrain::{
    build_dtm, fill_volumes, mesh_distance, rate_field, read_field_ply, significant_regions, write_field_ply,
    DistanceParams, Region, TriangleMesh,
};

#[derive(Parser)]
#[command(
    name = "slidemon",
    version,
    about = "Terrestrial laser scanning landslide monitoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register one cloud onto another.
    Register {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        dst: PathBuf,
        /// icp, coarse+icp or hybrid
        #[arg(long, default_value = "hybrid")]
        method: String,
        /// ICP pair rejection distance, meters.
        #[arg(long, default_value_t = 2.0)]
        max_pair_dist: f64,
        /// 4×4 row-major transform (source → destination frame).
        #[arg(long, default_value = "transform.txt")]
        out_transform: PathBuf,
        #[arg(long, default_value = "registration.json")]
        out_result: PathBuf,
    },
    /// Bring the station clouds listed in a file into the first one's frame.
    RegisterMultiview {
        /// One cloud path per line, relative to the list file.
        #[arg(long)]
        list: PathBuf,
        /// Where `<stem>.transform.txt` files go (default: next to the list).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Separate ground from vegetation.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        removed: Option<PathBuf>,
        /// Forced labels: `+index` ground, `-index` vegetation.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        cell_size: Option<f64>,
    },
    /// Triangulate a ground cloud into a DTM.
    Dtm {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        max_edge: f64,
    },
    /// Signed change of one DTM against a reference DTM.
    Deform {
        #[arg(long)]
        compared: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        days: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        max_dist: f64,
    },
    /// Connected regions moving faster than a threshold.
    Regions {
        #[arg(long)]
        field: PathBuf,
        /// mm/day
        #[arg(long, default_value_t = 2.0)]
        threshold: f64,
        /// m²
        #[arg(long, default_value_t = 25.0)]
        min_area: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shape classification and the monitoring report.
    Classify {
        #[arg(long)]
        regions: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Motion azimuth in degrees clockwise from +y (default: steepest descent).
        #[arg(long)]
        motion_az: Option<f64>,
        /// `id=TYPE` (RS, TS, FL), repeatable.
        #[arg(long = "annotate")]
        annotations: Vec<String>,
        /// Also write the aligned-column rendering.
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Total error σ from the component errors (all in mm).
    Budget {
        #[arg(long)]
        tls: f64,
        #[arg(long)]
        mreg: f64,
        #[arg(long)]
        treg: f64,
        #[arg(long)]
        veg: f64,
        #[arg(long)]
        mesh: f64,
    },
    /// Synthetic scenes with ground truth.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Registration benchmark.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// End-to-end run from a JSON config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct SceneIo {
    #[arg(long = "in")]
    input: PathBuf,
    /// Scene file (terrain spec and truth) belonging to the input cloud.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Updated scene file (default: overwrite `--scene`).
    #[arg(long)]
    scene_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Fractal relief over an inclined plane.
    Terrain {
        #[arg(long, num_args = 2, default_values_t = [60.0, 60.0])]
        extent: Vec<f64>,
        #[arg(long, default_value_t = 40.0)]
        slope: f64,
        #[arg(long, default_value_t = 1.5)]
        roughness: f64,
        #[arg(long, default_value_t = 12.0)]
        wavelength: f64,
        /// Points per m².
        #[arg(long, default_value_t = 154.0)]
        density: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scene: PathBuf,
    },
    /// Add labeled vegetation blobs.
    Veg {
        #[command(flatten)]
        io: SceneIo,
        #[arg(long, default_value_t = 0.15)]
        coverage: f64,
        #[arg(long, num_args = 2, default_values_t = [0.5, 3.0])]
        height: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Displace an elliptical region along the surface normal.
    Slide {
        #[command(flatten)]
        io: SceneIo,
        #[arg(long, num_args = 2, allow_negative_numbers = true, default_values_t = [0.0, 0.0])]
        center: Vec<f64>,
        #[arg(long, default_value_t = 10.0)]
        radius_along: f64,
        #[arg(long, default_value_t = 10.0)]
        radius_across: f64,
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        depth: f64,
        #[arg(long, default_value_t = 180.0)]
        azimuth: f64,
        #[arg(long, default_value_t = 0.1)]
        taper: f64,
    },
    /// Simulate leveled scanners looking at the origin.
    Scan {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// `x,y,z`, repeatable.
        #[arg(long = "station", required = true, allow_hyphen_values = true)]
        stations: Vec<String>,
        #[arg(long, default_value_t = 0.006)]
        noise: f64,
        #[arg(long)]
        max_range: Option<f64>,
        #[arg(long)]
        no_occlusion: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Receives `station_<k>.ply`.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        scene_out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Success rate and pose error of icp, coarse+icp and hybrid.
    Table2 {
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Benchmark config JSON; `--trials` and `--seed` override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Full per-trial report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_cloud(&bytes, CloudFormat::from_path(path)).with_context(|| format!("parsing {}", path.display()))
}

/// Epoch id from the file, else the file name.
fn with_epoch_fallback(mut cloud: PointCloud, path: &Path) -> PointCloud {
    if cloud.epoch_id.is_empty() {
        cloud.epoch_id = stem(path);
    }
    cloud
}

fn write_cloud_file(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_file(path, &write_cloud(cloud, CloudFormat::from_path(path), true))
}

fn read_mesh(path: &Path) -> Result<(PointCloud, Vec<[usize; 3]>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (cloud, faces) = parse_mesh_ply(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    Ok((with_epoch_fallback(cloud, path), faces))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn parse_point(s: &str) -> Result<Point3> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("station must be x,y,z, got `{s}`"))?;
    if v.len() != 3 {
        bail!("station must be x,y,z, got `{s}`");
    }
    Ok(Point3::new(v[0], v[1], v[2]))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Register {
            src,
            dst,
            method,
            max_pair_dist,
            out_transform,
            out_result,
        } => {
            let method: Method = method.parse()?;
            let source = read_cloud(&src)?;
            let target = read_cloud(&dst)?;
            let icp = IcpParams {
                max_pair_dist,
                ..Default::default()
            };
            let hybrid = HybridParams {
                icp,
                ..Default::default()
            };
            let result = register_pair(method, &source, &target, &icp, &CoarseParams::default(), &hybrid)?;
            write_file(&out_transform, result.transform.to_text().as_bytes())?;
            write_json(&out_result, &result)?;
            println!(
                "{}: rmse {:.4} m, {} inliers, {} iterations",
                method.name(),
                result.rmse,
                result.inlier_count,
                result.iterations
            );
        }
        Command::RegisterMultiview { list, out_dir } => {
            let base = list.parent().unwrap_or(Path::new("")).to_path_buf();
            let text = std::fs::read_to_string(&list).with_context(|| format!("reading {}", list.display()))?;
            let paths: Vec<PathBuf> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| base.join(l))
                .collect();
            let clouds = paths.iter().map(|p| read_cloud(p)).collect::<Result<Vec<_>>>()?;
            let poses = register_multiview(&clouds, &MultiviewParams::default())?;
            let out_dir = out_dir.unwrap_or(base);
            for (p, t) in paths.iter().zip(&poses) {
                let out = out_dir.join(format!("{}.transform.txt", stem(p)));
                write_file(&out, t.to_text().as_bytes())?;
                println!("{}", out.display());
            }
        }
        Command::Filter {
            input,
            out,
            removed,
            mask,
            cell_size,
        } => {
            let cloud = read_cloud(&input)?;
            let mut params = FilterParams::default();
            if let Some(c) = cell_size {
                params.cell_size = c;
            }
            let (mut ground, mut veg, mut labeling) = filter_vegetation(&cloud, &params)?;
            if let Some(m) = mask {
                labeling = apply_mask(&labeling, &read_mask(&m)?)?;
                (ground, veg) = split_by_labels(&cloud, &labeling);
            }
            write_cloud_file(&out, &ground)?;
            if let Some(r) = removed {
                write_cloud_file(&r, &veg)?;
            }
            println!(
                "{} ground, {} vegetation",
                labeling.ground_count, labeling.vegetation_count
            );
        }
        Command::Dtm { input, out, max_edge } => {
            let cloud = with_epoch_fallback(read_cloud(&input)?, &input);
            let dtm = build_dtm(&cloud, None, max_edge)?;
            let bytes = write_mesh_ply(
                &dtm.mesh.to_cloud(),
                &dtm.mesh.triangles,
                PlyEncoding::BinaryLittleEndian,
                false,
            );
            write_file(&out, &bytes)?;
            println!(
                "{} vertices, {} triangles, {} duplicates dropped",
                dtm.mesh.vertices.len(),
                dtm.mesh.triangles.len(),
                dtm.duplicates_dropped
            );
        }
        Command::Deform {
            compared,
            reference,
            days,
            out,
            max_dist,
        } => {
            let (rc, rf) = read_mesh(&reference)?;
            let reference = TriangleMesh::from_parts(&rc, rf, None)?;
            let (cc, cf) = read_mesh(&compared)?;
            let compared = TriangleMesh::from_parts(&cc, cf, Some(reference.plane))?;
            let params = DistanceParams {
                max_dist,
                ..Default::default()
            };
            let field = mesh_distance(&compared, &reference, &params, days)?;
            write_file(&out, &write_field_ply(&compared, &field)?)?;
            println!("{} of {} vertices valid", field.valid_count(), field.values.len());
        }
        Command::Regions {
            field,
            threshold,
            min_area,
            out,
        } => {
            let (mesh, f) = read_field_ply(&std::fs::read(&field)?)?;
            let rates = rate_field(&f)?;
            let mut regions = significant_regions(&mesh, &rates, threshold, min_area)?;
            fill_volumes(&mut regions, &f, &mesh)?;
            write_json(&out, &regions)?;
            println!("{} regions", regions.len());
        }
        Command::Classify {
            regions,
            field,
            out,
            motion_az,
            annotations,
            text,
        } => {
            let mut regions: Vec<Region> = read_json(&regions)?;
            let (mesh, f) = read_field_ply(&std::fs::read(&field)?)?;
            let motion = motion_az.map_or(MotionDirection::SteepestDescent, MotionDirection::Azimuth);
            let notes = annotations
                .iter()
                .map(|a| a.parse::<MotionAnnotation>())
                .collect::<slidemon::Result<Vec<_>>>()?;
            let mut shapes = Vec::with_capacity(regions.len());
            for r in &mut regions {
                let s = region_extent(r, &mesh, motion)?;
                r.w_m = Some(s.w_m);
                r.l_m = Some(s.l_m);
                shapes.push((r.id, s));
            }
            let tagged: Vec<(usize, Region)> = regions.into_iter().map(|r| (0, r)).collect();
            let parameters = serde_json::json!({ "motion_az_deg": motion_az });
            let report = build_report(ReportInputs {
                epochs: &[],
                pairs: &[summarize_pair(&f)?],
                regions: &tagged,
                shapes: &shapes,
                annotations: &notes,
                budget: None,
                parameters: &parameters,
            })?;
            write_file(&out, report.to_json()?.as_bytes())?;
            if let Some(t) = text {
                write_file(&t, report.to_text().as_bytes())?;
            }
            for r in &report.regions {
                println!(
                    "{} {} W {:.1} m L {:.1} m θ {:.1}°",
                    r.id, r.type_label, r.w_m, r.l_m, r.theta_deg
                );
            }
        }
        Command::Budget {
            tls,
            mreg,
            treg,
            veg,
            mesh,
        } => {
            let b = error_budget(tls, mreg, treg, veg, mesh)?;
            println!("{:.1} mm", b.sigma_mm);
        }
        Command::Synth(cmd) => synth(cmd)?,
        Command::Bench(BenchCommand::Table2 {
            trials,
            seed,
            config,
            out,
        }) => {
            let mut cfg: BenchConfig = match config {
                Some(p) => read_json(&p)?,
                None => BenchConfig::default(),
            };
            cfg.trials = trials;
            cfg.seed = seed;
            let report = run_table2_benchmark(&cfg)?;
            if let Some(o) = out {
                write_json(&o, &report)?;
            }
            print!("{}", report.to_table());
        }
        Command::Pipeline { config } => {
            let cfg = PipelineConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let out = run_pipeline(&cfg)?;
            print!("{}", out.report.to_text());
            println!("{}", cfg.run_dir.join("manifest.json").display());
        }
    }
    Ok(())
}

fn synth(cmd: SynthCommand) -> Result<()> {
    match cmd {
        SynthCommand::Terrain {
            extent,
            slope,
            roughness,
            wavelength,
            density,
            seed,
            out,
            scene,
        } => {
            let terrain = TerrainSpec {
                extent: [extent[0], extent[1]],
                slope_deg: slope,
                roughness,
                wavelength,
                density,
                seed,
            };
            let (cloud, truth) = gen_terrain(&terrain)?;
            write_cloud_file(&out, &cloud)?;
            write_json(&scene, &Scene { terrain, truth })?;
            println!("{} points", cloud.len());
        }
        SynthCommand::Veg {
            io,
            coverage,
            height,
            seed,
        } => {
            let (cloud, scene) = (read_cloud(&io.input)?, read_json::<Scene>(&io.scene)?);
            let (c, truth) = add_vegetation(
                &cloud,
                &scene.truth,
                &scene.terrain,
                coverage,
                [height[0], height[1]],
                seed,
            )?;
            finish_scene(&io, &c, Scene { truth, ..scene })?;
        }
        SynthCommand::Slide {
            io,
            center,
            radius_along,
            radius_across,
            depth,
            azimuth,
            taper,
        } => {
            let (cloud, scene) = (read_cloud(&io.input)?, read_json::<Scene>(&io.scene)?);
            let region = RegionSpec {
                center: [center[0], center[1]],
                radius_along,
                radius_across,
                depth,
                azimuth_deg: azimuth,
                taper,
            };
            let (c, truth) = apply_landslide(&cloud, &scene.truth, &scene.terrain, &region)?;
            finish_scene(&io, &c, Scene { truth, ..scene })?;
        }
        SynthCommand::Scan {
            input,
            scene,
            stations,
            noise,
            max_range,
            no_occlusion,
            seed,
            out_dir,
            scene_out,
        } => {
            let cloud = read_cloud(&input)?;
            let mut sc: Scene = read_json(&scene)?;
            let poses = stations
                .iter()
                .map(|s| Ok(leveled_station(parse_point(s)?, Point3::origin())))
                .collect::<Result<Vec<_>>>()?;
            let params = ScanParams {
                noise_sigma: noise,
                max_range,
                occlusion: !no_occlusion,
                seed,
                ..Default::default()
            };
            let scans = simulate_stations(&cloud, &poses, &params)?;
            for (k, s) in scans.iter().enumerate() {
                let path = out_dir.join(format!("station_{k}.ply"));
                write_cloud_file(&path, s)?;
                println!("{} ({} points)", path.display(), s.len());
            }
            sc.truth.station_poses = poses;
            write_json(scene_out.as_deref().unwrap_or(&scene), &sc)?;
        }
    }
    Ok(())
}

fn finish_scene(io: &SceneIo, cloud: &PointCloud, scene: Scene) -> Result<()> {
    write_cloud_file(&io.out, cloud)?;
    write_json(io.scene_out.as_deref().unwrap_or(&io.scene), &scene)?;
    println!("{} points", cloud.len());
    Ok(())
}
