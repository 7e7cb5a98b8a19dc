use std::time::{Duration, Instant};

use slidemon::analysis::{classify_shape, shape_angle, Report};
use slidemon::synth::{run_pipeline, EpochInput, PipelineConfig, RegionSpec, SceneConfig, SceneEpoch, TerrainSpec};

const SLOPE_DEG: f64 = 40.0;

fn landslide() -> RegionSpec {
    RegionSpec {
        center: [0.0, 0.0],
        radius_along: 10.0,
        radius_across: 10.0,
        depth: 0.5,
        azimuth_deg: 180.0,
        taper: 0.1,
    }
}

fn config(run_dir: std::path::PathBuf, slides: Vec<RegionSpec>) -> PipelineConfig {
    let epoch = |id: &str, date: &str| EpochInput {
        epoch_id: id.into(),
        date: date.parse().unwrap(),
        scans: vec![],
    };
    PipelineConfig {
        run_dir,
        rng_seed: 17,
        epochs: vec![epoch("I", "2021-03-01"), epoch("II", "2021-08-28")],
        scene: Some(SceneConfig {
            terrain: TerrainSpec {
                density: 12.0,
                slope_deg: SLOPE_DEG,
                ..Default::default()
            },
            epochs: vec![
                SceneEpoch {
                    stations: vec![[-15.0, -50.0, -22.0], [15.0, -50.0, -22.0]],
                    landslides: vec![],
                },
                SceneEpoch {
                    stations: vec![[-13.0, -51.0, -21.5], [16.0, -48.5, -22.5]],
                    landslides: slides,
                },
            ],
            ..Default::default()
        }),
        ..Default::default()
    }
}

#[test]
fn one_injected_landslide_is_found_measured_and_classified() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path().join("a"), vec![landslide()]);
    let start = Instant::now();
    let out = run_pipeline(&cfg).unwrap();
    let elapsed = start.elapsed();
    eprintln!("pipeline took {elapsed:?}");
    assert_eq!(out.report.pairs[0].interval_days, 180.0);

    let pair = &out.pairs[0];
    assert_eq!(pair.regions.len(), 1, "regions: {:?}", out.report.regions);
    let region = &pair.regions[0];

    // truth at the region's vertices, mapped into the world through the
    // true pose of the reference station
    let truth = out.truth.as_ref().unwrap();
    let to_world = truth[0].station_poses[0];
    let spec = landslide();
    let (mut got, mut want) = (0.0, 0.0);
    for &i in &region.vertex_set {
        let w = to_world.apply(&pair.mesh.absolute(i));
        got += pair.field.values[i];
        want += spec.displacement_at(w.x, w.y);
    }
    let n = region.vertex_set.len() as f64;
    let (got, want) = (got / n, want / n);
    eprintln!("mean displacement {got:.4} m, truth {want:.4} m over {n} vertices");
    assert!((got - want).abs() <= 0.10 * want.abs());

    let terrain = TerrainSpec {
        slope_deg: SLOPE_DEG,
        ..Default::default()
    };
    let true_volume = spec.volume_on(&terrain, 0.1);
    let volume = region.volume_m3.unwrap();
    eprintln!("volume {volume:.1} m3, truth {true_volume:.1} m3");
    assert!((volume - true_volume).abs() <= 0.15 * true_volume);

    // a 20 m square footprint on the map is 20 m wide and 20 / cos(slope)
    // long in the slope plane
    let expected = classify_shape(shape_angle(20.0, 20.0 / SLOPE_DEG.to_radians().cos()).unwrap()).unwrap();
    let row = &out.report.regions[0];
    eprintln!(
        "W {:.1} L {:.1} theta {:.1} class {}",
        row.w_m, row.l_m, row.theta_deg, row.shape_class
    );
    assert_eq!(row.shape_class, expected);
    assert!(elapsed < Duration::from_secs(300));

    // every artifact is listed with its stage, and exists
    let root = dir.path().join("a");
    for stage in [
        "synthesize",
        "register_multiview",
        "register_global",
        "filter_vegetation",
        "build_dtm",
        "mesh_distance",
        "significant_regions",
        "build_report",
    ] {
        assert!(out.manifest.iter().any(|m| m.stage == stage), "no artifact for {stage}");
    }
    for m in &out.manifest {
        assert!(root.join(&m.path).is_file(), "{} missing", m.path);
    }
    let report = Report::from_json(&std::fs::read_to_string(root.join("report.json")).unwrap()).unwrap();
    assert_eq!(report, out.report);

    // same config, fresh directory: byte-identical report
    let again = run_pipeline(&PipelineConfig {
        run_dir: dir.path().join("b"),
        ..cfg
    })
    .unwrap();
    let first = std::fs::read(root.join("report.json")).unwrap();
    let second = std::fs::read(dir.path().join("b/report.json")).unwrap();
    assert_eq!(first, second);
    assert_eq!(again.manifest, out.manifest);
}

#[test]
fn unchanged_slope_reports_no_region() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&config(dir.path().join("run"), vec![])).unwrap();
    assert!(out.report.regions.is_empty(), "{:?}", out.report.regions);
    let p = &out.report.pairs[0];
    eprintln!("null change: mean {:.4} m, std {:.4} m", p.mean_m, p.std_m);
    // well below what 2 mm/day over the interval would take
    assert!(p.mean_m.abs() < 0.36);
}
