use std::time::Instant;

use slidemon::cloud::{PointClass, PointCloud};
use slidemon::ground_filter::{csf_classify, filter_vegetation, ClothParams, FilterParams};
use slidemon::synth::{add_vegetation, gen_terrain, TerrainSpec};

fn slope(deg: f64, density: f64, seed: u64) -> (TerrainSpec, PointCloud, Vec<PointClass>) {
    let spec = TerrainSpec {
        slope_deg: deg,
        density,
        seed,
        ..Default::default()
    };
    let (c, t) = gen_terrain(&spec).unwrap();
    (spec, c, t.labels)
}

#[test]
fn steep_slope_with_vegetation_is_separated() {
    let (spec, c, t) = slope(70.0, 60.0, 7);
    let truth = slidemon::synth::SceneTruth {
        labels: t,
        displacement: vec![0.0; c.len()],
        ..Default::default()
    };
    let (cloud, truth) = add_vegetation(&c, &truth, &spec, 0.15, [0.5, 2.0], 8).unwrap();
    let start = Instant::now();
    let (ground, removed, labeling) = filter_vegetation(&cloud, &FilterParams::default()).unwrap();
    let elapsed = start.elapsed();
    let acc = labeling.accuracy(&truth.labels);
    eprintln!("{} points, accuracy {acc:.4}, {elapsed:?}", cloud.len());
    assert!(acc >= 0.95, "accuracy {acc}");
    assert_eq!(ground.len() + removed.len(), cloud.len());
    assert_eq!(ground.len(), labeling.ground_count);
}

#[test]
fn bare_slope_stays_ground() {
    for deg in [20.0, 45.0, 70.0] {
        let (_, c, _) = slope(deg, 30.0, 3);
        let (_, _, l) = filter_vegetation(&c, &FilterParams::default()).unwrap();
        let share = l.ground_count as f64 / c.len() as f64;
        assert!(share >= 0.99, "{deg} deg: {share}");
    }
}

#[test]
fn labels_follow_points_under_reordering() {
    let (spec, c, t) = slope(55.0, 20.0, 11);
    let truth = slidemon::synth::SceneTruth {
        labels: t,
        displacement: vec![0.0; c.len()],
        ..Default::default()
    };
    let (cloud, _) = add_vegetation(&c, &truth, &spec, 0.15, [0.5, 2.0], 12).unwrap();
    let n = cloud.len();
    // a fixed full-cycle permutation
    let perm: Vec<usize> = (0..n).map(|i| (i * 7919 + 13) % n).collect();
    let mut seen = vec![false; n];
    perm.iter().for_each(|&p| seen[p] = true);
    assert!(seen.iter().all(|&s| s));
    let shuffled = cloud.select(&perm);
    let params = FilterParams::default();
    let (_, _, a) = filter_vegetation(&cloud, &params).unwrap();
    let (_, _, b) = filter_vegetation(&shuffled, &params).unwrap();
    let mismatches = perm
        .iter()
        .enumerate()
        .filter(|(k, &i)| a.labels[i] != b.labels[*k])
        .count();
    assert_eq!(mismatches, 0);
}

#[test]
fn raising_class_threshold_only_adds_ground() {
    let (spec, c, t) = slope(0.0, 10.0, 5);
    let truth = slidemon::synth::SceneTruth {
        labels: t,
        displacement: vec![0.0; c.len()],
        ..Default::default()
    };
    let (cloud, _) = add_vegetation(&c, &truth, &spec, 0.2, [0.3, 2.5], 6).unwrap();
    let mut prev: Option<Vec<PointClass>> = None;
    for thr in [0.1, 0.3, 0.5, 1.0, 2.0] {
        let params = ClothParams {
            class_threshold: thr,
            ..Default::default()
        };
        let l = csf_classify(&cloud.points, &params).unwrap().labels;
        if let Some(p) = &prev {
            for (a, b) in p.iter().zip(&l) {
                assert!(!(*a == PointClass::Ground && *b == PointClass::Vegetation));
            }
        }
        prev = Some(l);
    }
}
