use std::time::{Duration, Instant};

use slidemon::registration::{evaluate_registration_at, icp, IcpParams};
use slidemon::synth::{basin_pair, run_table2_benchmark, trial_seed, BenchConfig, Method, TerrainSpec};

fn small_terrain() -> TerrainSpec {
    TerrainSpec {
        density: 10.0,
        ..Default::default()
    }
}

#[test]
fn icp_recovers_noise_free_pairs_inside_its_basin() {
    let start = Instant::now();
    for k in 0..20 {
        let (source, target, truth) = basin_pair(&small_terrain(), trial_seed(11, k), 10.0, 0.2).unwrap();
        assert!(source.len() <= 100_000);
        let d = target.diameter();
        let params = IcpParams {
            max_pair_dist: 0.5 * d,
            max_iter: 500,
            convergence_eps: 1e-9,
            ..Default::default()
        };
        let r = icp(&source, &target, &params).unwrap();
        let center = source.centroid().unwrap();
        let e = evaluate_registration_at(&r.transform, &truth, &center, d, 1.0).unwrap();
        assert!(
            e.pose_rmse < 1e-3 * d,
            "pair {k}: pose rmse {} vs diameter {d}",
            e.pose_rmse
        );
        assert!(r.rmse_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.transform.is_proper(1e-9));
    }
    assert!(start.elapsed() < Duration::from_secs(120), "{:?}", start.elapsed());
}

#[test]
fn hybrid_succeeds_wherever_icp_does() {
    let mut strictly_better = false;
    for rotation in [25.0, 60.0] {
        let config = BenchConfig {
            trials: 4,
            seed: 3,
            rotation_deg: [rotation, rotation],
            terrain: small_terrain(),
            ..Default::default()
        };
        let start = Instant::now();
        let report = run_table2_benchmark(&config).unwrap();
        eprintln!("rotation {rotation}° ({:?})\n{}", start.elapsed(), report.to_table());
        for t in &report.trials {
            let ok = |m: Method| t.outcomes.iter().find(|o| o.method == m).unwrap().success;
            assert!(
                !ok(Method::Icp) || ok(Method::Hybrid),
                "trial {} lost by hybrid",
                t.trial
            );
        }
        let (h, i) = (report.row(Method::Hybrid).successes, report.row(Method::Icp).successes);
        assert!(h >= i);
        strictly_better |= h > i;
        // per-registration budget: three methods per trial
        assert!(start.elapsed() < Duration::from_secs(120) * 3 * config.trials as u32);
    }
    assert!(strictly_better);
}
