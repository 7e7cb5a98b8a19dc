use nalgebra::Matrix3;

use super::RigidTransform;
use crate::cloud::{Point3, Vec3};
use crate::error::{Error, Result};

/// Relative size of the second principal spread below which a point set is
/// considered collinear.
const RANK_TOL: f64 = 1e-10;

fn spread_is_planar_or_better(points: impl Iterator<Item = Vec3> + Clone, mean: &Vec3) -> bool {
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let mut sv: Vec<f64> = cov.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv[0] > 0.0 && sv[1] > RANK_TOL * sv[0]
}

/// Closed-form least-squares rigid transform minimizing `Σ‖R·s + t − d‖²`
/// over `(source, target)` pairs, with reflections corrected.
pub fn fit_rigid(pairs: &[(Point3, Point3)]) -> Result<RigidTransform> {
    if pairs.len() < 3 {
        return Err(Error::DegenerateCorrespondences(format!(
            "need at least 3 pairs, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let (sum_s, sum_t) = pairs.iter().fold((Vec3::zeros(), Vec3::zeros()), |(a, b), (s, t)| {
        (a + s.coords, b + t.coords)
    });
    let mean_s = sum_s / n;
    let mean_t = sum_t / n;

    if !spread_is_planar_or_better(pairs.iter().map(|(s, _)| s.coords), &mean_s)
        || !spread_is_planar_or_better(pairs.iter().map(|(_, t)| t.coords), &mean_t)
    {
        return Err(Error::DegenerateCorrespondences(
            "correspondences are collinear or coincident".into(),
        ));
    }

    let mut h = Matrix3::zeros();
    for (s, t) in pairs {
        h += (s.coords - mean_s) * (t.coords - mean_t).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = vt.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    let translation = mean_t - rotation * mean_s;
    Ok(RigidTransform::new(rotation, translation))
}

/// Root-mean-square residual of `pairs` under `t`.
pub fn pair_rmse(t: &RigidTransform, pairs: &[(Point3, Point3)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let sse: f64 = pairs.iter().map(|(s, d)| (t.apply(s) - d).norm_squared()).sum();
    (sse / pairs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tetra() -> Vec<Point3> {
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
            Point3::new(0.0, 0.0, 3.0),
        ]
    }

    #[test]
    fn identical_sets_give_identity() {
        let pairs: Vec<_> = tetra().into_iter().map(|p| (p, p)).collect();
        let t = fit_rigid(&pairs).unwrap();
        assert!((t.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
        assert!(pair_rmse(&t, &pairs) < 1e-12);
    }

    #[test]
    fn recovers_rotation_about_z_plus_translation() {
        let truth = RigidTransform::from_axis_angle(&Vec3::z(), 30f64.to_radians(), Vec3::new(1.0, 2.0, 3.0));
        let pairs: Vec<_> = tetra().into_iter().map(|p| (p, truth.apply(&p))).collect();
        let t = fit_rigid(&pairs).unwrap();
        let max_res = pairs.iter().map(|(s, d)| (t.apply(s) - d).norm()).fold(0.0, f64::max);
        assert!(max_res < 1e-9);
        assert!((t.rotation - truth.rotation).norm() < 1e-9);
    }

    #[test]
    fn two_pairs_is_degenerate() {
        let pairs: Vec<_> = tetra().into_iter().take(2).map(|p| (p, p)).collect();
        assert!(matches!(fit_rigid(&pairs), Err(Error::DegenerateCorrespondences(_))));
    }

    #[test]
    fn collinear_is_degenerate() {
        let pairs: Vec<_> = (0..5)
            .map(|i| {
                let p = Point3::new(i as f64, 2.0 * i as f64, -(i as f64));
                (p, p)
            })
            .collect();
        assert!(matches!(fit_rigid(&pairs), Err(Error::DegenerateCorrespondences(_))));
    }

    #[test]
    fn coplanar_reflection_is_corrected() {
        // planar sets admit a reflection with zero residual; the fit must stay proper
        let src = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(1.0, 1.5, 0.0),
        ];
        let truth = RigidTransform::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), 2.5, Vec3::new(0.0, 0.0, 1.0));
        let pairs: Vec<_> = src.iter().map(|p| (*p, truth.apply(p))).collect();
        let t = fit_rigid(&pairs).unwrap();
        assert!(t.is_proper(1e-9));
        assert!(pair_rmse(&t, &pairs) < 1e-9);
    }

    proptest! {
        #[test]
        fn random_transforms_are_recovered(
            axis in (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0),
            angle in -3.0f64..3.0,
            t in (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0),
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 4..30),
        ) {
            let truth = RigidTransform::from_axis_angle(&Vec3::new(axis.0, axis.1, axis.2), angle, Vec3::new(t.0, t.1, t.2));
            let pairs: Vec<_> = pts.iter().map(|&(x, y, z)| { let p = Point3::new(x, y, z); (p, truth.apply(&p)) }).collect();
            if let Ok(est) = fit_rigid(&pairs) {
                let (orth, det) = est.orthonormality_error();
                prop_assert!(orth < 1e-9);
                prop_assert!(det > 0.0);
                prop_assert!(pair_rmse(&est, &pairs) < 1e-6);
            }
        }
    }
}
