use serde::{Deserialize, Serialize};

use super::RigidTransform;
use crate::cloud::{Point3, Vec3};
use crate::error::{Error, Result};

/// Default pose-error threshold for counting a registration as successful.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub success: bool,
    pub pose_rmse: f64,
}

/// Corners of the cube of half-diagonal `diameter / 2` centered at `center`.
pub fn evaluation_points(center: &Point3, diameter: f64) -> Vec<Point3> {
    let h = diameter / 2.0 / 3f64.sqrt();
    let mut out = Vec::with_capacity(8);
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                out.push(center + Vec3::new(sx * h, sy * h, sz * h));
            }
        }
    }
    out
}

/// RMS displacement between `recovered` and `truth` over `points`.
pub fn pose_rmse(recovered: &RigidTransform, truth: &RigidTransform, points: &[Point3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let sse: f64 = points
        .iter()
        .map(|p| (recovered.apply(p) - truth.apply(p)).norm_squared())
        .sum();
    (sse / points.len() as f64).sqrt()
}

/// Pose error over a cube of the cloud's size centered at `center`; success
/// when the error does not exceed `success_threshold`.
pub fn evaluate_registration_at(
    recovered: &RigidTransform,
    truth: &RigidTransform,
    center: &Point3,
    diameter: f64,
    success_threshold: f64,
) -> Result<Evaluation> {
    if !(diameter > 0.0) {
        return Err(Error::param(format!("diameter must be positive, got {diameter}")));
    }
    let rmse = pose_rmse(recovered, truth, &evaluation_points(center, diameter));
    Ok(Evaluation {
        success: rmse <= success_threshold,
        pose_rmse: rmse,
    })
}

/// [`evaluate_registration_at`] centered on the origin of the source frame.
pub fn evaluate_registration(
    recovered: &RigidTransform,
    truth: &RigidTransform,
    diameter: f64,
    success_threshold: f64,
) -> Result<Evaluation> {
    evaluate_registration_at(recovered, truth, &Point3::origin(), diameter, success_threshold)
}
