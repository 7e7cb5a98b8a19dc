use nalgebra::{Matrix3, Matrix4, Rotation3, Unit};
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud, Vec3};
use crate::error::{Error, Result};

/// Proper rigid motion `x ↦ R·x + t`, acting on absolute coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_axis_angle(axis: &Vec3, angle_rad: f64, translation: Vec3) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle_rad);
        Self::new(*rot.matrix(), translation)
    }

    pub fn translation_only(translation: Vec3) -> Self {
        Self::new(Matrix3::identity(), translation)
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// `‖RᵀR − I‖` (Frobenius) and `det R`.
    pub fn orthonormality_error(&self) -> (f64, f64) {
        let e = (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm();
        (e, self.rotation.determinant())
    }

    pub fn is_proper(&self, tol: f64) -> bool {
        let (e, det) = self.orthonormality_error();
        e < tol && (det - 1.0).abs() < tol
    }

    /// Re-orthonormalizes the rotation (nearest proper rotation via SVD).
    pub fn orthonormalized(&self) -> RigidTransform {
        let svd = self.rotation.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let d = (u * vt).determinant().signum();
        let rot = u * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * vt;
        RigidTransform::new(rot, self.translation)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_homogeneous();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    /// Parses a row-major 4×4 homogeneous matrix, rejecting non-rigid input.
    pub fn from_row_major(values: &[f64]) -> Result<RigidTransform> {
        if values.len() != 16 {
            return Err(Error::param(format!("expected 16 numbers, got {}", values.len())));
        }
        let m = Matrix4::from_row_slice(values);
        if (m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]) != (0.0, 0.0, 0.0, 1.0) {
            return Err(Error::param("last row of a rigid transform must be 0 0 0 1"));
        }
        let t = RigidTransform::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        );
        if !t.is_proper(1e-6) {
            return Err(Error::param("rotation block is not a proper rotation"));
        }
        Ok(t)
    }

    /// Text form: four lines of four numbers.
    pub fn to_text(&self) -> String {
        let v = self.to_row_major();
        v.chunks(4)
            .map(|row| row.iter().map(|x| format!("{x:.12}")).collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }

    pub fn from_text(text: &str) -> Result<RigidTransform> {
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::parse(0, format!("invalid number `{s}`")))
            })
            .collect::<Result<_>>()?;
        Self::from_row_major(&values)
    }

    /// Applies the transform to every point (and normal) of `cloud`, keeping
    /// its origin shift: `local' = T(local + shift) − shift`.
    pub fn transform_cloud(&self, cloud: &PointCloud) -> PointCloud {
        let local = self.in_shifted_frame(&cloud.origin_shift);
        let mut out = cloud.clone();
        for p in &mut out.points {
            *p = local.apply(p);
        }
        if let Some(normals) = out.normals.as_mut() {
            for n in normals.iter_mut().flatten() {
                *n = self.rotation * *n;
            }
        }
        out
    }

    /// Expresses an absolute-coordinate transform in a frame whose origin sits
    /// at `shift` (and vice versa via [`RigidTransform::from_shifted_frame`]).
    pub fn in_shifted_frame(&self, shift: &Vec3) -> RigidTransform {
        RigidTransform::new(self.rotation, self.translation + self.rotation * shift - shift)
    }

    pub fn from_shifted_frame(local: &RigidTransform, shift: &Vec3) -> RigidTransform {
        RigidTransform::new(local.rotation, local.translation - local.rotation * shift + shift)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compose_and_inverse() {
        let a = RigidTransform::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 0.7, Vec3::new(1.0, -2.0, 0.5));
        let b = RigidTransform::from_axis_angle(&Vec3::z(), -1.2, Vec3::new(0.0, 4.0, 1.0));
        let p = Point3::new(0.3, -1.1, 2.0);
        assert!((a.compose(&b).apply(&p) - a.apply(&b.apply(&p))).norm() < 1e-12);
        assert!((a.inverse().apply(&a.apply(&p)) - p).norm() < 1e-12);
        assert!(a.compose(&b).is_proper(1e-9));
        assert!(a.inverse().is_proper(1e-9));
    }

    #[test]
    fn text_round_trip() {
        let a = RigidTransform::from_axis_angle(&Vec3::new(0.0, 1.0, 1.0), 0.4, Vec3::new(10.0, 20.0, 30.0));
        let b = RigidTransform::from_text(&a.to_text()).unwrap();
        assert!((a.rotation - b.rotation).norm() < 1e-11);
        assert!((a.translation - b.translation).norm() < 1e-9);
    }

    #[test]
    fn reflection_rejected() {
        let mut v = RigidTransform::identity().to_row_major();
        v[0] = -1.0;
        assert!(RigidTransform::from_row_major(&v).is_err());
    }

    #[test]
    fn shifted_frame_is_consistent() {
        let t = RigidTransform::from_axis_angle(&Vec3::z(), 0.3, Vec3::new(1.0, 2.0, 3.0));
        let shift = Vec3::new(500.0, -20.0, 7.0);
        let local = t.in_shifted_frame(&shift);
        let p_abs = Point3::new(501.0, -19.0, 9.0);
        let via_local = local.apply(&(p_abs - shift)) + shift;
        assert!((via_local - t.apply(&p_abs)).norm() < 1e-9);
        let back = RigidTransform::from_shifted_frame(&local, &shift);
        assert!((back.translation - t.translation).norm() < 1e-9);
    }
}
