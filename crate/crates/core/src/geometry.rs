//! Rigid-body transforms, rotations and the pinhole camera model.
//!
//! Poses are stored camera-to-World: `pose.apply(x_c)` maps a point from
//! the camera frame into the World frame. Optimizer updates use a right
//! (body-frame) rotation increment and an additive World-frame translation
//! increment, see [`Pose::retract`].

use core::ops::Mul;

use nalgebra::{Matrix2x3, Matrix2x6, Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3, Vector6};

use thiserror::Error;

/// Points with camera depth at or below this are classified as behind the camera.
pub const DEPTH_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("quaternion has zero or non-finite norm")]
    DegenerateQuaternion,
}

/// A 3D rotation backed by a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Rotation about `axis` (normalized internally) by `angle` radians.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        Self::exp(&(axis * (angle / n)))
    }

    /// Exponential map from a rotation vector (axis times angle).
    pub fn exp(omega: &Vector3<f64>) -> Self {
        Self(UnitQuaternion::from_scaled_axis(*omega))
    }

    /// Logarithm map, inverse of [`Rotation::exp`].
    pub fn log(&self) -> Vector3<f64> {
        self.0.scaled_axis()
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self(UnitQuaternion::from_matrix(m))
    }

    /// Builds a rotation from scalar-last quaternion components, normalizing them.
    ///
    /// Components already within a few ulps of unit norm are kept as given,
    /// so quaternions written at full precision read back bit-identically.
    pub fn from_xyzw(x: f64, y: f64, z: f64, w: f64) -> Result<Self, GeometryError> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(GeometryError::DegenerateQuaternion);
        }
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(Self(UnitQuaternion::new_unchecked(q)));
        }
        Ok(Self(UnitQuaternion::new_normalize(q)))
    }

    /// Scalar-last quaternion components `[x, y, z, w]`.
    pub fn to_xyzw(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.i, q.j, q.k, q.w]
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Self(renormalize(self.0 * other.0))
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.transform_vector(v)
    }

    pub fn inverse_rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.inverse_transform_vector(v)
    }

    /// Angle of the relative rotation between `self` and `other`, in radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        self.0.angle_to(&other.0)
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Skew-symmetric cross-product matrix: `skew(a) * b == a.cross(b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Camera-to-World rigid transform of a keyframe.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    /// Camera origin expressed in the World frame, meters.
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(Rotation::identity(), translation)
    }

    /// Maps a camera-frame point into the World frame.
    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(x) + self.translation
    }

    pub fn camera_to_world(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.apply(x)
    }

    pub fn world_to_camera(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_rotate(&(x - self.translation))
    }

    /// `self ∘ other`: applying the result equals applying `other` then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.apply(&other.translation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.inverse();
        Pose {
            rotation,
            translation: -rotation.rotate(&self.translation),
        }
    }

    /// Local update used by the optimizer.
    ///
    /// `delta = (δθ, δt)`: the rotation becomes `R · Exp(δθ)` (body frame)
    /// and the translation becomes `t + δt` (World frame).
    pub fn retract(&self, delta: &Vector6<f64>) -> Pose {
        let omega = delta.fixed_rows::<3>(0).into_owned();
        let dt = delta.fixed_rows::<3>(3).into_owned();
        Pose {
            rotation: self.rotation.compose(&Rotation::exp(&omega)),
            translation: self.translation + dt,
        }
    }

    /// Same rotation, translation multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> Pose {
        Pose {
            rotation: self.rotation,
            translation: self.translation * scale,
        }
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

/// Pinhole intrinsics (no distortion).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fx.is_finite()) || !(self.fy > 0.0 && self.fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return Err(GeometryError::InvalidIntrinsics("cx must lie inside the image width"));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidIntrinsics("cy must lie inside the image height"));
        }
        Ok(())
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0 && pixel.y >= 0.0 && pixel.x <= self.width as f64 && pixel.y <= self.height as f64
    }

    /// Projects a camera-frame point. `None` when the depth is at or below
    /// [`DEPTH_EPSILON`].
    pub fn project_camera(&self, xc: &Vector3<f64>) -> Option<Vector2<f64>> {
        if xc.z <= DEPTH_EPSILON {
            return None;
        }
        Some(Vector2::new(self.fx * xc.x / xc.z + self.cx, self.fy * xc.y / xc.z + self.cy))
    }

    /// Jacobian of the pixel with respect to the camera-frame point.
    pub fn projection_jacobian(&self, xc: &Vector3<f64>) -> Matrix2x3<f64> {
        let inv_z = 1.0 / xc.z;
        let inv_z2 = inv_z * inv_z;
        Matrix2x3::new(
            self.fx * inv_z,
            0.0,
            -self.fx * xc.x * inv_z2,
            0.0,
            self.fy * inv_z,
            -self.fy * xc.y * inv_z2,
        )
    }

    /// Unit-depth bearing ray through `pixel`, in the camera frame.
    pub fn unproject(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0)
    }
}

/// Projects a World-frame point through a camera-to-World `pose`.
///
/// Returns `None` when the point is behind the camera.
pub fn project(k: &CameraIntrinsics, pose: &Pose, point: &Vector3<f64>) -> Option<Vector2<f64>> {
    k.project_camera(&pose.world_to_camera(point))
}

/// Projection together with its Jacobians with respect to the pose
/// retraction parameters (2×6) and the World-frame point (2×3).
pub fn project_with_jacobians(
    k: &CameraIntrinsics,
    pose: &Pose,
    point: &Vector3<f64>,
) -> Option<(Vector2<f64>, Matrix2x6<f64>, Matrix2x3<f64>)> {
    let xc = pose.world_to_camera(point);
    let pixel = k.project_camera(&xc)?;
    let dpix_dxc = k.projection_jacobian(&xc);
    let rt = pose.rotation.matrix().transpose();

    // xc = Rᵀ (X - t); R ← R·Exp(δθ) gives δxc = skew(xc)·δθ, t ← t + δt gives δxc = -Rᵀ·δt.
    let mut dxc_dpose = nalgebra::Matrix3x6::zeros();
    dxc_dpose.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&xc));
    dxc_dpose.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-rt));

    Some((pixel, dpix_dxc * dxc_dpose, dpix_dxc * rt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use core::f64::consts::FRAC_PI_2;

    fn k100() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    fn rz(angle: f64) -> Rotation {
        Rotation::from_axis_angle(&Vector3::z(), angle)
    }

    #[test]
    fn compose_with_identity() {
        let p = Pose::new(rz(0.3), Vector3::new(1.0, -2.0, 0.5));
        let q = Pose::identity().compose(&p);
        assert_relative_eq!(q.translation, p.translation, epsilon = 1e-15);
        assert!(q.rotation.angle_to(&p.rotation) < 1e-15);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = Pose::new(Rotation::exp(&Vector3::new(0.2, -0.4, 1.1)), Vector3::new(3.0, 1.0, -2.0));
        let id = p.compose(&p.inverse());
        assert!(id.translation.norm() < 1e-12);
        assert!(id.rotation.angle_to(&Rotation::identity()) < 1e-12);
    }

    #[test]
    fn compose_two_quarter_turns() {
        // Basis vectors by hand: b maps e_x to e_y, then a maps e_y to -e_x and adds (1,0,0).
        let a = Pose::new(rz(FRAC_PI_2), Vector3::new(1.0, 0.0, 0.0));
        let b = Pose::new(rz(FRAC_PI_2), Vector3::zeros());
        let c = a.compose(&b);
        assert_relative_eq!(c.translation, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        assert!(c.rotation.angle_to(&rz(core::f64::consts::PI)) < 1e-12);
        assert_relative_eq!(c.apply(&Vector3::x()), Vector3::new(0.0, 0.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(c.apply(&Vector3::y()), Vector3::new(1.0, -1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn project_examples() {
        let k = k100();
        let id = Pose::identity();
        assert_eq!(project(&k, &id, &Vector3::new(0.0, 0.0, 1.0)), Some(Vector2::new(50.0, 50.0)));
        assert_eq!(project(&k, &id, &Vector3::new(0.5, 0.0, 1.0)), Some(Vector2::new(100.0, 50.0)));
        assert_eq!(project(&k, &id, &Vector3::new(0.0, 0.0, -1.0)), None);
        assert_eq!(project(&k, &id, &Vector3::new(0.0, 0.0, DEPTH_EPSILON)), None);
    }

    #[test]
    fn retract_zero_and_pure_translation() {
        let p = Pose::new(Rotation::exp(&Vector3::new(0.1, 0.2, 0.3)), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(p.retract(&Vector6::zeros()).translation, p.translation);
        assert!(p.retract(&Vector6::zeros()).rotation.angle_to(&p.rotation) < 1e-15);

        let d = Vector6::new(0.0, 0.0, 0.0, 0.3, -0.4, 1.2);
        let q = p.retract(&d);
        assert_relative_eq!((q.translation - p.translation).norm(), 1.3, epsilon = 1e-12);
    }

    #[test]
    fn retract_keeps_unit_quaternion() {
        let mut p = Pose::identity();
        for i in 0..10_000 {
            let f = i as f64;
            p = p.retract(&Vector6::new(0.01 * f.sin(), 0.02 * f.cos(), 0.003, 0.0, 0.0, 0.0));
        }
        assert!((p.rotation.quaternion().into_inner().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 2, 2).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.0, 1.0, 2, 2).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.0, 0.0, 2, 2).is_err());
    }

    #[test]
    fn quaternion_components_round_trip() {
        let r = Rotation::exp(&Vector3::new(0.4, -0.1, 0.9));
        let [x, y, z, w] = r.to_xyzw();
        let back = Rotation::from_xyzw(x, y, z, w).unwrap();
        assert!(back.angle_to(&r) < 1e-15);
        assert!(Rotation::from_xyzw(0.0, 0.0, 0.0, 0.0).is_err());
    }
}
