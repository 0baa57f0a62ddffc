use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};

use super::GeometryError;

/// Maximum deviation from orthonormality (and from unit determinant)
/// accepted when constructing a rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

fn rotation_deviation(rotation: &Matrix3<f64>) -> f64 {
    let gram = rotation.transpose() * rotation - Matrix3::identity();
    let ortho = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ortho.max((rotation.determinant() - 1.0).abs())
}

fn check_rotation(rotation: &Matrix3<f64>) -> Result<(), GeometryError> {
    let deviation = rotation_deviation(rotation);
    if !deviation.is_finite() || deviation > ROTATION_TOLERANCE {
        return Err(GeometryError::InvalidRotation { deviation });
    }
    Ok(())
}

/// Rigid motion `x -> R x + t` with `R` orthonormal and `det(R) = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    /// Builds a transform, rejecting rotations that are not orthonormal with
    /// determinant +1 within [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        check_rotation(&rotation)?;
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Rotation from a scaled-axis (axis-angle) vector plus a translation.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: Rotation3::from_scaled_axis(axis_angle).into_inner(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    /// Rotates a direction without translating it.
    pub fn apply_direction(&self, direction: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * direction
    }

    /// Composition `self * other`: `other` is applied first,
    /// `(self * other)(x) = self(other(x))`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rotation = self.rotation.transpose();
        RigidTransform { rotation, translation: -(rotation * self.translation) }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        h
    }

    /// Geodesic rotation distance to `other` in radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let relative = self.rotation.transpose() * other.rotation;
        let cos = ((relative.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        cos.acos()
    }

    /// Scaled-axis vector of the rotation part.
    pub fn axis_angle(&self) -> Vector3<f64> {
        Rotation3::from_matrix_unchecked(self.rotation).scaled_axis()
    }

    /// Applies a right-multiplied pose increment `(omega, u)`:
    /// the result is `x -> R exp([omega]) x + t + u`.
    pub(crate) fn perturbed(&self, omega: &Vector3<f64>, u: &Vector3<f64>) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * Rotation3::from_scaled_axis(*omega).into_inner(),
            translation: self.translation + u,
        }
    }

    /// Projects the rotation back onto SO(3); useful after long compose
    /// chains where round-off accumulates.
    pub fn orthonormalized(&self) -> RigidTransform {
        RigidTransform {
            rotation: nearest_rotation(&self.rotation),
            translation: self.translation,
        }
    }
}

/// Similarity motion `x -> s R x + t` with `s > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityTransform {
    scale: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn new(
        scale: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(GeometryError::InvalidScale(scale));
        }
        check_rotation(&rotation)?;
        Ok(Self { scale, rotation, translation })
    }

    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * point) + self.translation
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let scale = 1.0 / self.scale;
        let rotation = self.rotation.transpose();
        SimilarityTransform { scale, rotation, translation: -(scale * (rotation * self.translation)) }
    }
}

/// Skew-symmetric matrix `[v]` with `[v] w = v × w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Nearest rotation matrix in the Frobenius sense (sign-corrected SVD).
pub(crate) fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd with u");
    let vt = svd.v_t.expect("svd with v_t");
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).scale_mut(-1.0);
        r = u * vt;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_rigid, random_rotation};
    use nalgebra::Vector4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let mut m = Matrix3::identity();
        m[(0, 1)] = 1e-6;
        assert!(matches!(
            RigidTransform::new(m, Vector3::zeros()),
            Err(GeometryError::InvalidRotation { .. })
        ));
    }

    #[test]
    fn rejects_reflection() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(m, Vector3::zeros()).is_err());
    }

    #[test]
    fn compose_matches_homogeneous_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = random_rigid(&mut rng);
            let b = random_rigid(&mut rng);
            let c = a.compose(&b);
            let h = a.to_homogeneous() * b.to_homogeneous();
            assert!((c.to_homogeneous() - h).norm() < 1e-12);
        }
    }

    #[test]
    fn compose_invert_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let t = random_rigid(&mut rng);
            let round = t.compose(&t.inverse()).to_homogeneous();
            assert!((round - Matrix4::identity()).norm() < 1e-9);
        }
    }

    #[test]
    fn apply_matches_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let t = random_rigid(&mut rng);
            let p = Vector3::new(
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-50.0..50.0),
            );
            let hp = t.to_homogeneous() * Vector4::new(p.x, p.y, p.z, 1.0);
            assert!((t.apply(&p) - hp.xyz()).norm() < 1e-12);
        }
    }

    #[test]
    fn similarity_inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..100 {
            let s = SimilarityTransform::new(
                rng.gen_range(0.2..5.0),
                random_rotation(&mut rng),
                Vector3::new(rng.gen_range(-10.0..10.0), 0.3, -2.0),
            )
            .unwrap();
            let p = Vector3::new(1.0, -2.0, 3.0);
            assert!((s.inverse().apply(&s.apply(&p)) - p).norm() < 1e-9);
        }
    }

    #[test]
    fn similarity_rejects_bad_scale() {
        assert!(SimilarityTransform::new(0.0, Matrix3::identity(), Vector3::zeros()).is_err());
        assert!(SimilarityTransform::new(-1.0, Matrix3::identity(), Vector3::zeros()).is_err());
        assert!(SimilarityTransform::new(f64::NAN, Matrix3::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn skew_matches_cross_product() {
        let v = Vector3::new(0.3, -1.2, 2.0);
        let w = Vector3::new(-0.5, 0.7, 0.1);
        assert!((skew(&v) * w - v.cross(&w)).norm() < 1e-15);
    }

    #[test]
    fn nearest_rotation_recovers_noisy_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            let noisy = r + Matrix3::from_fn(|_, _| rng.gen_range(-1e-6..1e-6));
            let fixed = nearest_rotation(&noisy);
            assert!(rotation_deviation(&fixed) < 1e-12);
            assert!((fixed - r).norm() < 1e-5);
        }
    }
}
