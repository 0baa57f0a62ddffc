use nalgebra::{Matrix3x4, Vector2, Vector3, Vector4};

use super::{CameraIntrinsics, GeometryError, RigidTransform};

/// Projects a point through a rigid transform and pinhole intrinsics:
/// `pixel = K * (R x + t)` with the usual perspective divide.
pub fn project(
    k: &CameraIntrinsics,
    t: &RigidTransform,
    x: &Vector3<f64>,
) -> Result<Vector2<f64>, GeometryError> {
    k.project_camera(&t.apply(x))
}

/// General 3x4 projection matrix, e.g. as recovered by a structure-from-
/// motion stage. Homogeneous scale is arbitrary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionMatrix(Matrix3x4<f64>);

impl ProjectionMatrix {
    pub fn new(matrix: Matrix3x4<f64>) -> Self {
        Self(matrix)
    }

    /// `K [R | t]` for a calibrated camera.
    pub fn from_camera(k: &CameraIntrinsics, pose: &RigidTransform) -> Self {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(pose.rotation());
        rt.fixed_view_mut::<3, 1>(0, 3).copy_from(pose.translation());
        Self(k.matrix() * rt)
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.0
    }

    pub fn project(&self, x: &Vector3<f64>) -> Result<Vector2<f64>, GeometryError> {
        let h = self.0 * Vector4::new(x.x, x.y, x.z, 1.0);
        if h.z <= 0.0 {
            return Err(GeometryError::PointBehindCamera { depth: h.z });
        }
        Ok(Vector2::new(h.x / h.z, h.y / h.z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_rigid;
    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_homogeneous_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = CameraIntrinsics::new(831.0, 829.5, 640.25, 479.75, 1280, 960).unwrap();
        let mut k4 = Matrix4::identity();
        k4.fixed_view_mut::<3, 3>(0, 0).copy_from(&k.matrix());
        for _ in 0..500 {
            let mut t = random_rigid(&mut rng);
            let x = Vector3::new(
                rng.gen_range(-40.0..40.0),
                rng.gen_range(-40.0..40.0),
                rng.gen_range(-40.0..40.0),
            );
            if t.apply(&x).z <= 1e-3 {
                // Push the point in front of the camera by adjusting depth.
                let shift = 1.0 - t.apply(&x).z;
                t = RigidTransform::new(*t.rotation(), t.translation() + Vector3::new(0.0, 0.0, shift))
                    .unwrap();
            }
            let h = k4 * t.to_homogeneous() * Vector4::new(x.x, x.y, x.z, 1.0);
            let oracle = Vector2::new(h.x / h.z, h.y / h.z);
            let got = project(&k, &t, &x).unwrap();
            assert!((got - oracle).norm() < 1e-9);
        }
    }

    #[test]
    fn projection_matrix_agrees_with_project() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let k = CameraIntrinsics::new(500.0, 510.0, 320.0, 240.0, 640, 480).unwrap();
        for _ in 0..200 {
            let t = random_rigid(&mut rng);
            let p = ProjectionMatrix::from_camera(&k, &t);
            let x = Vector3::new(
                rng.gen_range(-20.0..20.0),
                rng.gen_range(-20.0..20.0),
                rng.gen_range(-20.0..20.0),
            );
            match (project(&k, &t, &x), p.project(&x)) {
                (Ok(a), Ok(b)) => assert!((a - b).norm() < 1e-9),
                (Err(_), Err(_)) => {}
                other => panic!("mismatched behind-camera handling: {other:?}"),
            }
        }
    }

    #[test]
    fn behind_camera_rejected() {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap();
        let t = RigidTransform::identity();
        assert!(project(&k, &t, &Vector3::new(0.0, 0.0, -5.0)).is_err());
        let p = ProjectionMatrix::from_camera(&k, &t);
        assert!(p.project(&Vector3::new(0.0, 0.0, -5.0)).is_err());
    }
}
