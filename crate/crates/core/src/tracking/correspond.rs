use nalgebra::{Vector2, Vector3};

use super::Landmark2d;
use crate::facemodel::LandmarkLabel;
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::mesh::Mesh;

/// One landmark matched to the posed mesh.
#[derive(Clone, Copy, Debug)]
pub struct CorrespondedLandmark {
    pub label: LandmarkLabel,
    /// Observed pixel.
    pub pixel: Vector2<f64>,
    /// Mesh vertex nearest to the intersection.
    pub vertex: usize,
    /// Exact ray-surface intersection in model coordinates.
    pub point: Vector3<f64>,
}

/// Result of back-projecting landmarks onto a posed mesh.
#[derive(Clone, Debug, Default)]
pub struct LandmarkCorrespondences {
    pub matched: Vec<CorrespondedLandmark>,
    /// Landmarks whose camera ray does not intersect the mesh.
    pub missed: Vec<LandmarkLabel>,
}

impl LandmarkCorrespondences {
    pub fn vertex_assignment(&self) -> Vec<usize> {
        self.matched.iter().map(|m| m.vertex).collect()
    }
}

/// For each visible landmark, casts the camera ray through its pixel and
/// intersects the mesh (posed into the camera frame by `pose`), keeping the
/// first surface intersection and the mesh vertex nearest to it. Rays that
/// miss the mesh are reported, not fatal.
pub fn correspond_landmarks(
    mesh: &Mesh,
    k: &CameraIntrinsics,
    pose: &RigidTransform,
    landmarks: &[Landmark2d],
) -> LandmarkCorrespondences {
    let into_model = pose.inverse();
    let origin = into_model.apply(&Vector3::zeros());
    let mut out = LandmarkCorrespondences::default();
    for lm in landmarks.iter().filter(|l| l.visible) {
        let direction = into_model.apply_direction(&k.ray(&lm.position));
        match mesh.ray_intersect(&origin, &direction) {
            Some(hit) => out.matched.push(CorrespondedLandmark {
                label: lm.label,
                pixel: lm.position,
                vertex: mesh.nearest_vertex(&hit.point),
                point: hit.point,
            }),
            None => out.missed.push(lm.label),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facemodel::LandmarkGroup;
    use crate::geometry::project;
    use crate::mesh::uv_sphere;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(400.0, 400.0, 160.0, 120.0, 320, 240).unwrap()
    }

    fn sphere_pose() -> RigidTransform {
        RigidTransform::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 400.0)).unwrap()
    }

    fn label(i: u8) -> LandmarkLabel {
        LandmarkLabel::new(LandmarkGroup::Mouth, i).unwrap()
    }

    #[test]
    fn projected_vertex_round_trips_to_itself() {
        let mesh = uv_sphere(20, 24, 50.0);
        let pose = sphere_pose();
        let k = camera();
        let mut landmarks = Vec::new();
        let mut expected = Vec::new();
        for (vid, v) in mesh.vertices().iter().enumerate() {
            // Front hemisphere only: rear vertices are occluded.
            if v.z < -20.0 {
                if expected.len() == 12 {
                    break;
                }
                let px = project(&k, &pose, v).unwrap();
                landmarks.push(Landmark2d::new(label(expected.len() as u8), px, true));
                expected.push(vid);
            }
        }
        let corr = correspond_landmarks(&mesh, &k, &pose, &landmarks);
        assert!(corr.missed.is_empty());
        assert_eq!(corr.vertex_assignment(), expected);
        for (m, &vid) in corr.matched.iter().zip(&expected) {
            assert!(
                (m.point - mesh.vertices()[vid]).norm() < 1e-9,
                "hit point should be the vertex itself"
            );
        }
    }

    #[test]
    fn missing_ray_is_dropped_and_reported() {
        let mesh = uv_sphere(8, 8, 10.0);
        let corr = correspond_landmarks(
            &mesh,
            &camera(),
            &sphere_pose(),
            &[
                Landmark2d::new(label(0), Vector2::new(2.0, 2.0), true),
                Landmark2d::new(label(1), Vector2::new(160.0, 120.0), true),
            ],
        );
        assert_eq!(corr.missed, vec![label(0)]);
        assert_eq!(corr.matched.len(), 1);
    }

    #[test]
    fn invisible_landmarks_are_ignored() {
        let mesh = uv_sphere(8, 8, 10.0);
        let corr = correspond_landmarks(
            &mesh,
            &camera(),
            &sphere_pose(),
            &[Landmark2d::new(label(0), Vector2::new(160.0, 120.0), false)],
        );
        assert!(corr.matched.is_empty() && corr.missed.is_empty());
    }

    #[test]
    fn matches_exhaustive_triangle_oracle() {
        let mesh = uv_sphere(16, 18, 30.0);
        let pose = sphere_pose();
        let k = camera();
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let into_model = pose.inverse();
        let origin = into_model.apply(&Vector3::zeros());
        for i in 0..200 {
            let px = Vector2::new(rng.gen_range(100.0..220.0), rng.gen_range(60.0..180.0));
            let lms = [Landmark2d::new(label(0), px, true)];
            let corr = correspond_landmarks(&mesh, &k, &pose, &lms);

            // Independent oracle: ray-plane intersection plus barycentric
            // containment per triangle, then nearest vertex to the closest hit.
            let dir = into_model.apply_direction(&k.ray(&px));
            let mut best: Option<(f64, Vector3<f64>)> = None;
            for f in mesh.faces() {
                let (a, b, c) = (
                    mesh.vertices()[f[0]],
                    mesh.vertices()[f[1]],
                    mesh.vertices()[f[2]],
                );
                let n = (b - a).cross(&(c - a));
                let denom = n.dot(&dir);
                if denom.abs() < 1e-14 {
                    continue;
                }
                let t = n.dot(&(a - origin)) / denom;
                if t <= 1e-9 {
                    continue;
                }
                let p = origin + t * dir;
                let area = n.norm();
                let w0 = (b - p).cross(&(c - p)).dot(&n) / (area * area);
                let w1 = (c - p).cross(&(a - p)).dot(&n) / (area * area);
                let w2 = 1.0 - w0 - w1;
                if w0 >= -1e-10 && w1 >= -1e-10 && w2 >= -1e-10
                    && best.as_ref().map_or(true, |(bt, _)| t < *bt)
                {
                    best = Some((t, p));
                }
            }
            match (corr.matched.first(), best) {
                (Some(m), Some((_, point))) => {
                    let oracle = mesh.nearest_vertex(&point);
                    assert_eq!(m.vertex, oracle, "case {i}: pixel {px:?}");
                    assert!((m.point - point).norm() < 1e-8, "case {i}: hit point mismatch");
                }
                (None, None) => assert_eq!(corr.missed.len(), 1),
                other => panic!("case {i}: hit/miss disagreement {other:?}"),
            }
        }
    }
}
