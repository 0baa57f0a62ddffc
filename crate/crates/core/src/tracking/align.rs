use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Vector2, Vector3};

use super::{correspond_landmarks, Landmark2d, LandmarkFrame, TrackerConfig, TrackingError};
use crate::geometry::{
    refine_pose, skew, CameraIntrinsics, LmOptions, RigCalibration, RigidTransform,
};
use crate::mesh::Mesh;

/// Outcome of the donning alignment.
#[derive(Clone, Debug)]
pub struct InitialAlignment {
    /// Carries head-model points into the HMD marker frame.
    pub head_to_hmd: RigidTransform,
    /// Face-camera reprojection RMS in px over the final correspondences.
    pub face_rms: f64,
    /// Eye-camera reprojection RMS in px (unweighted).
    pub eye_rms: f64,
    /// Accepted costs from every inner optimization run, concatenated.
    pub cost_history: Vec<f64>,
    /// Landmarks whose rays missed the mesh surface in the final
    /// correspondence pass (matched by nearest-vertex-to-ray instead).
    pub dropped: usize,
}

struct Term {
    /// Correspondence target in head-model coordinates.
    x: Vector3<f64>,
    pixel: Vector2<f64>,
    hmd_to_cam: RigidTransform,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    weight: f64,
    is_face: bool,
}

/// Estimates the head-to-HMD transform from neutral-expression frames by
/// minimizing face-camera plus `lambda`-weighted eye-camera reprojection
/// error over the 6 pose parameters. Landmark-to-vertex correspondences
/// are re-established by ray casting after every few accepted steps, until
/// the pose stops moving.
pub fn initial_alignment(
    mesh: &Mesh,
    frames: &[(LandmarkFrame, RigidTransform)],
    rig: &RigCalibration,
    cfg: &TrackerConfig,
) -> Result<InitialAlignment, TrackingError> {
    cfg.validate()?;
    if frames.len() < 2 {
        return Err(TrackingError::TooFewFrames { got: frames.len() });
    }

    let mut pose = RigidTransform::new(Matrix3::identity(), Vector3::new(0.0, 0.0, cfg.dz))
        .expect("identity rotation is valid");
    // Few inner steps per run, so the correspondences refresh before the
    // pose can settle deep into a stale assignment.
    let options = LmOptions { max_iterations: 3, ..Default::default() };
    let sqrt_lambda = cfg.lambda.sqrt();

    let mut history: Vec<f64> = Vec::new();
    let mut accepted_steps = 0usize;
    let mut previous_best: Option<f64> = None;
    for _ in 0..cfg.max_iterations {
        let (terms, _) = gather_terms(mesh, frames, rig, &pose, sqrt_lambda);
        if terms.iter().all(|t| !t.is_face) {
            return Err(TrackingError::NoCorrespondences);
        }
        let outcome = refine_pose(&pose, &options, |candidate| evaluate(&terms, candidate))?;
        pose = outcome.pose;
        let steps = outcome.accepted_costs.len().saturating_sub(1);
        accepted_steps += steps;
        history.extend(outcome.accepted_costs.iter().copied());
        // No accepted step means the next correspondence pass would repeat
        // this one exactly.
        if steps == 0 {
            break;
        }
        if let Some(prev) = previous_best {
            if (prev - outcome.cost).abs() <= cfg.tolerance * prev.max(1e-12) {
                break;
            }
        }
        previous_best = Some(outcome.cost);
    }

    if accepted_steps == 0 && history.last().copied().unwrap_or(0.0) > 1e-12 {
        return Err(TrackingError::NoProgress { iterations: cfg.max_iterations });
    }

    let (terms, dropped) = gather_terms(mesh, frames, rig, &pose, sqrt_lambda);
    let (face_rms, eye_rms) = residual_report(&terms, &pose);
    Ok(InitialAlignment { head_to_hmd: pose, face_rms, eye_rms, cost_history: history, dropped })
}

fn gather_terms(
    mesh: &Mesh,
    frames: &[(LandmarkFrame, RigidTransform)],
    rig: &RigCalibration,
    pose: &RigidTransform,
    sqrt_lambda: f64,
) -> (Vec<Term>, usize) {
    let mut terms = Vec::new();
    let mut dropped = 0usize;
    {
        let mut add = |k: &CameraIntrinsics,
                       hmd_to_cam: &RigidTransform,
                       lms: &[Landmark2d],
                       weight: f64,
                       is_face: bool| {
            let cam_pose = hmd_to_cam.compose(pose);
            let corr = correspond_landmarks(mesh, k, &cam_pose, lms);
            let mut push = |pixel: Vector2<f64>, x: Vector3<f64>| {
                terms.push(Term {
                    x,
                    pixel,
                    hmd_to_cam: *hmd_to_cam,
                    fx: k.fx(),
                    fy: k.fy(),
                    cx: k.cx(),
                    cy: k.cy(),
                    weight,
                    is_face,
                });
            };
            for m in corr.matched {
                push(m.pixel, mesh.vertices()[m.vertex]);
            }
            // A ray that misses the surface still constrains the pose:
            // match it to the vertex nearest the ray so the optimizer can
            // pull the mesh back under the detections.
            let into_model = cam_pose.inverse();
            let origin = into_model.apply(&Vector3::zeros());
            for label in corr.missed {
                dropped += 1;
                let Some(lm) = lms.iter().find(|l| l.label == label) else { continue };
                let direction = into_model.apply_direction(&k.ray(&lm.position));
                if let Some(vertex) = mesh.nearest_vertex_to_ray(&origin, &direction) {
                    push(lm.position, mesh.vertices()[vertex]);
                }
            }
        };
        for (frame, hmd_to_face) in frames {
            add(rig.face_cam(), hmd_to_face, frame.face_landmarks(), 1.0, true);
            if sqrt_lambda > 0.0 {
                add(
                    rig.eye_cam_left(),
                    rig.eye_left_to_hmd(),
                    frame.eye_landmarks_left(),
                    sqrt_lambda,
                    false,
                );
                add(
                    rig.eye_cam_right(),
                    rig.eye_right_to_hmd(),
                    frame.eye_landmarks_right(),
                    sqrt_lambda,
                    false,
                );
            }
        }
    }
    (terms, dropped)
}

/// Weighted residuals and Jacobian with respect to the right-increment
/// `(omega, u)` of the head-to-HMD pose.
fn evaluate(terms: &[Term], pose: &RigidTransform) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let mut residuals = DVector::zeros(2 * terms.len());
    let mut jacobian = DMatrix::zeros(2 * terms.len(), 6);
    for (row, term) in terms.iter().enumerate() {
        let z = term.hmd_to_cam.apply(&pose.apply(&term.x));
        if z.z <= 1e-9 {
            return None;
        }
        let proj = Vector2::new(term.fx * z.x / z.z + term.cx, term.fy * z.y / z.z + term.cy);
        let zz = z.z * z.z;
        let dproj = Matrix2x3::new(
            term.fx / z.z,
            0.0,
            -term.fx * z.x / zz,
            0.0,
            term.fy / z.z,
            -term.fy * z.y / zz,
        );
        let chain = dproj * term.hmd_to_cam.rotation();
        let domega = -(chain * pose.rotation() * skew(&term.x));
        let r = (proj - term.pixel) * term.weight;
        residuals[2 * row] = r.x;
        residuals[2 * row + 1] = r.y;
        jacobian.view_mut((2 * row, 0), (2, 3)).copy_from(&(domega * term.weight));
        jacobian.view_mut((2 * row, 3), (2, 3)).copy_from(&(chain * term.weight));
    }
    Some((residuals, jacobian))
}

fn residual_report(terms: &[Term], pose: &RigidTransform) -> (f64, f64) {
    let mut face = (0.0, 0usize);
    let mut eye = (0.0, 0usize);
    for term in terms {
        let z = term.hmd_to_cam.apply(&pose.apply(&term.x));
        if z.z <= 0.0 {
            continue;
        }
        let proj = Vector2::new(term.fx * z.x / z.z + term.cx, term.fy * z.y / z.z + term.cy);
        let e2 = (proj - term.pixel).norm_squared();
        let bucket = if term.is_face { &mut face } else { &mut eye };
        bucket.0 += e2;
        bucket.1 += 1;
    }
    let rms = |(sum, n): (f64, usize)| if n == 0 { 0.0 } else { (sum / n as f64).sqrt() };
    (rms(face), rms(eye))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracking::testrig::{render_frames, test_rig, truth_pose, TestHead};

    #[test]
    fn recovers_known_alignment_from_exact_frames() {
        let head = TestHead::desk();
        let rig = test_rig();
        let truth = truth_pose();
        let frames = render_frames(&head, &rig, &truth, 3, 0.0, 61);

        let cfg = TrackerConfig { dz: 110.0, ..Default::default() };
        let fit = initial_alignment(&head.mesh, &frames, &rig, &cfg).unwrap();

        let angle = fit.head_to_hmd.rotation_angle_to(&truth);
        let t_err = (fit.head_to_hmd.translation() - truth.translation()).norm();
        assert!(angle < 1e-5, "rotation error {angle} rad");
        assert!(t_err < 1e-3, "translation error {t_err} mm");
        assert!(fit.face_rms < 1e-4, "face rms {}", fit.face_rms);
        assert!(fit.eye_rms < 1e-4, "eye rms {}", fit.eye_rms);
        assert_eq!(fit.dropped, 0, "all rays should hit at the recovered pose");
    }

    #[test]
    fn recorrespondence_improves_on_the_seed() {
        let head = TestHead::desk();
        let rig = test_rig();
        let truth = truth_pose();
        let frames = render_frames(&head, &rig, &truth, 4, 0.5, 62);
        let cfg = TrackerConfig { dz: 110.0, ..Default::default() };
        let fit = initial_alignment(&head.mesh, &frames, &rig, &cfg).unwrap();
        let first = fit.cost_history.first().copied().unwrap();
        let last = fit.cost_history.last().copied().unwrap();
        assert!(last < first, "cost went from {first} to {last}");
        assert!(fit.face_rms < 1.0, "face rms {}", fit.face_rms);
        assert!(fit.eye_rms < 1.0, "eye rms {}", fit.eye_rms);
    }

    #[test]
    fn lambda_zero_ignores_eye_landmarks() {
        let head = TestHead::desk();
        let rig = test_rig();
        let truth = truth_pose();
        let frames = render_frames(&head, &rig, &truth, 3, 0.0, 63);
        let cfg = TrackerConfig { lambda: 0.0, dz: 110.0, ..Default::default() };
        let base = initial_alignment(&head.mesh, &frames, &rig, &cfg).unwrap();

        let mut shifted = frames.clone();
        for (frame, _) in &mut shifted {
            let moved: Vec<_> = frame
                .eye_landmarks_left()
                .iter()
                .map(|l| {
                    let mut l = *l;
                    l.position += Vector2::new(4.0, -3.0);
                    l
                })
                .collect();
            *frame = LandmarkFrame::new(
                frame.frame_id(),
                frame.face_landmarks().to_vec(),
                moved,
                frame.eye_landmarks_right().to_vec(),
                frame.hmd_dot_pixels().to_vec(),
            )
            .unwrap();
        }
        let perturbed = initial_alignment(&head.mesh, &shifted, &rig, &cfg).unwrap();
        assert!(
            (base.head_to_hmd.translation() - perturbed.head_to_hmd.translation()).norm() < 1e-12
        );
        assert!((base.head_to_hmd.rotation() - perturbed.head_to_hmd.rotation()).norm() < 1e-12);
    }

    #[test]
    fn noisy_frames_stay_within_a_millimeter() {
        let head = TestHead::desk();
        let rig = test_rig();
        let truth = truth_pose();
        let frames = render_frames(&head, &rig, &truth, 10, 0.5, 64);
        let cfg = TrackerConfig { dz: 110.0, ..Default::default() };
        let fit = initial_alignment(&head.mesh, &frames, &rig, &cfg).unwrap();
        let t_err = (fit.head_to_hmd.translation() - truth.translation()).norm();
        assert!(t_err <= 1.0, "translation error {t_err} mm");
    }

    #[test]
    fn too_few_frames_rejected() {
        let head = TestHead::desk();
        let rig = test_rig();
        let frames = render_frames(&head, &rig, &truth_pose(), 1, 0.0, 65);
        let err = initial_alignment(&head.mesh, &frames, &rig, &TrackerConfig::default());
        assert!(matches!(err, Err(TrackingError::TooFewFrames { got: 1 })));
    }
}
