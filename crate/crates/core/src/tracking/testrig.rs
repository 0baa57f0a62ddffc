//! Shared fixture for tracking tests: a desk-scale synthetic head observed
//! by a face camera and two near-field eye cameras mounted on a simulated
//! HMD.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Landmark2d, LandmarkFrame};
use crate::facemodel::{
    synthetic_model, BilinearFaceModel, ExpressionWeights, IdentityWeights, LandmarkGroup,
    SynthModelParams,
};
use crate::geometry::{project, CameraIntrinsics, RigCalibration, RigidTransform};
use crate::mesh::Mesh;

pub struct TestHead {
    pub model: BilinearFaceModel,
    pub identity: IdentityWeights,
    /// Neutral-expression mesh at `identity`.
    pub mesh: Mesh,
}

impl TestHead {
    pub fn desk() -> TestHead {
        let model = synthetic_model(&SynthModelParams::default(), 7).unwrap();
        let mut id = model.identity_prior_mean().clone();
        let offsets = [0.0, 0.12, -0.08, 0.05, -0.04, 0.09, -0.06, 0.03];
        for (i, o) in offsets.iter().enumerate().take(id.len()) {
            id[i] += o;
        }
        let identity = IdentityWeights::new(id).unwrap();
        let mesh = model
            .evaluate(&identity, &ExpressionWeights::neutral(model.expression_dim()))
            .unwrap();
        TestHead { model, identity, mesh }
    }
}

/// Ground-truth head-to-HMD transform used by the rendered fixtures. The
/// donning alignment seeds at identity rotation and (0, 0, dz) and its
/// ray-cast correspondences only pull within about half a vertex spacing,
/// so the truth sits roughly a millimeter and two milliradians from that
/// seed: inside the pull-in range, far enough that recovery to 1e-3 mm
/// still exercises the optimizer.
pub fn truth_pose() -> RigidTransform {
    RigidTransform::from_axis_angle(
        Vector3::new(0.0015, -0.001, 0.0008),
        Vector3::new(0.3, -0.4, 111.0),
    )
}

/// Rig whose derived HMD-to-eye-camera chains realize chosen head-to-camera
/// composites at [`truth_pose`] (the eye cameras are aimed at where the eye
/// regions sit when the device is worn); the checker extrinsics are
/// reverse-engineered from those chains.
pub fn test_rig() -> RigCalibration {
    let face_cam = CameraIntrinsics::new(300.0, 300.0, 160.0, 120.0, 320, 240).unwrap();
    let eye_cam = CameraIntrinsics::new(180.0, 180.0, 80.0, 60.0, 160, 120).unwrap();

    let hmd_to_face = RigidTransform::from_axis_angle(
        Vector3::new(0.01, -0.008, 0.004),
        Vector3::new(2.0, -14.0, 590.0),
    );
    let checker_to_face = RigidTransform::from_axis_angle(
        Vector3::new(0.05, 0.02, -0.01),
        Vector3::new(10.0, 60.0, 420.0),
    );
    let left_aim = RigidTransform::from_axis_angle(
        Vector3::new(0.037, -0.038, 0.018),
        Vector3::new(-27.4, 28.5, 120.0),
    );
    let right_aim = RigidTransform::from_axis_angle(
        Vector3::new(0.015, -0.002, 0.004),
        Vector3::new(28.6, 26.0, 120.5),
    );
    let worn = truth_pose().inverse();
    let left_chain = left_aim.compose(&worn).orthonormalized();
    let right_chain = right_aim.compose(&worn).orthonormalized();
    let checker_to_eye = |chain: &RigidTransform| {
        chain.compose(&hmd_to_face.inverse()).compose(&checker_to_face).orthonormalized()
    };
    RigCalibration::new(
        face_cam,
        eye_cam,
        eye_cam,
        checker_to_face,
        checker_to_eye(&left_chain),
        checker_to_eye(&right_chain),
        hmd_to_face,
    )
}

const FACE_GROUPS: [LandmarkGroup; 3] =
    [LandmarkGroup::Mouth, LandmarkGroup::NoseBase, LandmarkGroup::Jaw];
const LEFT_GROUPS: [LandmarkGroup; 2] = [LandmarkGroup::BrowLeft, LandmarkGroup::EyeLeft];
const RIGHT_GROUPS: [LandmarkGroup; 2] = [LandmarkGroup::BrowRight, LandmarkGroup::EyeRight];

/// Projects the labeled vertices of `vertices` into one camera view.
/// Landmarks outside the image, behind the camera, or (when `check_rays`)
/// failing the ray-cast round trip against `mesh` are marked invisible.
fn render_view(
    model: &BilinearFaceModel,
    vertices: &[Vector3<f64>],
    mesh: Option<&Mesh>,
    k: &CameraIntrinsics,
    pose: &RigidTransform,
    groups: &[LandmarkGroup],
    noise_px: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Landmark2d> {
    let mut out = Vec::new();
    for (&label, &vertex) in model.landmark_vertex_ids() {
        if !groups.contains(&label.group) {
            continue;
        }
        let x = vertices[vertex];
        let hidden = |rng: &mut ChaCha8Rng| {
            Landmark2d::new(label, Vector2::new(1.0 + rng.gen_range(0.0..1.0), 1.0), false)
        };
        let Ok(clean) = project(k, pose, &x) else {
            out.push(hidden(rng));
            continue;
        };
        if !k.contains(&clean) {
            out.push(hidden(rng));
            continue;
        }
        if let Some(mesh) = mesh {
            let into_model = pose.inverse();
            let origin = into_model.apply(&Vector3::zeros());
            let direction = into_model.apply_direction(&k.ray(&clean));
            let round_trip = mesh
                .ray_intersect(&origin, &direction)
                .map(|hit| mesh.nearest_vertex(&hit.point));
            if round_trip != Some(vertex) {
                out.push(hidden(rng));
                continue;
            }
        }
        let observed = if noise_px > 0.0 {
            clean
                + Vector2::new(rng.gen_range(-noise_px..noise_px), rng.gen_range(-noise_px..noise_px))
        } else {
            clean
        };
        out.push(Landmark2d::new(label, observed, true));
    }
    out
}

/// Renders a scripted neutral-expression capture: the head wobbles in front
/// of the face camera while the HMD stays rigid on the head. Returns each
/// frame's landmarks plus its HMD-to-face-camera transform.
pub fn render_frames(
    head: &TestHead,
    rig: &RigCalibration,
    truth: &RigidTransform,
    count: usize,
    noise_px: f64,
    seed: u64,
) -> Vec<(LandmarkFrame, RigidTransform)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g_inv = truth.inverse();
    let verts = head.mesh.vertices().to_vec();
    let eye_left_pose = rig.eye_left_to_hmd().compose(truth);
    let eye_right_pose = rig.eye_right_to_hmd().compose(truth);
    let mut frames = Vec::with_capacity(count);
    for i in 0..count {
        let s = i as f64;
        let head_to_face = RigidTransform::from_axis_angle(
            Vector3::new(0.06 * (0.9 * s).sin(), 0.08 * (0.7 * s + 1.0).sin(), 0.04 * (1.3 * s + 2.0).sin()),
            Vector3::new(
                8.0 * (0.5 * s).sin(),
                6.0 * (0.8 * s + 0.4).sin(),
                600.0 + 25.0 * (0.6 * s).sin(),
            ),
        );
        let hmd_to_face = head_to_face.compose(&g_inv).orthonormalized();

        let face = render_view(
            &head.model,
            &verts,
            Some(&head.mesh),
            rig.face_cam(),
            &head_to_face,
            &FACE_GROUPS,
            noise_px,
            &mut rng,
        );
        let eye_left = render_view(
            &head.model,
            &verts,
            Some(&head.mesh),
            rig.eye_cam_left(),
            &eye_left_pose,
            &LEFT_GROUPS,
            noise_px,
            &mut rng,
        );
        let eye_right = render_view(
            &head.model,
            &verts,
            Some(&head.mesh),
            rig.eye_cam_right(),
            &eye_right_pose,
            &RIGHT_GROUPS,
            noise_px,
            &mut rng,
        );
        let frame = LandmarkFrame::new(i, face, eye_left, eye_right, Vec::new()).unwrap();
        frames.push((frame, hmd_to_face));
    }
    frames
}

/// Renders one frame at an arbitrary expression, without occlusion checks:
/// expression tracking looks vertices up by label instead of ray casting,
/// so only image containment decides visibility here.
pub fn render_expression_frame(
    head: &TestHead,
    rig: &RigCalibration,
    truth: &RigidTransform,
    hmd_to_face: &RigidTransform,
    expression: &ExpressionWeights,
    frame_id: usize,
    noise_px: f64,
    seed: u64,
) -> LandmarkFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let verts = head.model.evaluate_vertices(&head.identity, expression).unwrap();
    let face = render_view(
        &head.model,
        &verts,
        None,
        rig.face_cam(),
        &hmd_to_face.compose(truth),
        &FACE_GROUPS,
        noise_px,
        &mut rng,
    );
    let eye_left = render_view(
        &head.model,
        &verts,
        None,
        rig.eye_cam_left(),
        &rig.eye_left_to_hmd().compose(truth),
        &LEFT_GROUPS,
        noise_px,
        &mut rng,
    );
    let eye_right = render_view(
        &head.model,
        &verts,
        None,
        rig.eye_cam_right(),
        &rig.eye_right_to_hmd().compose(truth),
        &RIGHT_GROUPS,
        noise_px,
        &mut rng,
    );
    LandmarkFrame::new(frame_id, face, eye_left, eye_right, Vec::new()).unwrap()
}

/// A per-frame marker pose matching the first scripted frame of
/// [`render_frames`].
pub fn nominal_hmd_to_face(truth: &RigidTransform) -> RigidTransform {
    let head_to_face = RigidTransform::from_axis_angle(
        Vector3::new(0.0, 0.08 * 1.0f64.sin(), 0.04 * 2.0f64.sin()),
        Vector3::new(0.0, 6.0 * 0.4f64.sin(), 600.0),
    );
    head_to_face.compose(&truth.inverse()).orthonormalized()
}
