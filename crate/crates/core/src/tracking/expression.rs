use nalgebra::{DMatrix, DVector, Matrix2x3, Vector2};

use super::{AlignmentState, Landmark2d, LandmarkFrame, TrackerConfig, TrackingError};
use crate::facemodel::{BilinearFaceModel, ExpressionWeights, IdentityWeights};
use crate::geometry::{RigCalibration, RigidTransform};

/// Quadratic prior energy `sum_j (c_j / scale_j)^2`, the diagonal Tikhonov
/// form used to keep expression weights near the model's span.
pub fn tikhonov_energy(weights: &ExpressionWeights, scale: &DVector<f64>) -> f64 {
    assert_eq!(weights.len(), scale.len(), "prior scale dimension mismatch");
    weights.values().iter().zip(scale.iter()).map(|(c, t)| (c / t) * (c / t)).sum()
}

/// Solves one frame's expression weights from the linear system obtained by
/// linearizing every camera residual at the previous frame's expression.
/// Face rows have unit weight, eye rows `sqrt(lambda1)`; a temporal term
/// anchors the solution to the previous expression with `lambda2` and a
/// Tikhonov prior shrinks it with `lambda3`.
///
/// When more than half of the face landmarks are invisible the previous
/// expression is carried forward unchanged.
pub fn track_expression(
    model: &BilinearFaceModel,
    identity: &IdentityWeights,
    frame: &LandmarkFrame,
    state: &AlignmentState,
    rig: &RigCalibration,
    cfg: &TrackerConfig,
) -> Result<ExpressionWeights, TrackingError> {
    cfg.validate()?;
    if frame.visible_face_fraction() < 0.5 {
        return Ok(state.previous_expression.clone());
    }
    let (a, b) = assemble_expression_system(model, identity, frame, state, rig, cfg)?;
    if a.nrows() < a.ncols() {
        return Err(TrackingError::SingularSystem { condition: f64::INFINITY });
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-12) {
        return Err(TrackingError::SingularSystem { condition: smax / smin });
    }
    let solution = svd.solve(&b, 0.0).expect("svd computed with u and v_t");
    Ok(ExpressionWeights::new(solution)?)
}

/// Stacks the weighted rows `J c = J c_prev - r` for every visible
/// landmark, then the temporal and prior rows. Kept separate so tests can
/// verify the solution against the normal equations of the same system.
pub(crate) fn assemble_expression_system(
    model: &BilinearFaceModel,
    identity: &IdentityWeights,
    frame: &LandmarkFrame,
    state: &AlignmentState,
    rig: &RigCalibration,
    cfg: &TrackerConfig,
) -> Result<(DMatrix<f64>, DVector<f64>), TrackingError> {
    let prev = &state.previous_expression;
    let linearization = model.evaluate_vertices(identity, prev)?;
    let basis = model.expression_basis(identity)?;
    let e = model.expression_dim();

    let visible = |lms: &[Landmark2d]| lms.iter().filter(|l| l.visible).count();
    let data_rows = 2 * (visible(frame.face_landmarks())
        + visible(frame.eye_landmarks_left())
        + visible(frame.eye_landmarks_right()));
    let mut a = DMatrix::zeros(data_rows + 2 * e, e);
    let mut b = DVector::zeros(data_rows + 2 * e);
    let mut used = 0usize;

    let head_to_face = state.hmd_to_face.compose(&state.head_to_hmd);
    let views: [(&[Landmark2d], RigidTransform, f64); 3] = [
        (frame.face_landmarks(), head_to_face, 1.0),
        (
            frame.eye_landmarks_left(),
            rig.eye_left_to_hmd().compose(&state.head_to_hmd),
            cfg.lambda1.sqrt(),
        ),
        (
            frame.eye_landmarks_right(),
            rig.eye_right_to_hmd().compose(&state.head_to_hmd),
            cfg.lambda1.sqrt(),
        ),
    ];
    let cameras = [rig.face_cam(), rig.eye_cam_left(), rig.eye_cam_right()];

    for ((lms, head_to_cam, weight), k) in views.iter().zip(cameras) {
        if *weight == 0.0 {
            continue;
        }
        for lm in lms.iter().filter(|l| l.visible) {
            let vertex = model.landmark_vertex(lm.label)?;
            let y = head_to_cam.apply(&linearization[vertex]);
            if y.z <= 1e-9 {
                continue;
            }
            let proj = Vector2::new(k.fx() * y.x / y.z + k.cx(), k.fy() * y.y / y.z + k.cy());
            let zz = y.z * y.z;
            let dproj = Matrix2x3::new(
                k.fx() / y.z,
                0.0,
                -k.fx() * y.x / zz,
                0.0,
                k.fy() / y.z,
                -k.fy() * y.y / zz,
            );
            let block = dproj * head_to_cam.rotation() * basis.view((3 * vertex, 0), (3, e));
            let rhs = &block * prev.values() - (proj - lm.position);
            for col in 0..e {
                a[(used, col)] = weight * block[(0, col)];
                a[(used + 1, col)] = weight * block[(1, col)];
            }
            b[used] = weight * rhs.x;
            b[used + 1] = weight * rhs.y;
            used += 2;
        }
    }

    if cfg.lambda2 > 0.0 {
        let w = cfg.lambda2.sqrt();
        for j in 0..e {
            a[(used, j)] = w;
            b[used] = w * prev.values()[j];
            used += 1;
        }
    }
    if cfg.lambda3 > 0.0 {
        let w = cfg.lambda3.sqrt();
        let theta = model.expression_prior_scale();
        for j in 0..e {
            a[(used, j)] = w / theta[j];
            used += 1;
        }
    }

    Ok((a.rows(0, used).into_owned(), b.rows(0, used).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracking::testrig::{
        nominal_hmd_to_face, render_expression_frame, test_rig, truth_pose, TestHead,
    };
    use crate::tracking::Landmark2d;
    use crate::facemodel::{LandmarkGroup, LandmarkLabel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state_with(prev: &ExpressionWeights) -> AlignmentState {
        let truth = truth_pose();
        AlignmentState {
            head_to_hmd: truth,
            hmd_to_face: nominal_hmd_to_face(&truth),
            expression: prev.clone(),
            previous_expression: prev.clone(),
        }
    }

    fn target() -> ExpressionWeights {
        ExpressionWeights::from_vec(vec![1.0, 0.18, -0.12, 0.08, 0.15, -0.10]).unwrap()
    }

    #[test]
    fn neutral_is_a_fixed_point() {
        let head = TestHead::desk();
        let rig = test_rig();
        let neutral = ExpressionWeights::neutral(head.model.expression_dim());
        let state = state_with(&neutral);
        let frame = render_expression_frame(
            &head,
            &rig,
            &state.head_to_hmd,
            &state.hmd_to_face,
            &neutral,
            0,
            0.0,
            11,
        );
        let cfg = TrackerConfig { lambda3: 0.0, ..Default::default() };
        let out =
            track_expression(&head.model, &head.identity, &frame, &state, &rig, &cfg).unwrap();
        assert!((out.values() - neutral.values()).norm() < 1e-6);
    }

    #[test]
    fn overwhelming_prior_shrinks_to_zero() {
        let head = TestHead::desk();
        let rig = test_rig();
        let neutral = ExpressionWeights::neutral(head.model.expression_dim());
        let state = state_with(&neutral);
        let frame = render_expression_frame(
            &head,
            &rig,
            &state.head_to_hmd,
            &state.hmd_to_face,
            &neutral,
            0,
            0.0,
            12,
        );
        let cfg = TrackerConfig { lambda2: 0.0, lambda3: 1e12, ..Default::default() };
        let out =
            track_expression(&head.model, &head.identity, &frame, &state, &rig, &cfg).unwrap();
        assert!(out.values().norm() < 1e-4, "norm {}", out.values().norm());
    }

    #[test]
    fn recovers_expression_and_sharpens_on_relinearization() {
        let head = TestHead::desk();
        let rig = test_rig();
        let truth_exp = target();
        let neutral = ExpressionWeights::neutral(head.model.expression_dim());
        let state = state_with(&neutral);
        let frame = render_expression_frame(
            &head,
            &rig,
            &state.head_to_hmd,
            &state.hmd_to_face,
            &truth_exp,
            0,
            0.0,
            13,
        );
        let cfg = TrackerConfig { lambda2: 0.0, lambda3: 0.0, ..Default::default() };

        let first =
            track_expression(&head.model, &head.identity, &frame, &state, &rig, &cfg).unwrap();
        let first_err = (first.values() - truth_exp.values()).norm();
        assert!(first_err < 5e-3, "one linearization: {first_err}");

        let state2 = state_with(&first);
        let second =
            track_expression(&head.model, &head.identity, &frame, &state2, &rig, &cfg).unwrap();
        let second_err = (second.values() - truth_exp.values()).norm();
        assert!(second_err < 1e-5, "after relinearization: {second_err}");
        assert!(second_err < first_err);
    }

    #[test]
    fn temporal_weight_shrinks_toward_previous() {
        let head = TestHead::desk();
        let rig = test_rig();
        let neutral = ExpressionWeights::neutral(head.model.expression_dim());
        let state = state_with(&neutral);
        let frame = render_expression_frame(
            &head,
            &rig,
            &state.head_to_hmd,
            &state.hmd_to_face,
            &target(),
            0,
            0.0,
            14,
        );
        let mut last = f64::INFINITY;
        for lambda2 in [0.0, 1.0, 10.0, 100.0, 1000.0] {
            let cfg = TrackerConfig { lambda2, lambda3: 0.0, ..Default::default() };
            let out =
                track_expression(&head.model, &head.identity, &frame, &state, &rig, &cfg).unwrap();
            let d = (out.values() - neutral.values()).norm();
            assert!(d <= last + 1e-9, "lambda2 {lambda2}: {d} > {last}");
            last = d;
        }
    }

    #[test]
    fn tikhonov_energy_matches_quadratic_form() {
        let head = TestHead::desk();
        let theta = head.model.expression_prior_scale();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..50 {
            let c = ExpressionWeights::from_vec(
                (0..theta.len()).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            )
            .unwrap();
            let d = DMatrix::from_diagonal(&theta.map(|t| 1.0 / (t * t)));
            let explicit = (c.values().transpose() * &d * c.values())[(0, 0)];
            let energy = tikhonov_energy(&c, theta);
            assert!((energy - explicit).abs() <= 1e-12 * explicit.abs().max(1.0));
        }
    }

    #[test]
    fn solution_satisfies_normal_equations() {
        let head = TestHead::desk();
        let rig = test_rig();
        let neutral = ExpressionWeights::neutral(head.model.expression_dim());
        let state = state_with(&neutral);
        let frame = render_expression_frame(
            &head,
            &rig,
            &state.head_to_hmd,
            &state.hmd_to_face,
            &target(),
            0,
            0.3,
            16,
        );
        let cfg = TrackerConfig::default();
        let (a, b) =
            assemble_expression_system(&head.model, &head.identity, &frame, &state, &rig, &cfg)
                .unwrap();
        let c = track_expression(&head.model, &head.identity, &frame, &state, &rig, &cfg).unwrap();
        let residual = a.transpose() * (&a * c.values() - &b);
        let scale = (a.transpose() * b).norm().max(1.0);
        assert!(residual.norm() <= 1e-8 * scale, "normal eq residual {}", residual.norm());
    }

    #[test]
    fn underdetermined_system_is_rejected() {
        let head = TestHead::desk();
        let rig = test_rig();
        let neutral = ExpressionWeights::neutral(head.model.expression_dim());
        let state = state_with(&neutral);
        let one = Landmark2d::new(
            LandmarkLabel::new(LandmarkGroup::Mouth, 0).unwrap(),
            Vector2::new(150.0, 140.0),
            true,
        );
        let frame = LandmarkFrame::new(0, vec![one], vec![], vec![], vec![]).unwrap();
        let cfg = TrackerConfig { lambda2: 0.0, lambda3: 0.0, ..Default::default() };
        let out = track_expression(&head.model, &head.identity, &frame, &state, &rig, &cfg);
        assert!(matches!(out, Err(TrackingError::SingularSystem { .. })));
    }

    #[test]
    fn mostly_invisible_face_carries_previous_expression_forward() {
        let head = TestHead::desk();
        let rig = test_rig();
        let prev = target();
        let state = state_with(&prev);
        let rendered = render_expression_frame(
            &head,
            &rig,
            &state.head_to_hmd,
            &state.hmd_to_face,
            &ExpressionWeights::neutral(head.model.expression_dim()),
            0,
            0.0,
            17,
        );
        let blinded: Vec<_> = rendered
            .face_landmarks()
            .iter()
            .map(|l| {
                let mut l = *l;
                l.visible = false;
                l
            })
            .collect();
        let frame = LandmarkFrame::new(
            0,
            blinded,
            rendered.eye_landmarks_left().to_vec(),
            rendered.eye_landmarks_right().to_vec(),
            vec![],
        )
        .unwrap();
        let out = track_expression(
            &head.model,
            &head.identity,
            &frame,
            &state,
            &rig,
            &TrackerConfig::default(),
        )
        .unwrap();
        assert_eq!(out.values(), prev.values());
    }
}
