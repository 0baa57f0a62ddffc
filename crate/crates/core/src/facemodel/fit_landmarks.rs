use nalgebra::{DMatrix, DVector, Matrix2x3, Vector2, Vector3};

use super::{BilinearFaceModel, ExpressionWeights, FaceModelError, IdentityWeights, LandmarkLabel};
use crate::geometry::ProjectionMatrix;

/// Labeled 2D landmarks observed in one image together with that image's
/// projection matrix.
#[derive(Clone, Debug)]
pub struct LandmarkObservations {
    projection: ProjectionMatrix,
    landmarks: Vec<(LandmarkLabel, Vector2<f64>)>,
}

impl LandmarkObservations {
    pub fn new(projection: ProjectionMatrix, landmarks: Vec<(LandmarkLabel, Vector2<f64>)>) -> Self {
        Self { projection, landmarks }
    }

    pub fn projection(&self) -> &ProjectionMatrix {
        &self.projection
    }

    pub fn landmarks(&self) -> &[(LandmarkLabel, Vector2<f64>)] {
        &self.landmarks
    }
}

/// Refines identity weights against 2D landmarks over several views,
/// minimizing the reprojection error plus `λ Σ((c0 − cid)/θ)²` with the
/// per-component prior scales `θ` taken from the model.
///
/// Gauss–Newton with a backtracking line search, starting from the prior
/// `c0`; stops when the objective gradient norm drops below 1e-8, the step
/// stalls, or after 50 iterations.
pub fn fit_identity_to_landmarks(
    model: &BilinearFaceModel,
    frames: &[LandmarkObservations],
    prior: &IdentityWeights,
    lambda: f64,
) -> Result<IdentityWeights, FaceModelError> {
    if frames.is_empty() {
        return Err(FaceModelError::NoFrames);
    }
    if lambda < 0.0 {
        return Err(FaceModelError::NegativeLambda(lambda));
    }
    if prior.len() != model.identity_dim() {
        return Err(FaceModelError::DimensionMismatch {
            what: "identity prior weights",
            expected: model.identity_dim(),
            got: prior.len(),
        });
    }

    let neutral = ExpressionWeights::neutral(model.expression_dim());
    let basis = model.identity_basis(&neutral)?;

    // Resolve every landmark once: (projection, pixel, 3xI basis block).
    let mut terms = Vec::new();
    for frame in frames {
        for &(label, pixel) in &frame.landmarks {
            let vid = model.landmark_vertex(label)?;
            terms.push((frame.projection, pixel, basis.rows(3 * vid, 3).into_owned()));
        }
    }

    let theta = model.identity_prior_scale();
    let sqrt_lambda = lambda.sqrt();
    let dims = model.identity_dim();
    let n_rows = 2 * terms.len() + dims;

    let system = |cid: &DVector<f64>| -> Option<(DMatrix<f64>, DVector<f64>)> {
        let mut jac = DMatrix::zeros(n_rows, dims);
        let mut res = DVector::zeros(n_rows);
        for (idx, (proj, pixel, block)) in terms.iter().enumerate() {
            let point = block * cid;
            let point = Vector3::new(point[0], point[1], point[2]);
            let projected = proj.project(&point).ok()?;
            let h = proj.matrix() * nalgebra::Vector4::new(point.x, point.y, point.z, 1.0);
            let dpi = Matrix2x3::new(
                1.0 / h.z,
                0.0,
                -h.x / (h.z * h.z),
                0.0,
                1.0 / h.z,
                -h.y / (h.z * h.z),
            );
            let front = dpi * proj.matrix().fixed_view::<3, 3>(0, 0).into_owned();
            let dpix = front * block;
            jac.view_mut((2 * idx, 0), (2, dims)).copy_from(&dpix);
            res[2 * idx] = projected.x - pixel.x;
            res[2 * idx + 1] = projected.y - pixel.y;
        }
        for i in 0..dims {
            let w = sqrt_lambda / theta[i];
            jac[(2 * terms.len() + i, i)] = w;
            res[2 * terms.len() + i] = w * (cid[i] - prior.values()[i]);
        }
        Some((jac, res))
    };

    let mut cid = prior.values().clone();
    let (mut jac, mut res) = system(&cid).ok_or(FaceModelError::Geometry(
        crate::geometry::GeometryError::PointBehindCamera { depth: 0.0 },
    ))?;
    let mut cost = res.norm_squared();

    for _ in 0..50 {
        let gradient = 2.0 * jac.transpose() * &res;
        if gradient.norm() < 1e-8 {
            break;
        }
        let step = jac
            .clone()
            .svd(true, true)
            .solve(&(-&res), 1e-12)
            .map_err(|_| {
                crate::geometry::GeometryError::OptimizationFailed(
                    "landmark system is rank deficient",
                )
            })?;

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &cid + &step * alpha;
            if let Some((tj, tr)) = system(&trial) {
                let trial_cost = tr.norm_squared();
                if trial_cost < cost {
                    cid = trial;
                    jac = tj;
                    res = tr;
                    cost = trial_cost;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    IdentityWeights::new(cid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facemodel::{CoreTensor, LandmarkGroup};
    use crate::geometry::{CameraIntrinsics, RigidTransform};
    use crate::testutil::random_rotation;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    const LANDMARK_VERTICES: [usize; 9] = [0, 3, 9, 14, 20, 27, 33, 41, 47];

    fn test_model(rng: &mut ChaCha8Rng) -> BilinearFaceModel {
        let (nv, ni, ne) = (50usize, 3usize, 2usize);
        let data: Vec<f64> = (0..3 * nv * ni * ne)
            .map(|_| rng.gen_range(-40.0..40.0))
            .collect();
        let tensor = CoreTensor::new(3 * nv, ni, ne, data).unwrap();
        let mut landmarks = BTreeMap::new();
        for (i, &vid) in LANDMARK_VERTICES.iter().enumerate() {
            landmarks.insert(LandmarkLabel::new(LandmarkGroup::Jaw, i as u8).unwrap(), vid);
        }
        BilinearFaceModel::new(
            tensor,
            vec![[0, 1, 2]],
            landmarks,
            DVector::from_vec(vec![1.0, 0.2, -0.3]),
            DVector::from_element(ni, 2.0),
            DVector::from_element(ne, 1.0),
        )
        .unwrap()
    }

    fn looking_at_cameras(rng: &mut ChaCha8Rng, count: usize) -> Vec<ProjectionMatrix> {
        let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
        (0..count)
            .map(|_| {
                let r = random_rotation(rng);
                // Keep the subject roughly a meter ahead of each camera.
                let t = Vector3::new(
                    rng.gen_range(-20.0..20.0),
                    rng.gen_range(-20.0..20.0),
                    rng.gen_range(900.0..1100.0),
                );
                ProjectionMatrix::from_camera(&k, &RigidTransform::new(r, t).unwrap())
            })
            .collect()
    }

    fn observe(
        model: &BilinearFaceModel,
        cid: &IdentityWeights,
        projections: &[ProjectionMatrix],
    ) -> Vec<LandmarkObservations> {
        let verts = model
            .evaluate_vertices(cid, &ExpressionWeights::neutral(model.expression_dim()))
            .unwrap();
        projections
            .iter()
            .map(|p| {
                let pts = model
                    .landmark_vertex_ids()
                    .iter()
                    .map(|(&label, &vid)| (label, p.project(&verts[vid]).unwrap()))
                    .collect();
                LandmarkObservations::new(*p, pts)
            })
            .collect()
    }

    #[test]
    fn recovers_weights_without_regularization() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let model = test_model(&mut rng);
        let truth = IdentityWeights::from_vec(vec![0.9, -0.1, 0.4]).unwrap();
        let frames = observe(&model, &truth, &looking_at_cameras(&mut rng, 3));
        let prior = IdentityWeights::new(model.identity_prior_mean().clone()).unwrap();
        let fit = fit_identity_to_landmarks(&model, &frames, &prior, 0.0).unwrap();
        let rel = (fit.values() - truth.values()).norm() / truth.values().norm();
        assert!(rel < 1e-4, "identity error {rel}");
    }

    #[test]
    fn single_noiseless_frame_reprojects_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let model = test_model(&mut rng);
        let truth = IdentityWeights::from_vec(vec![1.1, 0.3, -0.2]).unwrap();
        let frames = observe(&model, &truth, &looking_at_cameras(&mut rng, 1));
        let prior = IdentityWeights::new(model.identity_prior_mean().clone()).unwrap();
        let fit = fit_identity_to_landmarks(&model, &frames, &prior, 0.0).unwrap();

        let verts = model
            .evaluate_vertices(&fit, &ExpressionWeights::neutral(2))
            .unwrap();
        for &(label, pixel) in frames[0].landmarks() {
            let vid = model.landmark_vertex(label).unwrap();
            let reproj = frames[0].projection().project(&verts[vid]).unwrap();
            assert!((reproj - pixel).norm() < 1e-6);
        }
    }

    #[test]
    fn huge_regularization_pins_result_to_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let model = test_model(&mut rng);
        let truth = IdentityWeights::from_vec(vec![0.7, 0.5, 0.1]).unwrap();
        let frames = observe(&model, &truth, &looking_at_cameras(&mut rng, 2));
        let prior = IdentityWeights::new(model.identity_prior_mean().clone()).unwrap();
        let fit = fit_identity_to_landmarks(&model, &frames, &prior, 1e12).unwrap();
        assert!((fit.values() - prior.values()).norm() < 1e-6);
    }

    #[test]
    fn solution_objective_not_worse_than_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let model = test_model(&mut rng);
        let truth = IdentityWeights::from_vec(vec![0.8, -0.4, 0.6]).unwrap();
        let projections = looking_at_cameras(&mut rng, 3);
        let mut frames = observe(&model, &truth, &projections);
        // Perturb the pixels so the problem has no zero-residual solution.
        for frame in &mut frames {
            let noisy = frame
                .landmarks()
                .iter()
                .map(|&(label, px)| {
                    (label, px + Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                })
                .collect();
            *frame = LandmarkObservations::new(*frame.projection(), noisy);
        }
        let prior = IdentityWeights::new(model.identity_prior_mean().clone()).unwrap();
        let lambda = 0.5;
        let objective = |cid: &IdentityWeights| -> f64 {
            let verts = model
                .evaluate_vertices(cid, &ExpressionWeights::neutral(2))
                .unwrap();
            let mut e = 0.0;
            for frame in &frames {
                for &(label, px) in frame.landmarks() {
                    let vid = model.landmark_vertex(label).unwrap();
                    e += (frame.projection().project(&verts[vid]).unwrap() - px).norm_squared();
                }
            }
            for i in 0..3 {
                let d = (prior.values()[i] - cid.values()[i]) / model.identity_prior_scale()[i];
                e += lambda * d * d;
            }
            e
        };
        let fit = fit_identity_to_landmarks(&model, &frames, &prior, lambda).unwrap();
        assert!(objective(&fit) <= objective(&prior) + 1e-12);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let model = test_model(&mut rng);
        let prior = IdentityWeights::new(model.identity_prior_mean().clone()).unwrap();
        assert!(matches!(
            fit_identity_to_landmarks(&model, &[], &prior, 0.0),
            Err(FaceModelError::NoFrames)
        ));
        let frames = observe(&model, &prior, &looking_at_cameras(&mut rng, 1));
        assert!(matches!(
            fit_identity_to_landmarks(&model, &frames, &prior, -1.0),
            Err(FaceModelError::NegativeLambda(_))
        ));
        let bogus = LandmarkObservations::new(
            *frames[0].projection(),
            vec![(
                LandmarkLabel::new(LandmarkGroup::Mouth, 5).unwrap(),
                Vector2::new(10.0, 10.0),
            )],
        );
        assert!(matches!(
            fit_identity_to_landmarks(&model, &[bogus], &prior, 0.0),
            Err(FaceModelError::UnknownLandmark(_))
        ));
    }
}
