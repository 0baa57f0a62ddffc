use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    BilinearFaceModel, CoreTensor, FaceModelError, LandmarkGroup, LandmarkLabel,
};
use crate::mesh::uv_sphere;

/// Parameters of the procedurally generated desk-scale face model.
///
/// The head is a deformed ellipsoid: identity dimensions add smooth
/// sinusoidal displacement fields to the base shape, expression dimensions
/// add localized bump fields (jaw, mouth corners, brows, eyelids) whose
/// strength varies per identity. Axes follow the camera convention used
/// throughout: +x toward the subject's left, +y toward the chin, +z into
/// the head. The face looks along -z, so a camera observing it has nearly
/// parallel axes and sits at negative z.
#[derive(Clone, Debug)]
pub struct SynthModelParams {
    pub rings: usize,
    pub segments: usize,
    pub identity_dims: usize,
    pub expression_dims: usize,
    /// Ellipsoid semi-axes in mm (width, height, depth).
    pub radii: [f64; 3],
    /// Peak identity displacement in mm.
    pub identity_amplitude: f64,
    /// Peak expression displacement in mm.
    pub expression_amplitude: f64,
}

impl Default for SynthModelParams {
    fn default() -> Self {
        Self {
            rings: 30,
            segments: 16,
            identity_dims: 8,
            expression_dims: 6,
            radii: [70.0, 90.0, 75.0],
            identity_amplitude: 6.0,
            expression_amplitude: 10.0,
        }
    }
}

/// The seven anchor landmarks a capture session labels in 3D: the four eye
/// corners, the nose center, and both mouth corners.
pub fn anchor_labels() -> [LandmarkLabel; 7] {
    [
        LandmarkLabel::new(LandmarkGroup::EyeLeft, 0).unwrap(),
        LandmarkLabel::new(LandmarkGroup::EyeLeft, 3).unwrap(),
        LandmarkLabel::new(LandmarkGroup::EyeRight, 0).unwrap(),
        LandmarkLabel::new(LandmarkGroup::EyeRight, 3).unwrap(),
        LandmarkLabel::new(LandmarkGroup::NoseBase, 2).unwrap(),
        LandmarkLabel::new(LandmarkGroup::Mouth, 0).unwrap(),
        LandmarkLabel::new(LandmarkGroup::Mouth, 10).unwrap(),
    ]
}

pub fn synthetic_model(
    params: &SynthModelParams,
    seed: u64,
) -> Result<BilinearFaceModel, FaceModelError> {
    if params.identity_dims == 0 || params.expression_dims == 0 {
        return Err(FaceModelError::DimensionMismatch {
            what: "synthetic model dims",
            expected: 1,
            got: 0,
        });
    }

    let sphere = uv_sphere(params.rings, params.segments, 1.0);
    let units: Vec<Vector3<f64>> = sphere.vertices().to_vec();
    let faces = sphere.faces().to_vec();
    let nv = units.len();
    let [rx, ry, rz] = params.radii;
    let base: Vec<Vector3<f64>> = units
        .iter()
        .map(|u| Vector3::new(u.x * rx, u.y * ry, u.z * rz))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut identity_shapes: Vec<Vec<Vector3<f64>>> = Vec::with_capacity(params.identity_dims);
    identity_shapes.push(base.clone());
    for _ in 1..params.identity_dims {
        let waves: Vec<(Vector3<f64>, f64)> = (0..3)
            .map(|_| {
                let k = Vector3::new(
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                );
                (k, rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        let shape = units
            .iter()
            .zip(&base)
            .map(|(u, b)| {
                let field: f64 =
                    waves.iter().map(|(k, phase)| (k.dot(u) + phase).sin()).sum::<f64>() / 3.0;
                b + params.identity_amplitude * field * u
            })
            .collect();
        identity_shapes.push(shape);
    }

    let deltas = expression_fields(params, &units, &mut rng);
    let alphas: Vec<f64> = (0..params.identity_dims)
        .map(|i| if i == 0 { 1.0 } else { rng.gen_range(0.75..1.25) })
        .collect();

    let (ni, ne) = (params.identity_dims, params.expression_dims);
    let mut tensor = CoreTensor::new(3 * nv, ni, ne, vec![0.0; 3 * nv * ni * ne])?;
    for v in 0..nv {
        for c in 0..3 {
            let k = 3 * v + c;
            for i in 0..ni {
                tensor.set(k, i, 0, identity_shapes[i][v][c]);
                for (j, delta) in deltas.iter().enumerate() {
                    tensor.set(k, i, j + 1, alphas[i] * delta[v][c]);
                }
            }
        }
    }

    let landmark_vertex_ids = assign_landmarks(&units);

    let mut prior_mean = DVector::zeros(ni);
    prior_mean[0] = 1.0;
    let identity_prior_scale = DVector::from_element(ni, 0.5);
    let mut expression_prior_scale = DVector::from_element(ne, 0.5);
    expression_prior_scale[0] = 1.0;

    BilinearFaceModel::new(
        tensor,
        faces,
        landmark_vertex_ids,
        prior_mean,
        identity_prior_scale,
        expression_prior_scale,
    )
}

fn bump(u: &Vector3<f64>, center: &Vector3<f64>, sigma: f64) -> f64 {
    (-(u - center).norm_squared() / (2.0 * sigma * sigma)).exp()
}

fn dir(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z).normalize()
}

/// One displacement field per non-neutral expression dimension: jaw open,
/// smile, brow raise, left blink, right blink, then random bumps if more
/// dimensions are requested.
fn expression_fields(
    params: &SynthModelParams,
    units: &[Vector3<f64>],
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<Vector3<f64>>> {
    let a = params.expression_amplitude;
    let mut specs: Vec<Vec<(Vector3<f64>, f64, Vector3<f64>)>> = vec![
        vec![(dir(0.0, 0.93, -0.37), 0.45, Vector3::new(0.0, 1.0, -0.15) * a)],
        vec![
            (dir(0.5, 0.45, -0.74), 0.25, Vector3::new(0.5, -0.35, -0.1) * a),
            (dir(-0.5, 0.45, -0.74), 0.25, Vector3::new(-0.5, -0.35, -0.1) * a),
        ],
        vec![
            (dir(0.33, -0.40, -0.85), 0.22, Vector3::new(0.0, -0.5, -0.08) * a),
            (dir(-0.33, -0.40, -0.85), 0.22, Vector3::new(0.0, -0.5, -0.08) * a),
        ],
        vec![(dir(0.42, -0.30, -0.86), 0.18, Vector3::new(0.0, 0.35, 0.08) * a)],
        vec![(dir(-0.42, -0.30, -0.86), 0.18, Vector3::new(0.0, 0.35, 0.08) * a)],
    ];
    while specs.len() + 1 < params.expression_dims {
        let center = dir(
            rng.gen_range(-0.7..0.7),
            rng.gen_range(-0.5..0.9),
            rng.gen_range(-1.0..-0.4),
        );
        let push = Vector3::new(
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.3..0.3),
        ) * a;
        specs.push(vec![(center, rng.gen_range(0.15..0.35), push)]);
    }
    specs.truncate(params.expression_dims - 1);

    specs
        .iter()
        .map(|bumps| {
            units
                .iter()
                .map(|u| {
                    bumps
                        .iter()
                        .map(|(center, sigma, push)| bump(u, center, *sigma) * push)
                        .sum::<Vector3<f64>>()
                })
                .collect()
        })
        .collect()
}

/// Nearest unused vertex to each semantic target direction; greedy, so every
/// label lands on a distinct vertex.
fn assign_landmarks(units: &[Vector3<f64>]) -> BTreeMap<LandmarkLabel, usize> {
    let mut targets: Vec<(LandmarkLabel, Vector3<f64>)> = Vec::new();
    let label = |group, index: u8| LandmarkLabel::new(group, index).unwrap();

    let mouth_center = dir(0.0, 0.5, -0.87);
    let tangent_x = Vector3::new(1.0, 0.0, 0.0);
    let mouth_tangent_y = mouth_center.cross(&tangent_x).normalize();
    for m in 0..LandmarkGroup::Mouth.capacity() {
        let theta = std::f64::consts::TAU * m as f64 / LandmarkGroup::Mouth.capacity() as f64;
        let d = (mouth_center + 0.33 * theta.cos() * tangent_x + 0.18 * theta.sin() * mouth_tangent_y)
            .normalize();
        targets.push((label(LandmarkGroup::Mouth, m), d));
    }
    for (m, x) in [-0.16, -0.08, 0.0, 0.08, 0.16].into_iter().enumerate() {
        targets.push((label(LandmarkGroup::NoseBase, m as u8), dir(x, 0.18, -0.92)));
    }
    for m in 0..LandmarkGroup::Jaw.capacity() {
        let phi = -1.1 + 2.2 * m as f64 / (LandmarkGroup::Jaw.capacity() - 1) as f64;
        targets.push((
            label(LandmarkGroup::Jaw, m),
            dir(0.9 * phi.sin(), 0.55 + 0.45 * phi.cos(), -0.25 - 0.25 * phi.cos()),
        ));
    }
    for m in 0..LandmarkGroup::BrowLeft.capacity() {
        let x = 0.2 + 0.09 * m as f64;
        targets.push((label(LandmarkGroup::BrowLeft, m), dir(x, -0.42, -0.82)));
        targets.push((label(LandmarkGroup::BrowRight, m), dir(-x, -0.42, -0.82)));
    }
    for (group, side) in [(LandmarkGroup::EyeLeft, 1.0), (LandmarkGroup::EyeRight, -1.0)] {
        let center = dir(side * 0.42, -0.30, -0.86);
        let ty = center.cross(&tangent_x).normalize();
        for m in 0..group.capacity() {
            let theta = std::f64::consts::TAU * m as f64 / group.capacity() as f64;
            // Index 0 points away from the nose on both sides.
            let d = (center
                + side * 0.14 * theta.cos() * tangent_x
                + 0.08 * theta.sin() * ty)
                .normalize();
            targets.push((label(group, m), d));
        }
    }

    let mut used = BTreeSet::new();
    let mut out = BTreeMap::new();
    for (lab, target) in targets {
        let mut best = usize::MAX;
        let mut best_dot = f64::NEG_INFINITY;
        for (v, u) in units.iter().enumerate() {
            if used.contains(&v) {
                continue;
            }
            let d = u.dot(&target);
            if d > best_dot {
                best_dot = d;
                best = v;
            }
        }
        used.insert(best);
        out.insert(lab, best);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facemodel::{ExpressionWeights, IdentityWeights};

    #[test]
    fn default_model_matches_documented_dimensions() {
        let model = synthetic_model(&SynthModelParams::default(), 7).unwrap();
        assert_eq!(model.vertex_count(), 466);
        assert_eq!(model.identity_dim(), 8);
        assert_eq!(model.expression_dim(), 6);
        let total: usize = LandmarkGroup::all().iter().map(|g| g.capacity() as usize).sum();
        assert_eq!(model.landmark_vertex_ids().len(), total);
    }

    #[test]
    fn landmark_vertices_are_distinct_and_front_facing() {
        let model = synthetic_model(&SynthModelParams::default(), 7).unwrap();
        let verts = model.mean_mesh().unwrap();
        let ids: BTreeSet<usize> = model.landmark_vertex_ids().values().copied().collect();
        assert_eq!(ids.len(), model.landmark_vertex_ids().len());
        for &vid in model.landmark_vertex_ids().values() {
            assert!(verts.vertices()[vid].z < 0.0, "landmark behind the head");
        }
    }

    #[test]
    fn neutral_mean_is_plain_ellipsoid() {
        let params = SynthModelParams::default();
        let model = synthetic_model(&params, 7).unwrap();
        let mesh = model.mean_mesh().unwrap();
        for v in mesh.vertices() {
            let e = (v.x / params.radii[0]).powi(2)
                + (v.y / params.radii[1]).powi(2)
                + (v.z / params.radii[2]).powi(2);
            assert!((e - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn expressions_displace_locally() {
        let model = synthetic_model(&SynthModelParams::default(), 7).unwrap();
        let cid = IdentityWeights::new(model.identity_prior_mean().clone()).unwrap();
        let neutral = model
            .evaluate_vertices(&cid, &ExpressionWeights::neutral(6))
            .unwrap();
        let mut open = DVector::zeros(6);
        open[0] = 1.0;
        open[1] = 1.0;
        let jaw = model
            .evaluate_vertices(&cid, &ExpressionWeights::new(open).unwrap())
            .unwrap();
        let moved: Vec<f64> = neutral.iter().zip(&jaw).map(|(a, b)| (a - b).norm()).collect();
        let max = moved.iter().cloned().fold(0.0, f64::max);
        assert!(max > 3.0, "jaw open should move the chin, max move {max}");
        let moved_count = moved.iter().filter(|&&d| d > 0.5).count();
        assert!(
            moved_count < neutral.len() / 2,
            "bump fields should be localized, {moved_count} vertices moved"
        );
        // Upper face stays put when the jaw opens.
        for (v, d) in neutral.iter().zip(&moved) {
            if v.y < -40.0 {
                assert!(*d < 0.5, "forehead vertex moved {d} mm");
            }
        }
    }

    #[test]
    fn identity_dimensions_are_independent_fields() {
        let model = synthetic_model(&SynthModelParams::default(), 7).unwrap();
        let neutral = ExpressionWeights::neutral(6);
        let basis = model.identity_basis(&neutral).unwrap();
        let svd = basis.svd(false, false);
        let min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        assert!(min > 1e-6 * max, "identity basis nearly rank deficient");
    }

    #[test]
    fn seed_changes_model_deterministically() {
        let params = SynthModelParams::default();
        let a = synthetic_model(&params, 7).unwrap();
        let b = synthetic_model(&params, 7).unwrap();
        let c = synthetic_model(&params, 8).unwrap();
        assert_eq!(a.tensor().data(), b.tensor().data());
        assert_ne!(a.tensor().data(), c.tensor().data());
    }

    #[test]
    fn anchors_exist_in_every_model() {
        let model = synthetic_model(&SynthModelParams::default(), 3).unwrap();
        for label in anchor_labels() {
            model.landmark_vertex(label).unwrap();
        }
    }
}
