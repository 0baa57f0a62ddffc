use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BilinearFaceModel, ExpressionWeights, FaceModelError, IdentityWeights, LandmarkLabel};
use crate::geometry::{umeyama, GeometryError, SimilarityTransform};

/// Sparse reconstruction of a neutral face: unordered 3D points plus a few
/// labeled anchor landmarks used to bootstrap the alignment.
#[derive(Clone, Debug)]
pub struct SparseCloud {
    points: Vec<Vector3<f64>>,
    anchors: BTreeMap<LandmarkLabel, Vector3<f64>>,
}

impl SparseCloud {
    /// Reconstruction pipelines label seven facial anchors; the alignment
    /// bootstrap requires all of them.
    pub fn new(
        points: Vec<Vector3<f64>>,
        anchors: BTreeMap<LandmarkLabel, Vector3<f64>>,
    ) -> Result<Self, FaceModelError> {
        if points.is_empty() {
            return Err(FaceModelError::EmptyCloud);
        }
        if anchors.len() < 7 {
            return Err(FaceModelError::TooFewAnchors {
                got: anchors.len(),
                needed: 7,
            });
        }
        Ok(Self { points, anchors })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn anchors(&self) -> &BTreeMap<LandmarkLabel, Vector3<f64>> {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct FitCloudOptions {
    /// Outer alternation rounds.
    pub iterations: usize,
    /// Cloud points drawn per round for the correspondence/solve steps.
    /// `0` (or anything >= the cloud size) uses every point, which is also
    /// the regime where the objective is guaranteed non-increasing.
    pub subsample: usize,
    pub seed: u64,
    /// Stop once the relative objective change falls below this.
    pub tolerance: f64,
}

impl Default for FitCloudOptions {
    fn default() -> Self {
        Self {
            iterations: 50,
            subsample: 1000,
            seed: 0,
            tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitCloudResult {
    pub identity: IdentityWeights,
    /// Similarity carrying model-frame vertices into the cloud frame.
    pub model_to_cloud: SimilarityTransform,
    /// Root mean square point-to-nearest-vertex distance over the full cloud.
    pub residual_rms: f64,
    /// Objective value before iterating, then after each round.
    pub objective_history: Vec<f64>,
}

/// Fits identity weights to a neutral-expression point cloud by alternating
/// closed-form similarity alignment, nearest-vertex correspondence, and a
/// linear solve for the weights.
///
/// The identity norm is pinned to the prior mean's norm after every solve
/// (the surplus folds into the similarity scale), which removes the
/// scale ambiguity between the weights and the alignment.
pub fn fit_identity_to_cloud(
    model: &BilinearFaceModel,
    cloud: &SparseCloud,
    options: &FitCloudOptions,
) -> Result<FitCloudResult, FaceModelError> {
    let neutral = ExpressionWeights::neutral(model.expression_dim());
    let basis = model.identity_basis(&neutral)?;
    let prior_norm = model.identity_prior_mean().norm();

    let anchor_ids: Vec<usize> = cloud
        .anchors
        .keys()
        .map(|&label| model.landmark_vertex(label))
        .collect::<Result<_, _>>()?;
    let anchor_points: Vec<Vector3<f64>> = cloud.anchors.values().copied().collect();

    let mut cid = model.identity_prior_mean().clone();
    let mut vertices = vertices_from_basis(&basis, &cid);
    let anchor_model: Vec<Vector3<f64>> = anchor_ids.iter().map(|&v| vertices[v]).collect();
    let mut transform = umeyama(&anchor_model, &anchor_points, true)?;

    let mut history = vec![full_objective(&vertices, &transform, cloud.points())];
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let use_all = options.subsample == 0 || options.subsample >= cloud.len();

    for round in 0..options.iterations {
        let sampled: Vec<usize> = if use_all {
            (0..cloud.len()).collect()
        } else {
            rand::seq::index::sample(&mut rng, cloud.len(), options.subsample).into_vec()
        };

        // Pair each selected cloud point with its nearest model vertex. The
        // anchors seed the initial transform only; folding them into the
        // iteration would optimize a different objective than the one
        // reported, losing the monotonicity guarantee.
        let into_model = transform.inverse();
        let mut pairs: Vec<(usize, Vector3<f64>)> = Vec::with_capacity(sampled.len());
        for &p in &sampled {
            let local = into_model.apply(&cloud.points[p]);
            pairs.push((nearest_vertex(&vertices, &local), cloud.points[p]));
        }

        let src: Vec<Vector3<f64>> = pairs.iter().map(|&(v, _)| vertices[v]).collect();
        let dst: Vec<Vector3<f64>> = pairs.iter().map(|&(_, p)| p).collect();
        transform = umeyama(&src, &dst, true)?;

        cid = solve_identity(&basis, &pairs, &transform)?;
        if prior_norm > 0.0 {
            let norm = cid.norm();
            if norm > 1e-12 {
                let gauge = prior_norm / norm;
                cid *= gauge;
                transform = SimilarityTransform::new(
                    transform.scale() / gauge,
                    *transform.rotation(),
                    *transform.translation(),
                )?;
            }
        }
        vertices = vertices_from_basis(&basis, &cid);

        let objective = full_objective(&vertices, &transform, cloud.points());
        let prev = *history.last().unwrap();
        history.push(objective);
        let grew = |a: f64, b: f64| b > a * (1.0 + 1e-12) + 1e-12;
        if history.len() >= 3 {
            let before = history[history.len() - 3];
            if grew(before, prev) && grew(prev, objective) {
                return Err(FaceModelError::Diverged {
                    iteration: round + 1,
                    objective,
                });
            }
        }
        if (prev - objective).abs() <= options.tolerance * prev.max(1e-30) {
            break;
        }
    }

    let residual_rms = (history.last().unwrap() / cloud.len() as f64).sqrt();
    Ok(FitCloudResult {
        identity: IdentityWeights::new(cid)?,
        model_to_cloud: transform,
        residual_rms,
        objective_history: history,
    })
}

fn vertices_from_basis(basis: &DMatrix<f64>, cid: &DVector<f64>) -> Vec<Vector3<f64>> {
    let flat = basis * cid;
    (0..flat.len() / 3)
        .map(|k| Vector3::new(flat[3 * k], flat[3 * k + 1], flat[3 * k + 2]))
        .collect()
}

fn nearest_vertex(vertices: &[Vector3<f64>], point: &Vector3<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, v) in vertices.iter().enumerate() {
        let d = (v - point).norm_squared();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn full_objective(
    vertices: &[Vector3<f64>],
    transform: &SimilarityTransform,
    points: &[Vector3<f64>],
) -> f64 {
    let posed: Vec<Vector3<f64>> = vertices.iter().map(|v| transform.apply(v)).collect();
    points
        .iter()
        .map(|p| {
            let n = nearest_vertex(&posed, p);
            (posed[n] - p).norm_squared()
        })
        .sum()
}

fn solve_identity(
    basis: &DMatrix<f64>,
    pairs: &[(usize, Vector3<f64>)],
    transform: &SimilarityTransform,
) -> Result<DVector<f64>, FaceModelError> {
    let dims = basis.ncols();
    let sr = transform.rotation() * transform.scale();
    let t = transform.translation();
    let mut a = DMatrix::zeros(3 * pairs.len(), dims);
    let mut b = DVector::zeros(3 * pairs.len());
    for (row, &(vid, point)) in pairs.iter().enumerate() {
        let block = sr * basis.rows(3 * vid, 3);
        a.rows_mut(3 * row, 3).copy_from(&block);
        b.rows_mut(3 * row, 3).copy_from(&(point - t));
    }
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-12)
        .map_err(|_| GeometryError::OptimizationFailed("identity system is rank deficient").into())
}
