use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector3};

use super::{CoreTensor, FaceModelError, LandmarkLabel};
use crate::mesh::Mesh;

/// Identity weight vector `C_id`.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityWeights(DVector<f64>);

impl IdentityWeights {
    pub fn new(values: DVector<f64>) -> Result<Self, FaceModelError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FaceModelError::NonFiniteWeights);
        }
        Ok(Self(values))
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self, FaceModelError> {
        Self::new(DVector::from_vec(values))
    }

    /// Unit vector along identity axis `i`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        Self(v)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Expression weight vector `C_exp`. The neutral expression is the first
/// basis vector `(1, 0, ..., 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionWeights(DVector<f64>);

impl ExpressionWeights {
    pub fn new(values: DVector<f64>) -> Result<Self, FaceModelError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FaceModelError::NonFiniteWeights);
        }
        Ok(Self(values))
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self, FaceModelError> {
        Self::new(DVector::from_vec(values))
    }

    pub fn neutral(dim: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[0] = 1.0;
        Self(v)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Bilinear face model: mesh vertices are
/// `M(k) = Σ_i Σ_j B[k,i,j] C_id[i] C_exp[j]`.
#[derive(Clone, Debug)]
pub struct BilinearFaceModel {
    tensor: CoreTensor,
    faces: Vec<[usize; 3]>,
    landmark_vertex_ids: BTreeMap<LandmarkLabel, usize>,
    identity_prior_mean: DVector<f64>,
    identity_prior_scale: DVector<f64>,
    expression_prior_scale: DVector<f64>,
}

impl BilinearFaceModel {
    pub fn new(
        tensor: CoreTensor,
        faces: Vec<[usize; 3]>,
        landmark_vertex_ids: BTreeMap<LandmarkLabel, usize>,
        identity_prior_mean: DVector<f64>,
        identity_prior_scale: DVector<f64>,
        expression_prior_scale: DVector<f64>,
    ) -> Result<Self, FaceModelError> {
        let nv = tensor.vertex_count();
        for (label, &vid) in &landmark_vertex_ids {
            if vid >= nv {
                return Err(FaceModelError::UnknownLandmark(*label));
            }
        }
        for f in &faces {
            if f.iter().any(|&v| v >= nv) {
                return Err(FaceModelError::DimensionMismatch {
                    what: "face vertex index bound",
                    expected: nv,
                    got: *f.iter().max().unwrap(),
                });
            }
        }
        if identity_prior_mean.len() != tensor.dim_identity() {
            return Err(FaceModelError::DimensionMismatch {
                what: "identity prior entries",
                expected: tensor.dim_identity(),
                got: identity_prior_mean.len(),
            });
        }
        if identity_prior_scale.len() != tensor.dim_identity() {
            return Err(FaceModelError::DimensionMismatch {
                what: "identity prior scale entries",
                expected: tensor.dim_identity(),
                got: identity_prior_scale.len(),
            });
        }
        if expression_prior_scale.len() != tensor.dim_expression() {
            return Err(FaceModelError::DimensionMismatch {
                what: "expression prior scale entries",
                expected: tensor.dim_expression(),
                got: expression_prior_scale.len(),
            });
        }
        if identity_prior_scale.iter().chain(expression_prior_scale.iter()).any(|&s| s <= 0.0) {
            return Err(FaceModelError::NonPositivePriorScale);
        }
        Ok(Self {
            tensor,
            faces,
            landmark_vertex_ids,
            identity_prior_mean,
            identity_prior_scale,
            expression_prior_scale,
        })
    }

    pub fn tensor(&self) -> &CoreTensor {
        &self.tensor
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.tensor.vertex_count()
    }

    pub fn identity_dim(&self) -> usize {
        self.tensor.dim_identity()
    }

    pub fn expression_dim(&self) -> usize {
        self.tensor.dim_expression()
    }

    pub fn landmark_vertex_ids(&self) -> &BTreeMap<LandmarkLabel, usize> {
        &self.landmark_vertex_ids
    }

    pub fn landmark_vertex(&self, label: LandmarkLabel) -> Result<usize, FaceModelError> {
        self.landmark_vertex_ids
            .get(&label)
            .copied()
            .ok_or(FaceModelError::UnknownLandmark(label))
    }

    pub fn identity_prior_mean(&self) -> &DVector<f64> {
        &self.identity_prior_mean
    }

    pub fn identity_prior_scale(&self) -> &DVector<f64> {
        &self.identity_prior_scale
    }

    pub fn expression_prior_scale(&self) -> &DVector<f64> {
        &self.expression_prior_scale
    }

    fn check_dims(
        &self,
        cid: &IdentityWeights,
        cexp: &ExpressionWeights,
    ) -> Result<(), FaceModelError> {
        if cid.len() != self.identity_dim() {
            return Err(FaceModelError::DimensionMismatch {
                what: "identity weights",
                expected: self.identity_dim(),
                got: cid.len(),
            });
        }
        if cexp.len() != self.expression_dim() {
            return Err(FaceModelError::DimensionMismatch {
                what: "expression weights",
                expected: self.expression_dim(),
                got: cexp.len(),
            });
        }
        Ok(())
    }

    /// Contracts the tensor with both weight vectors and returns the vertex
    /// positions.
    pub fn evaluate_vertices(
        &self,
        cid: &IdentityWeights,
        cexp: &ExpressionWeights,
    ) -> Result<Vec<Vector3<f64>>, FaceModelError> {
        self.check_dims(cid, cexp)?;
        let (ni, ne) = (self.identity_dim(), self.expression_dim());
        let data = self.tensor.data();
        let mut out = Vec::with_capacity(self.vertex_count());
        let mut coords = [0.0f64; 3];
        for vtx in 0..self.vertex_count() {
            for (c, coord) in coords.iter_mut().enumerate() {
                let k = 3 * vtx + c;
                let base = k * ni * ne;
                let mut acc = 0.0;
                for i in 0..ni {
                    let row = base + i * ne;
                    let mut inner = 0.0;
                    for j in 0..ne {
                        inner += data[row + j] * cexp.values()[j];
                    }
                    acc += inner * cid.values()[i];
                }
                *coord = acc;
            }
            out.push(Vector3::new(coords[0], coords[1], coords[2]));
        }
        Ok(out)
    }

    /// Full mesh at the given weights.
    pub fn evaluate(
        &self,
        cid: &IdentityWeights,
        cexp: &ExpressionWeights,
    ) -> Result<Mesh, FaceModelError> {
        let vertices = self.evaluate_vertices(cid, cexp)?;
        Ok(Mesh::new(vertices, self.faces.clone())?)
    }

    /// `V x I` matrix `A` with `A[k,i] = Σ_j B[k,i,j] cexp[j]`; vertex
    /// coordinates are `A * cid`. This is also the gradient of
    /// [`Self::evaluate_vertices`] with respect to the identity weights.
    pub fn identity_basis(&self, cexp: &ExpressionWeights) -> Result<DMatrix<f64>, FaceModelError> {
        if cexp.len() != self.expression_dim() {
            return Err(FaceModelError::DimensionMismatch {
                what: "expression weights",
                expected: self.expression_dim(),
                got: cexp.len(),
            });
        }
        let (ni, ne) = (self.identity_dim(), self.expression_dim());
        let data = self.tensor.data();
        let mut a = DMatrix::zeros(self.tensor.dim_v(), ni);
        for k in 0..self.tensor.dim_v() {
            for i in 0..ni {
                let row = (k * ni + i) * ne;
                let mut acc = 0.0;
                for j in 0..ne {
                    acc += data[row + j] * cexp.values()[j];
                }
                a[(k, i)] = acc;
            }
        }
        Ok(a)
    }

    /// `V x E` matrix `C` with `C[k,j] = Σ_i B[k,i,j] cid[i]`; vertex
    /// coordinates are `C * cexp`, the gradient with respect to the
    /// expression weights.
    pub fn expression_basis(&self, cid: &IdentityWeights) -> Result<DMatrix<f64>, FaceModelError> {
        if cid.len() != self.identity_dim() {
            return Err(FaceModelError::DimensionMismatch {
                what: "identity weights",
                expected: self.identity_dim(),
                got: cid.len(),
            });
        }
        let (ni, ne) = (self.identity_dim(), self.expression_dim());
        let data = self.tensor.data();
        let mut c = DMatrix::zeros(self.tensor.dim_v(), ne);
        for k in 0..self.tensor.dim_v() {
            for j in 0..ne {
                let mut acc = 0.0;
                for i in 0..ni {
                    acc += data[(k * ni + i) * ne + j] * cid.values()[i];
                }
                c[(k, j)] = acc;
            }
        }
        Ok(c)
    }

    /// Mesh at the identity prior mean and neutral expression.
    pub fn mean_mesh(&self) -> Result<Mesh, FaceModelError> {
        let cid = IdentityWeights::new(self.identity_prior_mean.clone())?;
        self.evaluate(&cid, &ExpressionWeights::neutral(self.expression_dim()))
    }
}
