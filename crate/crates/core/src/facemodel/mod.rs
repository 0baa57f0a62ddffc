//! Bilinear (identity x expression) face model: evaluation, identity
//! fitting against a sparse depth cloud and against 2D landmarks, plus the
//! procedural desk-scale model used by the synthetic fixtures.

mod fit_cloud;
mod fit_landmarks;
mod labels;
mod model;
mod synth;
mod tensor;

pub use fit_cloud::{fit_identity_to_cloud, FitCloudOptions, FitCloudResult, SparseCloud};
pub use fit_landmarks::{fit_identity_to_landmarks, LandmarkObservations};
pub use labels::{LandmarkGroup, LandmarkLabel};
pub use model::{BilinearFaceModel, ExpressionWeights, IdentityWeights};
pub use synth::{anchor_labels, synthetic_model, SynthModelParams};
pub use tensor::{CoreTensor, TensorIoError};

use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum FaceModelError {
    #[error("dimension mismatch: expected {expected} {what}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("weights contain non-finite entries")]
    NonFiniteWeights,
    #[error("landmark {0} is not part of the model")]
    UnknownLandmark(LandmarkLabel),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("cloud carries {got} anchor landmarks, at least {needed} required")]
    TooFewAnchors { got: usize, needed: usize },
    #[error("regularization weight must be non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("no landmark frames given")]
    NoFrames,
    #[error("fit diverged at iteration {iteration}: objective rose to {objective:.6e} twice in a row")]
    Diverged { iteration: usize, objective: f64 },
    #[error("prior scales must be strictly positive")]
    NonPositivePriorScale,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
}
