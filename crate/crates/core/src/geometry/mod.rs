//! Camera model, rigid/similarity transforms, PnP pose estimation and the
//! HMD rig transform chain.
//!
//! Conventions used throughout the crate:
//!
//! * A transform named `a_to_b` maps points expressed in frame `a` into
//!   frame `b`: `x_b = T * x_a`.
//! * Units are millimeters for 3D points and pixels for image points.
//! * Camera frames are right-handed with `+z` pointing through the lens into
//!   the scene, `+x` right and `+y` down in the image.

mod align;
mod intrinsics;
mod lm;
mod pnp;
mod project;
mod rig;
mod transform;

pub use align::umeyama;
pub use intrinsics::CameraIntrinsics;
pub(crate) use lm::{refine_pose, LmOptions};
pub use pnp::{solve_pnp, PnpSolution, PointCorrespondences};
pub use project::{project, ProjectionMatrix};
pub use rig::{compose_rig, CalibrationError, RigCalibration};
pub use transform::{skew, RigidTransform, SimilarityTransform, ROTATION_TOLERANCE};

use thiserror::Error;

/// Errors produced by geometric constructions and solvers.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("rotation matrix is not orthonormal with determinant +1 (deviation {deviation:.3e})")]
    InvalidRotation { deviation: f64 },
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("point behind camera (depth {depth:.6})")]
    PointBehindCamera { depth: f64 },
    #[error("degenerate PnP input: {0}")]
    DegeneratePnp(&'static str),
    #[error("degenerate alignment input: {0}")]
    DegenerateAlignment(&'static str),
    #[error("pose optimization failed: {0}")]
    OptimizationFailed(&'static str),
}
