//! Head-to-HMD alignment and per-frame expression tracking.
//!
//! After a user dons the device, [`initial_alignment`] estimates the rigid
//! transform between their head model and the HMD marker frame from a few
//! neutral-expression frames. [`track_expression`] then solves a single
//! linear system per frame for the expression weights, with the alignment
//! held fixed.

mod align;
mod correspond;
mod expression;
mod io;
#[cfg(test)]
mod testrig;

pub use align::{initial_alignment, InitialAlignment};
pub use correspond::{correspond_landmarks, CorrespondedLandmark, LandmarkCorrespondences};
pub use expression::{tikhonov_energy, track_expression};
pub use io::LandmarkSequence;

use nalgebra::Vector2;
use thiserror::Error;

use crate::facemodel::{ExpressionWeights, FaceModelError, LandmarkGroup, LandmarkLabel};
use crate::geometry::{GeometryError, RigidTransform};

#[derive(Debug, Error)]
pub enum TrackingError {
    #[error("invalid tracker config: {0}")]
    InvalidConfig(&'static str),
    #[error("landmark {0} appears twice in one frame")]
    DuplicateLandmark(LandmarkLabel),
    #[error("landmark {0} does not belong in this image's list")]
    WrongImage(LandmarkLabel),
    #[error("landmark {0} has a non-finite coordinate")]
    NonFiniteCoordinate(LandmarkLabel),
    #[error("{what} at ({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBounds { what: String, x: f64, y: f64, width: u32, height: u32 },
    #[error("frame ids must be strictly increasing (frame {got} after {prev})")]
    FrameOrder { prev: usize, got: usize },
    #[error("initial alignment needs at least 2 frames, got {got}")]
    TooFewFrames { got: usize },
    #[error("no usable landmark correspondences (every ray missed the mesh)")]
    NoCorrespondences,
    #[error("optimization failed to reduce the cost within {iterations} iterations")]
    NoProgress { iterations: usize },
    #[error("normal equations are singular (condition estimate {condition:.3e})")]
    SingularSystem { condition: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    FaceModel(#[from] FaceModelError),
}

/// One detected 2D landmark with its semantic label and visibility flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmark2d {
    pub label: LandmarkLabel,
    pub position: Vector2<f64>,
    pub visible: bool,
}

impl Landmark2d {
    pub fn new(label: LandmarkLabel, position: Vector2<f64>, visible: bool) -> Self {
        Self { label, position, visible }
    }
}

/// All landmark detections for one time step: face-camera landmarks, both
/// NIR eye-camera landmark sets, and the HMD tracking-dot pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkFrame {
    frame_id: usize,
    face: Vec<Landmark2d>,
    eye_left: Vec<Landmark2d>,
    eye_right: Vec<Landmark2d>,
    hmd_dots: Vec<Vector2<f64>>,
}

impl LandmarkFrame {
    pub fn new(
        frame_id: usize,
        face: Vec<Landmark2d>,
        eye_left: Vec<Landmark2d>,
        eye_right: Vec<Landmark2d>,
        hmd_dots: Vec<Vector2<f64>>,
    ) -> Result<Self, TrackingError> {
        let face_groups = [LandmarkGroup::Mouth, LandmarkGroup::NoseBase, LandmarkGroup::Jaw];
        let left_groups = [LandmarkGroup::BrowLeft, LandmarkGroup::EyeLeft];
        let right_groups = [LandmarkGroup::BrowRight, LandmarkGroup::EyeRight];
        for (list, groups) in [
            (&face, &face_groups[..]),
            (&eye_left, &left_groups[..]),
            (&eye_right, &right_groups[..]),
        ] {
            let mut seen = std::collections::BTreeSet::new();
            for lm in list {
                if !groups.contains(&lm.label.group) {
                    return Err(TrackingError::WrongImage(lm.label));
                }
                if !seen.insert(lm.label) {
                    return Err(TrackingError::DuplicateLandmark(lm.label));
                }
                if !(lm.position.x.is_finite() && lm.position.y.is_finite()) {
                    return Err(TrackingError::NonFiniteCoordinate(lm.label));
                }
            }
        }
        Ok(Self { frame_id, face, eye_left, eye_right, hmd_dots })
    }

    pub fn frame_id(&self) -> usize {
        self.frame_id
    }

    pub fn face_landmarks(&self) -> &[Landmark2d] {
        &self.face
    }

    pub fn eye_landmarks_left(&self) -> &[Landmark2d] {
        &self.eye_left
    }

    pub fn eye_landmarks_right(&self) -> &[Landmark2d] {
        &self.eye_right
    }

    pub fn hmd_dot_pixels(&self) -> &[Vector2<f64>] {
        &self.hmd_dots
    }

    /// Fraction of face-camera landmarks flagged visible.
    pub fn visible_face_fraction(&self) -> f64 {
        if self.face.is_empty() {
            return 0.0;
        }
        self.face.iter().filter(|l| l.visible).count() as f64 / self.face.len() as f64
    }
}

/// Tracker state after initial alignment: the donning transform, the
/// current frame's HMD pose, and the expression estimates.
#[derive(Clone, Debug)]
pub struct AlignmentState {
    /// `R_*, T_*`: carries head-model points into the HMD marker frame.
    pub head_to_hmd: RigidTransform,
    /// Pose part of the current frame's HMD-to-face-camera projection.
    pub hmd_to_face: RigidTransform,
    pub expression: ExpressionWeights,
    pub previous_expression: ExpressionWeights,
}

#[derive(Clone, Debug)]
pub struct TrackerConfig {
    /// Eye-term weight during initial alignment.
    pub lambda: f64,
    /// Eye-term weight during expression tracking.
    pub lambda1: f64,
    /// Temporal smoothness weight.
    pub lambda2: f64,
    /// Tikhonov prior weight.
    pub lambda3: f64,
    /// Rough eye-region-to-NIR-camera distance in mm, seeds `T_*`.
    pub dz: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            lambda1: 2.0,
            lambda2: 2.0,
            lambda3: 0.7,
            dz: 60.0,
            max_iterations: 50,
            tolerance: 1e-10,
        }
    }
}

impl TrackerConfig {
    pub(crate) fn validate(&self) -> Result<(), TrackingError> {
        let weights = [self.lambda, self.lambda1, self.lambda2, self.lambda3];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(TrackingError::InvalidConfig("term weights must be non-negative"));
        }
        if !(self.dz.is_finite() && self.dz > 0.0) {
            return Err(TrackingError::InvalidConfig("dz must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(TrackingError::InvalidConfig("max_iterations must be at least 1"));
        }
        Ok(())
    }
}
