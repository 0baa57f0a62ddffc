//! Reconstruction of unoccluded face images for people wearing a head-mounted
//! display.
//!
//! The crate is organised around the stages of the offline pipeline:
//!
//! * [`geometry`]: camera intrinsics, rigid transforms, pose estimation from
//!   2D-3D correspondences and the rig calibration chain that links the face
//!   camera, the display and the display-internal eye cameras.
//! * [`facemodel`]: a bilinear (identity x expression) face model with
//!   offline fitting against a depth cloud and against tracked landmarks.
//! * [`mesh`]: triangle mesh utilities shared by fitting, warping and
//!   evaluation (OBJ I/O, ray casts, occluding contours).
//! * [`tracking`]: per-frame rigid alignment and expression estimation from
//!   face-camera landmarks and eye-camera landmarks seen through the rig.
//! * [`retrieval`]: ranking of pre-capture reference frames by pose and
//!   expression similarity with temporal coherence terms.
//! * [`warping`]: content-preserving grid warps that register a retrieved
//!   reference image onto the query frame.
//! * [`eye`]: synthesis of the occluded eye region from the infrared eye
//!   cameras (colorization, iris and pupil localisation, appearance
//!   refinement).
//! * [`compose`]: histogram matching, multi-band blending and background
//!   replacement that assemble the final output frame.
//! * [`sparse`]: the sparse least-squares solver behind the warp,
//!   colorization and refinement energies.

pub mod compose;
pub mod eye;
pub mod facemodel;
pub mod geometry;
pub mod img;
pub mod mesh;
pub mod raster;
pub mod retrieval;
pub mod sparse;
pub mod tracking;
pub mod warping;

#[cfg(test)]
pub(crate) mod testutil;
