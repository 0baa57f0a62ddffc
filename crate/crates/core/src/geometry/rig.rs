use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use super::{CameraIntrinsics, GeometryError, RigidTransform};

/// Composition `checker_to_eye * checker_to_face^-1 * hmd_to_face`.
///
/// With the face camera as a bridge between the checkerboard calibrations
/// and the per-session HMD pose, the result carries points from HMD marker
/// coordinates into the eye camera frame.
pub fn compose_rig(
    checker_to_face: &RigidTransform,
    checker_to_eye: &RigidTransform,
    hmd_to_face: &RigidTransform,
) -> RigidTransform {
    checker_to_eye.compose(&checker_to_face.inverse()).compose(hmd_to_face)
}

/// Full intra-rig calibration: intrinsics of the three cameras, the
/// checkerboard extrinsics of each, the HMD-to-face-camera pose, and the
/// derived HMD-to-eye-camera chains.
#[derive(Clone, Debug, PartialEq)]
pub struct RigCalibration {
    face_cam: CameraIntrinsics,
    eye_cam_left: CameraIntrinsics,
    eye_cam_right: CameraIntrinsics,
    checker_to_face: RigidTransform,
    checker_to_eye_left: RigidTransform,
    checker_to_eye_right: RigidTransform,
    hmd_to_face: RigidTransform,
    eye_left_to_hmd: RigidTransform,
    eye_right_to_hmd: RigidTransform,
}

/// Tolerance for checking stored derived transforms against the recomputed
/// chain when loading a calibration file.
const DERIVED_TOLERANCE: f64 = 1e-9;

impl RigCalibration {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        face_cam: CameraIntrinsics,
        eye_cam_left: CameraIntrinsics,
        eye_cam_right: CameraIntrinsics,
        checker_to_face: RigidTransform,
        checker_to_eye_left: RigidTransform,
        checker_to_eye_right: RigidTransform,
        hmd_to_face: RigidTransform,
    ) -> Self {
        let eye_left_to_hmd = compose_rig(&checker_to_face, &checker_to_eye_left, &hmd_to_face);
        let eye_right_to_hmd = compose_rig(&checker_to_face, &checker_to_eye_right, &hmd_to_face);
        Self {
            face_cam,
            eye_cam_left,
            eye_cam_right,
            checker_to_face,
            checker_to_eye_left,
            checker_to_eye_right,
            hmd_to_face,
            eye_left_to_hmd,
            eye_right_to_hmd,
        }
    }

    pub fn face_cam(&self) -> &CameraIntrinsics {
        &self.face_cam
    }

    pub fn eye_cam_left(&self) -> &CameraIntrinsics {
        &self.eye_cam_left
    }

    pub fn eye_cam_right(&self) -> &CameraIntrinsics {
        &self.eye_cam_right
    }

    pub fn checker_to_face(&self) -> &RigidTransform {
        &self.checker_to_face
    }

    pub fn checker_to_eye_left(&self) -> &RigidTransform {
        &self.checker_to_eye_left
    }

    pub fn checker_to_eye_right(&self) -> &RigidTransform {
        &self.checker_to_eye_right
    }

    pub fn hmd_to_face(&self) -> &RigidTransform {
        &self.hmd_to_face
    }

    /// Derived chain for the left eye camera. Despite the historical key
    /// name, it carries points from HMD marker coordinates into the left
    /// eye camera frame.
    pub fn eye_left_to_hmd(&self) -> &RigidTransform {
        &self.eye_left_to_hmd
    }

    /// Derived chain for the right eye camera; see [`Self::eye_left_to_hmd`].
    pub fn eye_right_to_hmd(&self) -> &RigidTransform {
        &self.eye_right_to_hmd
    }

    /// Serializes to the calibration text format (see module docs of
    /// [`crate::geometry`] and the repository README for the schema).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# HMD rig calibration\n");
        out.push_str("version 1\n\n");
        for (name, k) in [
            ("face_cam", &self.face_cam),
            ("eye_cam_left", &self.eye_cam_left),
            ("eye_cam_right", &self.eye_cam_right),
        ] {
            let _ = writeln!(
                out,
                "intrinsics {} {} {} {} {} {} {}",
                name,
                k.fx(),
                k.fy(),
                k.cx(),
                k.cy(),
                k.image_width(),
                k.image_height()
            );
        }
        out.push('\n');
        for (name, t) in [
            ("checker_to_face", &self.checker_to_face),
            ("checker_to_eye_left", &self.checker_to_eye_left),
            ("checker_to_eye_right", &self.checker_to_eye_right),
            ("hmd_to_face", &self.hmd_to_face),
            ("eye_left_to_hmd", &self.eye_left_to_hmd),
            ("eye_right_to_hmd", &self.eye_right_to_hmd),
        ] {
            let _ = writeln!(out, "transform {name}");
            let r = t.rotation();
            let tr = t.translation();
            for row in 0..3 {
                let _ = writeln!(
                    out,
                    "{} {} {} {}",
                    r[(row, 0)],
                    r[(row, 1)],
                    r[(row, 2)],
                    tr[row]
                );
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CalibrationError> {
        let mut tokens = TokenStream::new(text);
        let mut intrinsics: Vec<(String, CameraIntrinsics)> = Vec::new();
        let mut transforms: Vec<(String, RigidTransform)> = Vec::new();
        let mut version_seen = false;

        while let Some((word, line)) = tokens.next_word() {
            match word.as_str() {
                "version" => {
                    let v: u32 = tokens.take_number(line)?;
                    if v != 1 {
                        return Err(CalibrationError::Parse {
                            line,
                            message: format!("unsupported version {v}"),
                        });
                    }
                    version_seen = true;
                }
                "intrinsics" => {
                    let name = tokens.take_word(line)?;
                    let fx: f64 = tokens.take_number(line)?;
                    let fy: f64 = tokens.take_number(line)?;
                    let cx: f64 = tokens.take_number(line)?;
                    let cy: f64 = tokens.take_number(line)?;
                    let w: u32 = tokens.take_number(line)?;
                    let h: u32 = tokens.take_number(line)?;
                    let k = CameraIntrinsics::new(fx, fy, cx, cy, w, h)
                        .map_err(|source| CalibrationError::Invalid { name: name.clone(), source })?;
                    intrinsics.push((name, k));
                }
                "transform" => {
                    let name = tokens.take_word(line)?;
                    let mut values = [0.0f64; 12];
                    for v in values.iter_mut() {
                        *v = tokens.take_number(line)?;
                    }
                    let rotation = Matrix3::new(
                        values[0], values[1], values[2], values[4], values[5], values[6],
                        values[8], values[9], values[10],
                    );
                    let translation = Vector3::new(values[3], values[7], values[11]);
                    let t = RigidTransform::new(rotation, translation)
                        .map_err(|source| CalibrationError::Invalid { name: name.clone(), source })?;
                    transforms.push((name, t));
                }
                other => {
                    return Err(CalibrationError::Parse {
                        line,
                        message: format!("unknown directive `{other}`"),
                    });
                }
            }
        }
        if !version_seen {
            return Err(CalibrationError::Missing("version"));
        }

        let take_k = |name: &'static str| {
            intrinsics
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, k)| *k)
                .ok_or(CalibrationError::Missing(name))
        };
        let take_t = |name: &'static str| {
            transforms
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| *t)
                .ok_or(CalibrationError::Missing(name))
        };

        let rig = Self::new(
            take_k("face_cam")?,
            take_k("eye_cam_left")?,
            take_k("eye_cam_right")?,
            take_t("checker_to_face")?,
            take_t("checker_to_eye_left")?,
            take_t("checker_to_eye_right")?,
            take_t("hmd_to_face")?,
        );

        for (name, derived) in [
            ("eye_left_to_hmd", &rig.eye_left_to_hmd),
            ("eye_right_to_hmd", &rig.eye_right_to_hmd),
        ] {
            if let Ok(stored) = take_t(name) {
                let diff = (stored.to_homogeneous() - derived.to_homogeneous()).abs().max();
                if diff > DERIVED_TOLERANCE {
                    return Err(CalibrationError::InconsistentDerived { name, deviation: diff });
                }
            }
        }
        Ok(rig)
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

/// Errors reading or writing rig calibration files.
#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("calibration parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("calibration entry missing: {0}")]
    Missing(&'static str),
    #[error("invalid calibration entry `{name}`: {source}")]
    Invalid { name: String, source: GeometryError },
    #[error("stored `{name}` deviates from the recomputed chain by {deviation:.3e}")]
    InconsistentDerived { name: &'static str, deviation: f64 },
}

/// Whitespace token reader that skips `#` comments and tracks line numbers.
struct TokenStream<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    current: Vec<String>,
    current_line: usize,
    cursor: usize,
}

impl<'a> TokenStream<'a> {
    fn new(text: &'a str) -> Self {
        Self { lines: text.lines().enumerate(), current: Vec::new(), current_line: 0, cursor: 0 }
    }

    fn next_token(&mut self) -> Option<(String, usize)> {
        loop {
            if self.cursor < self.current.len() {
                let tok = self.current[self.cursor].clone();
                self.cursor += 1;
                return Some((tok, self.current_line));
            }
            let (idx, line) = self.lines.next()?;
            let line = line.split('#').next().unwrap_or("");
            self.current = line.split_whitespace().map(str::to_owned).collect();
            self.current_line = idx + 1;
            self.cursor = 0;
        }
    }

    fn next_word(&mut self) -> Option<(String, usize)> {
        self.next_token()
    }

    fn take_word(&mut self, line: usize) -> Result<String, CalibrationError> {
        self.next_token()
            .map(|(t, _)| t)
            .ok_or(CalibrationError::Parse { line, message: "unexpected end of file".into() })
    }

    fn take_number<T: std::str::FromStr>(&mut self, line: usize) -> Result<T, CalibrationError> {
        let (tok, tok_line) = self
            .next_token()
            .ok_or(CalibrationError::Parse { line, message: "unexpected end of file".into() })?;
        tok.parse().map_err(|_| CalibrationError::Parse {
            line: tok_line,
            message: format!("expected a number, got `{tok}`"),
        })
    }
}
