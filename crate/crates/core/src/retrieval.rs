//! Reference-frame selection from the pre-captured dataset.
//!
//! Each candidate frame is scored against the query head pose and, to keep
//! consecutive selections coherent, against the landmarks and timestamp of
//! the *previously selected* reference (not of the query itself; the
//! asymmetry is deliberate). The dataset index is persisted as a single
//! structured text manifest next to the frame images.

use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Vector3};
use thiserror::Error;

use crate::geometry::RigidTransform;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("dataset index is empty")]
    EmptyIndex,
    #[error("entry {index} has {got} landmark values, expected {expected}")]
    LandmarkLength { index: usize, expected: usize, got: usize },
    #[error("timestamps must increase strictly: entry {index} has {got} after {prev}")]
    TimestampOrder { index: usize, prev: f64, got: f64 },
    #[error("entry {index} contains a non-finite value")]
    NonFinite { index: usize },
    #[error("previous-selection landmark vector has {got} values, expected {expected}")]
    PreviousLength { expected: usize, got: usize },
    #[error("retrieval weights must be finite and non-negative (w1 = {w1}, w2 = {w2})")]
    InvalidWeights { w1: f64, w2: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Head orientation as intrinsic X-Y-Z Euler angles, radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseAngles {
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
}

impl PoseAngles {
    pub fn new(pitch: f64, yaw: f64, roll: f64) -> Self {
        Self { pitch, yaw, roll }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.pitch, self.yaw, self.roll)
    }

    /// Recomposes the rotation matrix `Rx(pitch) * Ry(yaw) * Rz(roll)`.
    pub fn rotation(&self) -> Matrix3<f64> {
        let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), self.pitch);
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), self.yaw);
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), self.roll);
        (rx * ry * rz).into_inner()
    }
}

/// Decomposes the rotation of `pose` into intrinsic X-Y-Z Euler angles.
/// Returns the angles and whether the decomposition sat at the gimbal-lock
/// singularity (|yaw| = pi/2), where pitch and roll act along the same axis
/// and roll is set to zero by convention. Away from the singularity the
/// angles recompose to the input rotation within 1e-9.
pub fn pose_angles(pose: &RigidTransform) -> (PoseAngles, bool) {
    let r = pose.rotation();
    // With R = Rx(a) Ry(b) Rz(c): R[(0,2)] = sin b, R[(1,2)] = -sin a cos b,
    // R[(2,2)] = cos a cos b, R[(0,1)] = -cos b sin c, R[(0,0)] = cos b cos c.
    let sy = r[(0, 2)].clamp(-1.0, 1.0);
    if 1.0 - sy.abs() < 1e-12 {
        // At the lock only pitch +/- roll is observable; R collapses to
        // Rx(p) Ry(+/-pi/2) with R[(1,0)] = sin p, R[(1,1)] = cos p.
        let pitch = r[(1, 0)].atan2(r[(1, 1)]);
        let yaw = std::f64::consts::FRAC_PI_2.copysign(sy);
        return (PoseAngles::new(pitch, yaw, 0.0), true);
    }
    let pitch = (-r[(1, 2)]).atan2(r[(2, 2)]);
    let yaw = sy.asin();
    let roll = (-r[(0, 1)]).atan2(r[(0, 0)]);
    (PoseAngles::new(pitch, yaw, roll), false)
}

/// One pre-captured reference frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEntry {
    pub frame_id: usize,
    pub angles: PoseAngles,
    /// Flattened 2D landmarks, px.
    pub landmarks: Vec<f64>,
    /// Capture time, seconds.
    pub timestamp: f64,
    /// Image location relative to the manifest.
    pub image_path: String,
}

/// Immutable index over the pre-captured dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex {
    entries: Vec<DatasetEntry>,
    landmark_len: usize,
}

impl DatasetIndex {
    /// Validates uniform landmark lengths, strictly increasing timestamps
    /// and finite values.
    pub fn new(entries: Vec<DatasetEntry>) -> Result<Self, RetrievalError> {
        let landmark_len = entries.first().map_or(0, |e| e.landmarks.len());
        for (index, e) in entries.iter().enumerate() {
            if e.landmarks.len() != landmark_len {
                return Err(RetrievalError::LandmarkLength {
                    index,
                    expected: landmark_len,
                    got: e.landmarks.len(),
                });
            }
            let finite = e.angles.vector().iter().all(|v| v.is_finite())
                && e.timestamp.is_finite()
                && e.landmarks.iter().all(|v| v.is_finite());
            if !finite {
                return Err(RetrievalError::NonFinite { index });
            }
            if index > 0 {
                let prev = entries[index - 1].timestamp;
                if e.timestamp <= prev {
                    return Err(RetrievalError::TimestampOrder {
                        index,
                        prev,
                        got: e.timestamp,
                    });
                }
            }
        }
        Ok(Self { entries, landmark_len })
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn landmark_len(&self) -> usize {
        self.landmark_len
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# reference manifest\n");
        out.push_str("version 1\n");
        out.push_str(&format!("landmark_len {}\n", self.landmark_len));
        out.push_str(&format!("entries {}\n", self.entries.len()));
        for e in &self.entries {
            out.push_str(&format!("entry {}\n", e.frame_id));
            out.push_str(&format!(
                "pose {} {} {}\n",
                e.angles.pitch, e.angles.yaw, e.angles.roll
            ));
            out.push_str(&format!("time {}\n", e.timestamp));
            out.push_str("landmarks");
            for v in &e.landmarks {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
            out.push_str(&format!("image {}\n", e.image_path));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, RetrievalError> {
        let mut cur = Cursor::new(text);
        let (line, header) = cur.next()?;
        if header != "# reference manifest" {
            return Err(parse_err(line, "expected `# reference manifest` header"));
        }
        let (line, version) = cur.next()?;
        if version != "version 1" {
            return Err(parse_err(line, format!("unsupported version line `{version}`")));
        }
        let landmark_len: usize = parse_num(cur.tagged("landmark_len")?)?;
        let count: usize = parse_num(cur.tagged("entries")?)?;

        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let frame_id: usize = parse_num(cur.tagged("entry")?)?;
            let (line, pose) = cur.tagged("pose")?;
            let angles = match pose
                .split_whitespace()
                .map(|t| parse_num::<f64>((line, t)))
                .collect::<Result<Vec<_>, _>>()?[..]
            {
                [pitch, yaw, roll] => PoseAngles::new(pitch, yaw, roll),
                _ => return Err(parse_err(line, "expected `pose pitch yaw roll`")),
            };
            let timestamp: f64 = parse_num(cur.tagged("time")?)?;
            let (line, lms) = cur.tagged("landmarks")?;
            let landmarks = lms
                .split_whitespace()
                .map(|t| parse_num::<f64>((line, t)))
                .collect::<Result<Vec<_>, _>>()?;
            if landmarks.len() != landmark_len {
                return Err(parse_err(
                    line,
                    format!("expected {landmark_len} landmark values, found {}", landmarks.len()),
                ));
            }
            let (_, image_path) = cur.tagged("image")?;
            entries.push(DatasetEntry {
                frame_id,
                angles,
                landmarks,
                timestamp,
                image_path: image_path.to_owned(),
            });
        }
        if let Ok((line, extra)) = cur.next() {
            return Err(parse_err(line, format!("unexpected trailing content `{extra}`")));
        }
        Self::new(entries)
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Landmarks and timestamp of the previously selected reference.
#[derive(Clone, Debug, PartialEq)]
pub struct PreviousSelection {
    pub landmarks: Vec<f64>,
    pub timestamp: f64,
}

/// Query against a [`DatasetIndex`]. With `previous` absent (the first
/// frame of a session) only the head-pose term scores candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalQuery {
    pub head_pose: PoseAngles,
    pub previous: Option<PreviousSelection>,
    /// Landmark-coherence weight, rad^2 per px^2.
    pub w1: f64,
    /// Timestamp-coherence weight, rad^2 per s^2.
    pub w2: f64,
}

impl RetrievalQuery {
    /// Default weights put a 0.1 rad pose gap on the same footing as a
    /// 10 px landmark gap or a 1 s timestamp gap.
    pub fn new(head_pose: PoseAngles) -> Self {
        Self { head_pose, previous: None, w1: 1e-4, w2: 1e-2 }
    }
}

/// Score of one candidate: squared pose distance plus, when a previous
/// selection exists, `w1` times its squared landmark distance and `w2`
/// times its squared timestamp distance to that selection.
pub fn selection_distance(entry: &DatasetEntry, query: &RetrievalQuery) -> f64 {
    let mut d = (entry.angles.vector() - query.head_pose.vector()).norm_squared();
    if let Some(prev) = &query.previous {
        let dl: f64 = entry
            .landmarks
            .iter()
            .zip(&prev.landmarks)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let dt = entry.timestamp - prev.timestamp;
        d += query.w1 * dl + query.w2 * dt * dt;
    }
    d
}

/// Returns the frame id of the entry minimizing [`selection_distance`] by
/// exhaustive scan; ties break toward the smallest frame id.
pub fn retrieve_reference(
    index: &DatasetIndex,
    query: &RetrievalQuery,
) -> Result<usize, RetrievalError> {
    if index.entries.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    if !(query.w1 >= 0.0 && query.w1.is_finite() && query.w2 >= 0.0 && query.w2.is_finite()) {
        return Err(RetrievalError::InvalidWeights { w1: query.w1, w2: query.w2 });
    }
    if let Some(prev) = &query.previous {
        if prev.landmarks.len() != index.landmark_len {
            return Err(RetrievalError::PreviousLength {
                expected: index.landmark_len,
                got: prev.landmarks.len(),
            });
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for entry in &index.entries {
        let d = selection_distance(entry, query);
        let better = match best {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && entry.frame_id < bid),
        };
        if better {
            best = Some((d, entry.frame_id));
        }
    }
    Ok(best.expect("non-empty index").1)
}

fn parse_err(line: usize, message: impl Into<String>) -> RetrievalError {
    RetrievalError::Parse { line, message: message.into() }
}

struct Cursor<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self { lines: text.lines().enumerate(), last: 0 }
    }

    fn next(&mut self) -> Result<(usize, &'a str), RetrievalError> {
        for (i, raw) in self.lines.by_ref() {
            self.last = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            return Ok((i + 1, trimmed));
        }
        Err(parse_err(self.last + 1, "unexpected end of file"))
    }

    fn tagged(&mut self, tag: &str) -> Result<(usize, &'a str), RetrievalError> {
        let (line, body) = self.next()?;
        match body.split_once(char::is_whitespace) {
            Some((head, rest)) if head == tag => Ok((line, rest.trim())),
            _ => Err(parse_err(line, format!("expected `{tag} ...`, found `{body}`"))),
        }
    }
}

fn parse_num<T: std::str::FromStr>((line, s): (usize, &str)) -> Result<T, RetrievalError> {
    s.parse().map_err(|_| parse_err(line, format!("bad number `{s}`")))
}
