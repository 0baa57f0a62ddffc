//! Iris and pupil localization and per-pixel eye-region segmentation.

use nalgebra::Vector2;

use super::EyeError;
use crate::img::ImageF;

/// Angular samples per ring in the circular edge search.
const RING_SAMPLES: usize = 64;

/// Fraction of ring samples that must land inside the image.
const MIN_RING_COVERAGE: f64 = 0.75;

/// A circle in image coordinates (pixels).
#[derive(Debug, Clone, Copy)]
pub struct Circle {
    pub center: Vector2<f64>,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Vector2<f64>, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, point: &Vector2<f64>) -> bool {
        (point - self.center).norm() <= self.radius
    }
}

/// Pixel class within the eye crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EyeClass {
    Pupil,
    Iris,
    Sclera,
    Skin,
}

/// Per-pixel labeling of an eye crop.
///
/// Pixels inside the eyelid polygon are pupil, iris or sclera according to
/// the fitted circles; everything else is skin. The eye region (everything
/// but skin) is the domain of the refinement solve.
#[derive(Debug, Clone)]
pub struct EyeSegmentation {
    width: usize,
    height: usize,
    labels: Vec<EyeClass>,
    iris: Circle,
    pupil: Circle,
}

impl EyeSegmentation {
    /// Labels every pixel of a `width` x `height` crop.
    ///
    /// `eye_landmarks` trace the eyelid boundary as a polygon in crop
    /// coordinates. The pupil circle must be contained in the iris circle.
    pub fn new(
        width: usize,
        height: usize,
        iris: Circle,
        pupil: Circle,
        eye_landmarks: &[Vector2<f64>],
    ) -> Result<Self, EyeError> {
        for circle in [&iris, &pupil] {
            if !(circle.radius.is_finite() && circle.radius > 0.0)
                || !circle.center.iter().all(|v| v.is_finite())
            {
                return Err(EyeError::InvalidCircle);
            }
        }
        if (pupil.center - iris.center).norm() + pupil.radius > iris.radius + 1e-9 {
            return Err(EyeError::PupilNotInsideIris);
        }
        if eye_landmarks.len() < 3 {
            return Err(EyeError::DegenerateLandmarks);
        }
        if eye_landmarks.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(EyeError::DegenerateLandmarks);
        }

        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let p = Vector2::new(x as f64, y as f64);
                let label = if !point_in_polygon(&p, eye_landmarks) {
                    EyeClass::Skin
                } else if pupil.contains(&p) {
                    EyeClass::Pupil
                } else if iris.contains(&p) {
                    EyeClass::Iris
                } else {
                    EyeClass::Sclera
                };
                labels.push(label);
            }
        }
        Ok(Self {
            width,
            height,
            labels,
            iris,
            pupil,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[EyeClass] {
        &self.labels
    }

    pub fn class_at(&self, x: usize, y: usize) -> EyeClass {
        self.labels[y * self.width + x]
    }

    pub fn iris(&self) -> &Circle {
        &self.iris
    }

    pub fn pupil(&self) -> &Circle {
        &self.pupil
    }

    /// Mask of the eye region (pupil, iris and sclera pixels).
    pub fn eye_mask(&self) -> Vec<bool> {
        self.labels.iter().map(|&c| c != EyeClass::Skin).collect()
    }

    /// Number of pixels in the eye region.
    pub fn eye_pixel_count(&self) -> usize {
        self.labels.iter().filter(|&&c| c != EyeClass::Skin).count()
    }
}

/// Even-odd test against a closed polygon.
fn point_in_polygon(p: &Vector2<f64>, polygon: &[Vector2<f64>]) -> bool {
    let mut inside = false;
    let mut j = polygon.len() - 1;
    for i in 0..polygon.len() {
        let (pi, pj) = (polygon[i], polygon[j]);
        if (pi.y > p.y) != (pj.y > p.y)
            && p.x < (pj.x - pi.x) * (p.y - pi.y) / (pj.y - pi.y) + pi.x
        {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Mean intensity along a circle, or None when too much of it leaves the
/// image.
fn ring_mean(image: &ImageF, center: Vector2<f64>, radius: f64) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 0..RING_SAMPLES {
        let theta = std::f64::consts::TAU * k as f64 / RING_SAMPLES as f64;
        let p = center + radius * Vector2::new(theta.cos(), theta.sin());
        if let Some(v) = image.sample_bilinear(p.x, p.y) {
            sum += v;
            count += 1;
        }
    }
    if (count as f64) < MIN_RING_COVERAGE * RING_SAMPLES as f64 {
        None
    } else {
        Some(sum / count as f64)
    }
}

/// Strongest radially smoothed intensity step around `center`, over integer
/// radii in `[r_min, r_max]`. Returns (radius, response).
fn best_radius(
    image: &ImageF,
    center: Vector2<f64>,
    r_min: f64,
    r_max: f64,
) -> Option<(f64, f64)> {
    let lo = r_min.round() as i64;
    let hi = r_max.floor() as i64;
    if hi - lo < 3 {
        return None;
    }
    let means: Vec<Option<f64>> = (lo..=hi + 1)
        .map(|r| ring_mean(image, center, r as f64))
        .collect();
    let diffs: Vec<Option<f64>> = means
        .windows(2)
        .map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        })
        .collect();

    let mut best: Option<(f64, f64)> = None;
    for i in 1..diffs.len().saturating_sub(1) {
        if let (Some(a), Some(b), Some(c)) = (diffs[i - 1], diffs[i], diffs[i + 1]) {
            let response = ((a + 2.0 * b + c) / 4.0).abs();
            if best.map_or(true, |(_, r)| response > r) {
                best = Some(((lo + i as i64) as f64, response));
            }
        }
    }
    best
}

/// Exhaustive circular edge search over an integer center grid.
fn strongest_circle(
    image: &ImageF,
    cx: (i64, i64),
    cy: (i64, i64),
    radii: (f64, f64),
    constraint: Option<&Circle>,
) -> Option<(Circle, f64)> {
    let mut best: Option<(Circle, f64)> = None;
    for y in cy.0..=cy.1 {
        for x in cx.0..=cx.1 {
            let center = Vector2::new(x as f64, y as f64);
            let r_max = match constraint {
                // Keep the candidate inside the enclosing circle.
                Some(outer) => radii.1.min(outer.radius - (center - outer.center).norm()),
                None => radii.1,
            };
            if let Some((radius, response)) = best_radius(image, center, radii.0, r_max) {
                if best.as_ref().map_or(true, |&(_, r)| response > r) {
                    best = Some((Circle::new(center, radius), response));
                }
            }
        }
    }
    best
}

/// Locates the iris and pupil circles in a NIR eye crop.
///
/// The search region derives from the bounding box of the eyelid landmarks:
/// iris centers within a quarter box of its center, iris radii between 0.3
/// and 0.95 of the half box width, and the pupil nested inside the found
/// iris. Each candidate is scored by the radially smoothed derivative of the
/// ring-mean intensity; a response floor relative to the crop's intensity
/// range rejects featureless crops. Crops whose landmark box is flatter than
/// max(4 px, 10% of its width) are treated as closed eyes.
pub fn locate_iris_pupil(
    nir: &ImageF,
    eye_landmarks: &[Vector2<f64>],
) -> Result<(Circle, Circle), EyeError> {
    if eye_landmarks.len() < 3 {
        return Err(EyeError::DegenerateLandmarks);
    }
    if eye_landmarks.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(EyeError::DegenerateLandmarks);
    }
    let min_x = eye_landmarks.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let max_x = eye_landmarks.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = eye_landmarks.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_y = eye_landmarks.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let box_w = max_x - min_x;
    let box_h = max_y - min_y;
    if box_w <= 0.0 {
        return Err(EyeError::DegenerateLandmarks);
    }
    if box_h < (0.1 * box_w).max(4.0) {
        return Err(EyeError::EyeClosed);
    }

    let (min_v, max_v) = nir.min_max();
    let floor = (0.02 * (max_v - min_v)).max(1e-6);

    let center = Vector2::new(0.5 * (min_x + max_x), 0.5 * (min_y + max_y));
    let half_w = 0.5 * box_w;
    let cx = (
        (center.x - 0.25 * box_w).round() as i64,
        (center.x + 0.25 * box_w).round() as i64,
    );
    let cy = (
        (center.y - 0.25 * box_h).round() as i64,
        (center.y + 0.25 * box_h).round() as i64,
    );
    let (iris, iris_response) =
        strongest_circle(nir, cx, cy, (0.3 * half_w, 0.95 * half_w), None)
            .ok_or(EyeError::NoCircularEdge)?;
    if iris_response <= floor {
        return Err(EyeError::NoCircularEdge);
    }

    let reach = 0.3 * iris.radius;
    let pcx = (
        (iris.center.x - reach).round() as i64,
        (iris.center.x + reach).round() as i64,
    );
    let pcy = (
        (iris.center.y - reach).round() as i64,
        (iris.center.y + reach).round() as i64,
    );
    let (pupil, pupil_response) = strongest_circle(
        nir,
        pcx,
        pcy,
        (2.0, 0.8 * iris.radius),
        Some(&iris),
    )
    .ok_or(EyeError::NoCircularEdge)?;
    if pupil_response <= floor {
        return Err(EyeError::NoCircularEdge);
    }

    Ok((iris, pupil))
}
