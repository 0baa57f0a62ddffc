//! Eye-region synthesis: recovers a plausible color eye image from the
//! monochrome near-infrared gaze-camera crop.
//!
//! The stages mirror the order in which the pipeline applies them:
//!
//! 1. [`transfer_luminance`] maps the NIR intensities onto the luminance
//!    statistics of the warped reference eye region.
//! 2. [`select_seeds`] picks pixels whose NIR intensity agrees with the
//!    reference luminance clusters and records their chroma as constraints.
//! 3. [`propagate_color`] spreads the seed chroma over the crop with an
//!    affinity-weighted smoothness solve.
//! 4. [`locate_iris_pupil`] and [`EyeSegmentation`] split the crop into
//!    pupil, iris, sclera and skin.
//! 5. [`refine_eye`] re-solves the color per class after a histogram
//!    transform against the reference, with a membrane term that keeps the
//!    eye region consistent with the surrounding skin.
//!
//! All color work happens in CIE L*a*b* (see [`LabImage`]); the NIR input is
//! treated as a luminance-like channel on the same [0, 100] scale.

mod colorize;
mod lab;
mod refine;
mod segment;

pub use colorize::{
    propagate_color, select_seeds, transfer_luminance, Seed, SeedSet, SEED_ERROR_THRESHOLD,
    SEED_STRIDE, SEED_WEIGHT,
};
pub use lab::LabImage;
pub use refine::{
    class_histogram_transform, refine_energy, refine_eye, RefineReport, DEFAULT_BOUNDARY_WEIGHT,
    DEFAULT_SMOOTH_WEIGHT,
};
pub use segment::{locate_iris_pupil, Circle, EyeClass, EyeSegmentation};

use crate::img::ImageF;
use crate::sparse::SparseError;
use thiserror::Error;

/// Errors from eye synthesis stages.
#[derive(Debug, Error)]
pub enum EyeError {
    #[error("image dimensions {got:?} do not match expected {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("seed at ({x}, {y}) lies outside the image")]
    SeedOutsideImage { x: usize, y: usize },
    #[error("seed error {error} is not below threshold {threshold}")]
    SeedErrorAboveThreshold { error: f64, threshold: f64 },
    #[error("no color seeds available")]
    NoSeeds,
    #[error("eye landmarks describe a closed or degenerate eye")]
    EyeClosed,
    #[error("fewer than three usable eye landmarks")]
    DegenerateLandmarks,
    #[error("no circular intensity edge found in the eye region")]
    NoCircularEdge,
    #[error("circle center and radius must be finite with positive radius")]
    InvalidCircle,
    #[error("pupil circle is not contained in the iris circle")]
    PupilNotInsideIris,
    #[error("segmentation contains no eye pixels")]
    EmptyEyeRegion,
    #[error("term weights must be finite and non-negative")]
    InvalidWeights,
    #[error(transparent)]
    Solve(#[from] SparseError),
}

/// Normalized affinity weights over the 8-neighborhood of every pixel.
///
/// The weight between p and a neighbor q grows when both intensities sit on
/// the same side of the local mean: 1 + (L(p) - mu)(L(q) - mu) / sigma^2 with
/// mu and sigma taken over the 3x3 patch around p (sigma floored at 1e-4).
/// Negative raw weights are clamped to zero and each pixel's weights are
/// normalized to sum to one; if every raw weight clamps to zero the pixel
/// falls back to uniform weights.
pub(crate) fn affinity_weights(l: &ImageF) -> Vec<Vec<(usize, f64)>> {
    let (width, height) = (l.width(), l.height());
    let mut all = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut count = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let px = x as i64 + dx;
                    let py = y as i64 + dy;
                    if px < 0 || py < 0 || px >= width as i64 || py >= height as i64 {
                        continue;
                    }
                    let v = l.get(px as usize, py as usize);
                    sum += v;
                    sum_sq += v * v;
                    count += 1.0;
                }
            }
            let mu = sum / count;
            let var = (sum_sq / count - mu * mu).max(0.0);
            let sigma = var.sqrt().max(1e-4);
            let lp = l.get(x, y);

            let mut weights = Vec::with_capacity(8);
            let mut total = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let px = x as i64 + dx;
                    let py = y as i64 + dy;
                    if px < 0 || py < 0 || px >= width as i64 || py >= height as i64 {
                        continue;
                    }
                    let lq = l.get(px as usize, py as usize);
                    let raw = 1.0 + (lp - mu) * (lq - mu) / (sigma * sigma);
                    let w = raw.max(0.0);
                    weights.push((py as usize * width + px as usize, w));
                    total += w;
                }
            }
            if total > 0.0 {
                for (_, w) in &mut weights {
                    *w /= total;
                }
            } else {
                let uniform = 1.0 / weights.len() as f64;
                for (_, w) in &mut weights {
                    *w = uniform;
                }
            }
            all.push(weights);
        }
    }
    all
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affinity_weights_uniform_on_constant_image() {
        let img = ImageF::constant(5, 4, 42.0);
        let weights = affinity_weights(&img);
        assert_eq!(weights.len(), 20);
        // Interior pixel: eight neighbors at 1/8 each.
        let interior = &weights[1 * 5 + 2];
        assert_eq!(interior.len(), 8);
        for &(_, w) in interior {
            assert!((w - 0.125).abs() < 1e-12);
        }
        // Corner pixel: three neighbors.
        let corner = &weights[0];
        assert_eq!(corner.len(), 3);
        for &(_, w) in corner {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn affinity_weights_sum_to_one_and_stay_nonnegative() {
        // A harsh two-tone pattern produces negative raw weights across the
        // step edge; after clamping, every pixel must still normalize.
        let img = ImageF::from_fn(9, 7, |x, _| if x < 4 { 10.0 } else { 90.0 });
        for row in affinity_weights(&img) {
            let mut sum = 0.0;
            for &(_, w) in &row {
                assert!(w >= 0.0);
                sum += w;
            }
            assert!((sum - 1.0).abs() < 1e-12, "weights sum to {sum}");
        }
    }

    #[test]
    fn affinity_weights_favor_same_side_of_edge() {
        let img = ImageF::from_fn(8, 3, |x, _| if x < 4 { 10.0 } else { 90.0 });
        // Pixel just left of the edge: its left neighbor shares its side, the
        // right neighbor sits across the step.
        let weights = &affinity_weights(&img)[1 * 8 + 3];
        let left = weights.iter().find(|(q, _)| *q == 8 + 2).unwrap().1;
        let right = weights.iter().find(|(q, _)| *q == 8 + 4).unwrap().1;
        assert!(
            left > right,
            "same-side weight {left} should exceed cross-edge weight {right}"
        );
    }
}
