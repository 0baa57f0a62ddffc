//! Per-class refinement of the colorized eye crop.
//!
//! The colorized eye C is first histogram-transformed class by class (pupil,
//! iris, sclera) against the warped reference eye, then re-solved per channel
//! with three terms: seed pixels anchored to the transformed image, the same
//! affinity-weighted smoothness used during colorization, and a membrane term
//! over the eye region that preserves the source gradients while agreeing
//! with the surrounding skin.

use nalgebra::DVector;

use super::{affinity_weights, EyeClass, EyeError, EyeSegmentation, LabImage, SeedSet};
use crate::img::ImageF;
use crate::sparse::{CgOptions, LsqBuilder};

/// Default weight of the smoothness term.
pub const DEFAULT_SMOOTH_WEIGHT: f64 = 1.0;

/// Default weight of the eye-region membrane term.
pub const DEFAULT_BOUNDARY_WEIGHT: f64 = 0.5;

/// Tiny per-pixel anchor applied only when the smoothness weight is zero, so
/// pixels untouched by the other terms still have a defined solution.
const RANK_ANCHOR_WEIGHT: f64 = 1e-10;

/// Residual sums of the refinement energy.
#[derive(Debug, Clone, Copy)]
pub struct RefineReport {
    /// Unweighted seed data residual.
    pub data: f64,
    /// Unweighted smoothness residual.
    pub smooth: f64,
    /// Unweighted membrane residual over the eye region.
    pub boundary: f64,
    /// data + alpha1 * smooth + alpha2 * boundary.
    pub total: f64,
}

fn check_dims(expected: (usize, usize), got: (usize, usize)) -> Result<(), EyeError> {
    if expected != got {
        return Err(EyeError::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn class_indices(seg: &EyeSegmentation, class: EyeClass) -> Vec<usize> {
    seg.labels()
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| (c == class).then_some(i))
        .collect()
}

fn moments(plane: &ImageF, indices: &[usize]) -> (f64, f64) {
    let n = indices.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &i in indices {
        let v = plane.data()[i];
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (mean, var.sqrt())
}

/// Transforms each eye class of `c` to match the per-class channel statistics
/// of `reference`; skin pixels pass through unchanged.
///
/// Both images must share the segmentation's size: the reference is the
/// warped reference eye crop, aligned with the query, so one label map
/// applies to both. A class with no spread in `c` maps to the reference
/// class mean.
pub fn class_histogram_transform(
    c: &LabImage,
    reference: &LabImage,
    seg: &EyeSegmentation,
) -> Result<LabImage, EyeError> {
    check_dims((seg.width(), seg.height()), (c.width(), c.height()))?;
    check_dims((c.width(), c.height()), (reference.width(), reference.height()))?;

    let mut planes = [c.l.clone(), c.a.clone(), c.b.clone()];
    for class in [EyeClass::Pupil, EyeClass::Iris, EyeClass::Sclera] {
        let indices = class_indices(seg, class);
        if indices.is_empty() {
            continue;
        }
        for (plane, (src, reference)) in planes.iter_mut().zip([
            (&c.l, &reference.l),
            (&c.a, &reference.a),
            (&c.b, &reference.b),
        ]) {
            let (mean_c, sigma_c) = moments(src, &indices);
            let (mean_r, sigma_r) = moments(reference, &indices);
            if sigma_c <= 1e-12 {
                for &i in &indices {
                    plane.data_mut()[i] = mean_r;
                }
            } else {
                let gain = sigma_r / sigma_c;
                for &i in &indices {
                    plane.data_mut()[i] = (src.data()[i] - mean_c) * gain + mean_r;
                }
            }
        }
    }
    let [l, a, b] = planes;
    LabImage::from_channels(l, a, b)
}

/// Membrane row for an eye pixel: the 4-neighborhood Laplacian of the
/// unknowns matches the source Laplacian, with non-eye neighbors entering as
/// fixed Dirichlet values.
///
/// Returns the coefficients over eye-region unknowns (full-image pixel
/// indices) and the right-hand side.
fn boundary_row(
    x: usize,
    y: usize,
    width: usize,
    height: usize,
    omega: &[bool],
    dirichlet: &ImageF,
    gradients: &ImageF,
) -> (Vec<(usize, f64)>, f64) {
    let mut coeffs = Vec::with_capacity(5);
    let mut degree = 0.0;
    let mut rhs = 0.0;
    for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
            continue;
        }
        let (nx, ny) = (nx as usize, ny as usize);
        degree += 1.0;
        if omega[ny * width + nx] {
            coeffs.push((ny * width + nx, -1.0));
        } else {
            rhs += dirichlet.get(nx, ny);
        }
        rhs += gradients.get(x, y) - gradients.get(nx, ny);
    }
    coeffs.push((y * width + x, degree));
    (coeffs, rhs)
}

fn check_weights(alpha1: f64, alpha2: f64) -> Result<(), EyeError> {
    if !(alpha1.is_finite() && alpha1 >= 0.0 && alpha2.is_finite() && alpha2 >= 0.0) {
        return Err(EyeError::InvalidWeights);
    }
    Ok(())
}

fn check_seeds(seeds: &SeedSet, width: usize, height: usize) -> Result<(), EyeError> {
    for seed in seeds.seeds() {
        if seed.x >= width || seed.y >= height {
            return Err(EyeError::SeedOutsideImage {
                x: seed.x,
                y: seed.y,
            });
        }
    }
    Ok(())
}

/// Re-solves the colorized eye crop per channel.
///
/// Minimizes E_d + alpha1 E_s + alpha2 E_b where E_d anchors the seed pixels
/// to the class-transformed image, E_s is the affinity smoothness (weights
/// from the pre-refinement luminance of `c`), and E_b is the membrane term of
/// [`boundary_row`] over the eye region with `c` supplying both the gradients
/// and the Dirichlet skin values. Returns the refined image and the energy
/// breakdown at the solution.
pub fn refine_eye(
    c: &LabImage,
    reference: &LabImage,
    seg: &EyeSegmentation,
    seeds: &SeedSet,
    alpha1: f64,
    alpha2: f64,
) -> Result<(LabImage, RefineReport), EyeError> {
    let (width, height) = (c.width(), c.height());
    check_dims((seg.width(), seg.height()), (width, height))?;
    check_dims((width, height), (reference.width(), reference.height()))?;
    check_weights(alpha1, alpha2)?;
    if seeds.is_empty() {
        return Err(EyeError::NoSeeds);
    }
    check_seeds(seeds, width, height)?;
    let omega = seg.eye_mask();
    if !omega.iter().any(|&b| b) {
        return Err(EyeError::EmptyEyeRegion);
    }

    let init = class_histogram_transform(c, reference, seg)?;
    let weights = affinity_weights(&c.l);
    let n = width * height;

    let mut planes = Vec::with_capacity(3);
    for (source, start) in [(&c.l, &init.l), (&c.a, &init.a), (&c.b, &init.b)] {
        let mut builder = LsqBuilder::new(n);
        let data = builder.add_term("data", 1.0);
        let smooth = builder.add_term("smooth", alpha1);
        let membrane = builder.add_term("membrane", alpha2);

        for seed in seeds.seeds() {
            let p = seed.y * width + seed.x;
            builder.add_row(data, &[(p, 1.0)], start.data()[p]);
        }
        for (p, row) in weights.iter().enumerate() {
            let mut coeffs = Vec::with_capacity(row.len() + 1);
            coeffs.push((p, 1.0));
            for &(q, w) in row {
                coeffs.push((q, -w));
            }
            builder.add_row(smooth, &coeffs, 0.0);
        }
        for y in 0..height {
            for x in 0..width {
                if !omega[y * width + x] {
                    continue;
                }
                let (coeffs, rhs) = boundary_row(x, y, width, height, &omega, source, source);
                builder.add_row(membrane, &coeffs, rhs);
            }
        }
        if alpha1 == 0.0 {
            let anchor = builder.add_term("anchor", RANK_ANCHOR_WEIGHT);
            for p in 0..n {
                builder.add_row(anchor, &[(p, 1.0)], start.data()[p]);
            }
        }

        let x0 = DVector::from_column_slice(start.data());
        let solution = builder.build().solve(&CgOptions::default(), Some(&x0))?;
        planes.push(ImageF::from_vec(width, height, solution.x.as_slice().to_vec()));
    }

    let b = planes.pop().expect("three channels");
    let a = planes.pop().expect("three channels");
    let l = planes.pop().expect("three channels");
    let refined = LabImage::from_channels(l, a, b)?;
    let report = refine_energy(&refined, c, &init, seg, seeds, alpha1, alpha2)?;
    Ok((refined, report))
}

/// Evaluates the refinement energy of a candidate image.
///
/// `c` is the pre-refinement crop (affinity weights, membrane gradients and
/// Dirichlet values all derive from it) and `init` the class-transformed
/// image that anchors the seed pixels.
pub fn refine_energy(
    candidate: &LabImage,
    c: &LabImage,
    init: &LabImage,
    seg: &EyeSegmentation,
    seeds: &SeedSet,
    alpha1: f64,
    alpha2: f64,
) -> Result<RefineReport, EyeError> {
    let (width, height) = (c.width(), c.height());
    check_dims((seg.width(), seg.height()), (width, height))?;
    check_dims((width, height), (candidate.width(), candidate.height()))?;
    check_dims((width, height), (init.width(), init.height()))?;
    check_weights(alpha1, alpha2)?;
    check_seeds(seeds, width, height)?;

    let omega = seg.eye_mask();
    let weights = affinity_weights(&c.l);
    let mut report = RefineReport {
        data: 0.0,
        smooth: 0.0,
        boundary: 0.0,
        total: 0.0,
    };
    for (value, (source, start)) in [
        (&candidate.l, (&c.l, &init.l)),
        (&candidate.a, (&c.a, &init.a)),
        (&candidate.b, (&c.b, &init.b)),
    ] {
        for seed in seeds.seeds() {
            let p = seed.y * width + seed.x;
            let r = value.data()[p] - start.data()[p];
            report.data += r * r;
        }
        for (p, row) in weights.iter().enumerate() {
            let mut r = value.data()[p];
            for &(q, w) in row {
                r -= w * value.data()[q];
            }
            report.smooth += r * r;
        }
        for y in 0..height {
            for x in 0..width {
                if !omega[y * width + x] {
                    continue;
                }
                let (coeffs, rhs) = boundary_row(x, y, width, height, &omega, source, source);
                let mut r = -rhs;
                for (q, coeff) in coeffs {
                    r += coeff * value.data()[q];
                }
                report.boundary += r * r;
            }
        }
    }
    report.total = report.data + alpha1 * report.smooth + alpha2 * report.boundary;
    Ok(report)
}
