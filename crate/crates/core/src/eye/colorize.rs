//! NIR-to-color transfer: luminance remapping, chroma seed selection and
//! affinity-weighted chroma propagation.

use nalgebra::DVector;

use super::{affinity_weights, EyeError, LabImage};
use crate::img::ImageF;
use crate::sparse::{CgOptions, LsqBuilder};

/// Weight of the seed constraints in the propagation solve, relative to the
/// unit-weight smoothness rows.
pub const SEED_WEIGHT: f64 = 100.0;

/// Grid stride at which seed candidates are sampled.
pub const SEED_STRIDE: usize = 4;

/// Relative intensity error below which a candidate becomes a seed.
pub const SEED_ERROR_THRESHOLD: f64 = 0.06;

/// Clusters with a luminance spread above this value are split during
/// adaptive clustering.
const SPLIT_SIGMA: f64 = 10.0;

/// A chroma constraint at a fixed pixel.
#[derive(Debug, Clone, Copy)]
pub struct Seed {
    pub x: usize,
    pub y: usize,
    /// Chroma taken from the reference at the seed position.
    pub a: f64,
    pub b: f64,
    /// Relative luminance error against the matched cluster center.
    pub error: f64,
}

/// A validated set of chroma seeds.
///
/// Every seed error is strictly below the set's threshold.
#[derive(Debug, Clone)]
pub struct SeedSet {
    seeds: Vec<Seed>,
    threshold: f64,
}

impl SeedSet {
    pub fn new(seeds: Vec<Seed>, threshold: f64) -> Result<Self, EyeError> {
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(EyeError::InvalidWeights);
        }
        for seed in &seeds {
            if !(seed.error < threshold) {
                return Err(EyeError::SeedErrorAboveThreshold {
                    error: seed.error,
                    threshold,
                });
            }
        }
        Ok(Self { seeds, threshold })
    }

    pub fn seeds(&self) -> &[Seed] {
        &self.seeds
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }
}

/// Remaps NIR intensities onto the luminance statistics of the reference.
///
/// The output has the mean and standard deviation of `reference_l` (clamped
/// to the valid L range). A constant input maps to the constant reference
/// mean.
pub fn transfer_luminance(nir: &ImageF, reference_l: &ImageF) -> ImageF {
    let (mean_n, std_n) = (nir.mean(), nir.std());
    let (mean_r, std_r) = (reference_l.mean(), reference_l.std());
    if std_n <= 0.0 {
        return ImageF::constant(nir.width(), nir.height(), mean_r.clamp(0.0, 100.0));
    }
    let gain = std_r / std_n;
    nir.map(|v| ((v - mean_n) * gain + mean_r).clamp(0.0, 100.0))
}

/// Deterministic adaptive clustering of a luminance plane.
///
/// Starts from four quantile-spaced centers, runs Lloyd iterations, drops
/// empty clusters, and splits any cluster whose spread exceeds
/// [`SPLIT_SIGMA`] until none does (capped at 16 clusters). Returns the
/// cluster centers and the per-pixel assignment.
fn adaptive_clusters(l: &ImageF) -> (Vec<f64>, Vec<usize>) {
    let values = l.data();
    if values.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));

    let mut centers: Vec<f64> = (0..4)
        .map(|i| {
            let q = (i as f64 + 0.5) / 4.0;
            sorted[((q * sorted.len() as f64) as usize).min(sorted.len() - 1)]
        })
        .collect();
    centers.dedup_by(|a, b| a == b);

    let mut assignment = vec![0usize; values.len()];
    loop {
        // Lloyd iterations until the assignment stabilizes.
        for _ in 0..50 {
            let mut changed = false;
            for (i, &v) in values.iter().enumerate() {
                let best = nearest_center(&centers, v);
                if assignment[i] != best {
                    assignment[i] = best;
                    changed = true;
                }
            }
            let mut sums = vec![0.0; centers.len()];
            let mut counts = vec![0usize; centers.len()];
            for (i, &v) in values.iter().enumerate() {
                sums[assignment[i]] += v;
                counts[assignment[i]] += 1;
            }
            let mut kept = Vec::with_capacity(centers.len());
            for (&sum, &count) in sums.iter().zip(counts.iter()) {
                if count > 0 {
                    kept.push(sum / count as f64);
                } else {
                    changed = true;
                }
            }
            centers = kept;
            if !changed {
                break;
            }
        }

        // Reassign against the final centers before measuring spread.
        for (i, &v) in values.iter().enumerate() {
            assignment[i] = nearest_center(&centers, v);
        }
        let mut sums = vec![0.0; centers.len()];
        let mut sq_sums = vec![0.0; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (i, &v) in values.iter().enumerate() {
            sums[assignment[i]] += v;
            sq_sums[assignment[i]] += v * v;
            counts[assignment[i]] += 1;
        }

        if centers.len() >= 16 {
            break;
        }
        let mut next = Vec::with_capacity(centers.len() + 4);
        let mut split = false;
        for c in 0..centers.len() {
            let (mean, sigma) = if counts[c] == 0 {
                (centers[c], 0.0)
            } else {
                let n = counts[c] as f64;
                let mean = sums[c] / n;
                let var = (sq_sums[c] / n - mean * mean).max(0.0);
                (mean, var.sqrt())
            };
            if sigma > SPLIT_SIGMA && next.len() + 2 <= 16 {
                next.push(mean - 0.5 * sigma);
                next.push(mean + 0.5 * sigma);
                split = true;
            } else {
                next.push(mean);
            }
        }
        if !split {
            break;
        }
        centers = next;
    }

    (centers, assignment)
}

fn nearest_center(centers: &[f64], v: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, &center) in centers.iter().enumerate() {
        let d = (v - center).abs();
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Selects chroma seeds where the NIR intensity agrees with the reference.
///
/// The reference luminance is clustered adaptively; a candidate pixel p (on
/// a [`SEED_STRIDE`] grid) with cluster center I_c is accepted when
/// |nir(p) - I_c| / I_c is strictly below `threshold`. Clusters with a
/// near-zero center never produce seeds. Accepted seeds carry the reference
/// chroma at their position.
pub fn select_seeds(
    nir: &ImageF,
    reference: &LabImage,
    threshold: f64,
) -> Result<SeedSet, EyeError> {
    let expected = (reference.width(), reference.height());
    let got = (nir.width(), nir.height());
    if got != expected {
        return Err(EyeError::DimensionMismatch { expected, got });
    }
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(EyeError::InvalidWeights);
    }

    let (centers, assignment) = adaptive_clusters(&reference.l);
    let mut seeds = Vec::new();
    let offset = SEED_STRIDE / 2;
    for y in (offset..reference.height()).step_by(SEED_STRIDE) {
        for x in (offset..reference.width()).step_by(SEED_STRIDE) {
            let center = centers[assignment[y * reference.width() + x]];
            if center.abs() < 1e-9 {
                continue;
            }
            let error = (nir.get(x, y) - center).abs() / center;
            if error < threshold {
                seeds.push(Seed {
                    x,
                    y,
                    a: reference.a.get(x, y),
                    b: reference.b.get(x, y),
                    error,
                });
            }
        }
    }
    SeedSet::new(seeds, threshold)
}

/// Propagates seed chroma over the crop.
///
/// Minimizes sum_p (x(p) - sum_q w_pq x(q))^2 + alpha sum_m (x(p_m) - s_m)^2
/// per chroma channel, with affinity weights from the luminance plane and
/// alpha = [`SEED_WEIGHT`]. The smoothness sum runs over non-seed pixels, so
/// the optimum is the exact affinity-harmonic extension of the seed chroma;
/// together with the non-negative normalized weights this keeps every output
/// value inside the convex hull of the seed values (keeping rows at seed
/// pixels would turn the fit biharmonic, which overshoots between seeds).
/// Returns the a and b planes.
pub fn propagate_color(
    luminance: &ImageF,
    seeds: &SeedSet,
) -> Result<(ImageF, ImageF), EyeError> {
    if seeds.is_empty() {
        return Err(EyeError::NoSeeds);
    }
    let (width, height) = (luminance.width(), luminance.height());
    for seed in seeds.seeds() {
        if seed.x >= width || seed.y >= height {
            return Err(EyeError::SeedOutsideImage {
                x: seed.x,
                y: seed.y,
            });
        }
    }
    let weights = affinity_weights(luminance);
    let mut is_seed = vec![false; width * height];
    for seed in seeds.seeds() {
        is_seed[seed.y * width + seed.x] = true;
    }

    let mut out = Vec::with_capacity(2);
    for pick in [
        (|s: &Seed| s.a) as fn(&Seed) -> f64,
        (|s: &Seed| s.b) as fn(&Seed) -> f64,
    ] {
        let mut builder = LsqBuilder::new(width * height);
        let smooth = builder.add_term("smooth", 1.0);
        let data = builder.add_term("seed", SEED_WEIGHT);
        for (p, row) in weights.iter().enumerate() {
            if is_seed[p] {
                continue;
            }
            let mut coeffs = Vec::with_capacity(row.len() + 1);
            coeffs.push((p, 1.0));
            for &(q, w) in row {
                coeffs.push((q, -w));
            }
            builder.add_row(smooth, &coeffs, 0.0);
        }
        let mean = seeds.seeds().iter().map(|s| pick(s)).sum::<f64>() / seeds.seeds().len() as f64;
        for seed in seeds.seeds() {
            builder.add_row(data, &[(seed.y * width + seed.x, 1.0)], pick(seed));
        }
        let x0 = DVector::from_element(width * height, mean);
        let solution = builder.build().solve(&CgOptions::default(), Some(&x0))?;
        out.push(ImageF::from_vec(width, height, solution.x.as_slice().to_vec()));
    }
    let b = out.pop().expect("two channels");
    let a = out.pop().expect("two channels");
    Ok((a, b))
}
