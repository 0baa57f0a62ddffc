//! Scalar image plane in `f64` plus the small set of raster utilities the
//! pipeline needs: bilinear sampling, separable Gaussian blur, moment
//! statistics and conversions to and from 8-bit images.

use image::{GrayImage, RgbImage};

/// Single-channel image stored row-major in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageF {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageF {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    /// Bilinear sample; `None` when the point falls outside
    /// `[0, w-1] x [0, h-1]` (pixel centers sit at integer coordinates).
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64)
        {
            return None;
        }
        Some(self.sample_bilinear_clamped(x, y))
    }

    /// Bilinear sample with the source clamped at its borders.
    pub fn sample_bilinear_clamped(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let m = self.mean();
        (self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64).sqrt()
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in &self.data {
            min = min.min(v);
            max = max.max(v);
        }
        (min, max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageF {
        ImageF {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ImageF, f: impl Fn(f64, f64) -> f64) -> ImageF {
        assert_eq!((self.width, self.height), (other.width, other.height));
        ImageF {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn from_gray(image: &GrayImage) -> Self {
        Self {
            width: image.width() as usize,
            height: image.height() as usize,
            data: image.pixels().map(|p| p.0[0] as f64).collect(),
        }
    }

    /// Rounds and clamps to 8 bits.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Luma([clamp_u8(self.get(x as usize, y as usize))])
        })
    }
}

#[inline]
pub fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Separable Gaussian blur with replicated borders; kernel radius is
/// `ceil(3 sigma)`.
pub fn gaussian_blur(image: &ImageF, sigma: f64) -> ImageF {
    if sigma <= 0.0 {
        return image.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        kernel.push((-(i as f64 * i as f64) / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for k in kernel.iter_mut() {
        *k /= sum;
    }

    let w = image.width as i64;
    let h = image.height as i64;
    let mut horizontal = ImageF::new(image.width, image.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let sx = (x + ki as i64 - radius).clamp(0, w - 1);
                acc += k * image.get(sx as usize, y as usize);
            }
            horizontal.set(x as usize, y as usize, acc);
        }
    }
    let mut out = ImageF::new(image.width, image.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let sy = (y + ki as i64 - radius).clamp(0, h - 1);
                acc += k * horizontal.get(x as usize, sy as usize);
            }
            out.set(x as usize, y as usize, acc);
        }
    }
    out
}

/// Three-plane RGB image in `f64`, values nominally in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbPlanes {
    pub r: ImageF,
    pub g: ImageF,
    pub b: ImageF,
}

impl RgbPlanes {
    pub fn new(width: usize, height: usize) -> Self {
        Self { r: ImageF::new(width, height), g: ImageF::new(width, height), b: ImageF::new(width, height) }
    }

    pub fn width(&self) -> usize {
        self.r.width()
    }

    pub fn height(&self) -> usize {
        self.r.height()
    }

    pub fn from_rgb8(image: &RgbImage) -> Self {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let mut planes = Self::new(w, h);
        for (x, y, p) in image.enumerate_pixels() {
            planes.r.set(x as usize, y as usize, p.0[0] as f64);
            planes.g.set(x as usize, y as usize, p.0[1] as f64);
            planes.b.set(x as usize, y as usize, p.0[2] as f64);
        }
        planes
    }

    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width() as u32, self.height() as u32, |x, y| {
            image::Rgb([
                clamp_u8(self.r.get(x as usize, y as usize)),
                clamp_u8(self.g.get(x as usize, y as usize)),
                clamp_u8(self.b.get(x as usize, y as usize)),
            ])
        })
    }

    pub fn channels(&self) -> [&ImageF; 3] {
        [&self.r, &self.g, &self.b]
    }

    pub fn map(&self, f: impl Fn(&ImageF) -> ImageF) -> RgbPlanes {
        RgbPlanes { r: f(&self.r), g: f(&self.g), b: f(&self.b) }
    }
}
