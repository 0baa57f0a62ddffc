//! CIE L*a*b* image planes and sRGB conversions.

use image::RgbImage;
use palette::{FromColor, Lab, Srgb};

use super::EyeError;
use crate::img::{clamp_u8, ImageF, RgbPlanes};

type LabD65 = Lab<palette::white_point::D65, f64>;

/// Luminance range of the L channel.
pub const L_RANGE: (f64, f64) = (0.0, 100.0);
/// Range of the a and b chroma channels.
pub const AB_RANGE: (f64, f64) = (-128.0, 127.0);

/// A color image stored as CIE L*a*b* planes (D65 white point).
///
/// `l` lies in [0, 100], `a` and `b` in [-128, 127]. Conversions from sRGB
/// always land in range; [`LabImage::from_channels`] clamps arbitrary input
/// planes so the invariant holds for synthesized data as well.
#[derive(Debug, Clone)]
pub struct LabImage {
    pub l: ImageF,
    pub a: ImageF,
    pub b: ImageF,
}

impl LabImage {
    /// Black image (L = a = b = 0).
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            l: ImageF::new(width, height),
            a: ImageF::new(width, height),
            b: ImageF::new(width, height),
        }
    }

    /// Builds an image from existing planes, clamping each channel into its
    /// valid range. Fails if the planes disagree in size.
    pub fn from_channels(l: ImageF, a: ImageF, b: ImageF) -> Result<Self, EyeError> {
        let expected = (l.width(), l.height());
        for plane in [&a, &b] {
            let got = (plane.width(), plane.height());
            if got != expected {
                return Err(EyeError::DimensionMismatch { expected, got });
            }
        }
        Ok(Self {
            l: l.map(|v| v.clamp(L_RANGE.0, L_RANGE.1)),
            a: a.map(|v| v.clamp(AB_RANGE.0, AB_RANGE.1)),
            b: b.map(|v| v.clamp(AB_RANGE.0, AB_RANGE.1)),
        })
    }

    pub fn width(&self) -> usize {
        self.l.width()
    }

    pub fn height(&self) -> usize {
        self.l.height()
    }

    /// Converts an 8-bit sRGB image.
    pub fn from_srgb8(image: &RgbImage) -> Self {
        let (width, height) = (image.width() as usize, image.height() as usize);
        let mut out = Self::new(width, height);
        for (x, y, pixel) in image.enumerate_pixels() {
            let lab = LabD65::from_color(Srgb::new(
                pixel[0] as f64 / 255.0,
                pixel[1] as f64 / 255.0,
                pixel[2] as f64 / 255.0,
            ));
            out.l.set(x as usize, y as usize, lab.l);
            out.a.set(x as usize, y as usize, lab.a);
            out.b.set(x as usize, y as usize, lab.b);
        }
        out
    }

    /// Converts floating-point sRGB planes on the [0, 255] scale.
    pub fn from_rgb_planes(planes: &RgbPlanes) -> Self {
        let (width, height) = (planes.width(), planes.height());
        let mut out = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                let lab = LabD65::from_color(Srgb::new(
                    planes.r.get(x, y) / 255.0,
                    planes.g.get(x, y) / 255.0,
                    planes.b.get(x, y) / 255.0,
                ));
                out.l.set(x, y, lab.l);
                out.a.set(x, y, lab.a);
                out.b.set(x, y, lab.b);
            }
        }
        out
    }

    /// Renders to an 8-bit sRGB image, clamping out-of-gamut colors.
    pub fn to_srgb8(&self) -> RgbImage {
        let (width, height) = (self.width(), self.height());
        let mut out = RgbImage::new(width as u32, height as u32);
        for y in 0..height {
            for x in 0..width {
                let rgb = Srgb::from_color(LabD65::new(
                    self.l.get(x, y),
                    self.a.get(x, y),
                    self.b.get(x, y),
                ));
                out.put_pixel(
                    x as u32,
                    y as u32,
                    image::Rgb([
                        clamp_u8(rgb.red * 255.0),
                        clamp_u8(rgb.green * 255.0),
                        clamp_u8(rgb.blue * 255.0),
                    ]),
                );
            }
        }
        out
    }

    /// Renders to floating-point sRGB planes on the [0, 255] scale without
    /// 8-bit quantization. Out-of-gamut colors are clamped to [0, 255].
    pub fn to_rgb_planes(&self) -> RgbPlanes {
        let (width, height) = (self.width(), self.height());
        let mut planes = RgbPlanes::new(width, height);
        for y in 0..height {
            for x in 0..width {
                let rgb = Srgb::from_color(LabD65::new(
                    self.l.get(x, y),
                    self.a.get(x, y),
                    self.b.get(x, y),
                ));
                planes.r.set(x, y, (rgb.red * 255.0).clamp(0.0, 255.0));
                planes.g.set(x, y, (rgb.green * 255.0).clamp(0.0, 255.0));
                planes.b.set(x, y, (rgb.blue * 255.0).clamp(0.0, 255.0));
            }
        }
        planes
    }
}
