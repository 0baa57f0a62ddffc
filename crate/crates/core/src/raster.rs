//! Z-buffered triangle rasterizer with perspective-correct barycentric
//! interpolation. Drives the synthetic fixture renders, the eye-image warp
//! and mask construction.

use nalgebra::{Vector2, Vector3};

use crate::geometry::CameraIntrinsics;

/// Per-pixel rasterization result: the visible face and the
/// perspective-correct barycentric coordinates of the surface point.
#[derive(Clone, Copy, Debug)]
pub struct RasterPoint {
    pub face: usize,
    /// Camera-space depth of the surface point.
    pub depth: f64,
    pub barycentric: [f64; 3],
}

/// Row-major `width x height` buffer of rasterization hits.
pub struct RasterBuffer {
    width: usize,
    height: usize,
    pixels: Vec<Option<RasterPoint>>,
}

impl RasterBuffer {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<&RasterPoint> {
        self.pixels[y * self.width + x].as_ref()
    }

    /// Interpolates a per-vertex attribute at a covered pixel.
    pub fn interpolate(
        &self,
        x: usize,
        y: usize,
        faces: &[[usize; 3]],
        attr: &[Vector3<f64>],
    ) -> Option<Vector3<f64>> {
        let hit = self.get(x, y)?;
        let f = faces[hit.face];
        Some(
            attr[f[0]] * hit.barycentric[0]
                + attr[f[1]] * hit.barycentric[1]
                + attr[f[2]] * hit.barycentric[2],
        )
    }

    pub fn coverage_mask(&self) -> crate::img::ImageF {
        crate::img::ImageF::from_fn(self.width, self.height, |x, y| {
            if self.get(x, y).is_some() {
                1.0
            } else {
                0.0
            }
        })
    }
}

const NEAR_PLANE: f64 = 1e-6;

/// Rasterizes a triangle list given camera-frame vertex positions. Pixel
/// (x, y) samples the scene at image coordinate (x, y); nearer surfaces win.
/// With `cull_backfaces` set, triangles wound clockwise on screen are
/// skipped.
pub fn rasterize(
    vertices_cam: &[Vector3<f64>],
    faces: &[[usize; 3]],
    k: &CameraIntrinsics,
    width: usize,
    height: usize,
    cull_backfaces: bool,
) -> RasterBuffer {
    let projected: Vec<Option<Vector2<f64>>> = vertices_cam
        .iter()
        .map(|p| if p.z > NEAR_PLANE { k.project_camera(p).ok() } else { None })
        .collect();

    let mut pixels: Vec<Option<RasterPoint>> = vec![None; width * height];
    for (fi, f) in faces.iter().enumerate() {
        let (Some(pa), Some(pb), Some(pc)) = (projected[f[0]], projected[f[1]], projected[f[2]])
        else {
            continue;
        };
        let za = vertices_cam[f[0]].z;
        let zb = vertices_cam[f[1]].z;
        let zc = vertices_cam[f[2]].z;

        let area = edge(&pa, &pb, &pc);
        if area.abs() < 1e-12 {
            continue;
        }
        if cull_backfaces && area >= 0.0 {
            // Counter-clockwise in a y-down image means the face points away.
            continue;
        }

        let min_x = pa.x.min(pb.x).min(pc.x).floor().max(0.0) as usize;
        let max_x = pa.x.max(pb.x).max(pc.x).ceil().min((width - 1) as f64) as usize;
        let min_y = pa.y.min(pb.y).min(pc.y).floor().max(0.0) as usize;
        let max_y = pa.y.max(pb.y).max(pc.y).ceil().min((height - 1) as f64) as usize;
        if min_x > max_x || min_y > max_y {
            continue;
        }

        let inv_area = 1.0 / area;
        for y in min_y..=max_y {
            for x in min_x..=max_x {
                let p = Vector2::new(x as f64, y as f64);
                let w0 = edge(&pb, &pc, &p) * inv_area;
                let w1 = edge(&pc, &pa, &p) * inv_area;
                let w2 = edge(&pa, &pb, &p) * inv_area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let inv_z = w0 / za + w1 / zb + w2 / zc;
                if inv_z <= 0.0 {
                    continue;
                }
                let depth = 1.0 / inv_z;
                let slot = &mut pixels[y * width + x];
                if slot.as_ref().map_or(true, |existing| depth < existing.depth) {
                    *slot = Some(RasterPoint {
                        face: fi,
                        depth,
                        barycentric: [
                            w0 / za * depth,
                            w1 / zb * depth,
                            w2 / zc * depth,
                        ],
                    });
                }
            }
        }
    }
    RasterBuffer { width, height, pixels }
}

#[inline]
fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}
