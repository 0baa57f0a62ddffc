//! Grid-mesh warp of the reference face image onto the query frame.
//!
//! The reference image is overlaid with a uniform grid; constrained points
//! inside the grid are expressed as fixed bilinear combinations of their
//! cell corners, and a single sparse least-squares solve moves the grid
//! vertices so that the combinations land on their query-frame targets
//! while a per-quad similarity penalty keeps the warp content-preserving.
//! Silhouette pairs pin the face boundary and an identity prior freezes
//! vertices far from the face.

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::geometry::{project, CameraIntrinsics, RigidTransform};
use crate::img::ImageF;
use crate::mesh::Mesh;
use crate::sparse::{CgOptions, LsqBuilder, SparseError};

#[derive(Debug, Error)]
pub enum WarpError {
    #[error("grid must have at least 2x2 cells, got {rows}x{cols}")]
    GridTooSmall { rows: usize, cols: usize },
    #[error("grid extent must be positive and finite, got {x} x {y}")]
    InvalidExtent { x: f64, y: f64 },
    #[error("warp weights must be finite and non-negative")]
    InvalidWeights,
    #[error("constrained point ({x}, {y}) lies outside the grid")]
    PointOutsideGrid { x: f64, y: f64 },
    #[error("query silhouette is empty")]
    EmptySilhouette,
    #[error("warp system is singular: {0}")]
    Singular(#[from] SparseError),
    #[error("malformed warp field file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform grid over the reference image together with its warped version.
/// Vertices are stored row-major with `(rows + 1) * (cols + 1)` entries;
/// until a solve fills them, the target vertices equal the source grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWarpField {
    rows: usize,
    cols: usize,
    cell: Vector2<f64>,
    source: Vec<Vector2<f64>>,
    target: Vec<Vector2<f64>>,
}

/// A point inside one grid cell, written as the bilinear combination of the
/// cell's corners. The weights are kept fixed when the grid deforms.
#[derive(Clone, Copy, Debug)]
pub struct BilinearAnchor {
    /// Cell row and column.
    pub cell: (usize, usize),
    /// Weights for corners `(i, j)`, `(i, j+1)`, `(i+1, j)`, `(i+1, j+1)`.
    pub weights: [f64; 4],
}

impl GridWarpField {
    /// Builds a `rows` x `cols` cell grid covering `[0, extent.x] x
    /// [0, extent.y]` in pixel coordinates, target initialized to source.
    pub fn new(rows: usize, cols: usize, extent: Vector2<f64>) -> Result<Self, WarpError> {
        if rows < 2 || cols < 2 {
            return Err(WarpError::GridTooSmall { rows, cols });
        }
        if !(extent.x.is_finite() && extent.x > 0.0 && extent.y.is_finite() && extent.y > 0.0) {
            return Err(WarpError::InvalidExtent { x: extent.x, y: extent.y });
        }
        let cell = Vector2::new(extent.x / cols as f64, extent.y / rows as f64);
        let source = uniform_grid(rows, cols, &cell);
        Ok(Self { rows, cols, cell, target: source.clone(), source })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Cell width and height in pixels.
    pub fn cell(&self) -> Vector2<f64> {
        self.cell
    }

    pub fn vertex_index(&self, i: usize, j: usize) -> usize {
        i * (self.cols + 1) + j
    }

    pub fn source_vertices(&self) -> &[Vector2<f64>] {
        &self.source
    }

    pub fn target_vertices(&self) -> &[Vector2<f64>] {
        &self.target
    }

    pub fn with_target_vertices(mut self, target: Vec<Vector2<f64>>) -> Result<Self, WarpError> {
        if target.len() != self.source.len() {
            return Err(WarpError::Malformed(format!(
                "expected {} target vertices, got {}",
                self.source.len(),
                target.len()
            )));
        }
        self.target = target;
        Ok(self)
    }

    /// Corner vertex indices of cell `(i, j)` in [`BilinearAnchor`] order.
    pub fn cell_corners(&self, i: usize, j: usize) -> [usize; 4] {
        [
            self.vertex_index(i, j),
            self.vertex_index(i, j + 1),
            self.vertex_index(i + 1, j),
            self.vertex_index(i + 1, j + 1),
        ]
    }

    /// Locates the cell containing `point` and its bilinear weights, or
    /// `None` outside the grid. Points on the far boundary belong to the
    /// last cell with a local coordinate of exactly one.
    pub fn anchor(&self, point: &Vector2<f64>) -> Option<BilinearAnchor> {
        let fx = point.x / self.cell.x;
        let fy = point.y / self.cell.y;
        if !(fx >= 0.0 && fx <= self.cols as f64 && fy >= 0.0 && fy <= self.rows as f64) {
            return None;
        }
        let j = (fx.floor() as usize).min(self.cols - 1);
        let i = (fy.floor() as usize).min(self.rows - 1);
        let u = fx - j as f64;
        let v = fy - i as f64;
        Some(BilinearAnchor {
            cell: (i, j),
            weights: [(1.0 - u) * (1.0 - v), u * (1.0 - v), (1.0 - u) * v, u * v],
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 16 * self.target.len());
        out.extend_from_slice(b"GRIDWARP");
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend_from_slice(&self.cell.x.to_le_bytes());
        out.extend_from_slice(&self.cell.y.to_le_bytes());
        for v in &self.target {
            out.extend_from_slice(&v.x.to_le_bytes());
            out.extend_from_slice(&v.y.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WarpError> {
        let bad = |m: &str| WarpError::Malformed(m.to_owned());
        if bytes.len() < 36 {
            return Err(bad("file shorter than the header"));
        }
        if &bytes[..8] != b"GRIDWARP" {
            return Err(bad("missing GRIDWARP magic"));
        }
        let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let f64_at = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        if u32_at(8) != 1 {
            return Err(bad("unsupported version"));
        }
        let rows = u32_at(12) as usize;
        let cols = u32_at(16) as usize;
        if rows < 2 || cols < 2 {
            return Err(WarpError::GridTooSmall { rows, cols });
        }
        let cell = Vector2::new(f64_at(20), f64_at(28));
        if !(cell.x.is_finite() && cell.x > 0.0 && cell.y.is_finite() && cell.y > 0.0) {
            return Err(bad("non-positive cell size"));
        }
        let count = (rows + 1) * (cols + 1);
        if bytes.len() != 36 + 16 * count {
            return Err(bad("vertex payload has the wrong length"));
        }
        let target = (0..count)
            .map(|k| Vector2::new(f64_at(36 + 16 * k), f64_at(44 + 16 * k)))
            .collect();
        Ok(Self { rows, cols, cell, source: uniform_grid(rows, cols, &cell), target })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), WarpError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, WarpError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn uniform_grid(rows: usize, cols: usize, cell: &Vector2<f64>) -> Vec<Vector2<f64>> {
    let mut grid = Vec::with_capacity((rows + 1) * (cols + 1));
    for i in 0..=rows {
        for j in 0..=cols {
            grid.push(Vector2::new(j as f64 * cell.x, i as f64 * cell.y));
        }
    }
    grid
}

struct AnchoredPoint {
    anchor: BilinearAnchor,
    target: Vector2<f64>,
}

/// The constraint set of one warp solve. Face and silhouette pairs are
/// anchored to their grid cells on construction; vertices whose incident
/// cells all fall outside the one-cell dilation of the cells touched by any
/// source point receive the identity prior.
pub struct WarpConstraints {
    face: Vec<AnchoredPoint>,
    silhouette: Vec<AnchoredPoint>,
    prior: Vec<bool>,
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl WarpConstraints {
    pub const DEFAULT_ALPHA: f64 = 1.0;
    pub const DEFAULT_BETA: f64 = 5.0;
    pub const DEFAULT_GAMMA: f64 = 10.0;

    /// Pairs are `(source px, target px)`; every source point must lie on
    /// the grid.
    pub fn new(
        field: &GridWarpField,
        face: &[(Vector2<f64>, Vector2<f64>)],
        silhouette: &[(Vector2<f64>, Vector2<f64>)],
        alpha: f64,
        beta: f64,
        gamma: f64,
    ) -> Result<Self, WarpError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !(ok(alpha) && ok(beta) && ok(gamma)) {
            return Err(WarpError::InvalidWeights);
        }
        let anchor_all = |pairs: &[(Vector2<f64>, Vector2<f64>)]| {
            pairs
                .iter()
                .map(|(src, dst)| {
                    let anchor = field
                        .anchor(src)
                        .ok_or(WarpError::PointOutsideGrid { x: src.x, y: src.y })?;
                    Ok(AnchoredPoint { anchor, target: *dst })
                })
                .collect::<Result<Vec<_>, WarpError>>()
        };
        let face = anchor_all(face)?;
        let silhouette = anchor_all(silhouette)?;

        let (rows, cols) = (field.rows, field.cols);
        let mut marked = vec![false; rows * cols];
        for p in face.iter().chain(&silhouette) {
            let (i, j) = p.anchor.cell;
            marked[i * cols + j] = true;
        }
        let mut dilated = marked.clone();
        for i in 0..rows {
            for j in 0..cols {
                if !marked[i * cols + j] {
                    continue;
                }
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let (ni, nj) = (i as i64 + di, j as i64 + dj);
                        if ni >= 0 && ni < rows as i64 && nj >= 0 && nj < cols as i64 {
                            dilated[ni as usize * cols + nj as usize] = true;
                        }
                    }
                }
            }
        }
        let mut prior = vec![false; (rows + 1) * (cols + 1)];
        for i in 0..=rows {
            for j in 0..=cols {
                let mut outside = true;
                for ci in i.saturating_sub(1)..=i.min(rows - 1) {
                    for cj in j.saturating_sub(1)..=j.min(cols - 1) {
                        outside &= !dilated[ci * cols + cj];
                    }
                }
                prior[field.vertex_index(i, j)] = outside;
            }
        }
        Ok(Self { face, silhouette, prior, alpha, beta, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Per-vertex flags marking where the identity prior applies.
    pub fn prior_vertices(&self) -> &[bool] {
        &self.prior
    }
}

/// Unweighted residual sums of the warp energy terms evaluated at a grid
/// configuration, plus the weighted total.
#[derive(Clone, Copy, Debug)]
pub struct WarpReport {
    pub data: f64,
    pub similarity: f64,
    pub boundary: f64,
    pub silhouette: f64,
    pub total: f64,
}

pub struct SolvedGridWarp {
    pub field: GridWarpField,
    pub report: WarpReport,
}

/// Per-quad similarity deviation rows: each corner is written in the
/// rotated-edge frame of its two cyclic neighbors, with coordinates taken
/// from the source grid. The residual of corner `p0` against neighbors
/// `p1`, `p2` is `p0 - p1 - u (p2 - p1) - v R90 (p2 - p1)`.
fn similarity_triangles(field: &GridWarpField) -> Vec<([usize; 3], f64, f64)> {
    let mut out = Vec::with_capacity(field.rows * field.cols * 4);
    for i in 0..field.rows {
        for j in 0..field.cols {
            let [c00, c01, c10, c11] = field.cell_corners(i, j);
            let cycle = [c00, c01, c11, c10];
            for k in 0..4 {
                let tri = [cycle[k], cycle[(k + 1) % 4], cycle[(k + 3) % 4]];
                let p0 = field.source[tri[0]];
                let p1 = field.source[tri[1]];
                let p2 = field.source[tri[2]];
                let d = p2 - p1;
                let e = p0 - p1;
                let n2 = d.norm_squared();
                let u = e.dot(&d) / n2;
                let v = (e.x * d.y - e.y * d.x) / n2;
                out.push((tri, u, v));
            }
        }
    }
    out
}

fn similarity_residual(
    positions: &[Vector2<f64>],
    tri: &[usize; 3],
    u: f64,
    v: f64,
) -> Vector2<f64> {
    let p0 = positions[tri[0]];
    let p1 = positions[tri[1]];
    let p2 = positions[tri[2]];
    let d = p2 - p1;
    p0 - p1 - u * d - v * Vector2::new(d.y, -d.x)
}

impl AnchoredPoint {
    fn indices(&self, field_cols: usize) -> [usize; 4] {
        let (i, j) = self.anchor.cell;
        let w = field_cols + 1;
        [i * w + j, i * w + j + 1, (i + 1) * w + j, (i + 1) * w + j + 1]
    }
}

/// Evaluates the warp energy at the field's current target vertices.
pub fn evaluate_energy(field: &GridWarpField, constraints: &WarpConstraints) -> WarpReport {
    let positions = &field.target;
    let cols = field.cols;
    let term = |anchors: &[AnchoredPoint]| {
        anchors
            .iter()
            .map(|p| {
                let idx = p.indices(cols);
                let mut acc = Vector2::zeros();
                for k in 0..4 {
                    acc += p.anchor.weights[k] * positions[idx[k]];
                }
                (acc - p.target).norm_squared()
            })
            .sum::<f64>()
    };
    let data = term(&constraints.face);
    let silhouette = term(&constraints.silhouette);
    let similarity = similarity_triangles(field)
        .iter()
        .map(|(tri, u, v)| similarity_residual(positions, tri, *u, *v).norm_squared())
        .sum::<f64>();
    let boundary = constraints
        .prior
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(k, _)| (positions[k] - field.source[k]).norm_squared())
        .sum::<f64>();
    WarpReport {
        data,
        similarity,
        boundary,
        silhouette,
        total: data
            + constraints.alpha * similarity
            + constraints.beta * boundary
            + constraints.gamma * silhouette,
    }
}

/// Minimizes the quadratic warp energy by one sparse least-squares solve
/// and returns the field with filled target vertices plus the per-term
/// residuals at the solution.
pub fn solve_grid_warp(
    field: &GridWarpField,
    constraints: &WarpConstraints,
) -> Result<SolvedGridWarp, WarpError> {
    let n_vertices = field.source.len();
    let mut builder = LsqBuilder::new(2 * n_vertices);
    let data = builder.add_term("data", 1.0);
    let similarity = builder.add_term("similarity", constraints.alpha);
    let boundary = builder.add_term("boundary", constraints.beta);
    let sil = builder.add_term("silhouette", constraints.gamma);

    for (term, anchors) in [(data, &constraints.face), (sil, &constraints.silhouette)] {
        for p in anchors {
            let idx = p.indices(field.cols);
            let w = p.anchor.weights;
            let xs: Vec<(usize, f64)> = (0..4).map(|k| (2 * idx[k], w[k])).collect();
            let ys: Vec<(usize, f64)> = (0..4).map(|k| (2 * idx[k] + 1, w[k])).collect();
            builder.add_row(term, &xs, p.target.x);
            builder.add_row(term, &ys, p.target.y);
        }
    }

    for (tri, u, v) in similarity_triangles(field) {
        let [a, b, c] = tri;
        builder.add_row(
            similarity,
            &[
                (2 * a, 1.0),
                (2 * b, u - 1.0),
                (2 * c, -u),
                (2 * b + 1, v),
                (2 * c + 1, -v),
            ],
            0.0,
        );
        builder.add_row(
            similarity,
            &[
                (2 * a + 1, 1.0),
                (2 * b + 1, u - 1.0),
                (2 * c + 1, -u),
                (2 * b, -v),
                (2 * c, v),
            ],
            0.0,
        );
    }

    for (k, _) in constraints.prior.iter().enumerate().filter(|(_, &on)| on) {
        builder.add_row(boundary, &[(2 * k, 1.0)], field.source[k].x);
        builder.add_row(boundary, &[(2 * k + 1, 1.0)], field.source[k].y);
    }

    let system = builder.build();
    let mut x0 = nalgebra::DVector::zeros(2 * n_vertices);
    for (k, s) in field.source.iter().enumerate() {
        x0[2 * k] = s.x;
        x0[2 * k + 1] = s.y;
    }
    let solution = system.solve(&CgOptions::default(), Some(&x0))?;

    let target = (0..n_vertices)
        .map(|k| Vector2::new(solution.x[2 * k], solution.x[2 * k + 1]))
        .collect();
    let solved = field.clone().with_target_vertices(target)?;
    let report = evaluate_energy(&solved, constraints);
    Ok(SolvedGridWarp { field: solved, report })
}

/// Projects every mesh vertex under both poses and keeps the pairs that
/// face the camera and land inside the frame in both views. Pair order
/// follows vertex order.
pub fn project_mesh_correspondences(
    mesh: &Mesh,
    pose_ref: &RigidTransform,
    pose_query: &RigidTransform,
    k: &CameraIntrinsics,
) -> Vec<(Vector2<f64>, Vector2<f64>)> {
    let normals = mesh.vertex_normals();
    let mut pairs = Vec::new();
    for (vertex, normal) in mesh.vertices().iter().zip(&normals) {
        let view = |pose: &RigidTransform| -> Option<Vector2<f64>> {
            if (pose.rotation() * normal).z >= 0.0 {
                return None;
            }
            let pixel = project(k, pose, vertex).ok()?;
            k.contains(&pixel).then_some(pixel)
        };
        if let (Some(a), Some(b)) = (view(pose_ref), view(pose_query)) {
            pairs.push((a, b));
        }
    }
    pairs
}

/// Silhouette correspondences with dropped-point indices.
pub struct SilhouettePairs {
    /// `(reference px, query px)` pairs, aligned with the surviving
    /// silhouette points in input order.
    pub pairs: Vec<(Vector2<f64>, Vector2<f64>)>,
    /// Indices of query silhouette points with no contour vertex within
    /// `max_distance`.
    pub dropped: Vec<usize>,
}

/// Bridges each query silhouette point to the reference image: the mesh
/// contour generator under `pose_query` is projected into the query view,
/// each silhouette point adopts its nearest contour vertex and takes that
/// vertex's projection under `pose_ref` as its reference-side partner.
/// Points farther than `max_distance` (typically one grid cell) from every
/// contour vertex are dropped and reported.
pub fn silhouette_pairs(
    mesh: &Mesh,
    pose_ref: &RigidTransform,
    pose_query: &RigidTransform,
    k: &CameraIntrinsics,
    query_silhouette: &[Vector2<f64>],
    max_distance: f64,
) -> Result<SilhouettePairs, WarpError> {
    if query_silhouette.is_empty() {
        return Err(WarpError::EmptySilhouette);
    }
    let eye = pose_query.inverse().apply(&Vector3::zeros());
    let mut projected = Vec::new();
    for idx in mesh.contour_vertices(&eye) {
        let vertex = &mesh.vertices()[idx];
        if let (Ok(q), Ok(r)) = (project(k, pose_query, vertex), project(k, pose_ref, vertex)) {
            projected.push((q, r));
        }
    }
    let mut pairs = Vec::new();
    let mut dropped = Vec::new();
    for (si, s) in query_silhouette.iter().enumerate() {
        let nearest = projected
            .iter()
            .map(|(q, r)| ((q - s).norm(), r))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match nearest {
            Some((d, r)) if d <= max_distance => pairs.push((*r, *s)),
            _ => dropped.push(si),
        }
    }
    Ok(SilhouettePairs { pairs, dropped })
}

/// Result of rendering through a warp field: the warped image and a 0/1
/// alpha plane, zero where no warped cell covers the pixel or the source
/// sample falls outside the image.
pub struct WarpedImage {
    pub image: ImageF,
    pub alpha: ImageF,
}

/// Renders `image` through the warp: each output pixel is mapped back to
/// its source position by inverting the bilinear patch of the covering
/// warped cell, then sampled bilinearly.
pub fn render_warp(image: &ImageF, field: &GridWarpField) -> WarpedImage {
    let (w, h) = (image.width(), image.height());
    let mut out = ImageF::new(w, h);
    let mut alpha = ImageF::new(w, h);

    // Bucket cells by their warped bounding boxes so each pixel only tests
    // a handful of candidates.
    let tile = 16usize;
    let (bw, bh) = (w.div_ceil(tile), h.div_ceil(tile));
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); bw * bh];
    let n_cells = field.rows * field.cols;
    for c in 0..n_cells {
        let (i, j) = (c / field.cols, c % field.cols);
        let corners = field.cell_corners(i, j).map(|k| field.target[k]);
        let eps = 1e-9;
        let x0 = corners.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - eps;
        let x1 = corners.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + eps;
        let y0 = corners.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - eps;
        let y1 = corners.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + eps;
        if x1 < 0.0 || y1 < 0.0 || x0 > (w - 1) as f64 || y0 > (h - 1) as f64 {
            continue;
        }
        let bx0 = (x0.max(0.0) as usize) / tile;
        let bx1 = ((x1.min((w - 1) as f64) as usize) / tile).min(bw - 1);
        let by0 = (y0.max(0.0) as usize) / tile;
        let by1 = ((y1.min((h - 1) as f64) as usize) / tile).min(bh - 1);
        for by in by0..=by1 {
            for bx in bx0..=bx1 {
                buckets[by * bw + bx].push(c as u32);
            }
        }
    }

    for y in 0..h {
        for x in 0..w {
            let p = Vector2::new(x as f64, y as f64);
            let bucket = &buckets[(y / tile) * bw + (x / tile)];
            for &c in bucket {
                let (i, j) = (c as usize / field.cols, c as usize % field.cols);
                let corners = field.cell_corners(i, j);
                let q = corners.map(|k| field.target[k]);
                let Some((u, v)) = invert_bilinear(&q, &p) else {
                    continue;
                };
                let src = field.source[corners[0]]
                    + Vector2::new(u * field.cell.x, v * field.cell.y);
                if let Some(value) = image.sample_bilinear(src.x, src.y) {
                    out.set(x, y, value);
                    alpha.set(x, y, 1.0);
                }
                break;
            }
        }
    }
    WarpedImage { image: out, alpha }
}

/// Inverts `F(u, v) = (1-u)(1-v) q00 + u(1-v) q01 + (1-u)v q10 + uv q11`
/// for `p`, returning `(u, v)` in the unit square (small overshoot is
/// clamped) or `None` when the patch does not cover the point.
fn invert_bilinear(q: &[Vector2<f64>; 4], p: &Vector2<f64>) -> Option<(f64, f64)> {
    let cross = |a: &Vector2<f64>, b: &Vector2<f64>| a.x * b.y - a.y * b.x;
    let e = q[1] - q[0];
    let f = q[2] - q[0];
    let g = q[3] - q[1] - f;
    let h = p - q[0];
    // Eliminating u from h = e u + f v + g u v gives a quadratic in v.
    let a2 = -cross(&f, &g);
    let a1 = cross(&h, &g) + cross(&e, &f);
    let a0 = cross(&h, &e);

    let eps = 1e-9;
    let mut candidates = [f64::NAN; 2];
    if a2 == 0.0 {
        if a1 == 0.0 {
            return None;
        }
        candidates[0] = -a0 / a1;
    } else {
        let disc = a1 * a1 - 4.0 * a2 * a0;
        if disc < 0.0 {
            return None;
        }
        let qq = -0.5 * (a1 + disc.sqrt().copysign(a1));
        candidates[0] = qq / a2;
        if qq != 0.0 {
            candidates[1] = a0 / qq;
        }
    }
    for &v in candidates.iter().filter(|v| v.is_finite()) {
        if !(-eps..=1.0 + eps).contains(&v) {
            continue;
        }
        let dx = e.x + g.x * v;
        let dy = e.y + g.y * v;
        let u = if dx.abs() >= dy.abs() {
            (h.x - f.x * v) / dx
        } else {
            (h.y - f.y * v) / dy
        };
        if (-eps..=1.0 + eps).contains(&u) {
            return Some((u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)));
        }
    }
    None
}
