//! Triangle mesh utilities shared by model fitting, warping and evaluation:
//! OBJ I/O, ray casts, closest-surface queries, normals and occluding
//! contours.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::RigidTransform;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no vertices or no faces")]
    Empty,
    #[error("face {face} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("mesh i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("OBJ parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Indexed triangle mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
}

/// Ray-mesh intersection result.
#[derive(Clone, Copy, Debug)]
pub struct RayHit {
    /// Distance along the (not necessarily unit) ray direction.
    pub t: f64,
    pub face: usize,
    pub point: Vector3<f64>,
    pub barycentric: [f64; 3],
}

impl Mesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(MeshError::Empty);
        }
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        index: v,
                        count: vertices.len(),
                    });
                }
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Same topology with vertices replaced.
    pub fn with_vertices(&self, vertices: Vec<Vector3<f64>>) -> Result<Mesh, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::Empty);
        }
        Ok(Mesh { vertices, faces: self.faces.clone() })
    }

    pub fn transformed(&self, t: &RigidTransform) -> Mesh {
        Mesh { vertices: self.vertices.iter().map(|v| t.apply(v)).collect(), faces: self.faces.clone() }
    }

    pub fn face_normal(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.faces[face];
        let n = (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
        let len = n.norm();
        if len > 1e-30 {
            n / len
        } else {
            Vector3::zeros()
        }
    }

    /// Area-weighted vertex normals, normalized to unit length.
    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut normals = vec![Vector3::zeros(); self.vertices.len()];
        for f in &self.faces {
            let [a, b, c] = *f;
            let weighted =
                (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
            normals[a] += weighted;
            normals[b] += weighted;
            normals[c] += weighted;
        }
        for n in normals.iter_mut() {
            let len = n.norm();
            if len > 1e-30 {
                *n /= len;
            }
        }
        normals
    }

    /// Closest intersection of a ray with the mesh, if any
    /// (Moller-Trumbore over all faces, `t > 1e-9`).
    pub fn ray_intersect(&self, origin: &Vector3<f64>, direction: &Vector3<f64>) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        for (fi, f) in self.faces.iter().enumerate() {
            if let Some((t, u, v)) = ray_triangle(
                origin,
                direction,
                &self.vertices[f[0]],
                &self.vertices[f[1]],
                &self.vertices[f[2]],
            ) {
                if best.as_ref().map_or(true, |b| t < b.t) {
                    best = Some(RayHit {
                        t,
                        face: fi,
                        point: origin + direction * t,
                        barycentric: [1.0 - u - v, u, v],
                    });
                }
            }
        }
        best
    }

    /// Index of the vertex closest to a point; ties broken by lowest index.
    pub fn nearest_vertex(&self, point: &Vector3<f64>) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, v) in self.vertices.iter().enumerate() {
            let d = (v - point).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Vertex with the smallest perpendicular distance to the ray, among
    /// those in front of the origin. `None` when every vertex lies behind.
    pub fn nearest_vertex_to_ray(
        &self,
        origin: &Vector3<f64>,
        direction: &Vector3<f64>,
    ) -> Option<usize> {
        let d = direction.normalize();
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (i, v) in self.vertices.iter().enumerate() {
            let rel = v - origin;
            let t = rel.dot(&d);
            if t <= 0.0 {
                continue;
            }
            let perp = (rel - t * d).norm_squared();
            if perp < best_d {
                best_d = perp;
                best = Some(i);
            }
        }
        best
    }

    /// Closest point on the mesh surface to `point`, with its face index and
    /// distance.
    pub fn closest_surface_point(&self, point: &Vector3<f64>) -> (Vector3<f64>, usize, f64) {
        let mut best = (Vector3::zeros(), 0usize, f64::INFINITY);
        for (fi, f) in self.faces.iter().enumerate() {
            let p = closest_point_on_triangle(
                point,
                &self.vertices[f[0]],
                &self.vertices[f[1]],
                &self.vertices[f[2]],
            );
            let d = (p - point).norm();
            if d < best.2 {
                best = (p, fi, d);
            }
        }
        best
    }

    /// Vertices on the occluding contour as seen from `eye` (in mesh
    /// coordinates): endpoints of edges shared by a front-facing and a
    /// back-facing triangle. Border edges (single face) also contribute when
    /// their face is front-facing.
    pub fn contour_vertices(&self, eye: &Vector3<f64>) -> Vec<usize> {
        use std::collections::BTreeMap;
        let mut facing = Vec::with_capacity(self.faces.len());
        for (fi, f) in self.faces.iter().enumerate() {
            let centroid = (self.vertices[f[0]] + self.vertices[f[1]] + self.vertices[f[2]]) / 3.0;
            facing.push(self.face_normal(fi).dot(&(eye - centroid)) > 0.0);
        }
        let mut edges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                edges.entry(key).or_default().push(fi);
            }
        }
        let mut on_contour = vec![false; self.vertices.len()];
        for ((a, b), fs) in &edges {
            let silhouette = match fs.as_slice() {
                [f0, f1] => facing[*f0] != facing[*f1],
                [f0] => facing[*f0],
                _ => false,
            };
            if silhouette {
                on_contour[*a] = true;
                on_contour[*b] = true;
            }
        }
        (0..self.vertices.len()).filter(|&i| on_contour[i]).collect()
    }

    pub fn bounding_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            min = min.inf(v);
            max = max.sup(v);
        }
        (min, max)
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.vertices.iter().sum::<Vector3<f64>>() / self.vertices.len() as f64
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        out
    }

    pub fn from_obj(text: &str) -> Result<Self, MeshError> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let mut coords = [0.0f64; 3];
                    for c in coords.iter_mut() {
                        let tok = parts.next().ok_or_else(|| MeshError::Parse {
                            line: idx + 1,
                            message: "vertex needs 3 coordinates".into(),
                        })?;
                        *c = tok.parse().map_err(|_| MeshError::Parse {
                            line: idx + 1,
                            message: format!("bad coordinate `{tok}`"),
                        })?;
                    }
                    vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let idxs: Vec<usize> = parts
                        .map(|tok| {
                            // Accept `f v`, `f v/vt`, `f v/vt/vn` forms.
                            let v = tok.split('/').next().unwrap_or(tok);
                            v.parse::<usize>().map_err(|_| MeshError::Parse {
                                line: idx + 1,
                                message: format!("bad face index `{tok}`"),
                            })
                        })
                        .collect::<Result<_, _>>()?;
                    if idxs.len() != 3 {
                        return Err(MeshError::Parse {
                            line: idx + 1,
                            message: format!("only triangles supported, got {} indices", idxs.len()),
                        });
                    }
                    if idxs.iter().any(|&i| i == 0) {
                        return Err(MeshError::Parse {
                            line: idx + 1,
                            message: "OBJ indices are 1-based".into(),
                        });
                    }
                    faces.push([idxs[0] - 1, idxs[1] - 1, idxs[2] - 1]);
                }
                // Normals, texture coords, groups, materials: ignored.
                _ => {}
            }
        }
        Mesh::new(vertices, faces)
    }

    pub fn save_obj(&self, path: &Path) -> Result<(), MeshError> {
        std::fs::write(path, self.to_obj())?;
        Ok(())
    }

    pub fn load_obj(path: &Path) -> Result<Self, MeshError> {
        Self::from_obj(&std::fs::read_to_string(path)?)
    }
}

/// Moller-Trumbore; returns `(t, u, v)` for hits with `t > 1e-9`.
fn ray_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv_det;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv_det;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&q) * inv_det;
    if t <= 1e-9 {
        return None;
    }
    Some((t, u, v))
}

/// Closest point on a triangle to `p` (Ericson's region walk).
pub fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// UV-sphere triangulation: `rings` latitude bands, `segments` meridians,
/// radius `r`. Closed with pole fans.
pub fn uv_sphere(rings: usize, segments: usize, r: f64) -> Mesh {
    assert!(rings >= 2 && segments >= 3);
    let mut vertices = Vec::new();
    vertices.push(Vector3::new(0.0, r, 0.0));
    for ring in 1..rings {
        let theta = std::f64::consts::PI * ring as f64 / rings as f64;
        for seg in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * seg as f64 / segments as f64;
            vertices.push(Vector3::new(
                r * theta.sin() * phi.cos(),
                r * theta.cos(),
                r * theta.sin() * phi.sin(),
            ));
        }
    }
    vertices.push(Vector3::new(0.0, -r, 0.0));
    let bottom = vertices.len() - 1;
    let idx = |ring: usize, seg: usize| 1 + (ring - 1) * segments + (seg % segments);

    let mut faces = Vec::new();
    for seg in 0..segments {
        faces.push([0, idx(1, seg + 1), idx(1, seg)]);
    }
    for ring in 1..rings - 1 {
        for seg in 0..segments {
            let a = idx(ring, seg);
            let b = idx(ring, seg + 1);
            let c = idx(ring + 1, seg);
            let d = idx(ring + 1, seg + 1);
            faces.push([a, b, c]);
            faces.push([b, d, c]);
        }
    }
    for seg in 0..segments {
        faces.push([bottom, idx(rings - 1, seg), idx(rings - 1, seg + 1)]);
    }
    Mesh::new(vertices, faces).expect("sphere construction is valid")
}
