use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x4, Matrix4, Vector2, Vector3};

use super::transform::nearest_rotation;
use super::{refine_pose, skew, CameraIntrinsics, GeometryError, LmOptions, RigidTransform};

/// Matched 3D model points and 2D image observations for pose estimation.
#[derive(Clone, Debug)]
pub struct PointCorrespondences {
    object_points: Vec<Vector3<f64>>,
    image_points: Vec<Vector2<f64>>,
}

impl PointCorrespondences {
    pub fn new(
        object_points: Vec<Vector3<f64>>,
        image_points: Vec<Vector2<f64>>,
    ) -> Result<Self, GeometryError> {
        if object_points.len() != image_points.len() {
            return Err(GeometryError::DegeneratePnp("point list lengths differ"));
        }
        if object_points.len() < 4 {
            return Err(GeometryError::DegeneratePnp("fewer than 4 correspondences"));
        }
        for i in 0..object_points.len() {
            for j in (i + 1)..object_points.len() {
                if (object_points[i] - object_points[j]).norm() < 1e-9 {
                    return Err(GeometryError::DegeneratePnp("duplicate object points"));
                }
            }
        }
        Ok(Self { object_points, image_points })
    }

    pub fn len(&self) -> usize {
        self.object_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.object_points.is_empty()
    }

    pub fn object_points(&self) -> &[Vector3<f64>] {
        &self.object_points
    }

    pub fn image_points(&self) -> &[Vector2<f64>] {
        &self.image_points
    }
}

/// Pose estimate together with its root-mean-square reprojection error in
/// pixels.
#[derive(Clone, Copy, Debug)]
pub struct PnpSolution {
    pub pose: RigidTransform,
    pub reprojection_rms: f64,
}

/// Estimates the camera-from-object pose from 2D-3D correspondences.
///
/// A DLT initialization (specialized to a plane-induced homography when the
/// points are coplanar) is refined by Levenberg-Marquardt on the pixel
/// reprojection error.
pub fn solve_pnp(
    corr: &PointCorrespondences,
    k: &CameraIntrinsics,
) -> Result<PnpSolution, GeometryError> {
    let n = corr.len();
    let centroid: Vector3<f64> = corr.object_points.iter().sum::<Vector3<f64>>() / n as f64;
    let mut centered = DMatrix::zeros(3, n);
    for (i, p) in corr.object_points.iter().enumerate() {
        centered.set_column(i, &(p - centroid));
    }
    let shape = centered.clone().svd(true, false);
    let s = &shape.singular_values;
    if s[1] <= 1e-9 * s[0].max(1.0) {
        return Err(GeometryError::DegeneratePnp("collinear object points"));
    }
    let planar = s[2] <= 1e-6 * s[0];

    let normalized: Vec<Vector2<f64>> =
        corr.image_points.iter().map(|p| k.normalize(p)).collect();

    let init = if planar {
        let basis = shape.u.as_ref().expect("svd with u");
        planar_init(&corr.object_points, &normalized, &centroid, basis)?
    } else {
        dlt_init(&corr.object_points, &normalized)?
    };

    let outcome = refine_pose(&init, &LmOptions::default(), |pose| {
        reprojection_system(k, &corr.object_points, &corr.image_points, pose)
    })?;
    let rms = (2.0 * outcome.cost / n as f64).sqrt();
    Ok(PnpSolution { pose: outcome.pose, reprojection_rms: rms })
}

fn reprojection_system(
    k: &CameraIntrinsics,
    points: &[Vector3<f64>],
    pixels: &[Vector2<f64>],
    pose: &RigidTransform,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let mut r = DVector::zeros(2 * points.len());
    let mut j = DMatrix::zeros(2 * points.len(), 6);
    for (i, (x, u)) in points.iter().zip(pixels).enumerate() {
        let p = pose.apply(x);
        if p.z <= 1e-6 {
            return None;
        }
        r[2 * i] = k.fx() * p.x / p.z + k.cx() - u.x;
        r[2 * i + 1] = k.fy() * p.y / p.z + k.cy() - u.y;
        let dpi = nalgebra::Matrix2x3::new(
            k.fx() / p.z,
            0.0,
            -k.fx() * p.x / (p.z * p.z),
            0.0,
            k.fy() / p.z,
            -k.fy() * p.y / (p.z * p.z),
        );
        let block_w = dpi * (-pose.rotation() * skew(x));
        for c in 0..3 {
            j[(2 * i, c)] = block_w[(0, c)];
            j[(2 * i + 1, c)] = block_w[(1, c)];
            j[(2 * i, 3 + c)] = dpi[(0, c)];
            j[(2 * i + 1, 3 + c)] = dpi[(1, c)];
        }
    }
    Some((r, j))
}

/// Similarity normalization of 2D points: centroid to origin, mean distance
/// to sqrt(2). Returns the 3x3 homogeneous normalizer.
fn normalize_2d(points: &[Vector2<f64>]) -> (Matrix3<f64>, Vec<Vector2<f64>>) {
    let c: Vector2<f64> = points.iter().sum::<Vector2<f64>>() / points.len() as f64;
    let mean_dist =
        points.iter().map(|p| (p - c).norm()).sum::<f64>() / points.len() as f64;
    let s = if mean_dist > 1e-12 { (2.0f64).sqrt() / mean_dist } else { 1.0 };
    let t = Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0);
    (t, points.iter().map(|p| (p - c) * s).collect())
}

fn planar_init(
    object: &[Vector3<f64>],
    normalized: &[Vector2<f64>],
    centroid: &Vector3<f64>,
    basis: &DMatrix<f64>,
) -> Result<RigidTransform, GeometryError> {
    let u: Vector3<f64> = basis.fixed_view::<3, 1>(0, 0).into_owned();
    let v: Vector3<f64> = basis.fixed_view::<3, 1>(0, 1).into_owned();
    let w = u.cross(&v);
    let plane: Vec<Vector2<f64>> =
        object.iter().map(|p| Vector2::new(u.dot(&(p - centroid)), v.dot(&(p - centroid)))).collect();

    let (t_img, img_n) = normalize_2d(normalized);
    let (t_pln, pln_n) = normalize_2d(&plane);

    let n = plane.len();
    let mut m = DMatrix::zeros(2 * n, 9);
    for i in 0..n {
        let (a, b) = (pln_n[i].x, pln_n[i].y);
        let (x, y) = (img_n[i].x, img_n[i].y);
        m.row_mut(2 * i).copy_from_slice(&[a, b, 1.0, 0.0, 0.0, 0.0, -x * a, -x * b, -x]);
        m.row_mut(2 * i + 1).copy_from_slice(&[0.0, 0.0, 0.0, a, b, 1.0, -y * a, -y * b, -y]);
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let h = vt.row(vt.nrows() - 1);
    let h_norm = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_img_inv = t_img.try_inverse().ok_or(GeometryError::DegeneratePnp("singular 2d normalizer"))?;
    let mut hm = t_img_inv * h_norm * t_pln;

    let lambda = 2.0 / (hm.column(0).norm() + hm.column(1).norm());
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(GeometryError::DegeneratePnp("degenerate homography"));
    }
    // The plane origin (object centroid) maps to lambda*h3; it must sit in
    // front of the camera.
    if lambda * hm[(2, 2)] < 0.0 {
        hm = -hm;
    }
    let r1 = hm.column(0) * lambda;
    let r2 = hm.column(1) * lambda;
    let r3 = r1.cross(&r2);
    let r_cam_plane =
        nearest_rotation(&Matrix3::from_columns(&[r1.into_owned(), r2.into_owned(), r3]));
    let t_cam = hm.column(2) * lambda;

    let a_pl = Matrix3::from_rows(&[u.transpose(), v.transpose(), w.transpose()]);
    let rotation = r_cam_plane * a_pl;
    let translation = t_cam - rotation * centroid;
    RigidTransform::new(nearest_rotation(&rotation), translation.into_owned())
}

fn dlt_init(
    object: &[Vector3<f64>],
    normalized: &[Vector2<f64>],
) -> Result<RigidTransform, GeometryError> {
    let n = object.len();
    let c3: Vector3<f64> = object.iter().sum::<Vector3<f64>>() / n as f64;
    let mean_dist = object.iter().map(|p| (p - c3).norm()).sum::<f64>() / n as f64;
    let s3 = if mean_dist > 1e-12 { (3.0f64).sqrt() / mean_dist } else { 1.0 };
    let mut t3 = Matrix4::identity();
    t3[(0, 0)] = s3;
    t3[(1, 1)] = s3;
    t3[(2, 2)] = s3;
    t3.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-s3 * c3));
    let (t2, img_n) = normalize_2d(normalized);

    let mut m = DMatrix::zeros(2 * n, 12);
    for i in 0..n {
        let p = (object[i] - c3) * s3;
        let (x, y) = (img_n[i].x, img_n[i].y);
        m.row_mut(2 * i).copy_from_slice(&[
            p.x, p.y, p.z, 1.0, 0.0, 0.0, 0.0, 0.0, -x * p.x, -x * p.y, -x * p.z, -x,
        ]);
        m.row_mut(2 * i + 1).copy_from_slice(&[
            0.0, 0.0, 0.0, 0.0, p.x, p.y, p.z, 1.0, -y * p.x, -y * p.y, -y * p.z, -y,
        ]);
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let pv = vt.row(vt.nrows() - 1);
    let p_norm = Matrix3x4::from_row_slice(pv.transpose().as_slice());
    let t2_inv = t2.try_inverse().ok_or(GeometryError::DegeneratePnp("singular 2d normalizer"))?;
    let mut p = t2_inv * p_norm * t3;

    let m3 = p.fixed_view::<3, 3>(0, 0).into_owned();
    let det = m3.determinant();
    if det.abs() < 1e-12 {
        return Err(GeometryError::DegeneratePnp("rank-deficient projection"));
    }
    if det < 0.0 {
        p = -p;
    }
    let m3 = p.fixed_view::<3, 3>(0, 0).into_owned();
    let svd3 = m3.svd(true, true);
    let alpha = svd3.singular_values.mean();
    let rotation = nearest_rotation(&m3);
    let translation = p.fixed_view::<3, 1>(0, 3) / alpha;
    RigidTransform::new(rotation, translation.into_owned())
}
