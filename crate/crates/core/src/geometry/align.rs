use nalgebra::{Matrix3, Vector3};

use super::transform::nearest_rotation;
use super::{GeometryError, SimilarityTransform};

/// Closed-form least-squares similarity alignment (Umeyama): finds
/// `s, R, t` minimizing `Σ ‖s R src_i + t − dst_i‖²`. With `with_scale`
/// false, `s` is fixed to 1 (rigid alignment).
pub fn umeyama(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    with_scale: bool,
) -> Result<SimilarityTransform, GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::DegenerateAlignment("point list lengths differ"));
    }
    let n = src.len();
    if n < 3 {
        return Err(GeometryError::DegenerateAlignment("fewer than 3 point pairs"));
    }
    let inv_n = 1.0 / n as f64;
    let mu_s: Vector3<f64> = src.iter().sum::<Vector3<f64>>() * inv_n;
    let mu_d: Vector3<f64> = dst.iter().sum::<Vector3<f64>>() * inv_n;

    let mut sigma = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let sc = s - mu_s;
        let dc = d - mu_d;
        sigma += dc * sc.transpose();
        var_s += sc.norm_squared();
    }
    sigma *= inv_n;
    var_s *= inv_n;
    if var_s < 1e-18 {
        return Err(GeometryError::DegenerateAlignment("source points are coincident"));
    }

    let svd = sigma.svd(true, true);
    let sv = svd.singular_values;
    if sv[1] < 1e-12 * sv[0].max(1e-300) {
        return Err(GeometryError::DegenerateAlignment("point configuration is collinear"));
    }
    let u = svd.u.expect("svd with u");
    let vt = svd.v_t.expect("svd with v_t");
    let mut s_fix = Vector3::new(1.0, 1.0, 1.0);
    if (u * vt).determinant() < 0.0 {
        s_fix[2] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&s_fix) * vt;
    let rotation = nearest_rotation(&rotation);

    let scale = if with_scale { (sv.component_mul(&s_fix)).sum() / var_s } else { 1.0 };
    if !(scale.is_finite() && scale > 0.0) {
        return Err(GeometryError::DegenerateAlignment("non-positive recovered scale"));
    }
    let translation = mu_d - scale * (rotation * mu_s);
    SimilarityTransform::new(scale, rotation, translation)
}
