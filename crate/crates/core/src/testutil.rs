//! Shared helpers for unit tests.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;

use crate::geometry::RigidTransform;

pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let axis = Vector3::new(
        rng.gen_range(-1.0..1.0f64),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let axis = if axis.norm() < 1e-6 { Vector3::x() } else { axis.normalize() };
    let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    Rotation3::from_scaled_axis(axis * angle).into_inner()
}

pub fn random_rigid(rng: &mut impl Rng) -> RigidTransform {
    let t = Vector3::new(
        rng.gen_range(-100.0..100.0),
        rng.gen_range(-100.0..100.0),
        rng.gen_range(-100.0..100.0),
    );
    RigidTransform::new(random_rotation(rng), t).unwrap()
}

/// Standard normal sample via Box-Muller.
pub fn gauss(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
