use nalgebra::{DMatrix, DVector, Vector3};

use super::{GeometryError, RigidTransform};

/// Options for the Levenberg-Marquardt pose refinement loop.
#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 50, gradient_tolerance: 1e-12, step_tolerance: 1e-12 }
    }
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub pose: RigidTransform,
    /// Final cost, half the squared residual norm.
    pub cost: f64,
    /// Initial cost followed by the cost after each accepted step.
    pub accepted_costs: Vec<f64>,
}

/// Minimizes `0.5 ||r(pose)||^2` over the 6-dof pose manifold.
///
/// `eval` returns the residual vector and its Jacobian with respect to a
/// right-multiplied increment `(omega, u)` (see
/// [`RigidTransform::perturbed`]), or `None` when the pose is infeasible
/// (e.g. a point falls behind a camera), which rejects the step.
pub fn refine_pose<F>(
    initial: &RigidTransform,
    options: &LmOptions,
    mut eval: F,
) -> Result<LmOutcome, GeometryError>
where
    F: FnMut(&RigidTransform) -> Option<(DVector<f64>, DMatrix<f64>)>,
{
    let mut pose = *initial;
    let (mut residuals, mut jacobian) =
        eval(&pose).ok_or(GeometryError::OptimizationFailed("initial pose infeasible"))?;
    let mut cost = 0.5 * residuals.norm_squared();
    let mut accepted_costs = vec![cost];

    let mut hessian = jacobian.transpose() * &jacobian;
    let mut gradient = jacobian.transpose() * &residuals;

    // Dimensionless: the damping multiplies each Hessian diagonal entry, so
    // it must not carry the diagonal's scale itself.
    let mut mu = 1e-3;
    let mut nu = 2.0f64;

    for _ in 0..options.max_iterations {
        if gradient.amax() <= options.gradient_tolerance {
            break;
        }

        let mut damped = hessian.clone();
        for i in 0..6 {
            damped[(i, i)] += mu * hessian[(i, i)].max(1e-12);
        }
        let step = match damped.cholesky() {
            Some(chol) => chol.solve(&(-&gradient)),
            None => {
                mu *= nu;
                nu *= 2.0;
                continue;
            }
        };
        if step.norm() <= options.step_tolerance {
            break;
        }

        let omega = Vector3::new(step[0], step[1], step[2]);
        let u = Vector3::new(step[3], step[4], step[5]);
        let candidate = pose.perturbed(&omega, &u);

        let accepted = match eval(&candidate) {
            Some((new_residuals, new_jacobian)) => {
                let new_cost = 0.5 * new_residuals.norm_squared();
                let predicted = 0.5 * step.dot(&(mu * step.component_mul(&hessian.diagonal()) - &gradient));
                let rho = (cost - new_cost) / predicted.max(f64::MIN_POSITIVE);
                if new_cost < cost {
                    pose = candidate;
                    cost = new_cost;
                    residuals = new_residuals;
                    jacobian = new_jacobian;
                    hessian = jacobian.transpose() * &jacobian;
                    gradient = jacobian.transpose() * &residuals;
                    accepted_costs.push(cost);
                    mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                    nu = 2.0;
                    true
                } else {
                    false
                }
            }
            None => false,
        };
        if !accepted {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                break;
            }
        }
    }

    Ok(LmOutcome { pose, cost, accepted_costs })
}
