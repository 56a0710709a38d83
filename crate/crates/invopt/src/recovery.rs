//! Single-observation inverse optimization: recover an objective direction
//! that rationalizes an observed boundary decision, plus the decision and
//! suboptimality loss evaluators.

use crate::error::{Error, Result};
use crate::forward::{ForwardInstance, LpInstance, QpInstance};
use crate::geometry::{self, UnitVector};

/// Activity tolerance on constraint residuals when classifying the observed
/// decision. Observations produced by the objective-space generator are
/// exact solver outputs, so two orders of margin over solver tolerance.
pub const RECOVER_TOL: f64 = 1e-6;

/// One covariate-decision pair.
#[derive(Debug, Clone)]
pub struct Observation {
    pub instance: ForwardInstance,
    pub y: Vec<f64>,
}

impl Observation {
    pub fn new(instance: ForwardInstance, y: Vec<f64>) -> Result<Self> {
        let dim = instance.dim();
        if dim != 0 && dim != y.len() {
            return Err(Error::InvalidArgument(format!(
                "decision has dimension {}, instance has {dim}",
                y.len()
            )));
        }
        Ok(Self { instance, y })
    }
}

/// Recovers a direction in the normal cone of the LP at `y`: the
/// equal-weight sum of `a_j` over active rows, `+e_k` for each active lower
/// box face and `-e_k` for each active upper face, normalized. Any direction
/// interior to this cone makes `y` optimal for the minimization.
pub fn recover_theta_lp(inst: &LpInstance, y: &[f64]) -> Result<UnitVector> {
    let n = y.len();
    let mut cone_sum = vec![0.0; n];
    let mut any_active = false;
    for (row, &bj) in inst.a.iter().zip(&inst.b) {
        if (geometry::dot(row, y) - bj).abs() <= RECOVER_TOL {
            any_active = true;
            for (c, r) in cone_sum.iter_mut().zip(row) {
                *c += r;
            }
        }
    }
    for (k, &yk) in y.iter().enumerate() {
        if (yk + 1.0).abs() <= RECOVER_TOL {
            any_active = true;
            cone_sum[k] += 1.0;
        } else if (yk - 1.0).abs() <= RECOVER_TOL {
            any_active = true;
            cone_sum[k] -= 1.0;
        }
    }
    if !any_active {
        return Err(Error::InteriorPoint);
    }
    geometry::normalize(&cone_sum).map_err(|e| match e {
        Error::ZeroVector => Error::ZeroCone,
        other => other,
    })
}

/// The normalized inward objective direction `normalize(-2Qy - e)` at a
/// point `y`, without the boundary check.
pub fn qp_boundary_normal(inst: &QpInstance, y: &[f64]) -> Result<UnitVector> {
    let mut raw = vec![0.0; inst.dim()];
    for (r, row) in inst.q.iter().enumerate() {
        raw[r] = -2.0 * geometry::dot(row, y) - 1.0;
    }
    geometry::normalize(&raw)
}

/// Recovers the unique direction rationalizing a QP boundary point:
/// `normalize(-2Qy - e)`.
pub fn recover_theta_qp(inst: &QpInstance, y: &[f64]) -> Result<UnitVector> {
    let n = inst.dim();
    if y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "decision has dimension {}, instance has {n}",
            y.len()
        )));
    }
    let mut qy = vec![0.0; n];
    for (i, row) in inst.q.iter().enumerate() {
        qy[i] = geometry::dot(row, y);
    }
    let residual = geometry::dot(y, &qy) + y.iter().sum::<f64>() - 1.0;
    if residual.abs() > RECOVER_TOL {
        return Err(Error::OffBoundary(residual));
    }
    let raw: Vec<f64> = qy.iter().map(|v| -2.0 * v - 1.0).collect();
    geometry::normalize(&raw)
}

/// Recovers a rationalizing direction for either forward family.
pub fn recover_theta(obs: &Observation) -> Result<UnitVector> {
    match &obs.instance {
        ForwardInstance::Lp(lp) => recover_theta_lp(lp, &obs.y),
        ForwardInstance::Qp(qp) => recover_theta_qp(qp, &obs.y),
    }
}

/// Decision loss `||y - x*(u, theta)||` under the solver's deterministic
/// selection. Exact for the QP (singleton solution set); an upper bound for
/// the LP when the optimal face is not a vertex.
pub fn decision_loss(obs: &Observation, theta: &UnitVector) -> Result<f64> {
    let sol = obs.instance.solve(theta.coords())?;
    let diff: Vec<f64> = obs
        .y
        .iter()
        .zip(&sol.x_star)
        .map(|(a, b)| a - b)
        .collect();
    Ok(geometry::norm2(&diff))
}

/// Suboptimality loss `theta'y - theta'x*(u, theta)`; nonnegative whenever
/// `y` is feasible.
pub fn suboptimality_loss(obs: &Observation, theta: &UnitVector) -> Result<f64> {
    suboptimality_loss_dir(obs, theta.coords())
}

/// Suboptimality loss for an arbitrary (possibly unnormalized) direction;
/// scales linearly with the direction's norm.
pub fn suboptimality_loss_dir(obs: &Observation, dir: &[f64]) -> Result<f64> {
    let sol = obs.instance.solve(dir)?;
    Ok(geometry::dot(dir, &obs.y) - sol.objective)
}
