//! Forward problems: the box-and-halfspace LP and the ellipsoid-constrained
//! QP, plus their random instance generators.
//!
//! Both families minimize a linear objective `theta' x`; the optimal
//! solution set is therefore invariant under positive rescaling of `theta`,
//! and the solvers accept any nonzero direction.

mod simplex;

use crate::error::{Error, Result};
use crate::geometry;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use simplex::SimplexOutput;

/// Feasibility / activity tolerance for reported solutions.
pub const ACTIVE_TOL: f64 = 1e-8;

/// `min theta'x  s.t.  Ax >= b, -e <= x <= e`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LpInstance {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl LpInstance {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::InvalidArgument(format!(
                "A has {} rows but b has {} entries",
                a.len(),
                b.len()
            )));
        }
        let n = a.first().map_or(0, Vec::len);
        if a.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidArgument("ragged constraint matrix".into()));
        }
        if !a.is_empty() && n < 2 {
            return Err(Error::InvalidArgument(format!(
                "LP dimension must be >= 2, got {n}"
            )));
        }
        if a.iter().flatten().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite LP data".into()));
        }
        Ok(Self { a, b })
    }

    pub fn n_rows(&self) -> usize {
        self.a.len()
    }
}

/// `min theta'x  s.t.  x'Qx + e'x <= 1` with `Q` symmetric positive definite.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QpInstance {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
}

impl QpInstance {
    pub fn new(q: Vec<Vec<f64>>) -> Result<Self> {
        let n = q.len();
        if n == 0 || q.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidArgument("Q must be square".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if (q[i][j] - q[j][i]).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "Q not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { q })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// A covariate: one forward-problem instance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ForwardInstance {
    Lp(LpInstance),
    Qp(QpInstance),
}

impl ForwardInstance {
    /// Decision dimension; 0 for a box-only LP (no rows to read it from),
    /// in which case the dimension comes from the objective at solve time.
    pub fn dim(&self) -> usize {
        match self {
            ForwardInstance::Lp(lp) => lp.a.first().map_or(0, Vec::len),
            ForwardInstance::Qp(qp) => qp.dim(),
        }
    }

    pub fn solve(&self, theta: &[f64]) -> Result<ForwardSolution> {
        match self {
            ForwardInstance::Lp(lp) => solve_lp(lp, theta),
            ForwardInstance::Qp(qp) => solve_qp(qp, theta),
        }
    }
}

/// Identifier of a constraint active at a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveConstraint {
    /// Row `a_j'x >= b_j` is tight.
    Row(usize),
    /// Lower box face `x_k = -1`.
    Lower(usize),
    /// Upper box face `x_k = +1`.
    Upper(usize),
    /// The QP ellipsoid boundary.
    QpBoundary,
}

/// An optimal decision with its objective value and tight constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    pub x_star: Vec<f64>,
    pub objective: f64,
    pub active_set: Vec<ActiveConstraint>,
}

fn lp_active_set(inst: &LpInstance, x: &[f64]) -> Vec<ActiveConstraint> {
    let mut active = Vec::new();
    for (j, row) in inst.a.iter().enumerate() {
        let residual = geometry::dot(row, x) - inst.b[j];
        if residual.abs() <= ACTIVE_TOL {
            active.push(ActiveConstraint::Row(j));
        }
    }
    for (k, &xk) in x.iter().enumerate() {
        if (xk + 1.0).abs() <= ACTIVE_TOL {
            active.push(ActiveConstraint::Lower(k));
        } else if (xk - 1.0).abs() <= ACTIVE_TOL {
            active.push(ActiveConstraint::Upper(k));
        }
    }
    active
}

/// Solves the LP with a deterministic bounded-variable simplex (Bland's
/// rule), returning one optimal vertex.
pub fn solve_lp(inst: &LpInstance, theta: &[f64]) -> Result<ForwardSolution> {
    let out = solve_lp_detailed(inst, theta)?;
    Ok(out.0)
}

/// LP solve that also exposes the terminal duals (row multipliers and
/// structural reduced costs) for optimality certificates.
pub fn solve_lp_detailed(
    inst: &LpInstance,
    theta: &[f64],
) -> Result<(ForwardSolution, Vec<f64>, Vec<f64>)> {
    let n = theta.len();
    if !inst.a.is_empty() && inst.a[0].len() != n {
        return Err(Error::InvalidArgument(format!(
            "objective has dimension {n}, instance has {}",
            inst.a[0].len()
        )));
    }
    let out = simplex::BoundedSimplex::solve(&inst.a, &inst.b, theta)?;
    let solution = ForwardSolution {
        active_set: lp_active_set(inst, &out.x),
        objective: out.objective,
        x_star: out.x,
    };
    Ok((solution, out.row_duals, out.reduced_costs))
}

/// Cached factorization of a QP instance, reused across many objective
/// directions inside the samplers.
#[derive(Debug, Clone)]
pub struct QpFactors {
    chol: Cholesky<f64, Dyn>,
    /// `Q^{-1} e`
    qinv_e: DVector<f64>,
    /// `e' Q^{-1} e`
    e_qinv_e: f64,
    n: usize,
}

impl QpFactors {
    pub fn new(inst: &QpInstance) -> Result<Self> {
        let n = inst.dim();
        let q = DMatrix::from_fn(n, n, |i, j| inst.q[i][j]);
        let chol = Cholesky::new(q).ok_or(Error::NotPositiveDefinite)?;
        let e = DVector::from_element(n, 1.0);
        let qinv_e = chol.solve(&e);
        let e_qinv_e = e.dot(&qinv_e);
        Ok(Self {
            chol,
            qinv_e,
            e_qinv_e,
            n,
        })
    }

    /// Closed-form minimizer from the KKT system with the boundary active:
    /// `x = -mu Q^{-1} theta - Q^{-1} e / 2`,
    /// `mu = sqrt((1 + e'Q^{-1}e / 4) / (theta'Q^{-1}theta))`.
    pub fn solve(&self, theta: &[f64]) -> Result<ForwardSolution> {
        if theta.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "objective has dimension {}, instance has {}",
                theta.len(),
                self.n
            )));
        }
        let th = DVector::from_column_slice(theta);
        let qinv_theta = self.chol.solve(&th);
        let tqt = th.dot(&qinv_theta);
        if tqt.is_nan() || tqt <= 0.0 {
            return Err(Error::ZeroVector);
        }
        let mu = ((1.0 + self.e_qinv_e / 4.0) / tqt).sqrt();
        let x: Vec<f64> = (0..self.n)
            .map(|i| -mu * qinv_theta[i] - 0.5 * self.qinv_e[i])
            .collect();
        let objective = geometry::dot(theta, &x);
        Ok(ForwardSolution {
            x_star: x,
            objective,
            active_set: vec![ActiveConstraint::QpBoundary],
        })
    }
}

impl QpFactors {
    /// Allocation-free variant of [`QpFactors::solve`]: writes the minimizer
    /// into `out` and returns the objective. `scratch` must have length `n`.
    pub fn solve_into(
        &self,
        theta: &[f64],
        out: &mut [f64],
        scratch: &mut DVector<f64>,
    ) -> Result<f64> {
        if theta.len() != self.n || out.len() != self.n || scratch.len() != self.n {
            return Err(Error::InvalidArgument(
                "dimension mismatch in solve_into".to_string(),
            ));
        }
        for (s, t) in scratch.iter_mut().zip(theta) {
            *s = *t;
        }
        self.chol.solve_mut(scratch);
        let tqt = theta.iter().zip(scratch.iter()).map(|(a, b)| a * b).sum::<f64>();
        if tqt.is_nan() || tqt <= 0.0 {
            return Err(Error::ZeroVector);
        }
        let mu = ((1.0 + self.e_qinv_e / 4.0) / tqt).sqrt();
        let mut objective = 0.0;
        for i in 0..self.n {
            out[i] = -mu * scratch[i] - 0.5 * self.qinv_e[i];
            objective += theta[i] * out[i];
        }
        Ok(objective)
    }
}

/// Solves the ellipsoid-constrained QP in closed form.
pub fn solve_qp(inst: &QpInstance, theta: &[f64]) -> Result<ForwardSolution> {
    QpFactors::new(inst)?.solve(theta)
}

/// Draws an LP instance: rows `a_j = s_j a~_j / ||a~_j||` with
/// `a~_j` standard normal and `s_j ~ Unif(0.7, 1.4)`; a strictly feasible
/// interior point `w ~ Unif([-0.72, 0.72]^n)`; and `b = Aw - delta` with
/// `delta ~ Unif([0.04, 0.28]^m)`.
pub fn generate_lp_instance<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<LpInstance> {
    Ok(generate_lp_instance_with_witness(n, m, rng)?.0)
}

/// Same as [`generate_lp_instance`], also returning the interior witness
/// point that certifies feasibility.
pub fn generate_lp_instance_with_witness<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    rng: &mut R,
) -> Result<(LpInstance, Vec<f64>)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("LP needs n >= 2, got {n}")));
    }
    if m < 1 {
        return Err(Error::InvalidArgument(format!("LP needs m >= 1, got {m}")));
    }
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(m);
    for _ in 0..m {
        let row: Vec<f64> = loop {
            let raw: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let norm = geometry::norm2(&raw);
            if norm > 1e-12 {
                break raw.iter().map(|v| v / norm).collect();
            }
        };
        let scale: f64 = rng.random_range(0.7..1.4);
        a.push(row.iter().map(|v| scale * v).collect::<Vec<f64>>());
    }
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(-0.72..0.72)).collect();
    let b: Vec<f64> = a
        .iter()
        .map(|row| geometry::dot(row, &w) - rng.random_range(0.04..0.28))
        .collect();
    Ok((LpInstance::new(a, b)?, w))
}

/// Draws a QP instance `Q = V' diag(lambda) V` with eigenvalues
/// `lambda_i ~ Unif(1, 5)` and `V` the orthogonal factor of a Gaussian
/// matrix.
pub fn generate_qp_instance<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<QpInstance> {
    if n < 1 {
        return Err(Error::InvalidArgument("QP needs n >= 1".into()));
    }
    let eig: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let v = g.qr().q();
    let lambda = DMatrix::from_diagonal(&DVector::from_vec(eig));
    let q = v.transpose() * lambda * &v;
    // exact symmetry
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (q[(i, j)] + q[(j, i)]));
    QpInstance::new((0..n).map(|i| sym.row(i).iter().copied().collect()).collect())
}
