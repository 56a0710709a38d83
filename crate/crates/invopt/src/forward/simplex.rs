//! Dense bounded-variable primal simplex for
//! `min c'x  s.t.  Ax >= b,  l <= x <= u`.
//!
//! `Ax >= b` is converted to equalities with slacks `s >= 0`; a Phase I with
//! artificial variables finds a basic feasible point. Entering and leaving
//! variables follow Bland's rule (lowest index), which makes the returned
//! vertex deterministic and prevents cycling. Sized for small dense
//! instances; the basis inverse is kept explicitly and refreshed
//! periodically.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

const DTOL: f64 = 1e-9; // reduced-cost tolerance
const PTOL: f64 = 1e-10; // pivot-element tolerance
const TIE: f64 = 1e-9; // ratio-test tie tolerance
const REFRESH_EVERY: usize = 64;
const PHASE1_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
}

/// Result of a bounded simplex run.
#[derive(Debug)]
pub struct SimplexOutput {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Dual value per `Ax >= b` row (nonnegative at optimality).
    pub row_duals: Vec<f64>,
    /// Terminal reduced cost per structural variable (box multipliers).
    pub reduced_costs: Vec<f64>,
}

pub struct BoundedSimplex<'a> {
    n: usize,          // structural variables
    m: usize,          // rows
    a: &'a [Vec<f64>], // m x n
    lower: Vec<f64>,   // per variable (structural, slack, artificial)
    upper: Vec<f64>,
    cost: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    beta: Vec<f64>,
    /// Row covered by each artificial variable.
    art_row_of: Vec<usize>,
    pivots: usize,
}

impl<'a> BoundedSimplex<'a> {
    pub fn solve(a: &'a [Vec<f64>], b: &[f64], c: &[f64]) -> Result<SimplexOutput> {
        let m = a.len();
        let n = c.len();
        let mut lower = vec![-1.0; n];
        let mut upper = vec![1.0; n];
        lower.extend(std::iter::repeat_n(0.0, m)); // slacks
        upper.extend(std::iter::repeat_n(f64::INFINITY, m));

        let mut state = vec![VarState::AtLower; n + m];
        let mut basis = Vec::with_capacity(m);
        let mut beta = Vec::with_capacity(m);
        let mut binv = DMatrix::zeros(m, m);
        let mut art_rows = Vec::new();

        // All structural variables start at the lower bound; slack value
        // there is a_j'(-e) - b_j. Rows with negative slack get an
        // artificial variable instead.
        let mut lower_art = Vec::new();
        let mut upper_art = Vec::new();
        for (j, row) in a.iter().enumerate() {
            let s0 = -row.iter().sum::<f64>() - b[j];
            if s0 >= 0.0 {
                basis.push(n + j);
                state[n + j] = VarState::Basic(j);
                beta.push(s0);
                binv[(j, j)] = -1.0; // slack column is -e_j
            } else {
                let art = n + m + art_rows.len();
                art_rows.push(j);
                basis.push(art);
                beta.push(-s0);
                binv[(j, j)] = 1.0;
                lower_art.push(0.0);
                upper_art.push(f64::INFINITY);
            }
        }
        lower.extend(lower_art);
        upper.extend(upper_art);
        state.extend(std::iter::repeat_n(VarState::AtLower, art_rows.len()));
        for (r, &var) in basis.iter().enumerate() {
            state[var] = VarState::Basic(r);
        }

        let n_art = art_rows.len();
        let mut sx = BoundedSimplex {
            n,
            m,
            a,
            lower,
            upper,
            cost: vec![0.0; n + m + n_art],
            state,
            basis,
            binv,
            beta,
            art_row_of: art_rows,
            pivots: 0,
        };

        if n_art > 0 {
            for k in 0..n_art {
                sx.cost[n + m + k] = 1.0;
            }
            sx.run(b)?;
            let phase1: f64 = sx.objective_value();
            if phase1 > PHASE1_TOL {
                return Err(Error::Infeasible);
            }
            // Lock artificials at zero for Phase II.
            for k in 0..n_art {
                sx.lower[n + m + k] = 0.0;
                sx.upper[n + m + k] = 0.0;
            }
        }

        sx.cost = vec![0.0; n + m + n_art];
        sx.cost[..n].copy_from_slice(c);
        sx.run(b)?;
        sx.refresh(b);

        let x: Vec<f64> = (0..n).map(|k| sx.value_of(k)).collect();
        let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
        let duals = sx.duals();
        let reduced: Vec<f64> = (0..n)
            .map(|k| {
                c[k] - (0..m).map(|r| duals[r] * a[r][k]).sum::<f64>()
            })
            .collect();
        Ok(SimplexOutput {
            x,
            objective,
            row_duals: duals,
            reduced_costs: reduced,
        })
    }

    fn value_of(&self, var: usize) -> f64 {
        match self.state[var] {
            VarState::Basic(r) => self.beta[r],
            VarState::AtLower => self.lower[var],
            VarState::AtUpper => self.upper[var],
        }
    }

    fn objective_value(&self) -> f64 {
        (0..self.cost.len())
            .filter(|&v| self.cost[v] != 0.0)
            .map(|v| self.cost[v] * self.value_of(v))
            .sum()
    }

    /// Entry `i` of the constraint column of variable `var`.
    fn col_entry(&self, var: usize, i: usize) -> f64 {
        if var < self.n {
            self.a[i][var]
        } else if var < self.n + self.m {
            if var - self.n == i {
                -1.0
            } else {
                0.0
            }
        } else if self.art_row_of[var - self.n - self.m] == i {
            1.0
        } else {
            0.0
        }
    }

    /// `binv * col(var)` without materializing the column.
    fn fwd_column(&self, var: usize) -> Vec<f64> {
        let m = self.m;
        if var < self.n {
            (0..m)
                .map(|r| (0..m).map(|i| self.binv[(r, i)] * self.a[i][var]).sum())
                .collect()
        } else if var < self.n + self.m {
            let j = var - self.n;
            (0..m).map(|r| -self.binv[(r, j)]).collect()
        } else {
            let j = self.art_row_of[var - self.n - self.m];
            (0..m).map(|r| self.binv[(r, j)]).collect()
        }
    }

    /// Row duals `y = binv' c_B`.
    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        (0..m)
            .map(|i| {
                (0..m)
                    .map(|r| self.cost[self.basis[r]] * self.binv[(r, i)])
                    .sum()
            })
            .collect()
    }

    fn reduced_cost(&self, var: usize, y: &[f64]) -> f64 {
        let dot: f64 = (0..self.m).map(|i| y[i] * self.col_entry(var, i)).sum();
        self.cost[var] - dot
    }

    /// Rebuild the basis inverse and basic values from scratch.
    fn refresh(&mut self, b: &[f64]) {
        let m = self.m;
        if m == 0 {
            return;
        }
        let mut bmat = DMatrix::zeros(m, m);
        for (r, &var) in self.basis.iter().enumerate() {
            for i in 0..m {
                bmat[(i, r)] = self.col_entry(var, i);
            }
        }
        self.binv = bmat
            .try_inverse()
            .expect("basis matrix is nonsingular by construction");
        // b_eff = b - sum over nonbasic columns at their bound values
        let mut beff: Vec<f64> = b.to_vec();
        for var in 0..self.cost.len() {
            let val = match self.state[var] {
                VarState::Basic(_) => continue,
                VarState::AtLower => self.lower[var],
                VarState::AtUpper => self.upper[var],
            };
            if val != 0.0 {
                for i in 0..m {
                    beff[i] -= self.col_entry(var, i) * val;
                }
            }
        }
        for r in 0..m {
            self.beta[r] = (0..m).map(|i| self.binv[(r, i)] * beff[i]).sum();
        }
    }

    fn run(&mut self, b: &[f64]) -> Result<()> {
        let nvars = self.cost.len();
        let iter_cap = 20_000 + 200 * (self.n + self.m);
        for _ in 0..iter_cap {
            let y = self.duals();

            // Bland: lowest-index variable with an improving reduced cost.
            let mut entering = None;
            for var in 0..nvars {
                if self.lower[var] == self.upper[var] {
                    continue;
                }
                match self.state[var] {
                    VarState::Basic(_) => continue,
                    VarState::AtLower => {
                        if self.reduced_cost(var, &y) < -DTOL {
                            entering = Some((var, 1.0));
                            break;
                        }
                    }
                    VarState::AtUpper => {
                        if self.reduced_cost(var, &y) > DTOL {
                            entering = Some((var, -1.0));
                            break;
                        }
                    }
                }
            }
            let Some((enter, dir)) = entering else {
                return Ok(());
            };

            let w = self.fwd_column(enter);
            let swing = self.upper[enter] - self.lower[enter];

            // Ratio test with Bland tie-breaking on the leaving variable.
            let mut best_t = f64::INFINITY;
            let mut best: Option<(usize, bool)> = None; // (row, leaves to upper)
            let mut best_var = usize::MAX;
            for r in 0..self.m {
                let wr = dir * w[r];
                let var = self.basis[r];
                if wr > PTOL {
                    let t = (self.beta[r] - self.lower[var]) / wr;
                    if t < best_t - TIE || (t < best_t + TIE && var < best_var) {
                        best_t = t.min(best_t);
                        best = Some((r, false));
                        best_var = var;
                    }
                } else if wr < -PTOL && self.upper[var].is_finite() {
                    let t = (self.beta[r] - self.upper[var]) / wr;
                    if t < best_t - TIE || (t < best_t + TIE && var < best_var) {
                        best_t = t.min(best_t);
                        best = Some((r, true));
                        best_var = var;
                    }
                }
            }

            if best_t.is_infinite() && swing.is_infinite() {
                return Err(Error::Unbounded);
            }

            if swing < best_t {
                // Bound flip: the entering variable crosses the box without
                // forcing any basic variable to its bound.
                for r in 0..self.m {
                    self.beta[r] -= swing * dir * w[r];
                }
                self.state[enter] = match self.state[enter] {
                    VarState::AtLower => VarState::AtUpper,
                    VarState::AtUpper => VarState::AtLower,
                    VarState::Basic(_) => unreachable!(),
                };
                continue;
            }

            let (rl, to_upper) = best.expect("bounded step has a blocking row");
            let t = best_t.max(0.0);
            for r in 0..self.m {
                self.beta[r] -= t * dir * w[r];
            }
            let entering_value = match self.state[enter] {
                VarState::AtLower => self.lower[enter] + t,
                VarState::AtUpper => self.upper[enter] - t,
                VarState::Basic(_) => unreachable!(),
            };
            let leaving = self.basis[rl];
            self.state[leaving] = if to_upper {
                VarState::AtUpper
            } else {
                VarState::AtLower
            };
            self.basis[rl] = enter;
            self.state[enter] = VarState::Basic(rl);
            self.beta[rl] = entering_value;

            // Product-form update of the basis inverse.
            let wr = w[rl];
            for i in 0..self.m {
                self.binv[(rl, i)] /= wr;
            }
            for r in 0..self.m {
                if r != rl {
                    let f = w[r];
                    if f != 0.0 {
                        for i in 0..self.m {
                            self.binv[(r, i)] -= f * self.binv[(rl, i)];
                        }
                    }
                }
            }

            self.pivots += 1;
            if self.pivots.is_multiple_of(REFRESH_EVERY) {
                self.refresh(b);
            }
        }
        Err(Error::Domain(
            "simplex iteration limit exceeded".to_string(),
        ))
    }
}
