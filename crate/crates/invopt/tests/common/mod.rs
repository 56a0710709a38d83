//! Independent oracles shared by the integration and acceptance suites.
//! These deliberately avoid the library's solver code paths.

use invopt::forward::{LpInstance, QpInstance};

/// Gaussian elimination with partial pivoting for small dense systems.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(*rhs);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i][col]
                .abs()
                .partial_cmp(&m[j][col].abs())
                .expect("finite pivots")
        })?;
        if m[pivot][col].abs() < 1e-11 {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = m[row][col] / m[col][col];
                if f != 0.0 {
                    for k in col..=n {
                        let sub = f * m[col][k];
                        m[row][k] -= sub;
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Brute-force LP oracle: enumerate all candidate vertices (every choice of
/// `n` constraints among the `m` rows and `2n` box faces treated as
/// equalities), keep the feasible ones, and return the best objective.
pub fn lp_vertex_enumeration(inst: &LpInstance, theta: &[f64]) -> Option<f64> {
    let n = theta.len();
    let m = inst.a.len();
    let total = m + 2 * n;

    // constraint `i` as (normal, rhs) of normal . x = rhs when active
    let constraint = |i: usize| -> (Vec<f64>, f64) {
        if i < m {
            (inst.a[i].clone(), inst.b[i])
        } else if i < m + n {
            let k = i - m;
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            (e, -1.0)
        } else {
            let k = i - m - n;
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            (e, 1.0)
        }
    };

    let feasible = |x: &[f64]| -> bool {
        for (row, &bj) in inst.a.iter().zip(&inst.b) {
            let lhs: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            if lhs < bj - 1e-9 {
                return false;
            }
        }
        x.iter().all(|&v| (-1.0 - 1e-9..=1.0 + 1e-9).contains(&v))
    };

    let mut best: Option<f64> = None;
    let mut choice: Vec<usize> = (0..n).collect();
    loop {
        let rows: Vec<Vec<f64>> = choice.iter().map(|&i| constraint(i).0).collect();
        let rhs: Vec<f64> = choice.iter().map(|&i| constraint(i).1).collect();
        if let Some(x) = solve_dense(&rows, &rhs) {
            if feasible(&x) {
                let obj: f64 = theta.iter().zip(&x).map(|(t, v)| t * v).sum();
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        // next lexicographic combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if choice[i] + (n - i) < total {
                choice[i] += 1;
                for j in i + 1..n {
                    choice[j] = choice[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Numerical-minimization oracle for the 2-D ellipse-constrained problem:
/// sweep a fine grid of x-columns, minimize the linear objective exactly
/// over each feasible column section, and refine around the best column.
pub fn qp_grid_search(inst: &QpInstance, theta: &[f64]) -> f64 {
    assert_eq!(inst.dim(), 2);
    let q = &inst.q;
    let (q11, q12, q22) = (q[0][0], q[0][1], q[1][1]);

    // bounding box from the ellipse center and Q^{-1}
    let det = q11 * q22 - q12 * q12;
    let inv = [
        [q22 / det, -q12 / det],
        [-q12 / det, q11 / det],
    ];
    let cx = -0.5 * (inv[0][0] + inv[0][1]);
    let rho2 = 1.0 + 0.25 * (inv[0][0] + 2.0 * inv[0][1] + inv[1][1]);
    let rx = (rho2 * inv[0][0]).sqrt();

    let column_best = |x: f64| -> Option<f64> {
        // feasible y solve: q22 y^2 + (2 q12 x + 1) y + (q11 x^2 + x - 1) <= 0
        let a = q22;
        let b = 2.0 * q12 * x + 1.0;
        let c = q11 * x * x + x - 1.0;
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        let y_lo = (-b - s) / (2.0 * a);
        let y_hi = (-b + s) / (2.0 * a);
        let f_lo = theta[0] * x + theta[1] * y_lo;
        let f_hi = theta[0] * x + theta[1] * y_hi;
        Some(f_lo.min(f_hi))
    };

    let sweep = |lo: f64, hi: f64, cols: usize| -> (f64, f64) {
        let mut best = f64::INFINITY;
        let mut best_x = lo;
        for i in 0..=cols {
            let x = lo + (hi - lo) * i as f64 / cols as f64;
            if let Some(v) = column_best(x) {
                if v < best {
                    best = v;
                    best_x = x;
                }
            }
        }
        (best_x, best)
    };

    let cols = 2000;
    let (mut x0, mut best) = sweep(cx - rx, cx + rx, cols);
    let mut span = 2.0 * rx / cols as f64;
    for _ in 0..3 {
        let (x1, b1) = sweep(x0 - 2.0 * span, x0 + 2.0 * span, 400);
        if b1 < best {
            best = b1;
            x0 = x1;
        }
        span = 4.0 * span / 400.0;
    }
    best
}

/// Chi-square statistic of pooled circle samples against uniformity over
/// equal-width angular bins.
pub fn circle_chi_square(samples: &[invopt::geometry::UnitVector], bins: usize) -> f64 {
    let mut counts = vec![0usize; bins];
    let width = 2.0 * std::f64::consts::PI / bins as f64;
    for s in samples {
        let angle = s.coords()[1].atan2(s.coords()[0]);
        let mut bin = ((angle + std::f64::consts::PI) / width) as usize;
        if bin >= bins {
            bin = bins - 1;
        }
        counts[bin] += 1;
    }
    let expected = samples.len() as f64 / bins as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}
