//! Dense two-phase tableau simplex with Bland's rule.

use super::{BackendSolution, Constraint, ConvexProblem, Point, Status};
use crate::error::Result;

const EPS: f64 = 1e-11;

enum Outcome {
    Optimal(Vec<f64>),
    Infeasible(f64),
    Unbounded(Vec<f64>),
}

struct Tableau {
    /// m rows of [coefficients | rhs].
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|x| *x /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (x, &y) in row.iter_mut().zip(&pivot_row) {
                        *x -= f * y;
                    }
                    row[c] = 0.0;
                }
            }
        }
        self.basis[r] = c;
    }

    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.cols]
    }

    /// Maximizes cost·z over columns allowed by `allowed`. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> bool {
        loop {
            // reduced cost r_j = c_j − c_B·B⁻¹A_j; enter on the first positive one
            let mut entering = None;
            for j in 0..self.cols {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let rc = cost[j] - self.rows.iter().zip(&self.basis).map(|(row, &b)| cost[b] * row[j]).sum::<f64>();
                if rc > EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c] > EPS {
                    let ratio = row[self.cols] / row[c];
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - EPS || (ratio <= lr + EPS && self.basis[i] < self.basis[li]) {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }
}

/// maximize c·x subject to A_le·x ≤ b_le, A_eq·x = b_eq, x free.
fn simplex(c: &[f64], le: &[(Vec<f64>, f64)], eq: &[(Vec<f64>, f64)]) -> Outcome {
    let d = c.len();
    let m_le = le.len();
    let m = m_le + eq.len();
    // columns: x⁺ (d), x⁻ (d), slacks (m_le), artificials (m)
    let n_struct = 2 * d + m_le;
    let cols = n_struct + m;
    let mut rows = Vec::with_capacity(m);
    for (i, (a, b)) in le.iter().chain(eq.iter()).enumerate() {
        let mut row = vec![0.0; cols + 1];
        for k in 0..d {
            row[k] = a[k];
            row[d + k] = -a[k];
        }
        if i < m_le {
            row[2 * d + i] = 1.0;
        }
        row[cols] = *b;
        if *b < 0.0 {
            row.iter_mut().for_each(|x| *x = -*x);
        }
        row[n_struct + i] = 1.0;
        rows.push(row);
    }
    let mut tab = Tableau { rows, basis: (n_struct..cols).collect(), cols };

    let mut phase1 = vec![0.0; cols];
    phase1[n_struct..].iter_mut().for_each(|x| *x = -1.0);
    tab.optimize(&phase1, &|_| true);
    let infeasibility: f64 = (0..m).filter(|&r| tab.basis[r] >= n_struct).map(|r| tab.rhs(r)).sum();
    let scale = le.iter().chain(eq.iter()).fold(1.0f64, |acc, (_, b)| acc.max(b.abs()));
    if infeasibility > 1e-9 * scale {
        return Outcome::Infeasible(infeasibility);
    }
    // drive zero-level artificials out of the basis where possible
    for r in 0..m {
        if tab.basis[r] >= n_struct {
            if let Some(c) = (0..n_struct).find(|&j| tab.rows[r][j].abs() > 1e-9) {
                tab.pivot(r, c);
            }
        }
    }

    let mut cost = vec![0.0; cols];
    for k in 0..d {
        cost[k] = c[k];
        cost[d + k] = -c[k];
    }
    let bounded = tab.optimize(&cost, &|j| j < n_struct);
    let mut z = vec![0.0; cols];
    for (r, &b) in tab.basis.iter().enumerate() {
        z[b] = tab.rhs(r);
    }
    let x: Vec<f64> = (0..d).map(|k| z[k] - z[d + k]).collect();
    if bounded {
        Outcome::Optimal(x)
    } else {
        Outcome::Unbounded(x)
    }
}

pub(super) fn solve_lp(problem: &ConvexProblem) -> Result<BackendSolution> {
    let d = problem.space.real_dim();
    let dense = |coeffs: &[f64]| {
        let mut a = vec![0.0; d];
        a[..coeffs.len()].copy_from_slice(coeffs);
        a
    };
    let mut le = Vec::new();
    let mut eq = Vec::new();
    for c in &problem.constraints {
        match c {
            Constraint::AffineLe(e) => le.push((dense(&e.coeffs), -e.constant)),
            Constraint::AffineEq(e) => eq.push((dense(&e.coeffs), -e.constant)),
            _ => unreachable!("solve_lp is only called for linear programs"),
        }
    }
    let cost = dense(&problem.objective.linear.coeffs);
    let (x, status, residual) = match simplex(&cost, &le, &eq) {
        Outcome::Optimal(x) => (x, Status::Optimal, None),
        Outcome::Unbounded(x) => (x, Status::Unbounded, None),
        Outcome::Infeasible(r) => (vec![0.0; d], Status::Infeasible, Some(r)),
    };
    let point = Point { x, v: None };
    let objective = match status {
        Status::Infeasible => f64::NAN,
        Status::Unbounded => f64::INFINITY,
        _ => problem.objective.eval(&point),
    };
    Ok(BackendSolution {
        primal_residual: residual.unwrap_or_else(|| problem.max_violation(&point)),
        point,
        objective,
        status,
        iterations: 0,
        gap: 0.0,
        barrier_param: 1.0,
    })
}
