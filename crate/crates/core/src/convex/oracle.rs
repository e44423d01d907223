//! Reference solvers for tests: LP vertex enumeration and grid search over
//! at most three scalar dimensions.

use nalgebra::{DMatrix, DVector};

use super::{BackendSolution, Constraint, ConvexProblem, Point, Status, VariableSpace};
use crate::channel::C64;
use crate::error::{Error, Result};

const MAX_GRID_POINTS: usize = 2_000_000;
const FEAS_TOL: f64 = 1e-9;

/// Exhaustive reference solution. LPs are solved by enumerating every
/// vertex; other problems by a grid of spacing `grid_resolution`, refined
/// coarse-to-fine when the full grid would be too large.
pub fn brute_force_oracle(problem: &ConvexProblem, grid_resolution: f64) -> Result<BackendSolution> {
    problem.validate()?;
    if problem.is_lp() {
        return vertex_enumeration(problem);
    }
    grid_search(problem, grid_resolution)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn vertex_enumeration(problem: &ConvexProblem) -> Result<BackendSolution> {
    let d = problem.space.real_dim();
    let rows: Vec<(Vec<f64>, f64, bool)> = problem
        .constraints
        .iter()
        .map(|c| match c {
            Constraint::AffineLe(e) => (e.coeffs.clone(), -e.constant, false),
            Constraint::AffineEq(e) => (e.coeffs.clone(), -e.constant, true),
            _ => unreachable!("linear program"),
        })
        .collect();
    if d > 8 || rows.len() > 24 {
        return Err(Error::Solver("vertex enumeration is limited to small programs".into()));
    }
    let eq: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].2).collect();
    let ineq: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i].2).collect();
    if eq.len() > d {
        return Err(Error::Solver("more equalities than variables".into()));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut count = 0;
    for pick in combinations(ineq.len(), d - eq.len()) {
        let active: Vec<usize> = eq.iter().copied().chain(pick.iter().map(|&i| ineq[i])).collect();
        let mut a = DMatrix::<f64>::zeros(d, d);
        let mut b = DVector::<f64>::zeros(d);
        for (r, &i) in active.iter().enumerate() {
            for (k, &c) in rows[i].0.iter().enumerate() {
                a[(r, k)] = c;
            }
            b[r] = rows[i].1;
        }
        let Some(x) = a.lu().solve(&b) else { continue };
        count += 1;
        let point = Point { x: x.as_slice().to_vec(), v: None };
        if problem.max_violation(&point) > FEAS_TOL {
            continue;
        }
        let obj = problem.objective.eval(&point);
        if best.as_ref().map_or(true, |(bo, _)| obj > *bo) {
            best = Some((obj, point.x));
        }
    }
    Ok(match best {
        Some((objective, x)) => BackendSolution {
            point: Point { x, v: None },
            objective,
            status: Status::Optimal,
            iterations: count,
            primal_residual: 0.0,
            gap: 0.0,
            barrier_param: 1.0,
        },
        None => BackendSolution {
            point: Point { x: vec![0.0; d], v: None },
            objective: f64::NAN,
            status: Status::Infeasible,
            iterations: count,
            primal_residual: f64::INFINITY,
            gap: 0.0,
            barrier_param: 1.0,
        },
    })
}

/// Box bounds for each real variable implied by single-variable affine rows
/// and positive-definite quadratic rows.
fn real_bounds(problem: &ConvexProblem, d: usize) -> Vec<(f64, f64)> {
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); d];
    for c in &problem.constraints {
        match c {
            Constraint::AffineLe(e) if e.matrix.is_none() => {
                let nz: Vec<usize> = (0..e.coeffs.len()).filter(|&i| e.coeffs[i] != 0.0).collect();
                if let [i] = nz[..] {
                    let limit = -e.constant / e.coeffs[i];
                    if e.coeffs[i] > 0.0 {
                        bounds[i].1 = bounds[i].1.min(limit);
                    } else {
                        bounds[i].0 = bounds[i].0.max(limit);
                    }
                }
            }
            Constraint::QuadraticLe { q, linear, constant } => {
                let Some(chol) = q.clone().cholesky() else { continue };
                let mut l = DVector::<f64>::zeros(d);
                for (i, &v) in linear.iter().enumerate() {
                    l[i] = v;
                }
                let center = -chol.solve(&l);
                let level = 0.5 * center.dot(&(q * &center)) - constant;
                if level < 0.0 {
                    continue;
                }
                let qinv = chol.inverse();
                for i in 0..d {
                    let half = (2.0 * level * qinv[(i, i)]).sqrt();
                    bounds[i].0 = bounds[i].0.max(center[i] - half);
                    bounds[i].1 = bounds[i].1.min(center[i] + half);
                }
            }
            _ => {}
        }
    }
    bounds
}

fn point_from(space: VariableSpace, coords: &[f64]) -> Option<Point> {
    match space {
        VariableSpace::Real(_) | VariableSpace::ComplexScalar => Some(Point { x: coords.to_vec(), v: None }),
        VariableSpace::UnitDiagonalPsd(1) => Some(Point { x: vec![], v: Some(DMatrix::identity(1, 1)) }),
        VariableSpace::UnitDiagonalPsd(2) => {
            let off = C64::new(coords[0], coords[1]);
            if off.norm_sqr() > 1.0 {
                return None;
            }
            let one = C64::new(1.0, 0.0);
            Some(Point { x: vec![], v: Some(DMatrix::from_row_slice(2, 2, &[one, off, off.conj(), one])) })
        }
        VariableSpace::UnitDiagonalPsd(_) => None,
    }
}

fn evaluate(problem: &ConvexProblem, coords: &[f64]) -> Option<(f64, Point)> {
    let point = point_from(problem.space, coords)?;
    if problem.max_violation(&point) > FEAS_TOL {
        return None;
    }
    if problem.objective.log_terms.iter().any(|(_, a)| !(a.eval(&point) > 0.0)) {
        return None;
    }
    let obj = problem.objective.eval(&point);
    obj.is_finite().then_some((obj, point))
}

fn grid_search(problem: &ConvexProblem, resolution: f64) -> Result<BackendSolution> {
    let bounds: Vec<(f64, f64)> = match problem.space {
        VariableSpace::Real(d) => real_bounds(problem, d),
        VariableSpace::ComplexScalar => real_bounds(problem, 2),
        VariableSpace::UnitDiagonalPsd(1) => vec![],
        VariableSpace::UnitDiagonalPsd(2) => vec![(-1.0, 1.0), (-1.0, 1.0)],
        VariableSpace::UnitDiagonalPsd(n) => {
            return Err(Error::Solver(format!("grid oracle needs at most 3 free dimensions, PSD size {n} has more")))
        }
    };
    let dims = bounds.len();
    if dims > 3 {
        return Err(Error::Solver(format!("grid oracle needs at most 3 free dimensions, got {dims}")));
    }
    if bounds.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite()) {
        return Err(Error::Solver("grid oracle needs a bounded domain".into()));
    }
    if !(resolution > 0.0) {
        return Err(Error::Solver("grid resolution must be positive".into()));
    }

    let mut boxes = bounds.clone();
    let mut evaluated = 0usize;
    let mut best: Option<(f64, Point, Vec<f64>)> = None;
    loop {
        let full: Vec<usize> = boxes.iter().map(|(lo, hi)| ((hi - lo) / resolution).ceil() as usize + 1).collect();
        let total: usize = full.iter().product::<usize>().max(1);
        let last = total <= MAX_GRID_POINTS;
        let per_dim: Vec<usize> = if last {
            full
        } else {
            let n = (MAX_GRID_POINTS as f64).powf(1.0 / dims as f64).floor() as usize;
            vec![n.max(3); dims]
        };
        let steps: Vec<f64> = boxes
            .iter()
            .zip(&per_dim)
            .map(|((lo, hi), &n)| if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 })
            .collect();
        let count: usize = per_dim.iter().product::<usize>().max(1);
        let mut round_best: Option<(f64, Point, Vec<f64>)> = None;
        let mut coords = vec![0.0; dims];
        for flat in 0..count {
            let mut rem = flat;
            for k in 0..dims {
                let idx = rem % per_dim[k];
                rem /= per_dim[k];
                coords[k] = (boxes[k].0 + idx as f64 * steps[k]).min(boxes[k].1);
            }
            evaluated += 1;
            if let Some((obj, point)) = evaluate(problem, &coords) {
                if round_best.as_ref().map_or(true, |(b, _, _)| obj > *b) {
                    round_best = Some((obj, point, coords.clone()));
                }
            }
        }
        if let Some(rb) = round_best {
            if best.as_ref().map_or(true, |(b, _, _)| rb.0 > *b) {
                best = Some(rb);
            }
        }
        if last {
            break;
        }
        let Some((_, _, center)) = &best else { break };
        boxes = (0..dims)
            .map(|k| {
                let lo = (center[k] - 2.0 * steps[k]).max(bounds[k].0);
                let hi = (center[k] + 2.0 * steps[k]).min(bounds[k].1);
                (lo, hi)
            })
            .collect();
    }
    let d = problem.space.real_dim();
    Ok(match best {
        Some((objective, point, _)) => BackendSolution {
            primal_residual: problem.max_violation(&point),
            point,
            objective,
            status: Status::Optimal,
            iterations: evaluated,
            gap: resolution,
            barrier_param: 1.0,
        },
        None => BackendSolution {
            point: Point { x: vec![0.0; d], v: None },
            objective: f64::NAN,
            status: Status::Infeasible,
            iterations: evaluated,
            primal_residual: f64::INFINITY,
            gap: resolution,
            barrier_param: 1.0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::{AffineExpr, Objective};

    #[test]
    fn one_dimensional_quadratic() {
        // minimize (x − 2)² ⇔ maximize 4x − x² − 4 on [0, 5]
        let mut obj = Objective::linear(AffineExpr::real(vec![4.0], -4.0));
        obj.quadratic = Some(DMatrix::from_element(1, 1, 2.0));
        let p = ConvexProblem::new(VariableSpace::Real(1), obj)
            .with(Constraint::AffineLe(AffineExpr::real(vec![-1.0], 0.0)))
            .with(Constraint::AffineLe(AffineExpr::real(vec![1.0], -5.0)));
        let s = brute_force_oracle(&p, 1e-3).unwrap();
        assert!((s.point.x[0] - 2.0).abs() <= 1e-3);
    }

    #[test]
    fn vertices_of_a_square() {
        let p = ConvexProblem::new(VariableSpace::Real(2), Objective::linear(AffineExpr::real(vec![1.0, 2.0], 0.0)))
            .with(Constraint::AffineLe(AffineExpr::real(vec![1.0, 0.0], -1.0)))
            .with(Constraint::AffineLe(AffineExpr::real(vec![0.0, 1.0], -1.0)))
            .with(Constraint::AffineLe(AffineExpr::real(vec![-1.0, 0.0], 0.0)))
            .with(Constraint::AffineLe(AffineExpr::real(vec![0.0, -1.0], 0.0)));
        let s = brute_force_oracle(&p, 1e-3).unwrap();
        assert_eq!(s.point.x, vec![1.0, 1.0]);
        assert_eq!(s.objective, 3.0);
    }

    #[test]
    fn unbounded_domain_is_refused() {
        let mut obj = Objective::linear(AffineExpr::real(vec![0.0], 0.0));
        obj.quadratic = Some(DMatrix::from_element(1, 1, 1.0));
        let p = ConvexProblem::new(VariableSpace::Real(1), obj);
        assert!(brute_force_oracle(&p, 1e-3).is_err());
        let big = ConvexProblem::new(
            VariableSpace::UnitDiagonalPsd(3),
            Objective::linear(AffineExpr::matrix(DMatrix::identity(3, 3), 0.0)),
        );
        assert!(brute_force_oracle(&big, 1e-3).is_err());
    }
}
