//! Convex subproblem contract shared by the solver blocks.
//!
//! Problems are maximizations of
//! `linear(x, V) + Σ w·ln(affine(x, V)) − ½·xᵀQx`
//! over one variable space, subject to convex rows written as `≤ 0`.
//! Linear programs go to an exact simplex; everything else goes to a
//! primal barrier method with a log-det term for the PSD variable.

mod barrier;
mod oracle;
mod simplex;

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::channel::C64;
use crate::error::{Error, Result};

pub use oracle::brute_force_oracle;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableSpace {
    Real(usize),
    /// Stored as `[re, im]`.
    ComplexScalar,
    /// Hermitian n×n matrix with unit diagonal, constrained PSD.
    UnitDiagonalPsd(usize),
}

impl VariableSpace {
    /// Number of real scalar entries in `Point::x`.
    pub fn real_dim(&self) -> usize {
        match *self {
            VariableSpace::Real(d) => d,
            VariableSpace::ComplexScalar => 2,
            VariableSpace::UnitDiagonalPsd(_) => 0,
        }
    }

    pub fn psd_dim(&self) -> usize {
        match *self {
            VariableSpace::UnitDiagonalPsd(n) => n,
            _ => 0,
        }
    }
}

/// `coeffs·x + Re tr(matrix·V) + constant`. `matrix` must be Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub coeffs: Vec<f64>,
    pub matrix: Option<DMatrix<C64>>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn real(coeffs: Vec<f64>, constant: f64) -> Self {
        Self { coeffs, matrix: None, constant }
    }

    pub fn matrix(matrix: DMatrix<C64>, constant: f64) -> Self {
        Self { coeffs: Vec::new(), matrix: Some(matrix), constant }
    }

    pub fn eval(&self, point: &Point) -> f64 {
        let mut s = self.constant;
        for (c, x) in self.coeffs.iter().zip(&point.x) {
            s += c * x;
        }
        if let (Some(a), Some(v)) = (&self.matrix, &point.v) {
            s += trace_product(a, v);
        }
        s
    }

    fn magnitude(&self) -> f64 {
        let mut m = self.constant.abs();
        m = self.coeffs.iter().fold(m, |acc, c| acc.max(c.abs()));
        if let Some(a) = &self.matrix {
            m = a.iter().fold(m, |acc, z| acc.max(z.norm()));
        }
        m
    }

    fn has_variables(&self) -> bool {
        self.coeffs.iter().any(|&c| c != 0.0) || self.matrix.is_some()
    }
}

/// Re tr(A·V) for Hermitian A, V.
pub fn trace_product(a: &DMatrix<C64>, v: &DMatrix<C64>) -> f64 {
    a.iter().zip(v.transpose().iter()).map(|(x, y)| (x * y).re).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub linear: AffineExpr,
    /// (weight > 0, argument) pairs contributing `weight·ln(argument)`.
    pub log_terms: Vec<(f64, AffineExpr)>,
    /// Positive semidefinite Q contributing `−½·xᵀQx`.
    pub quadratic: Option<DMatrix<f64>>,
}

impl Objective {
    pub fn linear(expr: AffineExpr) -> Self {
        Self { linear: expr, log_terms: Vec::new(), quadratic: None }
    }

    pub fn eval(&self, point: &Point) -> f64 {
        let mut s = self.linear.eval(point);
        for (w, arg) in &self.log_terms {
            s += w * arg.eval(point).ln();
        }
        if let Some(q) = &self.quadratic {
            s -= 0.5 * quad_form(q, &point.x);
        }
        s
    }
}

fn quad_form(q: &DMatrix<f64>, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            s += x[i] * q[(i, j)] * x[j];
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// expr ≤ 0.
    AffineLe(AffineExpr),
    /// expr = 0; linear programs only.
    AffineEq(AffineExpr),
    /// ½·xᵀQx + linear·x + constant ≤ 0 with Q positive semidefinite.
    QuadraticLe { q: DMatrix<f64>, linear: Vec<f64>, constant: f64 },
    /// affine(x) − Σ w·√x_i ≤ 0 with w ≥ 0; implies x_i > 0 for listed indices.
    RootsLe { affine: AffineExpr, roots: Vec<(usize, f64)> },
}

impl Constraint {
    /// Constraint function value; positive means violated. Root terms of
    /// negative entries evaluate as +∞.
    pub fn value(&self, point: &Point) -> f64 {
        match self {
            Constraint::AffineLe(e) | Constraint::AffineEq(e) => e.eval(point),
            Constraint::QuadraticLe { q, linear, constant } => {
                let lin: f64 = linear.iter().zip(&point.x).map(|(a, b)| a * b).sum();
                0.5 * quad_form(q, &point.x) + lin + constant
            }
            Constraint::RootsLe { affine, roots } => {
                let mut s = affine.eval(point);
                for &(i, w) in roots {
                    if point.x[i] < 0.0 {
                        return f64::INFINITY;
                    }
                    s -= w * point.x[i].sqrt();
                }
                s
            }
        }
    }

    /// Amount by which the point violates the row (zero if satisfied).
    pub fn violation(&self, point: &Point) -> f64 {
        match self {
            Constraint::AffineEq(e) => e.eval(point).abs(),
            other => other.value(point).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: Vec<f64>,
    pub v: Option<DMatrix<C64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Linear,
    LogSum,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProblem {
    pub space: VariableSpace,
    pub objective: Objective,
    pub constraints: Vec<Constraint>,
    /// Optional starting point; need not be feasible.
    pub start: Option<Point>,
}

impl ConvexProblem {
    pub fn new(space: VariableSpace, objective: Objective) -> Self {
        Self { space, objective, constraints: Vec::new(), start: None }
    }

    pub fn with(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn kind(&self) -> ProblemKind {
        if !self.objective.log_terms.is_empty() {
            ProblemKind::LogSum
        } else if self.objective.quadratic.is_some() {
            ProblemKind::Quadratic
        } else {
            ProblemKind::Linear
        }
    }

    /// Linear objective, affine rows, no PSD variable.
    pub fn is_lp(&self) -> bool {
        self.kind() == ProblemKind::Linear
            && self.space.psd_dim() == 0
            && self
                .constraints
                .iter()
                .all(|c| matches!(c, Constraint::AffineLe(_) | Constraint::AffineEq(_)))
    }

    pub fn max_violation(&self, point: &Point) -> f64 {
        self.constraints.iter().map(|c| c.violation(point)).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.space.real_dim();
        let n = self.space.psd_dim();
        let bad = |msg: String| Err(Error::Solver(format!("malformed problem: {msg}")));
        let check_aff = |e: &AffineExpr, what: &str| -> Result<()> {
            if e.coeffs.len() > d {
                return bad(format!("{what} has {} coefficients for {d} variables", e.coeffs.len()));
            }
            if let Some(m) = &e.matrix {
                if m.nrows() != n || m.ncols() != n {
                    return bad(format!("{what} matrix is {}x{}, expected {n}x{n}", m.nrows(), m.ncols()));
                }
                if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return bad(format!("{what} matrix has non-finite entries"));
                }
            }
            if !e.constant.is_finite() || e.coeffs.iter().any(|c| !c.is_finite()) {
                return bad(format!("{what} has non-finite data"));
            }
            Ok(())
        };
        check_aff(&self.objective.linear, "objective")?;
        for (w, e) in &self.objective.log_terms {
            if !(*w > 0.0 && w.is_finite()) {
                return bad("log-term weights must be positive".into());
            }
            check_aff(e, "log term")?;
        }
        if let Some(q) = &self.objective.quadratic {
            if q.nrows() != d || q.ncols() != d {
                return bad("objective quadratic has wrong size".into());
            }
        }
        for c in &self.constraints {
            match c {
                Constraint::AffineLe(e) | Constraint::AffineEq(e) => check_aff(e, "constraint")?,
                Constraint::QuadraticLe { q, linear, constant } => {
                    if q.nrows() != d || q.ncols() != d || linear.len() > d || !constant.is_finite() {
                        return bad("quadratic constraint has wrong size".into());
                    }
                }
                Constraint::RootsLe { affine, roots } => {
                    check_aff(affine, "root constraint")?;
                    if affine.matrix.is_some() {
                        return bad("root constraints act on real variables only".into());
                    }
                    if roots.iter().any(|&(i, w)| i >= d || !(w >= 0.0)) {
                        return bad("root term index or weight invalid".into());
                    }
                }
            }
        }
        if let Some(s) = &self.start {
            if s.x.len() != d {
                return bad("start point has wrong size".into());
            }
        }
        Ok(())
    }

    /// Plain-text rendering for offline inspection.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let aff = |e: &AffineExpr| -> String {
            let mut s = format!("coeffs={:?} const={:e}", e.coeffs, e.constant);
            if let Some(m) = &e.matrix {
                s += " matrix=[";
                for i in 0..m.nrows() {
                    let row: Vec<String> =
                        (0..m.ncols()).map(|j| format!("{:e}{:+e}i", m[(i, j)].re, m[(i, j)].im)).collect();
                    s += &format!("[{}]", row.join(" "));
                }
                s += "]";
            }
            s
        };
        let _ = writeln!(out, "space {:?}", self.space);
        let _ = writeln!(out, "maximize");
        let _ = writeln!(out, "  linear {}", aff(&self.objective.linear));
        for (w, e) in &self.objective.log_terms {
            let _ = writeln!(out, "  log weight={w:e} {}", aff(e));
        }
        if let Some(q) = &self.objective.quadratic {
            let _ = writeln!(out, "  minus_half_quadratic {:?}", q.as_slice());
        }
        let _ = writeln!(out, "subject to");
        for c in &self.constraints {
            let line = match c {
                Constraint::AffineLe(e) => format!("affine<=0 {}", aff(e)),
                Constraint::AffineEq(e) => format!("affine=0 {}", aff(e)),
                Constraint::QuadraticLe { q, linear, constant } => {
                    format!("quadratic<=0 q={:?} linear={linear:?} const={constant:e}", q.as_slice())
                }
                Constraint::RootsLe { affine, roots } => format!("roots<=0 {} roots={roots:?}", aff(affine)),
            };
            let _ = writeln!(out, "  {line}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendSolution {
    pub point: Point,
    pub objective: f64,
    pub status: Status,
    pub iterations: usize,
    /// Largest row violation at `point`; for infeasible problems, the
    /// phase-one optimum (positive value certifies infeasibility).
    pub primal_residual: f64,
    /// Duality-gap bound at termination (zero for the simplex path).
    pub gap: f64,
    /// Barrier parameter reached; pass back through `WarmStart`.
    pub barrier_param: f64,
}

impl BackendSolution {
    pub fn warm_start(&self) -> WarmStart {
        WarmStart { point: self.point.clone(), barrier_param: self.barrier_param }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub point: Point,
    pub barrier_param: f64,
}

pub fn solve(problem: &ConvexProblem, tolerance: f64, max_iters: usize) -> Result<BackendSolution> {
    problem.validate()?;
    if problem.is_lp() {
        return simplex::solve_lp(problem);
    }
    barrier::solve(problem, tolerance, max_iters, None)
}

/// Resumes the barrier method from a previous solution of the same problem.
pub fn solve_warm(
    problem: &ConvexProblem,
    tolerance: f64,
    max_iters: usize,
    warm: &WarmStart,
) -> Result<BackendSolution> {
    problem.validate()?;
    if problem.is_lp() {
        return simplex::solve_lp(problem);
    }
    barrier::solve(problem, tolerance, max_iters, Some(warm))
}
