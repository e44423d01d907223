//! Primal log-barrier method with an optional unit-diagonal PSD variable.
//!
//! The Newton step for the PSD block keeps diag(Δ) = 0 through multipliers
//! ν and eliminates Δ analytically, so the linear system only has one
//! unknown per real variable, per affine barrier term and per diagonal entry.

use nalgebra::{DMatrix, DVector};

use super::{BackendSolution, Constraint, ConvexProblem, Point, Status, WarmStart};
use crate::channel::C64;
use crate::error::{Error, Result};

const MU: f64 = 10.0;
const NEWTON_TOL: f64 = 1e-10;
const ARMIJO: f64 = 0.25;
const UNBOUNDED: f64 = 1e12;
const PHASE_ONE_BOX: f64 = 1e4;

#[derive(Debug, Clone)]
struct Aff {
    a: Vec<f64>,
    m: Option<DMatrix<C64>>,
    c: f64,
}

impl Aff {
    fn eval(&self, x: &[f64], v: Option<&DMatrix<C64>>) -> f64 {
        let mut s = self.c;
        for (ai, xi) in self.a.iter().zip(x) {
            s += ai * xi;
        }
        if let (Some(m), Some(v)) = (&self.m, v) {
            s += super::trace_product(m, v);
        }
        s
    }

    fn scaled(mut self, f: f64) -> Self {
        self.a.iter_mut().for_each(|x| *x *= f);
        if let Some(m) = &mut self.m {
            *m *= C64::new(f, 0.0);
        }
        self.c *= f;
        self
    }
}

#[derive(Debug, Clone)]
enum Row {
    Affine(Aff),
    Quad { q: DMatrix<f64>, l: Vec<f64>, c: f64 },
    Roots { aff: Aff, roots: Vec<(usize, f64)> },
}

#[derive(Debug, Clone)]
struct Inner {
    d: usize,
    n: usize,
    obj_lin: Aff,
    obj_logs: Vec<(f64, Aff)>,
    obj_quad: Option<DMatrix<f64>>,
    rows: Vec<Row>,
    root_vars: Vec<usize>,
}

fn dense(coeffs: &[f64], d: usize) -> Vec<f64> {
    let mut a = vec![0.0; d];
    a[..coeffs.len()].copy_from_slice(coeffs);
    a
}

fn to_aff(e: &super::AffineExpr, d: usize) -> Aff {
    Aff { a: dense(&e.coeffs, d), m: e.matrix.clone(), c: e.constant }
}

fn pad(q: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(d, d);
    out.view_mut((0, 0), (q.nrows(), q.ncols())).copy_from(q);
    out
}

impl Inner {
    /// Returns `None` when a constant row is violated outright.
    fn from_problem(p: &ConvexProblem) -> Result<Option<Self>> {
        let d = p.space.real_dim();
        let n = p.space.psd_dim();
        let mut rows = Vec::new();
        let mut root_vars = Vec::new();
        for c in &p.constraints {
            match c {
                Constraint::AffineEq(_) => {
                    return Err(Error::Solver("equality rows are only supported for linear programs".into()))
                }
                Constraint::AffineLe(e) => {
                    if !e.has_variables() {
                        if e.constant > 0.0 {
                            return Ok(None);
                        }
                        continue;
                    }
                    let mag = e.magnitude();
                    rows.push(Row::Affine(to_aff(e, d).scaled(1.0 / mag)));
                }
                Constraint::QuadraticLe { q, linear, constant } => {
                    let mag = q.iter().chain(linear).fold(constant.abs(), |acc, x| acc.max(x.abs()));
                    if mag == 0.0 {
                        continue;
                    }
                    let f = 1.0 / mag;
                    rows.push(Row::Quad {
                        q: q * f,
                        l: dense(linear, d).iter().map(|x| x * f).collect(),
                        c: constant * f,
                    });
                }
                Constraint::RootsLe { affine, roots } => {
                    let mag = roots.iter().fold(affine.magnitude(), |acc, &(_, w)| acc.max(w));
                    if mag == 0.0 {
                        continue;
                    }
                    let f = 1.0 / mag;
                    root_vars.extend(roots.iter().map(|&(i, _)| i));
                    rows.push(Row::Roots {
                        aff: to_aff(affine, d).scaled(f),
                        roots: roots.iter().map(|&(i, w)| (i, w * f)).collect(),
                    });
                }
            }
        }
        root_vars.sort_unstable();
        root_vars.dedup();
        Ok(Some(Self {
            d,
            n,
            obj_lin: to_aff(&p.objective.linear, d),
            obj_logs: p.objective.log_terms.iter().map(|(w, e)| (*w, to_aff(e, d))).collect(),
            obj_quad: p.objective.quadratic.clone(),
            rows,
            root_vars,
        }))
    }

    /// minimize s subject to row_j ≤ s and −log_arg ≤ s, over (x, s, V), with
    /// x kept in a wide box around `center` so the centering problems stay bounded.
    fn phase_one(&self, center: &[f64]) -> Self {
        let d = self.d + 1;
        let extend = |aff: &Aff| -> Aff {
            let mut a = aff.a.clone();
            a.push(-1.0);
            Aff { a, m: aff.m.clone(), c: aff.c }
        };
        let mut rows: Vec<Row> = self
            .rows
            .iter()
            .map(|r| match r {
                Row::Affine(aff) => Row::Affine(extend(aff)),
                Row::Quad { q, l, c } => {
                    let mut l = l.clone();
                    l.push(-1.0);
                    Row::Quad { q: pad(q, d), l, c: *c }
                }
                Row::Roots { aff, roots } => Row::Roots { aff: extend(aff), roots: roots.clone() },
            })
            .collect();
        for (_, arg) in &self.obj_logs {
            let mag = arg.a.iter().fold(arg.c.abs(), |acc, x| acc.max(x.abs()));
            let mag = arg.m.as_ref().map_or(mag, |m| m.iter().fold(mag, |acc, z| acc.max(z.norm())));
            rows.push(Row::Affine(extend(&arg.clone().scaled(-1.0 / mag.max(f64::MIN_POSITIVE)))));
        }
        let radius = PHASE_ONE_BOX * center.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
        for (i, &x0) in center.iter().enumerate() {
            for sign in [1.0, -1.0] {
                let mut a = vec![0.0; d];
                a[i] = sign / radius;
                rows.push(Row::Affine(Aff { a, m: None, c: -sign * x0 / radius - 1.0 }));
            }
        }
        let mut a = vec![0.0; d];
        a[self.d] = -1.0;
        Self {
            d,
            n: self.n,
            obj_lin: Aff { a, m: None, c: 0.0 },
            obj_logs: Vec::new(),
            obj_quad: None,
            rows,
            root_vars: self.root_vars.clone(),
        }
    }

    fn barrier_count(&self) -> f64 {
        (self.rows.len() + self.n) as f64
    }

    fn row_value(row: &Row, x: &[f64], v: Option<&DMatrix<C64>>) -> f64 {
        match row {
            Row::Affine(aff) => aff.eval(x, v),
            Row::Quad { q, l, c } => {
                let xv = DVector::from_column_slice(x);
                0.5 * xv.dot(&(q * &xv)) + l.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + c
            }
            Row::Roots { aff, roots } => {
                let mut s = aff.eval(x, None);
                for &(i, w) in roots {
                    if x[i] <= 0.0 {
                        return f64::INFINITY;
                    }
                    s -= w * x[i].sqrt();
                }
                s
            }
        }
    }

    fn objective(&self, x: &[f64], v: Option<&DMatrix<C64>>) -> f64 {
        let mut s = self.obj_lin.eval(x, v);
        for (w, arg) in &self.obj_logs {
            s += w * arg.eval(x, v).ln();
        }
        if let Some(q) = &self.obj_quad {
            let xv = DVector::from_column_slice(x);
            s -= 0.5 * xv.dot(&(q * &xv));
        }
        s
    }

    /// Barrier function −t·obj − Σ ln(−f) − ln det V, or `None` outside the domain.
    fn barrier(&self, t: f64, x: &[f64], v: Option<&DMatrix<C64>>) -> Option<f64> {
        if self.root_vars.iter().any(|&i| x[i] <= 0.0) {
            return None;
        }
        let mut phi = 0.0;
        for r in &self.rows {
            let f = Self::row_value(r, x, v);
            if !(f < 0.0) {
                return None;
            }
            phi -= (-f).ln();
        }
        for (_, arg) in &self.obj_logs {
            if !(arg.eval(x, v) > 0.0) {
                return None;
            }
        }
        if let Some(v) = v {
            let l = cholesky(v)?;
            let logdet: f64 = (0..self.n).map(|i| 2.0 * l[(i, i)].re.ln()).sum();
            phi -= logdet;
        }
        let obj = self.objective(x, v);
        if !obj.is_finite() {
            return None;
        }
        Some(phi - t * obj)
    }

    fn strictly_feasible(&self, x: &[f64], v: Option<&DMatrix<C64>>) -> bool {
        self.barrier(1.0, x, v).is_some()
    }

    /// Newton direction and squared decrement.
    fn newton(&self, t: f64, x: &[f64], v: Option<&DMatrix<C64>>) -> Option<(Vec<f64>, Option<DMatrix<C64>>, f64)> {
        let d = self.d;
        let mut g = DVector::<f64>::zeros(d);
        let mut h = DMatrix::<f64>::zeros(d, d);
        // affine-argument terms: (a, A, φ', φ'')
        let mut terms: Vec<(&Vec<f64>, Option<&DMatrix<C64>>, f64, f64)> = Vec::new();

        for (i, ai) in self.obj_lin.a.iter().enumerate() {
            g[i] -= t * ai;
        }
        if let Some(q) = &self.obj_quad {
            let xv = DVector::from_column_slice(x);
            g += (q * &xv) * t;
            h += q * t;
        }
        for (w, arg) in &self.obj_logs {
            let u = arg.eval(x, v);
            terms.push((&arg.a, arg.m.as_ref(), -t * w / u, t * w / (u * u)));
        }
        for r in &self.rows {
            let f = Self::row_value(r, x, v);
            match r {
                Row::Affine(aff) => terms.push((&aff.a, aff.m.as_ref(), -1.0 / f, 1.0 / (f * f))),
                Row::Quad { q, l, .. } => {
                    let xv = DVector::from_column_slice(x);
                    let grad = q * &xv + DVector::from_column_slice(l);
                    g += &grad / (-f);
                    h += &grad * grad.transpose() / (f * f) + q / (-f);
                }
                Row::Roots { aff, roots } => {
                    let mut grad = DVector::from_column_slice(&aff.a);
                    let mut hd = DMatrix::<f64>::zeros(d, d);
                    for &(i, w) in roots {
                        grad[i] -= w / (2.0 * x[i].sqrt());
                        hd[(i, i)] += w / (4.0 * x[i].powf(1.5));
                    }
                    g += &grad / (-f);
                    h += &grad * grad.transpose() / (f * f) + hd / (-f);
                }
            }
        }
        for &(a, _, dphi, _) in &terms {
            for i in 0..d {
                g[i] += dphi * a[i];
            }
        }

        let Some(v) = v else {
            for &(a, _, _, d2) in &terms {
                let av = DVector::from_column_slice(a);
                h += &av * av.transpose() * d2;
            }
            let dx = solve_dense(h, -&g)?;
            let dec = -g.dot(&dx);
            return Some((dx.as_slice().to_vec(), None, dec));
        };

        let n = self.n;
        let vinv = hermitian_inverse(&cholesky(v)?);
        let mut gv = -vinv;
        if let Some(c) = &self.obj_lin.m {
            gv -= c * C64::new(t, 0.0);
        }
        for &(_, m, dphi, _) in &terms {
            if let Some(m) = m {
                gv += m * C64::new(dphi, 0.0);
            }
        }
        let vgv = v * &gv * v;
        let p: Vec<Option<DMatrix<C64>>> = terms.iter().map(|&(_, m, _, _)| m.map(|m| v * m * v)).collect();
        let s: Vec<f64> = terms.iter().map(|&(_, _, _, d2)| d2.sqrt()).collect();
        let r = terms.len();
        let size = d + r + n;
        let mut mat = DMatrix::<f64>::zeros(size, size);
        let mut rhs = DVector::<f64>::zeros(size);
        for i in 0..d {
            for k in 0..d {
                mat[(i, k)] = h[(i, k)];
            }
            for (l, term) in terms.iter().enumerate() {
                mat[(i, d + l)] = s[l] * term.0[i];
            }
            rhs[i] = -g[i];
        }
        for j in 0..r {
            let row = d + j;
            mat[(row, row)] += 1.0;
            for k in 0..d {
                mat[(row, k)] = -s[j] * terms[j].0[k];
            }
            if let Some(aj) = terms[j].1 {
                for l in 0..r {
                    if let Some(pl) = &p[l] {
                        mat[(row, d + l)] += s[j] * s[l] * super::trace_product(aj, pl);
                    }
                }
                let pj = p[j].as_ref().expect("matrix term has a product");
                for k in 0..n {
                    mat[(row, d + r + k)] = s[j] * pj[(k, k)].re;
                }
                rhs[row] = -s[j] * super::trace_product(aj, &vgv);
            }
        }
        for i in 0..n {
            let row = d + r + i;
            for l in 0..r {
                if let Some(pl) = &p[l] {
                    mat[(row, d + l)] = s[l] * pl[(i, i)].re;
                }
            }
            for k in 0..n {
                mat[(row, d + r + k)] = v[(i, k)].norm_sqr();
            }
            rhs[row] = -vgv[(i, i)].re;
        }
        let sol = solve_dense(mat, rhs)?;
        let mut inner = vgv.clone();
        for l in 0..r {
            if let Some(pl) = &p[l] {
                inner += pl * C64::new(s[l] * sol[d + l], 0.0);
            }
        }
        let mut dv = DMatrix::<C64>::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                dv[(a, b)] = v[(a, b)] * sol[d + r + b];
            }
        }
        inner += dv * v;
        let mut delta = -inner;
        hermitize(&mut delta);
        for i in 0..n {
            delta[(i, i)] = C64::new(0.0, 0.0);
        }
        let dx: Vec<f64> = (0..d).map(|i| sol[i]).collect();
        let dec = -(g.iter().zip(&dx).map(|(a, b)| a * b).sum::<f64>() + super::trace_product(&gv, &delta));
        Some((dx, Some(delta), dec))
    }
}

/// Lower factor of a Hermitian positive definite matrix, reading the lower
/// triangle; `None` on any non-positive or non-finite pivot.
fn cholesky(v: &DMatrix<C64>) -> Option<DMatrix<C64>> {
    let n = v.nrows();
    let mut l = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        let mut d = v[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut s = v[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// (LL^H)^{-1} from the lower factor.
fn hermitian_inverse(l: &DMatrix<C64>) -> DMatrix<C64> {
    let n = l.nrows();
    let mut linv = DMatrix::<C64>::identity(n, n);
    for c in 0..n {
        for i in 0..n {
            let mut s = linv[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * linv[(k, c)];
            }
            linv[(i, c)] = s / l[(i, i)];
        }
    }
    linv.adjoint() * linv
}

fn hermitize(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

fn solve_dense(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    let scale = a.amax().max(1.0);
    let lu = a.clone().lu();
    if let Some(x) = lu.solve(&b) {
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    // tiny diagonal shift for numerically singular systems
    let n = a.nrows();
    let shifted = a + DMatrix::<f64>::identity(n, n) * (1e-12 * scale);
    shifted.lu().solve(&b).filter(|x| x.iter().all(|v| v.is_finite()))
}

struct State {
    x: Vec<f64>,
    v: Option<DMatrix<C64>>,
}

enum Centering {
    Done,
    MaxIter,
    Unbounded,
    /// Phase one reached s < 0.
    EarlyExit,
}

/// Damped Newton centering at fixed t. `early_exit` stops as soon as the
/// last real coordinate (the phase-one slack) becomes negative.
fn center(inner: &Inner, t: f64, st: &mut State, iters: &mut usize, max_iters: usize, early_exit: bool) -> Centering {
    loop {
        if early_exit && st.x[inner.d - 1] < 0.0 {
            return Centering::EarlyExit;
        }
        if *iters >= max_iters {
            return Centering::MaxIter;
        }
        let Some((dx, dv, dec)) = inner.newton(t, &st.x, st.v.as_ref()) else {
            return Centering::Done;
        };

        *iters += 1;
        if !(dec > 0.0) || dec / 2.0 <= NEWTON_TOL {
            return Centering::Done;
        }
        let phi0 = match inner.barrier(t, &st.x, st.v.as_ref()) {
            Some(p) => p,
            None => return Centering::Done,
        };
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let x: Vec<f64> = st.x.iter().zip(&dx).map(|(a, b)| a + alpha * b).collect();
            let v = st.v.as_ref().map(|v| {
                let mut nv = v + dv.as_ref().expect("psd step") * C64::new(alpha, 0.0);
                hermitize(&mut nv);
                for i in 0..nv.nrows() {
                    nv[(i, i)] = C64::new(1.0, 0.0);
                }
                nv
            });
            if let Some(phi) = inner.barrier(t, &x, v.as_ref()) {
                if phi <= phi0 - ARMIJO * alpha * dec {
                    accepted = Some(State { x, v });
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some(next) => *st = next,
            None => return Centering::Done,
        }
        if st.x.iter().any(|x| x.abs() > UNBOUNDED) || inner.objective(&st.x, st.v.as_ref()).abs() > UNBOUNDED {
            return Centering::Unbounded;
        }
    }
}

fn initial_state(inner: &Inner, start: Option<&Point>) -> State {
    let mut x = start.map_or_else(|| vec![0.0; inner.d], |p| p.x.clone());
    for &i in &inner.root_vars {
        if !(x[i] > 0.0) {
            x[i] = 1.0;
        }
    }
    let v = (inner.n > 0).then(|| {
        let candidate = start.and_then(|p| p.v.clone()).filter(|v| {
            v.nrows() == inner.n && (0..inner.n).all(|i| (v[(i, i)].re - 1.0).abs() < 1e-9)
        });
        match candidate {
            Some(v) if cholesky(&v).is_some() => v,
            _ => DMatrix::identity(inner.n, inner.n),
        }
    });
    State { x, v }
}

pub(super) fn solve(
    problem: &ConvexProblem,
    tol: f64,
    max_iters: usize,
    warm: Option<&WarmStart>,
) -> Result<BackendSolution> {
    let d = problem.space.real_dim();
    let Some(inner) = Inner::from_problem(problem)? else {
        return Ok(infeasible(problem, f64::INFINITY, 0));
    };
    let mut iters = 0usize;
    let mut t = 1.0;
    let start = warm.map(|w| &w.point).or(problem.start.as_ref());
    let mut st = initial_state(&inner, start);

    if let Some(w) = warm {
        if inner.strictly_feasible(&st.x, st.v.as_ref()) {
            t = w.barrier_param.max(1.0);
        }
    }

    if !inner.strictly_feasible(&st.x, st.v.as_ref()) {
        let p1 = inner.phase_one(&st.x);
        let worst = inner
            .rows
            .iter()
            .map(|r| Inner::row_value(r, &st.x, st.v.as_ref()))
            .chain(inner.obj_logs.iter().map(|(_, a)| {
                let mag = a.a.iter().fold(a.c.abs(), |acc, x| acc.max(x.abs()));
                let mag = a.m.as_ref().map_or(mag, |m| m.iter().fold(mag, |acc, z| acc.max(z.norm())));
                -a.eval(&st.x, st.v.as_ref()) / mag.max(f64::MIN_POSITIVE)
            }))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut x1 = st.x.clone();
        x1.push(worst.max(0.0) + 1.0);
        let mut s1 = State { x: x1, v: st.v.clone() };
        let m1 = p1.barrier_count();
        let mut t1 = 1.0;
        loop {
            match center(&p1, t1, &mut s1, &mut iters, max_iters, true) {
                Centering::EarlyExit => break,
                Centering::MaxIter => {
                    let slack = s1.x[d];
                    return Ok(BackendSolution {
                        point: Point { x: s1.x[..d].to_vec(), v: s1.v },
                        objective: f64::NAN,
                        status: Status::MaxIter,
                        iterations: iters,
                        primal_residual: slack.max(0.0),
                        gap: f64::INFINITY,
                        barrier_param: t1,
                    });
                }
                Centering::Done => {}
                Centering::Unbounded => {
                    return Err(Error::Solver("phase I centering is unbounded".into()));
                }
            }
            let slack = s1.x[d];
            if slack - m1 / t1 > 0.0 || m1 / t1 < 1e-10 {
                return Ok(infeasible(problem, slack, iters));
            }
            t1 *= MU;
        }
        s1.x.truncate(d);
        st = s1;
    }

    let m = inner.barrier_count();
    loop {
        match center(&inner, t, &mut st, &mut iters, max_iters, false) {
            Centering::Done | Centering::EarlyExit => {}
            Centering::MaxIter => return Ok(finish(problem, st, Status::MaxIter, iters, m / t, t)),
            Centering::Unbounded => return Ok(finish(problem, st, Status::Unbounded, iters, f64::INFINITY, t)),
        }
        let obj = inner.objective(&st.x, st.v.as_ref());
        if m == 0.0 || m / t <= tol * obj.abs().max(1.0) {
            return Ok(finish(problem, st, Status::Optimal, iters, m / t, t));
        }
        t *= MU;
    }
}

fn finish(problem: &ConvexProblem, st: State, status: Status, iters: usize, gap: f64, t: f64) -> BackendSolution {
    let point = Point { x: st.x, v: st.v };
    BackendSolution {
        objective: problem.objective.eval(&point),
        primal_residual: problem.max_violation(&point),
        point,
        status,
        iterations: iters,
        gap,
        barrier_param: t,
    }
}

fn infeasible(problem: &ConvexProblem, residual: f64, iters: usize) -> BackendSolution {
    let n = problem.space.psd_dim();
    BackendSolution {
        point: Point {
            x: vec![0.0; problem.space.real_dim()],
            v: (n > 0).then(|| DMatrix::<C64>::identity(n, n)),
        },
        objective: f64::NAN,
        status: Status::Infeasible,
        iterations: iters,
        primal_residual: residual,
        gap: f64::INFINITY,
        barrier_param: 1.0,
    }
}
