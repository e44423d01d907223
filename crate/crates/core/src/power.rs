//! Transmit-power block: an exact LP for NOMA powers, a DC loop for AirFL
//! powers, and their alternation.
//!
//! Powers are handled as normalized variables y_i = p_i²/P_i ∈ [0, 1].
//! AirFL users pre-rotate, so with c_k = |a|·|h̄_k|·√P_k the aggregation
//! error is Σ(c_k√y_k − 1)², which is convex in y.

use crate::channel::{noma_order, C64};
use crate::config::NetworkConfig;
use crate::convex::{self, AffineExpr, Constraint, ConvexProblem, Objective, Point, Status, VariableSpace};
use crate::error::{ConstraintFamily, Error, Result};
use crate::metrics::{hybrid_rate, RateBreakdown, TransceiverState, FEASIBILITY_SLACK};

/// Default DC starting point, as a fraction of each budget.
pub const DEFAULT_INIT_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct AirflPower {
    /// Amplitudes of the AirFL users.
    pub p: Vec<f64>,
    /// Aggregation error bound β at the returned point.
    pub beta: f64,
    /// Hybrid rate after every accepted DC iterate (first entry: start point).
    pub trace: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    /// Amplitudes of all users, AirFL first.
    pub p: Vec<f64>,
    /// Hybrid rate after every accepted block update.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Breakdown for powers `p` under aligned AirFL products.
fn evaluate(p: &[f64], a_abs: f64, gains: &[f64], config: &NetworkConfig) -> Result<RateBreakdown> {
    let hbar: Vec<C64> = gains.iter().map(|g| C64::new(g.sqrt(), 0.0)).collect();
    let a = if config.num_airfl > 0 { a_abs } else { 1.0 };
    hybrid_rate(&TransceiverState { p: p.to_vec(), a: C64::new(a, 0.0) }, &hbar, config)
}

fn check_gains(gains: &[f64], config: &NetworkConfig) -> Result<()> {
    if gains.len() != config.num_users() {
        return Err(Error::Dimension { expected: config.num_users(), got: gains.len() });
    }
    Ok(())
}

/// Optimal NOMA amplitudes for fixed AirFL amplitudes, in NOMA index order.
pub fn solve_noma_power(gains: &[f64], p_airfl: &[f64], config: &NetworkConfig) -> Result<Vec<f64>> {
    check_gains(gains, config)?;
    let k = config.num_airfl;
    if p_airfl.len() != k {
        return Err(Error::Dimension { expected: k, got: p_airfl.len() });
    }
    let n = config.num_noma;
    if n == 0 {
        return Ok(Vec::new());
    }
    let noise = config.noise_power_w;
    let zeta = config.sinr_threshold();
    let i_k: f64 = (0..k).map(|i| p_airfl[i] * p_airfl[i] * gains[i]).sum::<f64>() / noise;
    let order = noma_order(gains, k);
    let scale: Vec<f64> = order.iter().map(|&u| gains[u] * config.power_budget_w[u] / noise).collect();

    // componentwise-minimal powers meeting every QoS row; first failure names the user
    let mut acc = i_k + 1.0;
    for (j, &u) in order.iter().enumerate() {
        let need = zeta * acc;
        if need > scale[j] * (1.0 + 1e-12) {
            return Err(Error::QosInfeasible { user: u });
        }
        acc += need;
    }

    let mut problem = ConvexProblem::new(VariableSpace::Real(n), Objective::linear(AffineExpr::real(scale.clone(), 0.0)));
    for j in 0..n {
        let mut row = vec![0.0; n];
        row[j] = -scale[j];
        for l in 0..j {
            row[l] = zeta * scale[l];
        }
        problem.constraints.push(Constraint::AffineLe(AffineExpr::real(row, zeta * (i_k + 1.0))));
        let mut lo = vec![0.0; n];
        lo[j] = -1.0;
        problem.constraints.push(Constraint::AffineLe(AffineExpr::real(lo, 0.0)));
        let mut hi = vec![0.0; n];
        hi[j] = 1.0;
        problem.constraints.push(Constraint::AffineLe(AffineExpr::real(hi, -1.0)));
    }
    let sol = convex::solve(&problem, config.solver.backend_tol, config.solver.backend_max_iters)?;
    if sol.status != Status::Optimal {
        return Err(Error::QosInfeasible { user: *order.last().expect("n > 0") });
    }
    let mut p = vec![0.0; n];
    for (j, &u) in order.iter().enumerate() {
        p[u - k] = (sol.point.x[j].clamp(0.0, 1.0) * config.power_budget_w[u]).sqrt();
    }
    Ok(p)
}

struct AirflData {
    k: usize,
    lambda: f64,
    /// g_k·P_k/σ².
    q: Vec<f64>,
    /// |a|·√(g_k·P_k).
    c: Vec<f64>,
    /// |a|²σ².
    ns: f64,
    /// Σ g_n p_n²/σ² over NOMA users.
    i_n: f64,
    /// Per NOMA user in ascending order: (g_n p_n²/σ², prior NOMA power/σ²).
    qos: Vec<(f64, f64)>,
    zeta: f64,
    mse_cap: Option<f64>,
}

impl AirflData {
    fn new(gains: &[f64], a: C64, p: &[f64], config: &NetworkConfig) -> Self {
        let k = config.num_airfl;
        let noise = config.noise_power_w;
        let a_abs = a.norm();
        let q: Vec<f64> = (0..k).map(|i| gains[i] * config.power_budget_w[i] / noise).collect();
        let c: Vec<f64> = (0..k).map(|i| a_abs * (gains[i] * config.power_budget_w[i]).sqrt()).collect();
        let mut prior = 0.0;
        let mut qos = Vec::new();
        for u in noma_order(gains, k) {
            let rx = gains[u] * p[u] * p[u] / noise;
            qos.push((rx, prior));
            prior += rx;
        }
        let mse_cap = config
            .mse_tolerance
            .is_finite()
            .then(|| config.mse_tolerance * (k * k) as f64);
        Self {
            k,
            lambda: config.weight_lambda,
            q,
            c,
            ns: a_abs * a_abs * noise,
            i_n: prior,
            qos,
            zeta: config.sinr_threshold(),
            mse_cap,
        }
    }

    fn distortion(&self, y: &[f64]) -> f64 {
        self.c.iter().zip(y).map(|(c, y)| (c * y.max(0.0).sqrt() - 1.0).powi(2)).sum()
    }

    /// Error for an empty feasible set. QoS rows are loosest at zero AirFL power.
    fn infeasibility(&self) -> Error {
        let zero = vec![0.0; self.k];
        let qos_ok = self.qos.iter().all(|&(rx, prior)| rx >= self.zeta * (prior + 1.0) * (1.0 - FEASIBILITY_SLACK));
        if !qos_ok && !self.feasible(&zero) {
            return Error::ConstraintInfeasible(ConstraintFamily::Qos);
        }
        Error::MseInfeasible("no AirFL power meets the aggregation bound with the QoS rows".into())
    }

    fn feasible(&self, y: &[f64]) -> bool {
        if let Some(cap) = self.mse_cap {
            if self.distortion(y) + self.ns > cap * (1.0 + FEASIBILITY_SLACK) {
                return false;
            }
        }
        let i_k: f64 = self.q.iter().zip(y).map(|(q, y)| q * y).sum();
        self.qos.iter().all(|&(rx, prior)| rx >= self.zeta * (i_k + prior + 1.0) * (1.0 - FEASIBILITY_SLACK))
    }

    /// DC subproblem linearized at y_lin.
    fn subproblem(&self, y_lin: &[f64]) -> ConvexProblem {
        let k = self.k;
        let with_beta = self.lambda > 0.0;
        let dim = if with_beta { k + 1 } else { k };
        let pad = |mut v: Vec<f64>| {
            v.resize(dim, 0.0);
            v
        };
        let beta_lin = self.distortion(y_lin);
        let s_lin: f64 = self.q.iter().zip(y_lin).map(|(q, y)| q * y).sum();

        let mut lin = vec![0.0; dim];
        let mut logs = Vec::new();
        if self.lambda < 1.0 {
            let w = 1.0 - self.lambda;
            logs.push((w, AffineExpr::real(pad(self.q.clone()), self.i_n + 1.0)));
            for i in 0..k {
                lin[i] -= w * self.q[i] / (s_lin + 1.0);
            }
        }
        if with_beta {
            let c2: Vec<f64> = self.c.iter().map(|c| c * c).collect();
            logs.push((self.lambda, AffineExpr::real(pad(c2), self.ns)));
            lin[k] -= self.lambda / (beta_lin + self.ns);
        }
        let objective = Objective { linear: AffineExpr::real(lin, 0.0), log_terms: logs, quadratic: None };
        let mut p = ConvexProblem::new(VariableSpace::Real(dim), objective);
        for i in 0..k {
            let mut lo = vec![0.0; dim];
            lo[i] = -1.0;
            p.constraints.push(Constraint::AffineLe(AffineExpr::real(lo, 0.0)));
            let mut hi = vec![0.0; dim];
            hi[i] = 1.0;
            p.constraints.push(Constraint::AffineLe(AffineExpr::real(hi, -1.0)));
        }
        let roots: Vec<(usize, f64)> = self.c.iter().enumerate().map(|(i, c)| (i, 2.0 * c)).collect();
        let c2 = pad(self.c.iter().map(|c| c * c).collect());
        if with_beta {
            let mut a = c2.clone();
            a[k] = -1.0;
            p.constraints.push(Constraint::RootsLe { affine: AffineExpr::real(a, k as f64), roots: roots.clone() });
        }
        if let Some(cap) = self.mse_cap {
            p.constraints.push(Constraint::RootsLe {
                affine: AffineExpr::real(c2, k as f64 + self.ns - cap),
                roots,
            });
        }
        if self.zeta > 0.0 {
            for &(rx, prior) in &self.qos {
                let a: Vec<f64> = pad(self.q.iter().map(|q| self.zeta * q).collect());
                p.constraints.push(Constraint::AffineLe(AffineExpr::real(a, self.zeta * (prior + 1.0) - rx)));
            }
        }
        let mut x: Vec<f64> = y_lin.iter().map(|y| y.clamp(1e-6, 1.0 - 1e-6)).collect();
        if with_beta {
            x.push(self.distortion(&x) * 1.1 + 1e-3);
        }
        p.start = Some(Point { x, v: None });
        p
    }
}

/// DC iteration for the AirFL amplitudes with NOMA amplitudes fixed.
/// `p` holds every user's amplitude; its AirFL entries are the starting
/// point (`None` starts at half the budget).
pub fn solve_airfl_power(
    gains: &[f64],
    a: C64,
    p: &[f64],
    init: Option<&[f64]>,
    config: &NetworkConfig,
) -> Result<AirflPower> {
    check_gains(gains, config)?;
    let k = config.num_airfl;
    if k == 0 {
        return Ok(AirflPower { p: Vec::new(), beta: 0.0, trace: Vec::new(), iterations: 0 });
    }
    if a.norm_sqr() == 0.0 {
        return Err(Error::Domain("receive scalar must be nonzero".into()));
    }
    let data = AirflData::new(gains, a, p, config);
    let budgets = &config.power_budget_w[..k];
    let mut y: Vec<f64> = match init {
        Some(pa) => pa.iter().zip(budgets).map(|(p, b)| (p * p / b).clamp(0.0, 1.0)).collect(),
        None => vec![DEFAULT_INIT_FRACTION; k],
    };
    let assemble = |y: &[f64]| -> Vec<f64> {
        let mut full = p.to_vec();
        for i in 0..k {
            full[i] = (y[i] * budgets[i]).sqrt();
        }
        full
    };
    let mut feasible = data.feasible(&y);
    let mut value = evaluate(&assemble(&y), a.norm(), gains, config)?.rate_hybrid;
    let mut trace = if feasible { vec![value] } else { Vec::new() };
    let mut iterations = 0;
    let s = &config.solver;
    while iterations < s.power_max_iters {
        iterations += 1;
        let problem = data.subproblem(&y);
        let sol = convex::solve(&problem, s.backend_tol, s.backend_max_iters)?;
        match sol.status {
            Status::Optimal | Status::MaxIter => {}
            Status::Infeasible if !feasible => return Err(data.infeasibility()),
            _ => break,
        }
        let y_new: Vec<f64> = sol.point.x[..k].iter().map(|v| v.clamp(0.0, 1.0)).collect();
        if !data.feasible(&y_new) {
            if !feasible {
                return Err(data.infeasibility());
            }
            break;
        }
        let new_value = evaluate(&assemble(&y_new), a.norm(), gains, config)?.rate_hybrid;
        if feasible && new_value < value - 1e-12 * value.abs() {
            break;
        }
        let change = (new_value - value).abs();
        let was_feasible = feasible;
        y = y_new;
        value = new_value;
        feasible = true;
        trace.push(value);
        if was_feasible && change <= s.power_tol * value.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    if !feasible {
        return Err(data.infeasibility());
    }
    Ok(AirflPower { p: assemble(&y)[..k].to_vec(), beta: data.distortion(&y), trace, iterations })
}

/// Alternates NOMA and AirFL power updates for a fixed receive scalar.
/// `init` holds every user's starting amplitude.
pub fn allocate_power(gains: &[f64], a: C64, init: &[f64], config: &NetworkConfig) -> Result<PowerAllocation> {
    check_gains(gains, config)?;
    if init.len() != config.num_users() {
        return Err(Error::Dimension { expected: config.num_users(), got: init.len() });
    }
    let k = config.num_airfl;
    let n = config.num_noma;
    let a_abs = a.norm();
    if n == 0 {
        let r = solve_airfl_power(gains, a, init, Some(init), config)?;
        return Ok(PowerAllocation { p: r.p, trace: r.trace, iterations: r.iterations });
    }
    if k == 0 {
        let p = solve_noma_power(gains, &[], config)?;
        let v = evaluate(&p, a_abs, gains, config)?.rate_hybrid;
        return Ok(PowerAllocation { p, trace: vec![v], iterations: 1 });
    }
    let mut p = init.to_vec();
    let mut value = evaluate(&p, a_abs, gains, config)?.rate_hybrid;
    let mut trace = vec![value];
    let s = &config.solver;
    if config.min_rate_bps == 0.0 {
        // full NOMA power is optimal whatever the AirFL powers are
        for i in k..k + n {
            p[i] = config.power_budget_w[i].sqrt();
        }
        let r = solve_airfl_power(gains, a, &p, Some(&p[..k]), config)?;
        p[..k].copy_from_slice(&r.p);
        let v = evaluate(&p, a_abs, gains, config)?.rate_hybrid;
        trace.push(v);
        return Ok(PowerAllocation { p, trace, iterations: 1 });
    }
    let mut iterations = 0;
    while iterations < s.power_max_iters {
        iterations += 1;
        let start = value;
        let pn = solve_noma_power(gains, &p[..k], config)?;
        let mut cand = p.clone();
        cand[k..].copy_from_slice(&pn);
        let v = evaluate(&cand, a_abs, gains, config)?.rate_hybrid;
        if v >= value - 1e-12 * value.abs() {
            p = cand;
            value = v;
            trace.push(value);
        }
        let r = solve_airfl_power(gains, a, &p, Some(&p[..k]), config)?;
        let mut cand = p.clone();
        cand[..k].copy_from_slice(&r.p);
        let v = evaluate(&cand, a_abs, gains, config)?.rate_hybrid;
        if v >= value - 1e-12 * value.abs() {
            p = cand;
            value = v;
            trace.push(value);
        }
        if (value - start).abs() <= s.power_tol * value.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(PowerAllocation { p, trace, iterations })
}
