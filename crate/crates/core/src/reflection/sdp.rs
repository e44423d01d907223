use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use super::eval::ScalarPolicy;
use super::lift::LiftedProblemData;
use crate::channel::{noma_order, C64};
use crate::config::NetworkConfig;
use crate::convex::{self, trace_product, AffineExpr, Constraint, ConvexProblem, Objective, Point, Status, VariableSpace};
use crate::error::{ConstraintFamily, Error, Result};
use crate::metrics::TransceiverState;

/// Weight of the identity in the strictly feasible start V = (1−η)V^ℓ + ηI.
const START_BLEND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SdpOutcome {
    pub v: DMatrix<C64>,
    /// Relaxed objective F(V) − G(V) in bit/s after each accepted iterate
    /// (first entry: starting matrix).
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// Eigenvalues of each accepted iterate, descending.
    pub spectra: Vec<Vec<f64>>,
}

/// AirFL part of the relaxed objective, as ln(num + 1) − ln(den + den_const).
enum AirflPieces {
    Absent,
    /// Receive scalar fixed: Σ_kΛ̈_k and Σ_kΛ̂_k over |a|²σ², den_const = K/(|a|²σ²) + 1.
    Fixed { num: DMatrix<C64>, den: DMatrix<C64>, den_const: f64 },
    /// Receive scalar at the mean amplitude: Σd², and Σd² − (Σd)²/K, over σ².
    Refit { num: DMatrix<C64>, den: DMatrix<C64>, coherent: DMatrix<C64> },
}

/// Matrix pieces of the relaxed objective, normalized so every log argument
/// is "signal/noise + 1".
struct Pieces {
    lambda: f64,
    /// Σ_i p_i²Λ̊_i / σ².
    all_rx: DMatrix<C64>,
    /// Σ_k p_k²Λ̊_k / σ².
    airfl_rx: DMatrix<C64>,
    airfl: AirflPieces,
    has_noma: bool,
}

impl Pieces {
    fn new(lifted: &LiftedProblemData, state: &TransceiverState, config: &NetworkConfig, policy: ScalarPolicy) -> Self {
        let n = lifted.dim();
        let k = config.num_airfl;
        let noise = config.noise_power_w;
        let zero = DMatrix::<C64>::zeros(n, n);
        let real = |x: f64| C64::new(x, 0.0);
        let weighted = |range: std::ops::Range<usize>| {
            range.fold(zero.clone(), |acc, i| acc + &lifted.lambda_ring[i] * real(state.p[i] * state.p[i] / noise))
        };
        let sum = |ms: &[DMatrix<C64>]| ms.iter().fold(zero.clone(), |acc, m| acc + m);
        let airfl_rx = weighted(0..k);
        let airfl = if k == 0 {
            AirflPieces::Absent
        } else {
            match policy {
                ScalarPolicy::Fixed => {
                    let an = (state.a.norm_sqr() * noise).max(f64::MIN_POSITIVE);
                    AirflPieces::Fixed {
                        num: sum(&lifted.lambda_ddot) * real(1.0 / an),
                        den: sum(&lifted.lambda_hat) * real(1.0 / an),
                        den_const: k as f64 / an + 1.0,
                    }
                }
                // the relaxation keeps the powers, so tracking reduces to a refit
                ScalarPolicy::Refit | ScalarPolicy::Track => {
                    // Σ_k p_k·e^{jφ_k}Φ̃_k, padded; its quadratic form is (Σd)² at the reference
                    let scale = real(1.0 / state.a.norm().max(f64::MIN_POSITIVE));
                    let mut psi = DVector::<C64>::zeros(n);
                    for x in &lifted.phi_hat {
                        for (i, z) in x.iter().enumerate() {
                            psi[i] += z * scale;
                        }
                    }
                    let coherent = &psi * psi.adjoint() * real(1.0 / noise);
                    let den = &airfl_rx - &coherent * real(1.0 / k as f64);
                    AirflPieces::Refit { num: airfl_rx.clone(), den, coherent }
                }
            }
        };
        Self { lambda: config.weight_lambda, all_rx: weighted(0..config.num_users()), airfl_rx, airfl, has_noma: config.num_noma > 0 }
    }

    fn airfl_terms(&self) -> Option<(&DMatrix<C64>, &DMatrix<C64>, f64)> {
        match &self.airfl {
            AirflPieces::Absent => None,
            AirflPieces::Fixed { num, den, den_const } => Some((num, den, *den_const)),
            AirflPieces::Refit { num, den, .. } => Some((num, den, 1.0)),
        }
    }

    /// F − G in nats.
    fn value(&self, v: &DMatrix<C64>) -> f64 {
        let mut s = 0.0;
        if self.has_noma {
            s += (1.0 - self.lambda) * ((trace_product(&self.all_rx, v) + 1.0).ln() - (trace_product(&self.airfl_rx, v) + 1.0).ln());
        }
        if let Some((num, den, c)) = self.airfl_terms() {
            s += self.lambda * ((trace_product(num, v) + 1.0).ln() - (trace_product(den, v) + c).ln());
        }
        s
    }
}

/// Relaxed objective F(V) − G(V) in bit/s. For rank-one V at the lifting
/// reference it equals the hybrid rate before clamping (under `Refit`, at
/// the unconstrained mean-amplitude scalar).
pub fn relaxed_objective(
    lifted: &LiftedProblemData,
    state: &TransceiverState,
    config: &NetworkConfig,
    v: &DMatrix<C64>,
    policy: ScalarPolicy,
) -> f64 {
    Pieces::new(lifted, state, config, policy).value(v) * config.bandwidth_hz / LN_2
}

#[derive(Clone, Copy, PartialEq)]
enum Rows {
    Ordering,
    OrderingQos,
    All,
}

fn build(
    pieces: &Pieces,
    lifted: &LiftedProblemData,
    state: &TransceiverState,
    config: &NetworkConfig,
    order: &[usize],
    lin: &DMatrix<C64>,
    rows: Rows,
) -> ConvexProblem {
    let n = lifted.dim();
    let k = config.num_airfl;
    let noise = config.noise_power_w;
    let lam = pieces.lambda;
    let real = |x: f64| C64::new(x, 0.0);
    let mut linear = DMatrix::<C64>::zeros(n, n);
    let mut logs = Vec::new();
    if pieces.has_noma && lam < 1.0 {
        logs.push((1.0 - lam, AffineExpr::matrix(pieces.all_rx.clone(), 1.0)));
        let g = trace_product(&pieces.airfl_rx, lin) + 1.0;
        linear -= &pieces.airfl_rx * real((1.0 - lam) / g);
    }
    if let Some((num, den, c)) = pieces.airfl_terms().filter(|_| lam > 0.0) {
        logs.push((lam, AffineExpr::matrix(num.clone(), 1.0)));
        let g = trace_product(den, lin) + c;
        linear -= den * real(lam / g);
    }
    let objective = Objective { linear: AffineExpr::matrix(linear, 0.0), log_terms: logs, quadratic: None };
    let mut p = ConvexProblem::new(VariableSpace::UnitDiagonalPsd(n), objective);

    // decoding order frozen at the linearization point: AirFL below the
    // weakest NOMA user, NOMA users ascending
    let ring = |i: usize| &lifted.lambda_ring[i];
    if let Some(&first) = order.first() {
        for i in 0..k {
            p.constraints.push(Constraint::AffineLe(AffineExpr::matrix((ring(i) - ring(first)) / real(noise), 0.0)));
        }
        for w in order.windows(2) {
            p.constraints.push(Constraint::AffineLe(AffineExpr::matrix((ring(w[0]) - ring(w[1])) / real(noise), 0.0)));
        }
    }
    let zeta = config.sinr_threshold();
    if rows != Rows::Ordering && zeta > 0.0 {
        let mut prior = pieces.airfl_rx.clone();
        for &u in order {
            let own = ring(u) * real(state.p[u] * state.p[u] / noise);
            p.constraints.push(Constraint::AffineLe(AffineExpr::matrix(&prior * real(zeta) - &own, zeta)));
            prior += own;
        }
    }
    let eps0 = config.mse_tolerance;
    if rows == Rows::All && k > 0 && eps0.is_finite() {
        let kf = k as f64;
        match &pieces.airfl {
            AirflPieces::Refit { num, coherent, .. } => {
                // some scalar meets the bound iff (Σd)² ≥ K(1 − ε0K)(Σd² + σ²)
                let f = kf * (1.0 - eps0 * kf);
                if f > 0.0 {
                    p.constraints.push(Constraint::AffineLe(AffineExpr::matrix(num * real(f) - coherent, f)));
                }
            }
            _ => {
                let sum = lifted.lambda_hat.iter().fold(DMatrix::<C64>::zeros(n, n), |acc, m| acc + m);
                let constant = kf + state.a.norm_sqr() * noise - eps0 * kf * kf;
                p.constraints.push(Constraint::AffineLe(AffineExpr::matrix(sum, constant)));
            }
        }
    }
    let start = lin * real(1.0 - START_BLEND) + DMatrix::identity(n, n) * real(START_BLEND);
    p.start = Some(Point { x: Vec::new(), v: Some(start) });
    p
}

fn spectrum(v: &DMatrix<C64>) -> Vec<f64> {
    let mut e: Vec<f64> = v.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(|a, b| b.total_cmp(a));
    e
}

/// DC iteration over the relaxed lifted problem, linearizing the subtracted
/// concave part at each iterate. `v_init` must be feasible (typically the
/// lift of the current reflection).
pub fn solve_relaxed_sdp(
    lifted: &LiftedProblemData,
    state: &TransceiverState,
    config: &NetworkConfig,
    v_init: &DMatrix<C64>,
    policy: ScalarPolicy,
) -> Result<SdpOutcome> {
    let n = lifted.dim();
    if v_init.nrows() != n || v_init.ncols() != n {
        return Err(Error::Dimension { expected: n, got: v_init.nrows() });
    }
    let pieces = Pieces::new(lifted, state, config, policy);
    let k = config.num_airfl;
    let gains: Vec<f64> = lifted.lambda_ring.iter().map(|m| trace_product(m, v_init)).collect();
    let order = noma_order(&gains, k);
    let to_bits = config.bandwidth_hz / LN_2;
    let s = &config.solver;

    let mut v = v_init.clone();
    let mut value = pieces.value(&v);
    let mut trace = vec![value * to_bits];
    let mut spectra = Vec::new();
    let mut iterations = 0;
    while iterations < s.reflection_max_iters {
        iterations += 1;
        let problem = build(&pieces, lifted, state, config, &order, &v, Rows::All);
        let sol = convex::solve(&problem, s.backend_tol, s.backend_max_iters)?;
        match sol.status {
            Status::Optimal | Status::MaxIter => {}
            Status::Infeasible if iterations == 1 => return Err(diagnose(&pieces, lifted, state, config, &order, &v)),
            _ => break,
        }
        let Some(mut next) = sol.point.v else { break };
        for i in 0..n {
            next[(i, i)] = C64::new(1.0, 0.0);
        }
        next = (&next + next.adjoint()) * C64::new(0.5, 0.0);
        let new_value = pieces.value(&next);
        if new_value < value - 1e-9 * value.abs() {
            break;
        }
        let change = (new_value - value).abs();
        v = next;
        value = new_value;
        trace.push(value * to_bits);
        spectra.push(spectrum(&v));
        if change <= s.reflection_tol * value.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(SdpOutcome { v, trace, iterations, spectra })
}

/// Names the first constraint family whose rows alone are infeasible.
fn diagnose(
    pieces: &Pieces,
    lifted: &LiftedProblemData,
    state: &TransceiverState,
    config: &NetworkConfig,
    order: &[usize],
    lin: &DMatrix<C64>,
) -> Error {
    let s = &config.solver;
    for (rows, family) in [(Rows::Ordering, ConstraintFamily::Ordering), (Rows::OrderingQos, ConstraintFamily::Qos)] {
        let problem = build(pieces, lifted, state, config, order, lin, rows);
        if let Ok(sol) = convex::solve(&problem, s.backend_tol, s.backend_max_iters) {
            if sol.status == Status::Infeasible {
                return Error::ConstraintInfeasible(family);
            }
        }
    }
    Error::ConstraintInfeasible(ConstraintFamily::Mse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channels;
    use crate::reflection::lift::{lift, lifted_matrix};

    #[test]
    fn trace_is_nondecreasing_and_starts_at_hybrid_rate() {
        let mut c = NetworkConfig::default().with_users(2, 1);
        c.num_elements = 4;
        c.noise_power_w = 1e-13;
        c.min_rate_bps = 0.0;
        c.mse_tolerance = f64::INFINITY;
        let v: Vec<C64> = vec![C64::new(1.0, 0.0); 4];
        let mut improved = 0;
        for seed in 0..10 {
            let r = sample_channels(&c, seed).unwrap();
            let hbar = crate::channel::combined_channel_v(&r, &v).unwrap();
            let g: Vec<f64> = hbar.iter().map(|h| h.norm_sqr()).collect();
            if !crate::channel::ordering_feasible(&g, 2) {
                continue;
            }
            let d: Vec<C64> = (0..2).map(|i| C64::new(hbar[i].norm() * c.power_budget_w[i].sqrt(), 0.0)).collect();
            let state = TransceiverState::full_power(&c, crate::receive::closed_form_scalar(&d).unwrap());
            let l = lift(&r, &state, &v, 2).unwrap();
            let out = solve_relaxed_sdp(&l, &state, &c, &lifted_matrix(&v), ScalarPolicy::Fixed).unwrap();
            let b = crate::metrics::hybrid_rate(&state, &hbar, &c).unwrap();
            assert!((out.trace[0] - b.rate_hybrid).abs() <= 1e-9 * b.rate_hybrid);
            if out.trace.len() >= 2 {
                improved += 1;
            }
            for w in out.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
            }
        }
        assert!(improved > 0);
    }
}
