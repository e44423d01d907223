//! Receive-scalar block.
//!
//! Works with the inverse scalar ā = 1/a. With d_k = |h̄_k|·p_k the AirFL
//! rate depends on ā only through Σ|d_k − ā|², and the aggregation bound
//! reads Σ|d_k − ā|² + σ² ≤ ε0·K²·|ā|². The right-hand side is replaced by
//! its tangent minorant 2Re(conj(ā')ā) − |ā'|², which turns each step into
//! projecting mean(d) onto a disk.

use crate::channel::C64;
use crate::config::NetworkConfig;
use crate::convex::{AffineExpr, Constraint, ConvexProblem, Objective, VariableSpace};
use crate::error::{Error, Result};
use crate::metrics::{hybrid_rate, TransceiverState};
use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveOutcome {
    pub a: C64,
    /// Hybrid rate after every iterate (first entry: start point).
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Aligned effective amplitudes |h̄_k|·p_k of the AirFL users.
pub fn effective_amplitudes(hbar: &[C64], p: &[f64], num_airfl: usize) -> Vec<C64> {
    (0..num_airfl).map(|k| C64::new(hbar[k].norm() * p[k], 0.0)).collect()
}

fn mean_and_spread(d: &[C64]) -> (C64, f64) {
    let m = d.iter().sum::<C64>() / d.len() as f64;
    (m, d.iter().map(|x| (x - m).norm_sqr()).sum())
}

/// Rate-optimal scalar without the aggregation bound: a = K / Σ d_k.
pub fn closed_form_scalar(d: &[C64]) -> Result<C64> {
    let s: C64 = d.iter().sum();
    if d.is_empty() || s.norm_sqr() == 0.0 {
        return Err(Error::DegenerateChannel("AirFL effective amplitudes sum to zero".into()));
    }
    Ok(C64::new(d.len() as f64, 0.0) / s)
}

/// Exact rate-optimal |ā| for aligned amplitudes given through their sums
/// S1 = Σd_k, S2 = Σd_k²: mean(d) projected onto the set where
/// (K − ε0K²)r² − 2S1·r + S2 + σ² ≤ 0. `None` when that set is empty.
pub fn best_receive_gain(k: usize, s1: f64, s2: f64, noise: f64, eps0: f64) -> Option<f64> {
    if k == 0 || !(s1 > 0.0) {
        return None;
    }
    let kf = k as f64;
    let m = s1 / kf;
    if eps0.is_infinite() {
        return Some(m);
    }
    let qa = kf - eps0 * kf * kf;
    let c = s2 + noise;
    let disc = s1 * s1 - qa * c;
    if disc < 0.0 {
        return None;
    }
    // stable form of the smaller positive root
    let low = c / (s1 + disc.sqrt());
    if qa > 0.0 {
        let high = (s1 + disc.sqrt()) / qa;
        Some(m.clamp(low, high))
    } else {
        Some(m.max(low))
    }
}

/// Receive scalar a = 1/r with the exact optimal gain r for fixed powers.
pub fn optimal_scalar(hbar: &[C64], p: &[f64], config: &NetworkConfig) -> Option<C64> {
    let k = config.num_airfl;
    let d: Vec<f64> = (0..k).map(|i| hbar[i].norm() * p[i]).collect();
    let s1: f64 = d.iter().sum();
    let s2: f64 = d.iter().map(|x| x * x).sum();
    best_receive_gain(k, s1, s2, config.noise_power_w, config.mse_tolerance).map(|r| C64::new(1.0 / r, 0.0))
}

/// Residual of the exact aggregation bound at ā: Σ|d − ā|² + σ² − ε0·K²·|ā|².
pub fn mse_residual(d: &[C64], noise: f64, eps0: f64, a_bar: C64) -> f64 {
    let k = d.len() as f64;
    d.iter().map(|x| (x - a_bar).norm_sqr()).sum::<f64>() + noise - eps0 * k * k * a_bar.norm_sqr()
}

/// One SCA step linearized at `prev`, which must satisfy the exact bound.
pub fn sca_step(d: &[C64], noise: f64, eps0: f64, prev: C64) -> C64 {
    let k = d.len() as f64;
    let (m, spread) = mean_and_spread(d);
    let a = eps0 * eps0 * k * k * k * prev.norm_sqr();
    let c = spread + noise - eps0 * k * k * (2.0 * (prev.conj() * m).re - prev.norm_sqr());
    if c <= 0.0 {
        return m;
    }
    if a <= 0.0 || c > a {
        return prev;
    }
    let t = 1.0 - ((a - c) / a).sqrt();
    m + prev * (t * eps0 * k)
}

/// The SCA step as a generic convex program over x = ā/s, where s is the
/// mean magnitude of d (returned alongside).
pub fn receive_subproblem(d: &[C64], noise: f64, eps0: f64, prev: C64) -> (ConvexProblem, f64) {
    let k = d.len() as f64;
    let s = d.iter().map(|x| x.norm()).sum::<f64>() / k;
    let d: Vec<C64> = d.iter().map(|x| x / s).collect();
    let noise = noise / (s * s);
    let prev = prev / s;
    let (m, spread) = mean_and_spread(&d);
    // −K|x − m|²
    let objective = Objective {
        linear: AffineExpr::real(vec![2.0 * k * m.re, 2.0 * k * m.im], -k * m.norm_sqr()),
        log_terms: Vec::new(),
        quadratic: Some(DMatrix::from_diagonal_element(2, 2, 2.0 * k)),
    };
    let lin = -2.0 * k * m - 2.0 * eps0 * k * k * prev;
    let row = Constraint::QuadraticLe {
        q: DMatrix::from_diagonal_element(2, 2, 2.0 * k),
        linear: vec![lin.re, lin.im],
        constant: k * m.norm_sqr() + spread + noise + eps0 * k * k * prev.norm_sqr(),
    };
    (ConvexProblem::new(VariableSpace::ComplexScalar, objective).with(row), s)
}

/// A point meeting the exact bound on the ray through mean(d).
pub fn feasible_start(d: &[C64], noise: f64, eps0: f64) -> Result<C64> {
    let k = d.len() as f64;
    let (m, _) = mean_and_spread(d);
    if m.norm_sqr() == 0.0 {
        return Err(Error::DegenerateChannel("AirFL effective amplitudes average to zero".into()));
    }
    let dir = m / m.norm();
    if mse_residual(d, noise, eps0, m) <= 0.0 {
        return Ok(m);
    }
    if eps0 * k < 1.0 {
        let s = m.norm() / (1.0 - eps0 * k);
        let cand = dir * s;
        if mse_residual(d, noise, eps0, cand) <= 0.0 {
            return Ok(cand);
        }
        return Err(Error::MseInfeasible(format!(
            "no receive scalar meets the aggregation bound {eps0}"
        )));
    }
    let mut s = m.norm();
    for _ in 0..2000 {
        s *= 2.0;
        if mse_residual(d, noise, eps0, dir * s) <= 0.0 {
            return Ok(dir * s);
        }
    }
    Err(Error::MseInfeasible(format!("no receive scalar meets the aggregation bound {eps0}")))
}

/// SCA over the receive scalar with powers and combined channel fixed.
/// `init` is used as the start point when it meets the aggregation bound.
pub fn sca_scalar(hbar: &[C64], p: &[f64], init: Option<C64>, config: &NetworkConfig) -> Result<ReceiveOutcome> {
    let k = config.num_airfl;
    if hbar.len() != config.num_users() {
        return Err(Error::Dimension { expected: config.num_users(), got: hbar.len() });
    }
    if p.len() != config.num_users() {
        return Err(Error::Dimension { expected: config.num_users(), got: p.len() });
    }
    if k == 0 {
        return Ok(ReceiveOutcome { a: C64::new(1.0, 0.0), trace: Vec::new(), iterations: 0 });
    }
    let d = effective_amplitudes(hbar, p, k);
    let rate = |a_bar: C64| -> Result<f64> {
        let state = TransceiverState { p: p.to_vec(), a: a_bar.inv() };
        Ok(hybrid_rate(&state, hbar, config)?.rate_hybrid)
    };
    let eps0 = config.mse_tolerance;
    if eps0.is_infinite() {
        let a = closed_form_scalar(&d)?;
        return Ok(ReceiveOutcome { a, trace: vec![rate(a.inv())?], iterations: 0 });
    }
    let noise = config.noise_power_w;
    // the rate depends on |a| only, so work on the real ray
    let mut a_bar = match init.filter(|a| a.norm_sqr() > 0.0) {
        Some(a) if mse_residual(&d, noise, eps0, C64::new(a.norm(), 0.0).inv()) <= 0.0 => C64::new(a.norm(), 0.0).inv(),
        _ => feasible_start(&d, noise, eps0)?,
    };
    let mut value = rate(a_bar)?;
    let mut trace = vec![value];
    let s = &config.solver;
    let mut iterations = 0;
    while iterations < s.scalar_max_iters {
        iterations += 1;
        let next = sca_step(&d, noise, eps0, a_bar);
        // tangent minorant keeps iterates feasible up to rounding
        if mse_residual(&d, noise, eps0, next) > 1e-9 * noise.max(d.iter().map(|x| x.norm_sqr()).sum()) {
            break;
        }
        let v = rate(next)?;
        if v < value - 1e-12 * value.abs() {
            break;
        }
        let change = (v - value).abs();
        a_bar = next;
        value = v;
        trace.push(v);
        if change <= s.scalar_tol * value.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(ReceiveOutcome { a: a_bar.inv(), trace, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::brute_force_oracle;

    fn re(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    /// Exact nearest bound-feasible ā ≥ 0 to mean(d), for real d.
    fn exact_real(d: &[f64], noise: f64, eps0: f64) -> f64 {
        let k = d.len() as f64;
        let m = d.iter().sum::<f64>() / k;
        let spread: f64 = d.iter().map(|x| (x - m).powi(2)).sum();
        // (K − ε0K²)x² − 2Kmx + Km² + S + σ² ≤ 0
        let qa = k - eps0 * k * k;
        let qb = -2.0 * k * m;
        let qc = k * m * m + spread + noise;
        if spread + noise - eps0 * k * k * m * m <= 0.0 {
            return m;
        }
        let disc = (qb * qb - 4.0 * qa * qc).sqrt();
        let roots = [(-qb - disc) / (2.0 * qa), (-qb + disc) / (2.0 * qa)];
        roots.into_iter().filter(|r| *r > 0.0).min_by(|a, b| (a - m).abs().total_cmp(&(b - m).abs())).unwrap()
    }

    #[test]
    fn unconstrained_scalar_is_inverse_mean() {
        let d = [re(1.0), re(2.0), re(3.0)];
        assert!((closed_form_scalar(&d).unwrap() - re(0.5)).norm() < 1e-15);
        assert!(matches!(closed_form_scalar(&[re(0.0)]), Err(Error::DegenerateChannel(_))));
    }

    #[test]
    fn feasible_mean_is_kept() {
        let d = [re(1.0), re(1.0)];
        assert_eq!(sca_step(&d, 0.01, 0.1, re(1.0)), re(1.0));
    }

    #[test]
    fn step_matches_backend_oracle() {
        let d = [re(0.6), re(1.0), re(1.5), re(0.9)];
        let (noise, eps0) = (0.05, 0.028);
        assert!(mse_residual(&d, noise, eps0, re(1.0)) > 0.0);
        let start = feasible_start(&d, noise, eps0).unwrap();
        let next = sca_step(&d, noise, eps0, start);
        let (prob, s) = receive_subproblem(&d, noise, eps0, start);
        let o = brute_force_oracle(&prob, 1e-6).unwrap();
        assert!((o.point.x[0] * s - next.re).abs() < 1e-5, "{:?} {next}", o.point.x);
        assert!((o.point.x[1] * s - next.im).abs() < 1e-5);
        let b = crate::convex::solve(&prob, 1e-10, 200).unwrap();
        assert!((b.point.x[0] * s - next.re).abs() < 1e-6);
    }

    #[test]
    fn sca_converges_to_exact_projection() {
        let d = [0.6, 1.0, 1.5, 0.9];
        let dc: Vec<C64> = d.iter().map(|&x| re(x)).collect();
        for (noise, eps0) in [(0.05, 0.028), (0.1, 0.031), (5.0, 0.3)] {
            assert!(mse_residual(&dc, noise, eps0, re(1.0)) > 0.0);
            let mut prev = feasible_start(&dc, noise, eps0).unwrap();
            for _ in 0..200 {
                prev = sca_step(&dc, noise, eps0, prev);
            }
            let exact = exact_real(&d, noise, eps0);
            assert!((prev.re - exact).abs() < 1e-7 * exact, "{} vs {exact}", prev.re);
        }
    }

    #[test]
    fn trace_is_monotone_and_feasible() {
        let mut c = NetworkConfig::default().with_users(4, 0);
        c.noise_power_w = 1e-12;
        c.mse_tolerance = 0.08;
        let hbar: Vec<C64> = [1.0, 0.7, 1.3, 0.4].iter().map(|&x| C64::new(x * 3e-6, 0.0)).collect();
        let p: Vec<f64> = c.power_budget_w.iter().map(|b| b.sqrt()).collect();
        let r = sca_scalar(&hbar, &p, None, &c).unwrap();
        assert!(r.trace.len() >= 2);
        for w in r.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
        let mse = crate::metrics::aggregation_mse(&p, r.a, &hbar, c.noise_power_w).unwrap();
        assert!(mse <= c.mse_tolerance * (1.0 + 1e-6));
    }

    #[test]
    fn relaxed_bound_gives_inverse_mean() {
        let mut c = NetworkConfig::default().with_users(2, 0);
        c.mse_tolerance = f64::INFINITY;
        let hbar = vec![C64::new(0.0, 2e-6), C64::new(1e-6, 0.0)];
        let p = vec![1.0, 1.0];
        let r = sca_scalar(&hbar, &p, None, &c).unwrap();
        assert!((r.a - re(2.0 / 3e-6)).norm() < 1e-6 * r.a.norm());
    }

    #[test]
    fn exact_gain_matches_grid_scan() {
        let d = [0.6, 1.0, 1.5, 0.9];
        let dc: Vec<C64> = d.iter().map(|&x| re(x)).collect();
        let (s1, s2) = (d.iter().sum::<f64>(), d.iter().map(|x| x * x).sum::<f64>());
        for (noise, eps0) in [(0.05, 0.028), (0.1, 0.031), (5.0, 0.3), (0.01, 0.2), (0.5, 1.0)] {
            let got = best_receive_gain(4, s1, s2, noise, eps0).unwrap();
            // feasible r closest to the mean maximizes the rate
            let mut best = (f64::INFINITY, 0.0);
            for i in 0..400_000 {
                let r = 0.1 + i as f64 * 1e-5;
                if mse_residual(&dc, noise, eps0, re(r)) <= 0.0 {
                    let spread: f64 = d.iter().map(|x| (x - r).powi(2)).sum();
                    if spread < best.0 {
                        best = (spread, r);
                    }
                }
            }
            assert!((got - best.1).abs() <= 1e-4 * best.1, "{noise} {eps0}: {got} vs {}", best.1);
        }
        assert!(best_receive_gain(4, s1, s2, 0.05, 0.005).is_none());
        assert_eq!(best_receive_gain(4, s1, s2, 0.05, f64::INFINITY), Some(1.0));
    }
}
