//! Closed-form rate and distortion metrics.
//!
//! `hybrid_rate` is the evaluation used by every solver. It relabels NOMA
//! users by ascending gain and assumes AirFL users pre-rotate their symbols,
//! so the aggregation terms use the aligned products |a|·|h̄_k|·p_k.

use crate::channel::{noma_order, ordering_feasible, C64};
use crate::config::NetworkConfig;
use crate::error::{Error, Result};

/// Relative slack used when checking rate and MSE constraints.
pub const FEASIBILITY_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TransceiverState {
    /// Transmit amplitude per user, AirFL first.
    pub p: Vec<f64>,
    /// BS receive scalar.
    pub a: C64,
}

impl TransceiverState {
    pub fn full_power(config: &NetworkConfig, a: C64) -> Self {
        Self { p: config.power_budget_w.iter().map(|x| x.sqrt()).collect(), a }
    }

    pub fn a_bar(&self) -> Option<C64> {
        (self.a.norm_sqr() > 0.0).then(|| self.a.inv())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateBreakdown {
    /// Per NOMA user, in index order.
    pub sinr: Vec<f64>,
    pub rate_noma_user: Vec<f64>,
    pub rate_noma_sum: f64,
    /// Zero when there are no AirFL users.
    pub mse: f64,
    pub signal_power: f64,
    pub rate_airfl: f64,
    /// True when the raw computation rate was negative and clamped to zero.
    pub airfl_clamped: bool,
    pub rate_hybrid: f64,
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

/// SINR of NOMA user `n` (global index) with every lower-indexed user,
/// AirFL included, treated as interference.
pub fn noma_sinr(n: usize, p: &[f64], gains: &[f64], noise: f64, num_airfl: usize) -> Result<f64> {
    check_len(gains.len(), p.len())?;
    if n < num_airfl || n >= gains.len() {
        return Err(Error::Domain(format!("user {n} is not a NOMA user")));
    }
    let interference: f64 = (0..n).map(|i| p[i] * p[i] * gains[i]).sum();
    Ok(p[n] * p[n] * gains[n] / (interference + noise))
}

pub fn noma_rate(sinr: f64, bandwidth: f64) -> f64 {
    bandwidth * sinr.ln_1p() / std::f64::consts::LN_2
}

/// Sum of per-user NOMA rates in index order.
pub fn noma_sum_rate(p: &[f64], gains: &[f64], num_airfl: usize, noise: f64, bandwidth: f64) -> Result<f64> {
    (num_airfl..gains.len())
        .map(|n| noma_sinr(n, p, gains, noise, num_airfl).map(|s| noma_rate(s, bandwidth)))
        .sum()
}

/// B·log₂(1 + I_N/(I_K + σ²)); equal to the per-user sum for any NOMA order.
pub fn noma_sum_rate_telescoped(p: &[f64], gains: &[f64], num_airfl: usize, noise: f64, bandwidth: f64) -> f64 {
    let power = |r: std::ops::Range<usize>| -> f64 { r.map(|i| p[i] * p[i] * gains[i]).sum() };
    let i_k = power(0..num_airfl);
    let i_n = power(num_airfl..gains.len());
    noma_rate(i_n / (i_k + noise), bandwidth)
}

fn aggregation_terms(p: &[f64], a: C64, hbar: &[C64], noise: f64) -> Result<(f64, f64)> {
    check_len(hbar.len(), p.len())?;
    if hbar.is_empty() {
        return Err(Error::Domain("aggregation needs at least one AirFL user".into()));
    }
    if a.norm_sqr() == 0.0 {
        return Err(Error::Domain("receive scalar must be nonzero".into()));
    }
    let noise_term = a.norm_sqr() * noise;
    let mut distortion = noise_term;
    let mut signal = noise_term;
    for (h, &pk) in hbar.iter().zip(p) {
        let prod = a * h * pk;
        distortion += (prod - 1.0).norm_sqr();
        signal += prod.norm_sqr();
    }
    Ok((distortion, signal))
}

/// (1/K²)·(Σ|a·h̄_k·p_k − 1|² + |a|²σ²).
pub fn aggregation_mse(p: &[f64], a: C64, hbar: &[C64], noise: f64) -> Result<f64> {
    let k = hbar.len() as f64;
    aggregation_terms(p, a, hbar, noise).map(|(d, _)| d / (k * k))
}

/// E|ŝ|² = Σ|a·h̄_k·p_k|² + |a|²σ².
pub fn received_signal_power(p: &[f64], a: C64, hbar: &[C64], noise: f64) -> Result<f64> {
    aggregation_terms(p, a, hbar, noise).map(|(_, s)| s)
}

/// B·log₂(E|ŝ|² / (K²·MSE)) without clamping; may be negative.
pub fn airfl_rate_raw(p: &[f64], a: C64, hbar: &[C64], noise: f64, bandwidth: f64) -> Result<f64> {
    let (distortion, signal) = aggregation_terms(p, a, hbar, noise)?;
    if distortion == 0.0 {
        return Err(Error::Domain("zero aggregation error".into()));
    }
    Ok(bandwidth * (signal / distortion).log2())
}

/// Computation rate, clamped at zero.
pub fn airfl_rate(p: &[f64], a: C64, hbar: &[C64], noise: f64, bandwidth: f64) -> Result<f64> {
    airfl_rate_raw(p, a, hbar, noise, bandwidth).map(|r| r.max(0.0))
}

/// Full rate breakdown for a transceiver and combined channel.
pub fn hybrid_rate(state: &TransceiverState, hbar: &[C64], config: &NetworkConfig) -> Result<RateBreakdown> {
    let k = config.num_airfl;
    check_len(config.num_users(), hbar.len())?;
    check_len(config.num_users(), state.p.len())?;
    let noise = config.noise_power_w;
    let bw = config.bandwidth_hz;
    let gains: Vec<f64> = hbar.iter().map(|h| h.norm_sqr()).collect();
    let p = &state.p;

    let mut interference: f64 = (0..k).map(|i| p[i] * p[i] * gains[i]).sum();
    let mut sinr = vec![0.0; config.num_noma];
    let mut rate_noma_user = vec![0.0; config.num_noma];
    for n in noma_order(&gains, k) {
        let rx = p[n] * p[n] * gains[n];
        let s = rx / (interference + noise);
        sinr[n - k] = s;
        rate_noma_user[n - k] = noma_rate(s, bw);
        interference += rx;
    }
    let rate_noma_sum = rate_noma_user.iter().sum();

    let (mse, signal_power, raw) = if k > 0 {
        let aligned: Vec<C64> = hbar[..k].iter().map(|h| C64::new(h.norm(), 0.0)).collect();
        let a = C64::new(state.a.norm(), 0.0);
        let (d, s) = aggregation_terms(&p[..k], a, &aligned, noise)?;
        (d / (k * k) as f64, s, bw * (s / d).log2())
    } else {
        (0.0, 0.0, 0.0)
    };
    let rate_airfl = raw.max(0.0);
    let lambda = config.weight_lambda;
    Ok(RateBreakdown {
        sinr,
        rate_noma_user,
        rate_noma_sum,
        mse,
        signal_power,
        rate_airfl,
        airfl_clamped: raw < 0.0,
        rate_hybrid: (1.0 - lambda) * rate_noma_sum + lambda * rate_airfl,
    })
}

/// Which original constraints a point satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Feasibility {
    pub power: bool,
    pub ordering: bool,
    pub qos: bool,
    pub mse: bool,
}

impl Feasibility {
    pub fn all(&self) -> bool {
        self.power && self.ordering && self.qos && self.mse
    }
}

pub fn feasibility(
    state: &TransceiverState,
    hbar: &[C64],
    breakdown: &RateBreakdown,
    config: &NetworkConfig,
) -> Feasibility {
    let gains: Vec<f64> = hbar.iter().map(|h| h.norm_sqr()).collect();
    let power = state
        .p
        .iter()
        .zip(&config.power_budget_w)
        .all(|(&p, &budget)| p >= 0.0 && p * p <= budget * (1.0 + 1e-9));
    let rmin = config.min_rate_bps;
    let qos = breakdown.rate_noma_user.iter().all(|&r| r >= rmin * (1.0 - FEASIBILITY_SLACK));
    let mse = config.num_airfl == 0
        || config.mse_tolerance.is_infinite()
        || breakdown.mse <= config.mse_tolerance * (1.0 + FEASIBILITY_SLACK);
    Feasibility { power, ordering: ordering_feasible(&gains, config.num_airfl), qos, mse }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn sinr_examples() {
        let g = [4.0];
        assert!((noma_sinr(0, &[0.5], &g, 2.0, 0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(noma_sinr(0, &[0.0], &g, 2.0, 0).unwrap(), 0.0);
        assert!(noma_sinr(0, &[1.0, 1.0], &[1.0, 1.0], 1.0, 1).is_err());
    }

    #[test]
    fn sinr_counts_airfl_interference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
        let g: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
        let noise = 0.3;
        let oracle = p[1] * p[1] * g[1] / (p[0] * p[0] * g[0] + noise);
        assert!((noma_sinr(1, &p, &g, noise, 1).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn rate_examples() {
        assert!((noma_rate(1.0, 1e6) - 1e6).abs() < 1e-6);
        assert_eq!(noma_sum_rate(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0], 1, 1.0, 1e6).unwrap(), 0.0);
    }

    #[test]
    fn telescoped_sum_matches_per_user_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let g: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 10.0).collect();
        let direct = noma_sum_rate(&p, &g, 2, 0.1, 1e6).unwrap();
        let tele = noma_sum_rate_telescoped(&p, &g, 2, 0.1, 1e6);
        assert!((direct - tele).abs() <= 1e-9 * tele);
    }

    #[test]
    fn mse_examples() {
        let h = [c(2.0, 0.0), c(0.0, 1.0)];
        let p = [0.5, 1.0];
        let a_perfect = [c(1.0, 0.0), c(1.0, 0.0)];
        let perfect = aggregation_mse(&[1.0, 1.0], c(1.0, 0.0), &a_perfect, 0.0).unwrap();
        assert_eq!(perfect, 0.0);
        let noisy = aggregation_mse(&[1.0, 1.0], c(1.0, 0.0), &a_perfect, 1.0).unwrap();
        assert!((noisy - 0.25).abs() < 1e-15);
        assert!(aggregation_mse(&[], c(1.0, 0.0), &[], 1.0).is_err());
        assert!(aggregation_mse(&p, c(0.0, 0.0), &h, 1.0).is_err());
    }

    #[test]
    fn mse_matches_symbol_level_simulation() {
        // Unit-variance symbols, estimate ŝ = a·y/K against s = (1/K)·Σ s_k.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let k = 3;
        let h = [c(0.8, 0.3), c(-0.2, 1.1), c(0.5, -0.4)];
        let p = [0.9, 0.6, 1.3];
        let a = c(0.7, -0.2);
        let noise = 0.2;
        let mut cn = |var: f64| {
            let s = (var / 2.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            c(re * s, im * s)
        };
        let draws = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let s: Vec<C64> = (0..k).map(|_| cn(1.0)).collect();
            let z = cn(noise);
            let y: C64 = (0..k).map(|i| h[i] * p[i] * s[i]).sum::<C64>() + z;
            let target: C64 = s.iter().sum::<C64>() / k as f64;
            acc += (a * y / k as f64 - target).norm_sqr();
        }
        let sim = acc / draws as f64;
        let closed = aggregation_mse(&p, a, &h, noise).unwrap();
        assert!((sim - closed).abs() <= 0.01 * closed, "sim {sim} closed {closed}");
    }

    #[test]
    fn airfl_rate_examples() {
        let ones = [c(1.0, 0.0), c(1.0, 0.0)];
        let r = airfl_rate(&[1.0, 1.0], c(1.0, 0.0), &ones, 1.0, 1e6).unwrap();
        assert!((r - 1e6 * 3f64.log2()).abs() < 1e-6);
        let zero = airfl_rate_raw(&[0.0, 0.0], c(1.0, 0.0), &ones, 1.0, 1e6).unwrap();
        assert!(zero < 0.0);
        assert_eq!(airfl_rate(&[0.0, 0.0], c(1.0, 0.0), &ones, 1.0, 1e6).unwrap(), 0.0);
    }

    #[test]
    fn airfl_rate_is_signal_over_scaled_mse() {
        let h = [c(0.8, 0.3), c(-0.2, 1.1), c(0.5, -0.4)];
        let p = [0.9, 0.6, 1.3];
        let a = c(0.7, -0.2);
        let mse = aggregation_mse(&p, a, &h, 0.2).unwrap();
        let sig = received_signal_power(&p, a, &h, 0.2).unwrap();
        let r = airfl_rate_raw(&p, a, &h, 0.2, 1.0).unwrap();
        assert!((r - (sig / (9.0 * mse)).log2()).abs() < 1e-12);
    }

    #[test]
    fn hybrid_weights() {
        let mut cfg = NetworkConfig::default().with_users(2, 2);
        cfg.noise_power_w = 0.1;
        let hbar = [c(0.3, 0.1), c(0.2, -0.2), c(0.5, 0.5), c(-0.9, 0.4)];
        let st = TransceiverState { p: vec![1.0, 0.8, 1.2, 0.7], a: c(2.0, 0.5) };
        cfg.weight_lambda = 0.0;
        let b0 = hybrid_rate(&st, &hbar, &cfg).unwrap();
        assert_eq!(b0.rate_hybrid, b0.rate_noma_sum);
        cfg.weight_lambda = 1.0;
        let b1 = hybrid_rate(&st, &hbar, &cfg).unwrap();
        assert_eq!(b1.rate_hybrid, b1.rate_airfl);
        cfg.weight_lambda = 0.5;
        let bh = hybrid_rate(&st, &hbar, &cfg).unwrap();
        let mean = 0.5 * (bh.rate_noma_sum + bh.rate_airfl);
        assert!((bh.rate_hybrid - mean).abs() <= 1e-12 * mean);
    }

    #[test]
    fn hybrid_uses_relabeled_order() {
        let mut cfg = NetworkConfig::default().with_users(0, 2);
        cfg.noise_power_w = 1.0;
        let hbar = [c(2.0, 0.0), c(1.0, 0.0)];
        let st = TransceiverState { p: vec![1.0, 1.0], a: c(1.0, 0.0) };
        let b = hybrid_rate(&st, &hbar, &cfg).unwrap();
        // the weaker user (index 1) is decoded last and sees only noise
        assert!((b.sinr[1] - 1.0).abs() < 1e-15);
        assert!((b.sinr[0] - 4.0 / 2.0).abs() < 1e-15);
    }
}
