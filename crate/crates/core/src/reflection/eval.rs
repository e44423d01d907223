use std::f64::consts::LN_2;

use crate::channel::C64;
use crate::config::NetworkConfig;
use crate::metrics::{TransceiverState, FEASIBILITY_SLACK};
use crate::receive::best_receive_gain;

/// How the transceiver follows a candidate reflection while it is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarPolicy {
    /// Keep the transceiver as is.
    Fixed,
    /// Re-fit the scalar exactly for every candidate (powers stay fixed).
    Refit,
    /// AirFL powers follow the channel so each received amplitude |h̄_k|p_k
    /// keeps its value at the anchor gains (clipped at the budget), then the
    /// scalar is re-fitted. NOMA powers stay fixed.
    Track,
}

/// Hybrid rate of a gain vector under a transceiver that is fixed or follows
/// the channel per `ScalarPolicy`, or `None` when the ordering, QoS or
/// aggregation constraint fails. Allocation-free after construction so it
/// can sit inside the enumeration loop.
#[derive(Debug, Clone)]
pub struct RateEvaluator {
    k: usize,
    p2: Vec<f64>,
    /// Squared power budgets of the AirFL users.
    budget2: Vec<f64>,
    /// Received AirFL amplitudes held under `Track`.
    targets: Vec<f64>,
    a2: f64,
    noise: f64,
    scale: f64,
    lambda: f64,
    sinr_floor: f64,
    mse_cap: f64,
    order: Vec<usize>,
    policy: ScalarPolicy,
    eps0: f64,
}

impl RateEvaluator {
    pub fn new(state: &TransceiverState, config: &NetworkConfig, policy: ScalarPolicy) -> Self {
        let k = config.num_airfl;
        let sinr_floor = if config.min_rate_bps > 0.0 {
            (config.min_rate_bps * (1.0 - FEASIBILITY_SLACK) / config.bandwidth_hz).exp2() - 1.0
        } else {
            f64::NEG_INFINITY
        };
        let mse_cap = if k > 0 && config.mse_tolerance.is_finite() {
            config.mse_tolerance * (1.0 + FEASIBILITY_SLACK) * (k * k) as f64
        } else {
            f64::INFINITY
        };
        Self {
            k,
            p2: state.p.iter().map(|p| p * p).collect(),
            budget2: config.power_budget_w[..k].to_vec(),
            targets: Vec::new(),
            a2: state.a.norm_sqr(),
            noise: config.noise_power_w,
            scale: config.bandwidth_hz / LN_2,
            lambda: config.weight_lambda,
            sinr_floor,
            mse_cap,
            order: (k..config.num_users()).collect(),
            policy,
            eps0: config.mse_tolerance,
        }
    }

    /// Sets the gains whose received AirFL amplitudes `Track` holds.
    pub fn anchored(mut self, gains: &[f64]) -> Self {
        self.targets = (0..self.k).map(|i| (self.p2[i] * gains[i]).sqrt()).collect();
        self
    }

    /// Squared received amplitude of AirFL user `i`.
    fn received(&self, i: usize, gain: f64) -> f64 {
        match self.policy {
            ScalarPolicy::Track => {
                let t = self.targets[i];
                (t * t).min(self.budget2[i] * gain)
            }
            _ => self.p2[i] * gain,
        }
    }

    pub fn eval(&mut self, gains: &[f64]) -> Option<f64> {
        let k = self.k;
        let max_a = gains[..k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if gains[k..].iter().any(|&g| g < max_a) {
            return None;
        }
        // insertion sort: N is small and the previous order is usually close
        for i in 1..self.order.len() {
            let mut j = i;
            while j > 0 && {
                let (a, b) = (self.order[j - 1], self.order[j]);
                gains[a] > gains[b] || (gains[a] == gains[b] && a > b)
            } {
                self.order.swap(j - 1, j);
                j -= 1;
            }
        }
        let mut interference: f64 = (0..k).map(|i| self.received(i, gains[i])).sum();
        let mut noma = 0.0;
        for &n in &self.order {
            let rx = self.p2[n] * gains[n];
            let sinr = rx / (interference + self.noise);
            if sinr < self.sinr_floor {
                return None;
            }
            noma += sinr.ln_1p();
            interference += rx;
        }
        let mut airfl = 0.0;
        if k > 0 && self.policy != ScalarPolicy::Fixed {
            let (s1, s2) = self.sums(gains);
            let r = best_receive_gain(k, s1, s2, self.noise, self.eps0)?;
            let signal = s2 + self.noise;
            let distortion = s2 - 2.0 * r * s1 + k as f64 * r * r + self.noise;
            airfl = (signal / distortion).ln().max(0.0);
        } else if k > 0 {
            let a = self.a2.sqrt();
            let noise_term = self.a2 * self.noise;
            let mut distortion = noise_term;
            let mut signal = noise_term;
            for i in 0..k {
                let c = a * (self.p2[i] * gains[i]).sqrt();
                distortion += (c - 1.0) * (c - 1.0);
                signal += c * c;
            }
            if distortion > self.mse_cap {
                return None;
            }
            airfl = (signal / distortion).ln().max(0.0);
        }
        Some(self.scale * ((1.0 - self.lambda) * noma + self.lambda * airfl))
    }

    fn sums(&self, gains: &[f64]) -> (f64, f64) {
        (0..self.k).fold((0.0, 0.0), |(s1, s2), i| {
            let e = self.received(i, gains[i]);
            (s1 + e.sqrt(), s2 + e)
        })
    }

    /// Transceiver paired with `gains` under this policy; `None` when the
    /// aggregation constraint cannot be met.
    pub fn transceiver_for(&self, gains: &[f64]) -> Option<TransceiverState> {
        let mut p: Vec<f64> = self.p2.iter().map(|x| x.sqrt()).collect();
        if self.policy == ScalarPolicy::Track {
            for (i, pi) in p.iter_mut().enumerate().take(self.k) {
                if gains[i] > 0.0 {
                    *pi = (self.received(i, gains[i]) / gains[i]).sqrt().min(self.budget2[i].sqrt());
                }
            }
        }
        let a = match self.policy {
            ScalarPolicy::Fixed => C64::new(self.a2.sqrt(), 0.0),
            _ if self.k == 0 => C64::new(1.0, 0.0),
            _ => {
                let (s1, s2) = self.sums(gains);
                C64::new(1.0 / best_receive_gain(self.k, s1, s2, self.noise, self.eps0)?, 0.0)
            }
        };
        Some(TransceiverState { p, a })
    }
}
