//! Reflection block: lifting, the relaxed SDP with DC linearization,
//! rank-one recovery, quantization and exhaustive search.

mod eval;
mod exhaustive;
mod lift;
mod recover;
mod sdp;

pub use eval::{RateEvaluator, ScalarPolicy};
pub use exhaustive::{exhaustive_search, exhaustive_search_with, pattern_count, ExhaustiveOutcome};
pub use lift::{lift, lifted_matrix, lifted_vector, LiftedProblemData};
pub use recover::{is_rank_one, levels_of, quantize, quantize_phase, rank_one_candidates, recover_rank_one, RANK_ONE_RATIO};
pub use sdp::{relaxed_objective, solve_relaxed_sdp, SdpOutcome};

use crate::channel::{combined_channel_v, ChannelRealization, PhaseMode, ReflectionState, C64};
use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::metrics::TransceiverState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignMethod {
    Exhaustive,
    Relaxation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionDesign {
    /// Best feasible reflection found; `None` asks the caller to keep its own.
    pub reflection: Option<ReflectionState>,
    /// Transceiver paired with `reflection` under the scoring policy.
    pub transceiver: Option<TransceiverState>,
    /// Hybrid rate of `reflection` with `transceiver`.
    pub value: Option<f64>,
    pub method: DesignMethod,
    /// Relaxed objective per DC iterate (relaxation path only).
    pub sdp_trace: Vec<f64>,
    /// Eigenvalues of each accepted SDP iterate.
    pub spectra: Vec<Vec<f64>>,
    pub candidates: u64,
}

/// True when the discrete problem is small enough to enumerate.
pub fn uses_exhaustive(mode: PhaseMode, elements: usize, config: &NetworkConfig) -> bool {
    match mode {
        PhaseMode::Discrete { bits } => {
            (bits as u64) * (elements as u64) <= config.solver.exhaustive_max_bits as u64
                && pattern_count(1u64 << bits, elements) <= config.solver.enumeration_cap
        }
        PhaseMode::Continuous => false,
    }
}

/// Designs the reflection with the transceiver following candidates per
/// `policy`. `current` must satisfy the constraints; it anchors the lifting,
/// the DC iteration and the amplitudes held under `ScalarPolicy::Track`.
pub fn design_reflection(
    realization: &ChannelRealization,
    state: &TransceiverState,
    current: &ReflectionState,
    mode: PhaseMode,
    config: &NetworkConfig,
    seed: u64,
    policy: ScalarPolicy,
) -> Result<ReflectionDesign> {
    let m = realization.num_elements();
    if current.len() != m {
        return Err(Error::Dimension { expected: m, got: current.len() });
    }
    let v0 = current.v();
    let gains_of = |v: &[C64]| -> Option<Vec<f64>> {
        Some(combined_channel_v(realization, v).ok()?.iter().map(|x| x.norm_sqr()).collect())
    };
    let anchor_gains = gains_of(&v0).ok_or(Error::Dimension { expected: m, got: v0.len() })?;
    let evaluator = RateEvaluator::new(state, config, policy).anchored(&anchor_gains);
    if let PhaseMode::Discrete { bits } = mode {
        if uses_exhaustive(mode, m, config) {
            let out = exhaustive_search_with(realization, evaluator, bits, config)?;
            return Ok(ReflectionDesign {
                value: out.reflection.as_ref().map(|_| out.value),
                transceiver: out.transceiver,
                reflection: out.reflection,
                method: DesignMethod::Exhaustive,
                sdp_trace: Vec::new(),
                spectra: Vec::new(),
                candidates: out.enumerated,
            });
        }
    }
    let anchor = match policy {
        // only the rotations matter when the scalar is re-fitted
        ScalarPolicy::Refit | ScalarPolicy::Track => TransceiverState { p: state.p.clone(), a: C64::new(1.0, 0.0) },
        ScalarPolicy::Fixed => state.clone(),
    };
    let lifted = lift(realization, &anchor, &v0, config.num_airfl)?;
    let sdp = solve_relaxed_sdp(&lifted, &anchor, config, &lifted_matrix(&v0), policy)?;
    let mut eval = evaluator.clone();
    let mut score = |refl: &ReflectionState| -> Option<f64> { eval.eval(&gains_of(&refl.v())?) };
    // every candidate is mapped into the admissible set before scoring
    let candidates = rank_one_candidates(&sdp.v, config.solver.randomization_count, seed);
    let mut best: Option<(ReflectionState, f64)> = None;
    for cand in &candidates {
        let refl = match mode {
            PhaseMode::Discrete { bits } => quantize(cand, bits),
            PhaseMode::Continuous => ReflectionState::continuous(cand.iter().map(|z| z.arg().rem_euclid(std::f64::consts::TAU)).collect()),
        };
        if let Some(v) = score(&refl) {
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((refl, v));
            }
        }
    }
    let transceiver = best.as_ref().and_then(|(r, _)| evaluator.transceiver_for(&gains_of(&r.v())?));
    Ok(ReflectionDesign {
        value: best.as_ref().map(|(_, v)| *v),
        transceiver,
        reflection: best.map(|(r, _)| r),
        method: DesignMethod::Relaxation,
        sdp_trace: sdp.trace,
        spectra: sdp.spectra,
        candidates: candidates.len() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{combined_channel, sample_channels, C64};
    use crate::metrics::hybrid_rate;

    fn airfl_only(m: usize) -> NetworkConfig {
        let mut c = NetworkConfig::default().with_users(1, 0);
        c.num_elements = m;
        c.weight_lambda = 1.0;
        c.mse_tolerance = f64::INFINITY;
        c.noise_power_w = 1e-13;
        c
    }

    fn state_for(c: &NetworkConfig, r: &ChannelRealization, v: &[C64]) -> TransceiverState {
        let h = combined_channel_v(r, v).unwrap();
        // slightly off the matched scalar so the optimum is not trivially at the start
        let a = 0.7 / (h[0].norm() * c.power_budget_w[0].sqrt());
        TransceiverState::full_power(c, C64::new(a, 0.0))
    }

    #[test]
    fn single_element_relaxation_matches_phase_grid() {
        let c = airfl_only(1);
        for seed in 0..5 {
            let r = sample_channels(&c, seed).unwrap();
            let v0 = vec![C64::new(1.0, 0.0)];
            let s = state_for(&c, &r, &v0);
            let lifted = lift(&r, &s, &v0, 1).unwrap();
            let out = solve_relaxed_sdp(&lifted, &s, &c, &lifted_matrix(&v0), ScalarPolicy::Fixed).unwrap();
            let sdp_value = *out.trace.last().unwrap();
            let mut grid = f64::NEG_INFINITY;
            for i in 0..20000 {
                let t = i as f64 * std::f64::consts::TAU / 20000.0;
                let refl = ReflectionState::continuous(vec![t]);
                let h = combined_channel(&r, &refl).unwrap();
                grid = grid.max(hybrid_rate(&s, &h, &c).unwrap().rate_hybrid);
            }
            assert!((sdp_value - grid).abs() <= 1e-4 * grid, "{sdp_value} vs {grid}");
        }
    }

    #[test]
    fn relaxation_dominates_exhaustive_for_single_airfl_user() {
        let mut c = airfl_only(4);
        c.phase_bits = 3;
        for seed in 0..5 {
            let r = sample_channels(&c, seed).unwrap();
            let v0 = vec![C64::new(1.0, 0.0); 4];
            let s = state_for(&c, &r, &v0);
            let lifted = lift(&r, &s, &v0, 1).unwrap();
            let out = solve_relaxed_sdp(&lifted, &s, &c, &lifted_matrix(&v0), ScalarPolicy::Fixed).unwrap();
            let ex = exhaustive_search(&r, &s, 3, &c).unwrap();
            let bound = *out.trace.last().unwrap();
            assert!(bound >= ex.value * (1.0 - 1e-6), "{bound} < {}", ex.value);
            // every recovered candidate, lifted with the same rotation, stays below the bound
            for cand in rank_one_candidates(&out.v, 50, seed) {
                let val = relaxed_objective(&lifted, &s, &c, &lifted_matrix(&cand), ScalarPolicy::Fixed);
                assert!(val <= bound * (1.0 + 1e-6));
            }
        }
    }

    #[test]
    fn exhaustive_dominates_pipeline() {
        let mut c = NetworkConfig::default().with_users(1, 1);
        c.num_elements = 5;
        c.phase_bits = 1;
        c.min_rate_bps = 0.0;
        c.mse_tolerance = f64::INFINITY;
        c.noise_power_w = 1e-13;
        for seed in 0..10 {
            let r = sample_channels(&c, seed).unwrap();
            let v0 = vec![C64::new(1.0, 0.0); 5];
            let s = state_for(&c, &r, &v0);
            let current = ReflectionState::from_levels(&[0; 5], 1);
            let h = combined_channel(&r, &current).unwrap();
            if !crate::channel::ordering_feasible(&h.iter().map(|x| x.norm_sqr()).collect::<Vec<_>>(), 1) {
                continue;
            }
            let ex = exhaustive_search(&r, &s, 1, &c).unwrap();
            let mut relaxed = c.clone();
            relaxed.solver.exhaustive_max_bits = 0;
            let pipe = design_reflection(&r, &s, &current, PhaseMode::Discrete { bits: 1 }, &relaxed, seed, ScalarPolicy::Fixed).unwrap();
            assert_eq!(pipe.method, DesignMethod::Relaxation);
            if let Some(v) = pipe.value {
                assert!(ex.value >= v * (1.0 - 1e-12));
            }
        }
    }
}
