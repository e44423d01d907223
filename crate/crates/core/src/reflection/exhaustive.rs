use crate::channel::{combined_channel_v, ChannelRealization, ReflectionState, C64};
use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::metrics::TransceiverState;

use super::eval::{RateEvaluator, ScalarPolicy};

/// Steps between full recomputations of the combined channel.
const REFRESH_EVERY: u64 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveOutcome {
    /// Best feasible pattern, if any.
    pub reflection: Option<ReflectionState>,
    /// Transceiver paired with `reflection` under the policy.
    pub transceiver: Option<TransceiverState>,
    pub value: f64,
    pub enumerated: u64,
    pub feasible: u64,
}

/// Number of patterns, saturating.
pub fn pattern_count(levels: u64, elements: usize) -> u128 {
    (levels as u128).checked_pow(elements as u32).unwrap_or(u128::MAX)
}

/// Globally best discrete reflection for a fixed transceiver.
pub fn exhaustive_search(
    realization: &ChannelRealization,
    state: &TransceiverState,
    bits: u32,
    config: &NetworkConfig,
) -> Result<ExhaustiveOutcome> {
    exhaustive_search_with(realization, RateEvaluator::new(state, config, ScalarPolicy::Fixed), bits, config)
}

/// Enumerates every discrete pattern in reflected Gray order, so each step
/// changes one element by one level and the combined channel is updated
/// in O(K+N).
pub fn exhaustive_search_with(
    realization: &ChannelRealization,
    mut eval: RateEvaluator,
    bits: u32,
    config: &NetworkConfig,
) -> Result<ExhaustiveOutcome> {
    let m = realization.num_elements();
    let levels = 1u64 << bits;
    let required = pattern_count(levels, m);
    let cap = config.solver.enumeration_cap;
    if required > cap {
        return Err(Error::EnumerationCap { required, cap });
    }
    let users = realization.num_users();
    let step = 2.0 * std::f64::consts::PI / levels as f64;
    // conj(v) for each level, since h̄ = Σ conj(v_m)·Φ̃[m]
    let conj_v: Vec<C64> = (0..levels).map(|l| C64::from_polar(1.0, -((2 * l + 1) as f64) * step / 2.0)).collect();
    let mut digits = vec![0u64; m];
    let mut dir = vec![1i64; m];
    let mut focus: Vec<usize> = (0..=m).collect();
    let v_of = |digits: &[u64]| -> Vec<C64> { digits.iter().map(|&l| conj_v[l as usize].conj()).collect() };
    let mut hbar = combined_channel_v(realization, &v_of(&digits))?;
    let mut gains = vec![0.0; users];

    let mut best: Option<(Vec<u64>, f64)> = None;
    let mut enumerated = 0u64;
    let mut feasible = 0u64;
    loop {
        for (g, h) in gains.iter_mut().zip(&hbar) {
            *g = h.norm_sqr();
        }
        enumerated += 1;
        if let Some(val) = eval.eval(&gains) {
            feasible += 1;
            if best.as_ref().is_none_or(|(_, b)| val > *b) {
                best = Some((digits.clone(), val));
            }
        }
        let j = focus[0];
        focus[0] = 0;
        if j == m {
            break;
        }
        let old = digits[j];
        digits[j] = (digits[j] as i64 + dir[j]) as u64;
        if digits[j] == 0 || digits[j] == levels - 1 {
            dir[j] = -dir[j];
            focus[j] = focus[j + 1];
            focus[j + 1] = j + 1;
        }
        if enumerated % REFRESH_EVERY == 0 {
            hbar = combined_channel_v(realization, &v_of(&digits))?;
        } else {
            let delta = conj_v[digits[j] as usize] - conj_v[old as usize];
            for (h, phi) in hbar.iter_mut().zip(&realization.phi_scaled) {
                *h += delta * phi[j];
            }
        }
    }
    let (reflection, transceiver, value) = match best {
        Some((d, v)) => {
            let lv: Vec<u32> = d.iter().map(|&x| x as u32).collect();
            let refl = ReflectionState::from_levels(&lv, bits);
            let g: Vec<f64> = combined_channel_v(realization, &refl.v())?.iter().map(|h| h.norm_sqr()).collect();
            (Some(refl), eval.transceiver_for(&g), v)
        }
        None => (None, None, f64::NEG_INFINITY),
    };
    Ok(ExhaustiveOutcome { reflection, transceiver, value, enumerated, feasible })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{combined_channel, sample_channels};
    use crate::metrics::hybrid_rate;

    fn setup(m: usize, bits: u32) -> (NetworkConfig, ChannelRealization, TransceiverState) {
        setup_seeded(m, bits, 2)
    }

    fn setup_seeded(m: usize, bits: u32, seed: u64) -> (NetworkConfig, ChannelRealization, TransceiverState) {
        let mut c = NetworkConfig::default().with_users(1, 1);
        c.num_elements = m;
        c.phase_bits = bits;
        c.min_rate_bps = 0.0;
        c.mse_tolerance = f64::INFINITY;
        let r = sample_channels(&c, seed).unwrap();
        let s = TransceiverState::full_power(&c, C64::new(3e4, 0.0));
        (c, r, s)
    }

    #[test]
    fn counts_patterns() {
        let (c, r, s) = setup(2, 1);
        let out = exhaustive_search(&r, &s, 1, &c).unwrap();
        assert_eq!(out.enumerated, 4);
    }

    #[test]
    fn single_element_matches_scan() {
        let mut checked = 0;
        for (bits, seed) in (1..=4).flat_map(|b| (0..10).map(move |s| (b, s))) {
            let (c, r, s) = setup_seeded(1, bits, seed);
            let out = exhaustive_search(&r, &s, bits, &c).unwrap();
            if out.reflection.is_none() {
                assert_eq!(out.feasible, 0);
                continue;
            }
            checked += 1;
            let mut best = f64::NEG_INFINITY;
            for l in 0..1u32 << bits {
                let refl = ReflectionState::from_levels(&[l], bits);
                let h = combined_channel(&r, &refl).unwrap();
                let g: Vec<f64> = h.iter().map(|x| x.norm_sqr()).collect();
                if crate::channel::ordering_feasible(&g, 1) {
                    best = best.max(hybrid_rate(&s, &h, &c).unwrap().rate_hybrid);
                }
            }
            assert!((out.value - best).abs() <= 1e-9 * best.abs().max(1.0));
        }
        assert!(checked > 0);
    }

    #[test]
    fn gray_walk_visits_every_pattern_once() {
        // brute force over the same patterns in lexicographic order
        let (c, r, s) = setup(4, 2);
        let out = exhaustive_search(&r, &s, 2, &c).unwrap();
        assert_eq!(out.enumerated, 256);
        let mut eval = RateEvaluator::new(&s, &c, ScalarPolicy::Fixed);
        let mut best = f64::NEG_INFINITY;
        for code in 0..256u32 {
            let lv: Vec<u32> = (0..4).map(|i| (code >> (2 * i)) & 3).collect();
            let h = combined_channel(&r, &ReflectionState::from_levels(&lv, 2)).unwrap();
            let g: Vec<f64> = h.iter().map(|x| x.norm_sqr()).collect();
            if let Some(v) = eval.eval(&g) {
                best = best.max(v);
            }
        }
        assert!((out.value - best).abs() <= 1e-9 * best.abs());
    }

    #[test]
    fn refuses_over_cap() {
        let (mut c, r, s) = setup(3, 2);
        c.solver.enumeration_cap = 63;
        assert!(matches!(
            exhaustive_search(&r, &s, 2, &c),
            Err(Error::EnumerationCap { required: 64, cap: 63 })
        ));
    }
}
