use proptest::prelude::*;
use ris_hybrid::channel::{combined_channel, gains, ordering_feasible, sample_channels};
use ris_hybrid::config::dbm_to_watts;
use ris_hybrid::experiments::{run_sweep, SweepParameter, SweepSpec};
use ris_hybrid::metrics::{aggregation_mse, feasibility, hybrid_rate, noma_sum_rate};
use ris_hybrid::orchestrator::{alternating_optimize, rate_upper_bound, MONOTONE_SLACK};
use ris_hybrid::power::solve_noma_power;
use ris_hybrid::receive::{best_receive_gain, sca_scalar};
use ris_hybrid::reflection::{exhaustive_search, levels_of, quantize};
use ris_hybrid::{NetworkConfig, ReflectionState, Scheme, TransceiverState, C64};

fn desk(k: usize, n: usize, m: usize) -> NetworkConfig {
    let mut c = NetworkConfig::default().with_users(k, n);
    c.noise_power_w = dbm_to_watts(-110.0);
    c.num_elements = m;
    c
}

fn unit_interval() -> impl Strategy<Value = f64> {
    0.05f64..1.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reference_loss_scales_every_gain(seed in 0u64..1000, factor in 0.1f64..10.0, levels in prop::collection::vec(0u32..4, 6)) {
        let mut c = desk(2, 2, 6);
        let base = sample_channels(&c, seed).unwrap();
        c.path_loss_ref *= factor;
        let scaled = sample_channels(&c, seed).unwrap();
        let refl = ReflectionState::from_levels(&levels, 2);
        let g0 = gains(&combined_channel(&base, &refl).unwrap());
        let g1 = gains(&combined_channel(&scaled, &refl).unwrap());
        // cascaded link carries the reference loss twice
        for (a, b) in g0.iter().zip(&g1) {
            prop_assert!((b - a * factor * factor).abs() <= 1e-9 * b.abs());
        }
    }

    #[test]
    fn scaled_cascade_is_a_multiple_of_the_raw_one(seed in 0u64..1000) {
        let r = sample_channels(&desk(1, 2, 5), seed).unwrap();
        for (raw, scaled) in r.phi.iter().zip(&r.phi_scaled) {
            let ratio = scaled[0] / raw[0];
            prop_assert!(ratio.im.abs() <= 1e-9 * ratio.re);
            for (x, y) in raw.iter().zip(scaled) {
                prop_assert!((x * ratio - y).norm() <= 1e-9 * y.norm());
            }
        }
    }

    #[test]
    fn quantizing_a_discrete_pattern_returns_it(bits in 1u32..4, raw in prop::collection::vec(0u32..8, 1..12)) {
        let levels: Vec<u32> = raw.iter().map(|l| l % (1 << bits)).collect();
        let refl = ReflectionState::from_levels(&levels, bits);
        prop_assert_eq!(levels_of(&quantize(&refl.v(), bits), bits), levels);
    }

    #[test]
    fn aggregation_error_matches_its_definition(
        d in prop::collection::vec((0.1f64..2.0, 0.0f64..6.3), 1..6),
        a_mag in 0.2f64..5.0, a_arg in 0.0f64..6.3, noise in 0.0f64..0.5,
    ) {
        let hbar: Vec<C64> = d.iter().map(|(m, t)| C64::from_polar(*m, *t)).collect();
        let p = vec![0.7; hbar.len()];
        let a = C64::from_polar(a_mag, a_arg);
        let k = hbar.len() as f64;
        let direct: f64 = hbar.iter().map(|h| (a * h * 0.7 - 1.0).norm_sqr()).sum::<f64>() + a_mag * a_mag * noise;
        let mse = aggregation_mse(&p, a, &hbar, noise).unwrap();
        prop_assert!((k * k * mse - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn rate_ignores_the_phase_of_the_receive_scalar(seed in 0u64..500, arg in 0.0f64..6.3, scale in unit_interval()) {
        let c = desk(2, 2, 6);
        let r = sample_channels(&c, seed).unwrap();
        let h = combined_channel(&r, &ReflectionState::from_levels(&[0, 1, 2, 3, 0, 1], 2)).unwrap();
        let a = C64::new(scale / (h[0].norm() * c.power_budget_w[0].sqrt()), 0.0);
        let s = TransceiverState::full_power(&c, a);
        let rotated = TransceiverState { p: s.p.clone(), a: a * C64::from_polar(1.0, arg) };
        let b0 = hybrid_rate(&s, &h, &c).unwrap();
        let b1 = hybrid_rate(&rotated, &h, &c).unwrap();
        prop_assert!((b0.rate_hybrid - b1.rate_hybrid).abs() <= 1e-9 * b0.rate_hybrid.max(1.0));
        prop_assert!((b0.mse - b1.mse).abs() <= 1e-12 * b0.mse.max(1e-300));
    }

    #[test]
    fn noma_sum_grows_with_the_strongest_gain(g in prop::collection::vec(0.1f64..10.0, 3), boost in 1.0f64..5.0) {
        let mut gs = vec![0.05];
        let mut sorted = g.clone();
        sorted.sort_by(f64::total_cmp);
        gs.extend(sorted);
        let p = vec![1.0; 4];
        let before = noma_sum_rate(&p, &gs, 1, 1.0, 1.0).unwrap();
        gs[3] *= boost;
        let after = noma_sum_rate(&p, &gs, 1, 1.0, 1.0).unwrap();
        prop_assert!(after >= before - 1e-12);
    }

    #[test]
    fn noma_powers_stay_in_the_box_and_meet_qos(seed in 0u64..500, frac in 0.0f64..1.0, levels in prop::collection::vec(0u32..4, 8)) {
        let mut c = desk(2, 2, 8);
        c.min_rate_bps = 5e5;
        let r = sample_channels(&c, seed).unwrap();
        let h = combined_channel(&r, &ReflectionState::from_levels(&levels, 2)).unwrap();
        let g = gains(&h);
        let pa: Vec<f64> = c.power_budget_w[..2].iter().map(|b| b.sqrt() * frac).collect();
        if let Ok(pn) = solve_noma_power(&g, &pa, &c) {
            for (j, p) in pn.iter().enumerate() {
                prop_assert!(*p >= -1e-12 && *p <= c.power_budget_w[2 + j].sqrt() * (1.0 + 1e-9));
            }
            let mut p = pa.clone();
            p.extend(pn);
            let s = TransceiverState { p, a: C64::new(1.0, 0.0) };
            let b = hybrid_rate(&s, &h, &c).unwrap();
            prop_assert!(b.rate_noma_user.iter().all(|r| *r >= c.min_rate_bps * (1.0 - 1e-6)));
        }
    }

    #[test]
    fn receive_gain_is_the_mean_without_an_error_cap(d in prop::collection::vec(0.01f64..3.0, 1..8)) {
        let s1: f64 = d.iter().sum();
        let s2: f64 = d.iter().map(|x| x * x).sum();
        let r = best_receive_gain(d.len(), s1, s2, 0.1, f64::INFINITY).unwrap();
        prop_assert!((r - s1 / d.len() as f64).abs() <= 1e-12 * r);
    }

    #[test]
    fn receive_gain_minimizes_spread_within_the_cap(d in prop::collection::vec(0.1f64..3.0, 2..6), eps0 in 0.01f64..0.2) {
        let k = d.len();
        let s1: f64 = d.iter().sum();
        let s2: f64 = d.iter().map(|x| x * x).sum();
        let noise = 0.01;
        if let Some(r) = best_receive_gain(k, s1, s2, noise, eps0) {
            let bound = |x: f64| s2 - 2.0 * s1 * x + k as f64 * x * x + noise - eps0 * (k * k) as f64 * x * x;
            prop_assert!(bound(r) <= 1e-9 * s2.max(1.0));
            let spread = |x: f64| d.iter().map(|y| (y - x).powi(2)).sum::<f64>();
            for i in 0..400 {
                let x = 0.01 + 4.0 * i as f64 / 400.0;
                if bound(x) <= 0.0 {
                    prop_assert!(spread(r) <= spread(x) + 1e-9);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scalar_updates_stay_feasible_and_never_lose_rate(seed in 0u64..500, frac in 0.3f64..1.0) {
        let mut c = desk(4, 0, 10);
        c.mse_tolerance = 0.02;
        let r = sample_channels(&c, seed).unwrap();
        let h = combined_channel(&r, &ReflectionState::from_levels(&[1; 10], 2)).unwrap();
        let p: Vec<f64> = c.power_budget_w.iter().map(|b| b.sqrt() * frac).collect();
        if let Ok(out) = sca_scalar(&h, &p, None, &c) {
            for w in out.trace.windows(2) {
                prop_assert!(w[1] >= w[0] * (1.0 - 1e-12));
            }
            let s = TransceiverState { p, a: out.a };
            let b = hybrid_rate(&s, &h, &c).unwrap();
            prop_assert!(b.mse <= c.mse_tolerance * (1.0 + 1e-9));
        }
    }

    #[test]
    fn exhaustive_beats_every_single_pattern(seed in 0u64..500, levels in prop::collection::vec(0u32..2, 6)) {
        let mut c = desk(1, 1, 6);
        c.phase_bits = 1;
        c.min_rate_bps = 0.0;
        c.mse_tolerance = f64::INFINITY;
        let r = sample_channels(&c, seed).unwrap();
        let refl = ReflectionState::from_levels(&levels, 1);
        let h = combined_channel(&r, &refl).unwrap();
        let s = TransceiverState::full_power(&c, C64::new(0.8 / (h[0].norm() * c.power_budget_w[0].sqrt()), 0.0));
        let ex = exhaustive_search(&r, &s, 1, &c).unwrap();
        prop_assert_eq!(ex.enumerated, 64);
        if ordering_feasible(&gains(&h), 1) {
            let v = hybrid_rate(&s, &h, &c).unwrap().rate_hybrid;
            prop_assert!(ex.value >= v * (1.0 - 1e-12));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn optimization_trace_is_monotone_bounded_and_ends_feasible(seed in 0u64..1000) {
        let mut c = desk(2, 1, 6);
        c.phase_bits = 1;
        let r = sample_channels(&c, seed).unwrap();
        let rep = alternating_optimize(&r, &c, Scheme::DiscreteRis, None).unwrap();
        if let Some(b) = &rep.breakdown {
            prop_assert!(rep.worst_drop() <= MONOTONE_SLACK);
            let cap = rate_upper_bound(&r, &c);
            prop_assert!(rep.trace.iter().all(|v| *v <= cap));
            let h = combined_channel(&r, &rep.reflection).unwrap();
            prop_assert!(feasibility(&rep.state, &h, b, &c).all());
        }
    }
}

#[test]
fn every_scheme_sees_the_same_realizations() {
    let mut c = desk(2, 1, 6);
    c.phase_bits = 1;
    let spec = SweepSpec {
        parameter: SweepParameter::WeightLambda,
        grid: vec![0.3, 0.7],
        trials: 3,
        schemes: vec![Scheme::DiscreteRis, Scheme::RandomRis, Scheme::RelaxedQos],
        seed: 11,
    };
    let rows = run_sweep(&spec, &c).unwrap();
    for point in rows.chunk_by(|a, b| a.sweep_value == b.sweep_value) {
        assert_eq!(point.len(), 3);
        assert!(point.iter().all(|r| r.realization_hash == point[0].realization_hash));
    }
}
