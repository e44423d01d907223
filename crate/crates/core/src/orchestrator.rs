//! Alternating optimization over power, receive scalar and reflection, and
//! the benchmark schemes built on it.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{combined_channel, gains, ordering_feasible, ChannelRealization, PhaseMode, ReflectionState, C64};
use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::metrics::{feasibility, hybrid_rate, RateBreakdown, TransceiverState};
use crate::power::allocate_power;
use crate::receive::{closed_form_scalar, effective_amplitudes, sca_scalar};
use crate::reflection::{design_reflection, DesignMethod, ScalarPolicy};

/// Candidates in the 1-D scan of the restoring initialization.
const RESTORE_GRID: usize = 400;
/// Target fraction of the MSE tolerance used by the restoring initialization.
const RESTORE_MARGIN: f64 = 0.95;
/// Log-spaced scan points and bracket of the AirFL rescaling step.
const RESCALE_GRID: usize = 48;
const RESCALE_SPAN: f64 = 1e-3;
const RESCALE_REFINE: usize = 40;
/// Relative slack of the outer monotonicity check.
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    DiscreteRis,
    ContinuousRis,
    RandomRis,
    RelaxedQos,
    RelaxedMse,
}

/// Scheme-specific changes to the base problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overrides {
    pub zero_min_rate: bool,
    pub unbounded_mse: bool,
    pub continuous_phase: bool,
    pub freeze_reflection: bool,
}

impl Scheme {
    pub const ALL: [Scheme; 5] =
        [Scheme::DiscreteRis, Scheme::ContinuousRis, Scheme::RandomRis, Scheme::RelaxedQos, Scheme::RelaxedMse];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::DiscreteRis => "discrete-ris",
            Scheme::ContinuousRis => "continuous-ris",
            Scheme::RandomRis => "random-ris",
            Scheme::RelaxedQos => "relaxed-qos",
            Scheme::RelaxedMse => "relaxed-mse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.label() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme '{s}'")))
    }

    pub fn overrides(self) -> Overrides {
        let none = Overrides { zero_min_rate: false, unbounded_mse: false, continuous_phase: false, freeze_reflection: false };
        match self {
            Scheme::DiscreteRis => none,
            Scheme::ContinuousRis => Overrides { continuous_phase: true, ..none },
            Scheme::RandomRis => Overrides { freeze_reflection: true, ..none },
            Scheme::RelaxedQos => Overrides { zero_min_rate: true, ..none },
            Scheme::RelaxedMse => Overrides { unbounded_mse: true, ..none },
        }
    }

    /// The configuration this scheme actually optimizes under.
    pub fn apply(self, config: &NetworkConfig) -> NetworkConfig {
        let o = self.overrides();
        let mut c = config.clone();
        if o.zero_min_rate {
            c.min_rate_bps = 0.0;
        }
        if o.unbounded_mse {
            c.mse_tolerance = f64::INFINITY;
        }
        c
    }

    pub fn phase_mode(self, config: &NetworkConfig) -> PhaseMode {
        if self.overrides().continuous_phase {
            PhaseMode::Continuous
        } else {
            PhaseMode::Discrete { bits: config.phase_bits }
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Tolerance,
    Cap,
    Infeasible,
}

impl Termination {
    pub fn label(self) -> &'static str {
        match self {
            Termination::Tolerance => "tolerance",
            Termination::Cap => "cap",
            Termination::Infeasible => "infeasible",
        }
    }
}

/// A feasible starting point shared by the schemes of a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPoint {
    pub reflection: ReflectionState,
    pub state: TransceiverState,
    /// Reflection draws used, including the accepted one.
    pub draws: usize,
    /// True when full power with the closed-form scalar was infeasible.
    pub restored: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepTimes {
    pub power: Duration,
    pub receive: Duration,
    pub reflection: Duration,
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub rate_noma: f64,
    pub rate_airfl: f64,
    pub mse: f64,
    pub power_accepted: bool,
    pub receive_accepted: bool,
    pub reflection_accepted: bool,
    pub power_secs: f64,
    pub receive_secs: f64,
    pub reflection_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub scheme: Scheme,
    pub seed: u64,
    pub fingerprint: u64,
    pub state: TransceiverState,
    pub reflection: ReflectionState,
    /// Rate breakdown at the final point; `None` when no feasible point was found.
    pub breakdown: Option<RateBreakdown>,
    /// Hybrid rate after initialization and after every outer iteration.
    pub trace: Vec<f64>,
    pub power_traces: Vec<Vec<f64>>,
    pub receive_traces: Vec<Vec<f64>>,
    pub reflection_traces: Vec<Vec<f64>>,
    pub records: Vec<IterationRecord>,
    pub iterations: usize,
    pub times: StepTimes,
    pub termination: Termination,
    /// Step 2 is skipped when there are no AirFL users.
    pub receive_skipped: bool,
    pub reflection_method: Option<DesignMethod>,
    /// Steps whose solver failed; the previous block value was kept.
    pub step_failures: Vec<String>,
    /// True when the reported run started from another scheme's solution.
    pub warm_started: bool,
}

impl SolveReport {
    pub fn objective(&self) -> Option<f64> {
        self.breakdown.as_ref().map(|b| b.rate_hybrid)
    }

    pub fn is_feasible(&self) -> bool {
        self.termination != Termination::Infeasible
    }

    /// Largest relative drop between consecutive trace entries (0 if none).
    pub fn worst_drop(&self) -> f64 {
        self.trace
            .windows(2)
            .map(|w| (w[0] - w[1]) / w[0].abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Writes one CSV row per outer iteration.
pub fn write_iteration_records<W: Write>(report: &SolveReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scheme",
        "seed",
        "fingerprint",
        "iteration",
        "objective",
        "rate_noma",
        "rate_airfl",
        "mse",
        "power_accepted",
        "receive_accepted",
        "reflection_accepted",
        "power_secs",
        "receive_secs",
        "reflection_secs",
        "termination",
    ])?;
    for r in &report.records {
        w.write_record([
            report.scheme.label().to_string(),
            report.seed.to_string(),
            format!("{:016x}", report.fingerprint),
            r.iteration.to_string(),
            format!("{:?}", r.objective),
            format!("{:?}", r.rate_noma),
            format!("{:?}", r.rate_airfl),
            format!("{:?}", r.mse),
            r.power_accepted.to_string(),
            r.receive_accepted.to_string(),
            r.reflection_accepted.to_string(),
            format!("{:.6}", r.power_secs),
            format!("{:.6}", r.receive_secs),
            format!("{:.6}", r.reflection_secs),
            report.termination.label().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Crude per-instance cap on the hybrid rate: B·(N+1)·log2(1 + ΣP·max gain/σ²),
/// with the max gain taken over every reflection.
pub fn rate_upper_bound(realization: &ChannelRealization, config: &NetworkConfig) -> f64 {
    let max_gain = realization
        .phi_scaled
        .iter()
        .map(|phi| phi.iter().map(|x| x.norm()).sum::<f64>().powi(2))
        .fold(0.0, f64::max);
    let total: f64 = config.power_budget_w.iter().sum();
    let snr = total * max_gain / config.noise_power_w;
    let terms = (config.num_noma + 1) as f64;
    config.bandwidth_hz * terms * (1.0 + snr).log2()
}

/// Hybrid rate if the point meets every original constraint.
fn feasible_rate(state: &TransceiverState, hbar: &[C64], config: &NetworkConfig) -> Option<RateBreakdown> {
    let b = hybrid_rate(state, hbar, config).ok()?;
    feasibility(state, hbar, &b, config).all().then_some(b)
}

/// Truncated channel inversion for the AirFL users: every user aims at a
/// common received amplitude r, capped by its budget. The smallest r (least
/// interference for NOMA) meeting the MSE target is kept; NOMA powers then
/// come from the LP.
fn restore_transceiver(hbar: &[C64], config: &NetworkConfig) -> Option<TransceiverState> {
    let k = config.num_airfl;
    let g = gains(hbar);
    let mut p: Vec<f64> = config.power_budget_w.iter().map(|x| x.sqrt()).collect();
    let reach: Vec<f64> = (0..k).map(|i| hbar[i].norm() * p[i]).collect();
    let mut a = C64::new(1.0, 0.0);
    if k > 0 {
        let r_max = reach.iter().cloned().fold(0.0, f64::max);
        if !(r_max > 0.0) {
            return None;
        }
        let target = if config.mse_tolerance.is_finite() {
            config.mse_tolerance * RESTORE_MARGIN * (k * k) as f64
        } else {
            f64::INFINITY
        };
        let noise = config.noise_power_w;
        // log grid from r_max·1e-6 up to r_max, smallest feasible first
        let r = (0..=RESTORE_GRID).map(|i| r_max * 10f64.powf(-6.0 * (1.0 - i as f64 / RESTORE_GRID as f64))).find(|&r| {
            let dist: f64 = reach.iter().map(|&d| (d.min(r) / r - 1.0).powi(2)).sum::<f64>() + noise / (r * r);
            dist <= target
        })?;
        for i in 0..k {
            if reach[i] > 0.0 {
                p[i] *= reach[i].min(r) / reach[i];
            }
        }
        a = C64::new(1.0 / r, 0.0);
    }
    if config.num_noma > 0 {
        let pn = crate::power::solve_noma_power(&g, &p[..k], config).ok()?;
        p[k..].copy_from_slice(&pn);
    }
    let state = TransceiverState { p, a };
    feasible_rate(&state, hbar, config).map(|_| state)
}

fn full_power_state(hbar: &[C64], config: &NetworkConfig) -> Option<TransceiverState> {
    let mut state = TransceiverState::full_power(config, C64::new(1.0, 0.0));
    if config.num_airfl > 0 {
        let d = effective_amplitudes(hbar, &state.p, config.num_airfl);
        state.a = closed_form_scalar(&d).ok()?;
    }
    Some(state)
}

/// Random discrete reflection (re-drawn until the decoding order holds and a
/// feasible transceiver exists), full power with the closed-form scalar, or
/// the restoring transceiver when that point is infeasible.
pub fn initialize(realization: &ChannelRealization, config: &NetworkConfig, seed: u64) -> Result<InitialPoint> {
    config.validate()?;
    let m = realization.num_elements();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let retries = config.solver.init_retries.max(1);
    for draw in 1..=retries {
        let reflection = ReflectionState::random_discrete(m, config.phase_bits, &mut rng);
        let hbar = combined_channel(realization, &reflection)?;
        if !ordering_feasible(&gains(&hbar), config.num_airfl) {
            continue;
        }
        if let Some(state) = full_power_state(&hbar, config) {
            if feasible_rate(&state, &hbar, config).is_some() {
                return Ok(InitialPoint { reflection, state, draws: draw, restored: false });
            }
        }
        if let Some(state) = restore_transceiver(&hbar, config) {
            return Ok(InitialPoint { reflection, state, draws: draw, restored: true });
        }
    }
    Err(Error::ScenarioInfeasible(format!("no feasible initialization after {retries} reflection draws")))
}

/// Moves along p_k → s·p_k, a → a/s for the AirFL users. The aligned
/// products stay fixed, so only the receiver noise and the interference seen
/// by NOMA users change; coordinate updates of p and a alone crawl along
/// this direction. Returns the best feasible point if it beats `current`.
fn rescale_airfl(
    state: &TransceiverState,
    hbar: &[C64],
    config: &NetworkConfig,
    current: f64,
) -> Option<(TransceiverState, RateBreakdown)> {
    let k = config.num_airfl;
    let s_max = (0..k)
        .filter(|&i| state.p[i] > 0.0)
        .map(|i| config.power_budget_w[i].sqrt() / state.p[i])
        .fold(f64::INFINITY, f64::min);
    if k == 0 || !s_max.is_finite() {
        return None;
    }
    let at = |ls: f64| -> Option<(TransceiverState, RateBreakdown)> {
        let sc = ls.exp().min(s_max);
        let mut p = state.p.clone();
        for x in &mut p[..k] {
            *x *= sc;
        }
        let cand = TransceiverState { p, a: state.a / sc };
        feasible_rate(&cand, hbar, config).map(|b| (cand, b))
    };
    let value = |ls: f64| at(ls).map_or(f64::NEG_INFINITY, |(_, b)| b.rate_hybrid);
    let hi = s_max.ln();
    let lo = (s_max * RESCALE_SPAN).ln();
    let step = (hi - lo) / RESCALE_GRID as f64;
    let grid: Vec<f64> = (0..=RESCALE_GRID).map(|i| lo + step * i as f64).chain([0.0f64.min(hi)]).collect();
    let (mut best, mut best_v) = (0.0f64.min(hi), f64::NEG_INFINITY);
    for &g in &grid {
        let v = value(g);
        if v > best_v {
            best = g;
            best_v = v;
        }
    }
    if !best_v.is_finite() {
        return None;
    }
    // golden section inside the neighbouring grid cells
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut x1, mut x2) = (b - r * (b - a), a + r * (b - a));
    let (mut f1, mut f2) = (value(x1), value(x2));
    for _ in 0..RESCALE_REFINE {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = value(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = value(x2);
        }
    }
    for (x, f) in [(x1, f1), (x2, f2)] {
        if f > best_v {
            best = x;
            best_v = f;
        }
    }
    let (cand, br) = at(best)?;
    (br.rate_hybrid > current).then_some((cand, br))
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Three-block alternating optimization. Each block's output is kept only if
/// the point stays feasible and the hybrid rate does not drop. `init` must be
/// feasible under `scheme.apply(config)`; when `None` it is drawn from the
/// realization seed.
pub fn alternating_optimize(
    realization: &ChannelRealization,
    config: &NetworkConfig,
    scheme: Scheme,
    init: Option<&InitialPoint>,
) -> Result<SolveReport> {
    let cfg = scheme.apply(config);
    cfg.validate()?;
    let mode = scheme.phase_mode(&cfg);
    let k = cfg.num_airfl;
    let mut report = SolveReport {
        scheme,
        seed: realization.seed,
        fingerprint: realization.fingerprint(),
        state: TransceiverState { p: vec![0.0; cfg.num_users()], a: C64::new(1.0, 0.0) },
        reflection: ReflectionState::continuous(vec![0.0; realization.num_elements()]),
        breakdown: None,
        trace: Vec::new(),
        power_traces: Vec::new(),
        receive_traces: Vec::new(),
        reflection_traces: Vec::new(),
        records: Vec::new(),
        iterations: 0,
        times: StepTimes::default(),
        termination: Termination::Infeasible,
        receive_skipped: k == 0,
        reflection_method: None,
        step_failures: Vec::new(),
        warm_started: false,
    };
    let init = match init {
        Some(p) => p.clone(),
        None => match initialize(realization, &cfg, init_seed(realization, &cfg)) {
            Ok(p) => p,
            Err(Error::ScenarioInfeasible(msg)) => {
                report.step_failures.push(msg);
                return Ok(report);
            }
            Err(e) => return Err(e),
        },
    };
    let mut state = init.state;
    let mut reflection = init.reflection;
    let mut hbar = combined_channel(realization, &reflection)?;
    let Some(mut current) = feasible_rate(&state, &hbar, &cfg) else {
        report.step_failures.push("initial point violates the scheme constraints".into());
        report.state = state;
        report.reflection = reflection;
        return Ok(report);
    };
    report.trace.push(current.rate_hybrid);

    let s = &cfg.solver;
    let mut termination = Termination::Cap;
    for l in 1..=s.outer_max_iters {
        let before = current.rate_hybrid;
        let mut rec = IterationRecord {
            iteration: l,
            objective: before,
            rate_noma: 0.0,
            rate_airfl: 0.0,
            mse: 0.0,
            power_accepted: false,
            receive_accepted: false,
            reflection_accepted: false,
            power_secs: 0.0,
            receive_secs: 0.0,
            reflection_secs: 0.0,
        };

        // Step 1: transmit powers
        let t0 = Instant::now();
        match allocate_power(&gains(&hbar), state.a, &state.p, &cfg) {
            Ok(pa) => {
                let cand = TransceiverState { p: pa.p, a: state.a };
                if let Some(b) = feasible_rate(&cand, &hbar, &cfg) {
                    if b.rate_hybrid >= current.rate_hybrid {
                        state = cand;
                        current = b;
                        rec.power_accepted = true;
                    }
                }
                report.power_traces.push(pa.trace);
            }
            Err(e) => report.step_failures.push(format!("iteration {l} power: {e}")),
        }
        let dt = t0.elapsed();
        report.times.power += dt;
        rec.power_secs = secs(dt);

        // Step 2: receive scalar
        if k > 0 {
            let t0 = Instant::now();
            match sca_scalar(&hbar, &state.p, Some(state.a), &cfg) {
                Ok(out) => {
                    let cand = TransceiverState { p: state.p.clone(), a: out.a };
                    if let Some(b) = feasible_rate(&cand, &hbar, &cfg) {
                        if b.rate_hybrid >= current.rate_hybrid {
                            state = cand;
                            current = b;
                            rec.receive_accepted = true;
                        }
                    }
                    report.receive_traces.push(out.trace);
                }
                Err(e) => report.step_failures.push(format!("iteration {l} receive: {e}")),
            }
            if let Some((cand, b)) = rescale_airfl(&state, &hbar, &cfg, current.rate_hybrid) {
                state = cand;
                current = b;
                rec.receive_accepted = true;
            }
            let dt = t0.elapsed();
            report.times.receive += dt;
            rec.receive_secs = secs(dt);
        }

        // Step 3: reflection
        if !scheme.overrides().freeze_reflection {
            let t0 = Instant::now();
            let seed = realization.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ l as u64;
            match design_reflection(realization, &state, &reflection, mode, &cfg, seed, ScalarPolicy::Track) {
                Ok(design) => {
                    report.reflection_method = Some(design.method);
                    if let (Some(refl), Some(cand)) = (design.reflection, design.transceiver) {
                        let h = combined_channel(realization, &refl)?;
                        if let Some(b) = feasible_rate(&cand, &h, &cfg) {
                            if b.rate_hybrid >= current.rate_hybrid {
                                reflection = refl;
                                hbar = h;
                                state = cand;
                                current = b;
                                rec.reflection_accepted = true;
                            }
                        }
                    }
                    report.reflection_traces.push(design.sdp_trace);
                }
                Err(e) => report.step_failures.push(format!("iteration {l} reflection: {e}")),
            }
            let dt = t0.elapsed();
            report.times.reflection += dt;
            rec.reflection_secs = secs(dt);
        }

        rec.objective = current.rate_hybrid;
        rec.rate_noma = current.rate_noma_sum;
        rec.rate_airfl = current.rate_airfl;
        rec.mse = current.mse;
        report.records.push(rec);
        report.trace.push(current.rate_hybrid);
        report.iterations = l;
        if (current.rate_hybrid - before).abs() <= s.outer_tol * current.rate_hybrid.abs().max(f64::MIN_POSITIVE) {
            termination = Termination::Tolerance;
            break;
        }
    }
    report.termination = termination;
    report.state = state;
    report.reflection = reflection;
    report.breakdown = Some(current);
    Ok(report)
}

/// Seed for the initial reflection draws of a realization.
pub fn init_seed(realization: &ChannelRealization, config: &NetworkConfig) -> u64 {
    realization.seed ^ config.rng_seed.rotate_left(32) ^ 0x5eed_1417
}

/// Runs every scheme from one initialization, computed under the most
/// constrained (discrete) problem so it is feasible for all of them.
/// Schemes whose feasible set contains the discrete one are also restarted
/// from the discrete solution and keep the better run.
pub fn run_scheme_suite(realization: &ChannelRealization, config: &NetworkConfig, schemes: &[Scheme]) -> Result<Vec<SolveReport>> {
    let init = match initialize(realization, config, init_seed(realization, config)) {
        Ok(p) => Some(p),
        Err(Error::ScenarioInfeasible(_)) => None,
        Err(e) => return Err(e),
    };
    let Some(init) = init else {
        return schemes.iter().map(|&s| alternating_optimize(realization, config, s, None)).collect();
    };
    let needs_baseline = schemes.iter().any(|s| matches!(s, Scheme::ContinuousRis | Scheme::RelaxedQos | Scheme::RelaxedMse));
    let baseline = if needs_baseline || schemes.contains(&Scheme::DiscreteRis) {
        Some(alternating_optimize(realization, config, Scheme::DiscreteRis, Some(&init))?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let report = match (scheme, &baseline) {
            (Scheme::DiscreteRis, Some(b)) => b.clone(),
            (Scheme::ContinuousRis | Scheme::RelaxedQos | Scheme::RelaxedMse, Some(b)) => {
                let cold = alternating_optimize(realization, config, scheme, Some(&init))?;
                match b.objective() {
                    Some(_) => {
                        let start = InitialPoint { reflection: b.reflection.clone(), state: b.state.clone(), draws: 0, restored: false };
                        let mut warm = alternating_optimize(realization, config, scheme, Some(&start))?;
                        warm.warm_started = true;
                        if warm.objective() > cold.objective() {
                            warm
                        } else {
                            cold
                        }
                    }
                    None => cold,
                }
            }
            _ => alternating_optimize(realization, config, scheme, Some(&init))?,
        };
        out.push(report);
    }
    Ok(out)
}
