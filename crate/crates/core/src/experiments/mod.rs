//! Monte Carlo sweeps over one scenario parameter, CSV persistence and plots.

mod plot;

pub use plot::{emit_plots, render_svg, PlotStyle};

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::sample_channels;
use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::orchestrator::{run_scheme_suite, Scheme, SolveReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    /// Convergence: the grid holds outer-iteration indices.
    Iterations,
    RisY,
    NumElements,
    PowerBudgetDbm,
    WeightLambda,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 5] = [
        SweepParameter::Iterations,
        SweepParameter::RisY,
        SweepParameter::NumElements,
        SweepParameter::PowerBudgetDbm,
        SweepParameter::WeightLambda,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SweepParameter::Iterations => "iterations",
            SweepParameter::RisY => "ris_y_coordinate",
            SweepParameter::NumElements => "num_elements",
            SweepParameter::PowerBudgetDbm => "power_budget_dbm",
            SweepParameter::WeightLambda => "weight_lambda",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sweep parameter `{s}`")))
    }

    /// Axis caption.
    pub fn axis(self) -> &'static str {
        match self {
            SweepParameter::Iterations => "iteration",
            SweepParameter::RisY => "RIS y-coordinate (m)",
            SweepParameter::NumElements => "reflecting elements M",
            SweepParameter::PowerBudgetDbm => "power budget (dBm)",
            SweepParameter::WeightLambda => "weight lambda",
        }
    }

    /// Scenario for one grid value. The convergence grid leaves it unchanged.
    pub fn apply(self, config: &NetworkConfig, value: f64) -> Result<NetworkConfig> {
        let mut c = config.clone();
        match self {
            SweepParameter::Iterations => {}
            SweepParameter::RisY => c = c.with_placement_geometry(value),
            SweepParameter::NumElements => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::InvalidConfig(format!("num_elements must be a positive integer, got {value}")));
                }
                c.num_elements = value as usize;
            }
            SweepParameter::PowerBudgetDbm => c.set_power_budget_dbm(value),
            SweepParameter::WeightLambda => c.weight_lambda = value,
        }
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    /// Trial t at every grid point uses channel seed `seed + t`.
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("sweep grid is empty".into()));
        }
        if self.grid.iter().any(|x| !x.is_finite()) || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("sweep grid must be finite and strictly increasing".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("no schemes selected".into()));
        }
        if self.parameter == SweepParameter::Iterations && self.grid.iter().any(|x| *x < 0.0 || x.fract() != 0.0) {
            return Err(Error::InvalidConfig("iteration grid must hold non-negative integers".into()));
        }
        Ok(())
    }
}

/// One (grid value, scheme) cell. Rates in bit/s, averaged over the
/// feasible trials; `NaN` when none was feasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub scheme: String,
    pub mean_rate: f64,
    pub std_err: f64,
    pub mean_iters: f64,
    pub parameter: String,
    pub mean_rate_noma: f64,
    pub mean_rate_airfl: f64,
    pub trials: usize,
    pub feasible: usize,
    pub infeasible: usize,
    /// Hash of the channel realizations behind the cell; equal across the
    /// schemes of a grid point.
    pub realization_hash: String,
}

/// Outcome of one scheme on one trial.
#[derive(Debug, Clone, PartialEq)]
struct TrialOutcome {
    fingerprint: u64,
    objective: Option<f64>,
    rate_noma: f64,
    rate_airfl: f64,
    iterations: usize,
    trace: Vec<f64>,
}

impl TrialOutcome {
    fn from_report(r: &SolveReport) -> Self {
        let b = r.breakdown.as_ref();
        Self {
            fingerprint: r.fingerprint,
            objective: r.objective(),
            rate_noma: b.map_or(0.0, |b| b.rate_noma_sum),
            rate_airfl: b.map_or(0.0, |b| b.rate_airfl),
            iterations: r.iterations,
            trace: r.trace.clone(),
        }
    }

    /// Objective after `l` outer iterations, holding the final value.
    fn at_iteration(&self, l: usize) -> Option<f64> {
        self.objective?;
        self.trace.get(l.min(self.trace.len().saturating_sub(1))).copied()
    }
}

fn mean_and_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn combine_fingerprints(fps: impl Iterator<Item = u64>) -> u64 {
    fps.fold(0xcbf2_9ce4_8422_2325, |h, fp| (h ^ fp).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Runs `trials` suites for one scenario. Trials are spread over the
/// available cores; the result order only depends on the trial index.
fn run_trials(config: &NetworkConfig, spec: &SweepSpec) -> Result<Vec<Vec<TrialOutcome>>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(spec.trials);
    let run = |t: usize| -> Result<Vec<TrialOutcome>> {
        let r = sample_channels(config, spec.seed.wrapping_add(t as u64))?;
        Ok(run_scheme_suite(&r, config, &spec.schemes)?.iter().map(TrialOutcome::from_report).collect())
    };
    if workers <= 1 {
        return (0..spec.trials).map(run).collect();
    }
    let chunks: Vec<Result<Vec<Vec<TrialOutcome>>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let run = &run;
                s.spawn(move || (w..spec.trials).step_by(workers).map(run).collect::<Result<Vec<_>>>())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("trial worker panicked")).collect()
    });
    let chunks = chunks.into_iter().collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(spec.trials);
    for t in 0..spec.trials {
        out.push(chunks[t % workers][t / workers].clone());
    }
    Ok(out)
}

fn summarize(spec: &SweepSpec, value: f64, si: usize, outcomes: &[Vec<TrialOutcome>], pick: impl Fn(&TrialOutcome) -> Option<f64>) -> SweepRow {
    let cell: Vec<&TrialOutcome> = outcomes.iter().map(|o| &o[si]).collect();
    let ok: Vec<&TrialOutcome> = cell.iter().copied().filter(|o| pick(o).is_some()).collect();
    let rates: Vec<f64> = ok.iter().filter_map(|o| pick(o)).collect();
    let (mean_rate, std_err) = mean_and_err(&rates);
    let avg = |f: &dyn Fn(&TrialOutcome) -> f64| mean_and_err(&ok.iter().map(|o| f(o)).collect::<Vec<_>>()).0;
    SweepRow {
        sweep_value: value,
        scheme: spec.schemes[si].label().to_string(),
        mean_rate,
        std_err,
        mean_iters: avg(&|o| o.iterations as f64),
        parameter: spec.parameter.label().to_string(),
        mean_rate_noma: avg(&|o| o.rate_noma),
        mean_rate_airfl: avg(&|o| o.rate_airfl),
        trials: cell.len(),
        feasible: ok.len(),
        infeasible: cell.len() - ok.len(),
        realization_hash: format!("{:016x}", combine_fingerprints(cell.iter().map(|o| o.fingerprint))),
    }
}

/// Runs the sweep with common channel seeds across schemes and grid points.
/// Rows are ordered by grid value, then by scheme as listed in `spec`.
pub fn run_sweep(spec: &SweepSpec, config: &NetworkConfig) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    config.validate()?;
    let mut rows = Vec::with_capacity(spec.grid.len() * spec.schemes.len());
    if spec.parameter == SweepParameter::Iterations {
        let outcomes = run_trials(config, spec)?;
        for &value in &spec.grid {
            for si in 0..spec.schemes.len() {
                rows.push(summarize(spec, value, si, &outcomes, |o| o.at_iteration(value as usize)));
            }
        }
        return Ok(rows);
    }
    for &value in &spec.grid {
        let cfg = spec.parameter.apply(config, value)?;
        let outcomes = run_trials(&cfg, spec)?;
        for si in 0..spec.schemes.len() {
            rows.push(summarize(spec, value, si, &outcomes, |o| o.objective));
        }
    }
    Ok(rows)
}

pub fn write_results<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_results(rows: &[SweepRow], path: &Path) -> Result<()> {
    write_results(rows, std::fs::File::create(path)?)
}

pub fn read_results<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn load_results(path: &Path) -> Result<Vec<SweepRow>> {
    read_results(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetworkConfig {
        let mut c = NetworkConfig::default().with_users(2, 1);
        c.num_elements = 4;
        c.noise_power_w = 1e-13;
        c.min_rate_bps = 1e5;
        c.mse_tolerance = 0.05;
        c
    }

    fn spec(parameter: SweepParameter, grid: Vec<f64>, trials: usize) -> SweepSpec {
        SweepSpec { parameter, grid, trials, schemes: vec![Scheme::DiscreteRis, Scheme::RandomRis], seed: 11 }
    }

    #[test]
    fn spec_validation() {
        assert!(spec(SweepParameter::RisY, vec![], 1).validate().is_err());
        assert!(spec(SweepParameter::RisY, vec![20.0, 10.0], 1).validate().is_err());
        assert!(spec(SweepParameter::RisY, vec![10.0], 0).validate().is_err());
        assert!(spec(SweepParameter::Iterations, vec![0.5], 1).validate().is_err());
        assert!(spec(SweepParameter::RisY, vec![10.0, 20.0], 1).validate().is_ok());
        for p in SweepParameter::ALL {
            assert_eq!(SweepParameter::parse(p.label()).unwrap(), p);
        }
    }

    #[test]
    fn single_point_gives_one_row_per_scheme() {
        let rows = run_sweep(&spec(SweepParameter::WeightLambda, vec![0.5], 1), &tiny()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].scheme, "discrete-ris");
        assert_eq!(rows[1].scheme, "random-ris");
        assert_eq!(rows[0].realization_hash, rows[1].realization_hash);
        assert_eq!(rows[0].trials, 1);
    }

    #[test]
    fn csv_round_trips() {
        let rows = run_sweep(&spec(SweepParameter::PowerBudgetDbm, vec![20.0, 23.0], 2), &tiny()).unwrap();
        let mut buf = Vec::new();
        write_results(&rows, &mut buf).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with("sweep_value,scheme,mean_rate,std_err,mean_iters,"));
        let back = read_results(buf.as_slice()).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.mean_rate.to_bits(), b.mean_rate.to_bits());
            assert_eq!(a.realization_hash, b.realization_hash);
        }
    }

    #[test]
    fn convergence_sweep_is_nondecreasing() {
        let s = spec(SweepParameter::Iterations, (0..6).map(f64::from).collect(), 3);
        let rows = run_sweep(&s, &tiny()).unwrap();
        let opt: Vec<f64> = rows.iter().filter(|r| r.scheme == "discrete-ris").map(|r| r.mean_rate).collect();
        assert!(opt.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9)), "{opt:?}");
    }

    #[test]
    fn stats() {
        let (m, e) = mean_and_err(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((e - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(mean_and_err(&[]).0.is_nan());
        assert_eq!(mean_and_err(&[4.0]), (4.0, 0.0));
    }
}
