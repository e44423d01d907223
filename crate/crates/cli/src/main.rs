use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ris_hybrid::channel::sample_channels;
use ris_hybrid::config::dbm_to_watts;
use ris_hybrid::experiments::{emit_plots, load_results, run_sweep, save_results, PlotStyle, SweepParameter, SweepSpec};
use ris_hybrid::orchestrator::write_iteration_records;
use ris_hybrid::{run_scheme_suite, Error, NetworkConfig, Scheme};

/// Exit code when no scheme found a feasible point.
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "ris-hybrid", version, about = "Hybrid NOMA / AirFL rate optimization with a reconfigurable surface")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// TOML scenario file; built-in defaults when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the receiver noise power.
    #[arg(long, allow_hyphen_values = true)]
    noise_dbm: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> ris_hybrid::Result<NetworkConfig> {
        let mut c = match &self.scenario {
            Some(p) => NetworkConfig::from_file(p)?,
            None => NetworkConfig::default(),
        };
        if let Some(n) = self.noise_dbm {
            c.noise_power_w = dbm_to_watts(n);
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one channel realization with one or more schemes.
    Solve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated scheme labels, or `all`.
        #[arg(long, default_value = "discrete-ris")]
        schemes: String,
        /// Directory for per-iteration CSV records (one file per scheme).
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Monte Carlo sweep over one parameter; writes <sweep>.csv and <sweep>.svg.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// iterations | ris_y_coordinate | num_elements | power_budget_dbm | weight_lambda
        #[arg(long)]
        sweep: String,
        /// Comma-separated, strictly increasing grid values.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        /// Trials per grid point; the scenario's value when omitted.
        #[arg(long)]
        trials: Option<usize>,
        /// Base channel seed; the scenario's value when omitted.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "discrete-ris,random-ris")]
        schemes: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Re-render the plots of a results CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Print the built-in scenario as TOML.
    DefaultScenario,
}

fn parse_schemes(s: &str) -> ris_hybrid::Result<Vec<Scheme>> {
    if s == "all" {
        return Ok(Scheme::ALL.to_vec());
    }
    s.split(',').map(|x| Scheme::parse(x.trim())).collect()
}

fn parse_grid(s: &str) -> ris_hybrid::Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| Error::InvalidConfig(format!("grid value `{x}`: {e}"))))
        .collect()
}

fn solve(scenario: &ScenarioArgs, seed: u64, schemes: &str, records: Option<&Path>) -> ris_hybrid::Result<bool> {
    let config = scenario.load()?;
    let schemes = parse_schemes(schemes)?;
    let realization = sample_channels(&config, seed)?;
    let reports = run_scheme_suite(&realization, &config, &schemes)?;
    let mut out = io::stdout().lock();
    writeln!(out, "scheme,objective_bps,rate_noma_bps,rate_airfl_bps,mse,iterations,termination")?;
    for r in &reports {
        match &r.breakdown {
            Some(b) => writeln!(
                out,
                "{},{:.3},{:.3},{:.3},{:.6e},{},{}",
                r.scheme,
                b.rate_hybrid,
                b.rate_noma_sum,
                b.rate_airfl,
                b.mse,
                r.iterations,
                r.termination.label()
            )?,
            None => writeln!(out, "{},,,,,{},{}", r.scheme, r.iterations, r.termination.label())?,
        }
        for msg in &r.step_failures {
            eprintln!("{}: {msg}", r.scheme);
        }
    }
    if let Some(dir) = records {
        std::fs::create_dir_all(dir)?;
        for r in &reports {
            let f = File::create(dir.join(format!("{}-seed{seed}.csv", r.scheme)))?;
            write_iteration_records(r, BufWriter::new(f))?;
        }
    }
    Ok(reports.iter().any(|r| r.breakdown.is_some()))
}

fn sweep(
    scenario: &ScenarioArgs,
    name: &str,
    grid: &str,
    trials: Option<usize>,
    seed: Option<u64>,
    schemes: &str,
    out: &Path,
) -> ris_hybrid::Result<()> {
    let config = scenario.load()?;
    let spec = SweepSpec {
        parameter: SweepParameter::parse(name)?,
        grid: parse_grid(grid)?,
        trials: trials.unwrap_or(config.trials),
        schemes: parse_schemes(schemes)?,
        seed: seed.unwrap_or(config.rng_seed),
    };
    spec.validate()?;
    std::fs::create_dir_all(out)?;
    let rows = run_sweep(&spec, &config)?;
    let csv = out.join(format!("{}.csv", spec.parameter));
    save_results(&rows, &csv)?;
    let plots = emit_plots(&rows, out, &PlotStyle::default())?;
    for r in rows.iter().filter(|r| r.infeasible > 0) {
        eprintln!("{} = {}: {} infeasible of {} trials for {}", r.parameter, r.sweep_value, r.infeasible, r.trials, r.scheme);
    }
    println!("{}", csv.display());
    for p in plots {
        println!("{}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> ris_hybrid::Result<ExitCode> {
    match cli.command {
        Command::Solve { scenario, seed, schemes, records } => {
            if !solve(&scenario, seed, &schemes, records.as_deref())? {
                eprintln!("no scheme found a feasible point");
                return Ok(ExitCode::from(EXIT_INFEASIBLE));
            }
        }
        Command::Sweep { scenario, sweep: name, grid, trials, seed, schemes, out } => {
            sweep(&scenario, &name, &grid, trials, seed, &schemes, &out)?;
        }
        Command::Plot { input, out } => {
            for p in emit_plots(&load_results(&input)?, &out, &PlotStyle::default())? {
                println!("{}", p.display());
            }
        }
        Command::DefaultScenario => print!("{}", NetworkConfig::default().to_toml_string()),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::ScenarioInfeasible(_) => ExitCode::from(EXIT_INFEASIBLE),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
