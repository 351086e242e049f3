use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use teamlearn::experiment::{
    run_scenario_with, sweep, write_run, write_sweep, write_trace, Scenario, SweepAxis,
};
use teamlearn::verify::{run_gradcheck_suite, run_oracle_suite};
use teamlearn::xapps::Mode;
use teamlearn_cli::parse_config;

const GRAD_TOL: f64 = 1e-4;
const PHY_TOL: f64 = 1e-12;
const STATE_TOL: f64 = 1e-9;
const PROGRESS_EVERY: u64 = 1000;

#[derive(Parser)]
#[command(
    name = "teamlearn",
    version,
    about = "Team vs independent DQN xAPPs on a multi-cell downlink"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its CSVs and manifest.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Also write a per-slot trace.jsonl.
        #[arg(long)]
        trace: bool,
    },
    /// Run TDL and IDL over a grid of loads or speeds.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_parser = parse_axis)]
        axis: SweepAxis,
        /// Comma-separated axis values (bits/s for traffic, m/s for speed).
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Comma-separated master seeds.
        #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3, 4, 5])]
        seeds: Vec<u64>,
    },
    /// Finite-difference check of the TD-loss gradients.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        networks: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Compare PHY and state builders with brute-force references.
    Oracle {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// TOML config; omitted keys take the preset's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long)]
    slots: Option<u64>,
    #[arg(long, env = "TEAMLEARN_OUT", default_value = "out")]
    out: PathBuf,
    /// Override one config key, e.g. `--set traffic.mean_rate=6e6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse()
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario, Box<dyn std::error::Error>> {
        let mut overrides = self.set.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if let Some(mode) = self.mode {
            overrides.push(format!("mode=\"{mode}\""));
        }
        if let Some(slots) = self.slots {
            overrides.push(format!("n_slots={slots}"));
        }
        Ok(parse_config(self.config.as_deref(), &overrides)?)
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<bool, Box<dyn std::error::Error>> {
    match cmd {
        Command::Run { scenario, trace } => {
            let s = scenario.load()?;
            run(&s, &scenario.out, trace)?;
            Ok(true)
        }
        Command::Sweep {
            scenario,
            axis,
            values,
            seeds,
        } => {
            let s = scenario.load()?;
            let start = Instant::now();
            eprintln!(
                "sweep {axis} over {values:?}, seeds {seeds:?}: {} runs of {} slots",
                values.len() * seeds.len() * 2,
                s.n_slots
            );
            let table = sweep(&s, axis, &values, &seeds)?;
            let out = write_sweep(&scenario.out, &s, &values, &seeds, &table)?;
            for c in &table.cells {
                println!(
                    "{axis}={} {}: tail throughput {:.4e} ± {:.2e} bps, PDR {:.4} ± {:.4}",
                    c.value,
                    c.mode,
                    c.tail_throughput_mean,
                    c.tail_throughput_std,
                    c.pdr_mean,
                    c.pdr_std
                );
            }
            eprintln!(
                "wrote {} in {:.1?}",
                out.sweep_csv.display(),
                start.elapsed()
            );
            Ok(true)
        }
        Command::Gradcheck {
            networks,
            step,
            seed,
        } => {
            let r = run_gradcheck_suite(seed, networks, step)?;
            println!(
                "max relative gradient error {:.3e} over {} parameters in {} networks",
                r.max_rel_err, r.parameters_checked, r.networks
            );
            Ok(r.max_rel_err < GRAD_TOL)
        }
        Command::Oracle { instances, seed } => {
            let r = run_oracle_suite(seed, instances)?;
            println!(
                "{} instances: PHY max relative error {:.3e}, state max relative error {:.3e}",
                r.instances, r.phy_max_rel, r.state_max_rel
            );
            Ok(r.passes(PHY_TOL, STATE_TOL))
        }
    }
}

fn run(s: &Scenario, out: &Path, with_trace: bool) -> Result<(), Box<dyn std::error::Error>> {
    let start = Instant::now();
    let mut trace = Vec::new();
    let metrics = run_scenario_with(s, |v| {
        let done = v.env.slot();
        if done % PROGRESS_EVERY == 0 || done == s.n_slots {
            eprintln!(
                "[{} seed {}] slot {done}/{}  throughput {:.3e} bps  PDR {:.4}  eps {:.3}  {:.1?}",
                s.mode,
                s.seed,
                s.n_slots,
                v.step.outcome.total_throughput,
                v.env.packet_drop_rate(),
                v.epsilon,
                start.elapsed()
            );
        }
        if with_trace {
            trace.push(v.step.trace.clone());
        }
        Ok(())
    })?;
    let files = write_run(out, s, &metrics)?;
    if with_trace {
        write_trace(&out.join("trace.jsonl"), &trace)?;
    }
    println!(
        "tail throughput {:.4e} bps, final PDR {:.4}; wrote {}",
        metrics.throughput_tail_mean,
        metrics.pdr_final,
        files.manifest.display()
    );
    Ok(())
}
