//! Scenario runner, TDL/IDL sweeps and metric aggregation.

mod output;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, MobilityParams, TrafficParams};
use crate::error::{Result, SimError};
use crate::phy::SimParams;
use crate::rl::{epsilon_at, TrainConfig};
use crate::rng::{SeedStreams, Stream};
use crate::xapps::{Mode, SlotStep, Team};

pub use output::{
    read_run_csv, write_run, write_sweep, write_trace, RunArtifacts, RunRow, SweepArtifacts,
    MANIFEST_SCHEMA, RUN_CSV_SCHEMA,
};

/// Everything that determines one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n_slots: u64,
    pub mode: Mode,
    pub seed: u64,
    pub sim: SimParams,
    pub mobility: MobilityParams,
    pub traffic: TrafficParams,
    pub train: TrainConfig,
}

impl Scenario {
    /// Full-size network, 20000 slots.
    pub fn table1() -> Self {
        Self::with_sim(SimParams::table1(), 20_000)
    }

    /// Two cells, ten users, six RBGs, 5000 slots.
    pub fn desk() -> Self {
        Self::with_sim(SimParams::desk(), 5_000)
    }

    fn with_sim(sim: SimParams, n_slots: u64) -> Self {
        Scenario {
            n_slots,
            mode: Mode::Tdl,
            seed: 1,
            sim,
            mobility: MobilityParams::default(),
            traffic: TrafficParams::default(),
            train: TrainConfig {
                epsilon_decay_slots: n_slots / 2,
                ..TrainConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_slots == 0 {
            return Err(SimError::config("n_slots", "must be at least 1"));
        }
        self.sim.validate()?;
        self.mobility.validate()?;
        self.traffic.validate()?;
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// System throughput per slot, bits/s.
    pub throughput_series: Vec<f64>,
    pub reward_series: Vec<f64>,
    /// Cumulative packet drop rate after each slot.
    pub pdr_series: Vec<f64>,
    pub pdr_final: f64,
    /// Mean throughput over the last 10% of slots.
    pub throughput_tail_mean: f64,
    /// Digest of the arrival and mobility trace.
    pub env_trace_hash: String,
}

impl RunMetrics {
    /// Derives the summary fields from the per-slot series.
    pub fn from_series(
        throughput_series: Vec<f64>,
        reward_series: Vec<f64>,
        pdr_series: Vec<f64>,
        env_trace_hash: String,
    ) -> Self {
        let pdr_final = pdr_series.last().copied().unwrap_or(0.0);
        let throughput_tail_mean = mean(tail(&throughput_series));
        RunMetrics {
            throughput_series,
            reward_series,
            pdr_series,
            pdr_final,
            throughput_tail_mean,
            env_trace_hash,
        }
    }
}

/// What an observer sees after each slot.
pub struct SlotView<'a> {
    pub env: &'a Environment,
    pub step: &'a SlotStep,
    pub epsilon: f64,
}

pub fn run_scenario(s: &Scenario) -> Result<RunMetrics> {
    run_scenario_with(s, |_| Ok(()))
}

/// Runs a scenario, calling `observe` after every slot. An observer error
/// aborts the run.
pub fn run_scenario_with(
    s: &Scenario,
    mut observe: impl FnMut(&SlotView<'_>) -> Result<()>,
) -> Result<RunMetrics> {
    s.validate()?;
    let streams = SeedStreams::new(s.seed);
    let mut env = Environment::new(
        s.sim.clone(),
        s.mobility.clone(),
        s.traffic.clone(),
        &streams,
    )?;
    let mut team = Team::new(
        &s.sim,
        env.topology().all_served(),
        s.traffic.buffer_capacity,
        &s.train,
        s.mode,
        &streams,
    )?;
    let mut explore = streams.rng(Stream::Exploration, 0);
    let mut replay = streams.rng(Stream::Replay, 0);

    let n = s.n_slots as usize;
    let mut throughput = Vec::with_capacity(n);
    let mut reward = Vec::with_capacity(n);
    let mut pdr = Vec::with_capacity(n);
    for t in 0..s.n_slots {
        let epsilon = epsilon_at(t, &s.train);
        let step = team.slot(&mut env, epsilon, &mut explore)?;
        throughput.push(step.outcome.total_throughput);
        reward.push(step.reward);
        pdr.push(env.packet_drop_rate());
        observe(&SlotView {
            env: &env,
            step: &step,
            epsilon,
        })?;
        if s.train.learning {
            team.record(step.experiences);
            if (t + 1) % s.train.train_every == 0 {
                let report = team.train(&mut replay)?;
                let losses = report
                    .power_round1
                    .iter()
                    .chain(&report.power_round2)
                    .chain(report.rra.iter().flatten());
                if let Some(bad) = losses.into_iter().find(|l| !l.is_finite()) {
                    return Err(SimError::Training(format!(
                        "non-finite TD loss {bad} at slot {t} (seed {}, mode {})",
                        s.seed, s.mode
                    )));
                }
            }
        }
    }
    Ok(RunMetrics::from_series(
        throughput,
        reward,
        pdr,
        env.trace_hash(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Mean offered load per user, bits/s.
    Traffic,
    /// User speed, m/s.
    Speed,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Traffic => "traffic",
            SweepAxis::Speed => "speed",
        })
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "traffic" => Ok(SweepAxis::Traffic),
            "speed" => Ok(SweepAxis::Speed),
            other => Err(format!(
                "unknown sweep axis `{other}`, expected traffic or speed"
            )),
        }
    }
}

impl SweepAxis {
    pub fn apply(self, base: &Scenario, value: f64) -> Scenario {
        let mut s = base.clone();
        match self {
            SweepAxis::Traffic => s.traffic.mean_rate = value,
            SweepAxis::Speed => s.mobility.speed = value,
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub mode: Mode,
    pub seed: u64,
    pub tail_throughput_bps: f64,
    pub pdr: f64,
}

/// Mean and sample standard deviation over seeds of one (value, mode) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub value: f64,
    pub mode: Mode,
    pub tail_throughput_mean: f64,
    pub tail_throughput_std: f64,
    pub pdr_mean: f64,
    pub pdr_std: f64,
}

/// TDL against IDL on one (value, seed) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedGain {
    pub value: f64,
    pub seed: u64,
    /// (TDL − IDL) / IDL of tail throughput.
    pub relative_gain: f64,
    pub throughput_diff: f64,
    pub pdr_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    /// Full metrics of each run, aligned with `rows`.
    pub metrics: Vec<RunMetrics>,
    pub cells: Vec<CellSummary>,
    pub gains: Vec<PairedGain>,
}

impl SweepTable {
    pub fn cell(&self, value: f64, mode: Mode) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.value == value && c.mode == mode)
    }

    pub fn metrics_of(&self, value: f64, seed: u64, mode: Mode) -> Option<&RunMetrics> {
        self.rows
            .iter()
            .position(|r| r.value == value && r.seed == seed && r.mode == mode)
            .map(|i| &self.metrics[i])
    }

    pub fn gains_at(&self, value: f64) -> impl Iterator<Item = &PairedGain> {
        self.gains.iter().filter(move |g| g.value == value)
    }
}

/// Runs TDL and IDL for every (value, seed). Both modes of a pair share the
/// environment seed; a diverging arrival or mobility trace is a contract error.
pub fn sweep(
    base: &Scenario,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
) -> Result<SweepTable> {
    if values.is_empty() || seeds.is_empty() {
        return Err(SimError::config(
            "sweep",
            "needs at least one value and one seed",
        ));
    }
    let jobs: Vec<(f64, u64, Mode)> = values
        .iter()
        .flat_map(|&v| {
            seeds
                .iter()
                .flat_map(move |&seed| [Mode::Tdl, Mode::Idl].map(|m| (v, seed, m)))
        })
        .collect();
    let runs: Vec<RunMetrics> = jobs
        .par_iter()
        .map(|&(v, seed, mode)| {
            let mut s = axis.apply(base, v);
            s.seed = seed;
            s.mode = mode;
            run_scenario(&s)
        })
        .collect::<Result<_>>()?;
    summarize(axis, values, seeds, &jobs, runs)
}

fn summarize(
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    jobs: &[(f64, u64, Mode)],
    runs: Vec<RunMetrics>,
) -> Result<SweepTable> {
    let rows: Vec<SweepRow> = jobs
        .iter()
        .zip(&runs)
        .map(|(&(value, seed, mode), m)| SweepRow {
            axis,
            value,
            mode,
            seed,
            tail_throughput_bps: m.throughput_tail_mean,
            pdr: m.pdr_final,
        })
        .collect();
    let find = |v: f64, seed: u64, mode: Mode| {
        jobs.iter()
            .position(|&j| j == (v, seed, mode))
            .expect("every job was run")
    };
    let mut gains = Vec::new();
    for &v in values {
        for &seed in seeds {
            let (t, i) = (find(v, seed, Mode::Tdl), find(v, seed, Mode::Idl));
            if runs[t].env_trace_hash != runs[i].env_trace_hash {
                return Err(SimError::contract(format!(
                    "paired runs at {axis}={v}, seed {seed} saw different environment traces"
                )));
            }
            let (tdl, idl) = (&rows[t], &rows[i]);
            gains.push(PairedGain {
                value: v,
                seed,
                relative_gain: (tdl.tail_throughput_bps - idl.tail_throughput_bps)
                    / idl.tail_throughput_bps,
                throughput_diff: tdl.tail_throughput_bps - idl.tail_throughput_bps,
                pdr_diff: tdl.pdr - idl.pdr,
            });
        }
    }
    let mut cells = Vec::new();
    for &v in values {
        for mode in [Mode::Tdl, Mode::Idl] {
            let pick = |f: fn(&SweepRow) -> f64| -> Vec<f64> {
                rows.iter()
                    .filter(|r| r.value == v && r.mode == mode)
                    .map(f)
                    .collect()
            };
            let tp = pick(|r| r.tail_throughput_bps);
            let pdr = pick(|r| r.pdr);
            cells.push(CellSummary {
                value: v,
                mode,
                tail_throughput_mean: mean(&tp),
                tail_throughput_std: sample_std(&tp),
                pdr_mean: mean(&pdr),
                pdr_std: sample_std(&pdr),
            });
        }
    }
    Ok(SweepTable {
        axis,
        rows,
        metrics: runs,
        cells,
        gains,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceStats {
    /// Variance of the moving-average throughput over the first 10% of slots.
    pub early_var: f64,
    /// Same over the last 10%.
    pub late_var: f64,
    pub tail_mean: f64,
}

pub const MOVING_AVERAGE_WINDOW: usize = 100;

/// Moving-average stability of a throughput series. Each 10% segment is
/// smoothed on its own with a window of 100 slots, or the segment length if
/// shorter.
pub fn convergence_stats(series: &[f64]) -> Result<ConvergenceStats> {
    if series.len() < MOVING_AVERAGE_WINDOW {
        return Err(SimError::Domain(format!(
            "convergence statistics need at least {MOVING_AVERAGE_WINDOW} slots, got {}",
            series.len()
        )));
    }
    let seg = series.len() / 10;
    let early = &series[..seg];
    let late = &series[series.len() - seg..];
    Ok(ConvergenceStats {
        early_var: variance(&moving_average(early, MOVING_AVERAGE_WINDOW.min(seg))),
        late_var: variance(&moving_average(late, MOVING_AVERAGE_WINDOW.min(seg))),
        tail_mean: mean(late),
    })
}

/// Trailing means over every full window.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || x.len() < window {
        return Vec::new();
    }
    x.windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect()
}

fn tail(x: &[f64]) -> &[f64] {
    let len = (x.len() / 10).max(1).min(x.len());
    &x[x.len() - len..]
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    mean(&x.iter().map(|v| (v - m).powi(2)).collect::<Vec<_>>())
}

fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}
