//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.
//!
//! Desk scale throughout: 2 BSs, 10 users, 6 RBGs, 5000 slots, seeds 1..=5,
//! each seed run under both TDL and IDL on the same environment trace.

use std::io::Write;
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use teamlearn::experiment::{
    convergence_stats, run_scenario, run_scenario_with, sweep, write_run, RunMetrics, Scenario,
    SweepAxis,
};
use teamlearn::verify::{run_gradcheck_suite, run_oracle_suite};
use teamlearn::xapps::Mode;
use teamlearn::SimError;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const MIN_SEED_WINS: usize = 4;
const PHY_TOL: f64 = 1e-12;
const STATE_TOL: f64 = 1e-9;
const ORACLE_INSTANCES: usize = 1000;
const GRAD_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-5;
const GRAD_NETWORKS: usize = 20;
const SUITE_BUDGET: Duration = Duration::from_secs(60);
const HIGH_LOAD: f64 = 6e6;
const LOW_LOAD: f64 = 3e6;
const SPEED_LOAD: f64 = 4e6;
const SPEEDS: [f64; 3] = [0.0, 20.0, 30.0];

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        std::io::stdout().flush().ok();
    }
}

fn desk(mode: Mode, seed: u64) -> Scenario {
    let mut s = Scenario::desk();
    s.mode = mode;
    s.seed = seed;
    s
}

fn pairs() -> Vec<(u64, Mode)> {
    SEEDS
        .iter()
        .flat_map(|&seed| [(seed, Mode::Tdl), (seed, Mode::Idl)])
        .collect()
}

/// Per-run invariant tallies gathered by the slot observer.
#[derive(Default)]
struct Audit {
    slots: u64,
    conservation_breaks: u64,
    constraint_breaks: u64,
    first_error: Option<String>,
}

fn audited_run(s: &Scenario) -> Result<(RunMetrics, Audit), SimError> {
    let mut audit = Audit::default();
    let metrics = run_scenario_with(s, |v| {
        audit.slots += 1;
        if !v.env.buffers().iter().all(|b| b.is_conserved()) {
            audit.conservation_breaks += 1;
        }
        let p = v.env.params();
        let assoc = &v.env.topology().association;
        let checked = v.step.alloc.check(assoc, p.p_min_watts(), p.p_max_watts());
        let one_each = v
            .step
            .alloc
            .to_alpha(p.n_users)
            .sum_axis(ndarray::Axis(2))
            .iter()
            .all(|&c| c == 1);
        if checked.is_err() || !one_each {
            audit.constraint_breaks += 1;
            audit
                .first_error
                .get_or_insert_with(|| format!("slot {}: {checked:?}", v.env.slot()));
        }
        Ok(())
    })?;
    Ok((metrics, audit))
}

fn wins(diffs: impl Iterator<Item = bool>) -> usize {
    diffs.filter(|&w| w).count()
}

fn main() -> ExitCode {
    let mut r = Report { failed: 0 };
    let total = Instant::now();

    let t = Instant::now();
    match run_oracle_suite(1, ORACLE_INSTANCES) {
        Ok(o) => {
            let el = t.elapsed();
            r.line(
                "math-oracle equivalence",
                o.passes(PHY_TOL, STATE_TOL) && el < SUITE_BUDGET,
                format!(
                    "{} instances, PHY max rel {:.2e} (tol {PHY_TOL:e}), states max rel {:.2e} (tol {STATE_TOL:e}), {el:.1?}",
                    o.instances, o.phy_max_rel, o.state_max_rel
                ),
            );
        }
        Err(e) => r.line("math-oracle equivalence", false, e.to_string()),
    }

    let t = Instant::now();
    match run_gradcheck_suite(1, GRAD_NETWORKS, GRAD_STEP) {
        Ok(g) => {
            let el = t.elapsed();
            r.line(
                "gradient check",
                g.max_rel_err < GRAD_TOL && el < SUITE_BUDGET,
                format!(
                    "{} networks, {} parameters, max rel {:.2e} (tol {GRAD_TOL:e}, h {GRAD_STEP:e}), {el:.1?}",
                    g.networks, g.parameters_checked, g.max_rel_err
                ),
            );
        }
        Err(e) => r.line("gradient check", false, e.to_string()),
    }

    // Traffic-load comparison at high load; also audited slot by slot.
    let t = Instant::now();
    let jobs = pairs();
    let done = Mutex::new(0usize);
    let high: Result<Vec<(RunMetrics, Audit)>, SimError> = jobs
        .par_iter()
        .map(|&(seed, mode)| {
            let mut s = desk(mode, seed);
            s.traffic.mean_rate = HIGH_LOAD;
            let out = audited_run(&s);
            let mut d = done.lock().unwrap();
            *d += 1;
            eprintln!(
                "  [{}/{}] 6 Mbps {mode} seed {seed} ({:.0?})",
                *d,
                jobs.len(),
                t.elapsed()
            );
            out
        })
        .collect();
    let high_elapsed = t.elapsed();
    let high = match high {
        Ok(h) => h,
        Err(e) => {
            for name in ["conservation", "constraints", "throughput/PDR at 6 Mbps"] {
                r.line(name, false, e.to_string());
            }
            Vec::new()
        }
    };
    if !high.is_empty() {
        let slots: u64 = high.iter().map(|(_, a)| a.slots).sum();
        let breaks: u64 = high.iter().map(|(_, a)| a.conservation_breaks).sum();
        r.line(
            "conservation",
            breaks == 0 && high.iter().all(|(_, a)| a.slots == 5000),
            format!("arrived = served + dropped + queued for every user at {slots} audited slots (TDL and IDL), {breaks} violations"),
        );
        let bad: u64 = high.iter().map(|(_, a)| a.constraint_breaks).sum();
        let first = high.iter().find_map(|(_, a)| a.first_error.clone());
        r.line(
            "constraints",
            bad == 0,
            format!(
                "one user per (BS, RBG), associated users only, powers within bounds: {bad} violating allocations{}",
                first.map(|f| format!(", first {f}")).unwrap_or_default()
            ),
        );

        let m = |seed: u64, mode: Mode| {
            let i = jobs.iter().position(|&j| j == (seed, mode)).unwrap();
            &high[i].0
        };
        let paired = SEEDS
            .iter()
            .all(|&s| m(s, Mode::Tdl).env_trace_hash == m(s, Mode::Idl).env_trace_hash);
        let tp_wins = wins(SEEDS.iter().map(|&s| {
            m(s, Mode::Tdl).throughput_tail_mean >= m(s, Mode::Idl).throughput_tail_mean
        }));
        let pdr_wins = wins(
            SEEDS
                .iter()
                .map(|&s| m(s, Mode::Tdl).pdr_final <= m(s, Mode::Idl).pdr_final),
        );
        let gains: Vec<String> = SEEDS
            .iter()
            .map(|&s| {
                let (a, b) = (m(s, Mode::Tdl), m(s, Mode::Idl));
                format!(
                    "s{s} {:+.2}%/{:+.4}",
                    100.0 * (a.throughput_tail_mean - b.throughput_tail_mean)
                        / b.throughput_tail_mean,
                    a.pdr_final - b.pdr_final
                )
            })
            .collect();
        r.line(
            "throughput/PDR at 6 Mbps",
            paired && tp_wins >= MIN_SEED_WINS && pdr_wins >= MIN_SEED_WINS,
            format!(
                "TDL tail throughput >= IDL in {tp_wins}/5 seeds, TDL PDR <= IDL in {pdr_wins}/5 (need {MIN_SEED_WINS}); paired traces {}; per seed gain/PDR diff [{}]; {high_elapsed:.0?}",
                if paired { "equal" } else { "DIFFER" },
                gains.join(", ")
            ),
        );
    }

    // Speed sweep at moderate load.
    let t = Instant::now();
    let mut base = Scenario::desk();
    base.traffic.mean_rate = SPEED_LOAD;
    match sweep(&base, SweepAxis::Speed, &SPEEDS, &SEEDS) {
        Ok(table) => {
            let gain = |v: f64| {
                let tdl = table.cell(v, Mode::Tdl).unwrap().tail_throughput_mean;
                let idl = table.cell(v, Mode::Idl).unwrap().tail_throughput_mean;
                (tdl - idl) / idl
            };
            let (g0, g20, g30) = (gain(0.0), gain(20.0), gain(30.0));
            let high_speed = (g20 + g30) / 2.0;
            r.line(
                "speed trend at 4 Mbps",
                high_speed >= g0,
                format!(
                    "seed-averaged TDL-IDL gain {:+.3}% at 20-30 m/s (20: {:+.3}%, 30: {:+.3}%) vs {:+.3}% at 0 m/s; {:.0?}",
                    100.0 * high_speed,
                    100.0 * g20,
                    100.0 * g30,
                    100.0 * g0,
                    t.elapsed()
                ),
            );

            let mut stable = 0;
            let mut detail = Vec::new();
            for &seed in &SEEDS {
                let m = table.metrics_of(20.0, seed, Mode::Tdl).unwrap();
                match convergence_stats(&m.throughput_series) {
                    Ok(c) => {
                        if c.late_var <= c.early_var {
                            stable += 1;
                        }
                        detail.push(format!("s{seed} {:.2e}->{:.2e}", c.early_var, c.late_var));
                    }
                    Err(e) => detail.push(format!("s{seed} {e}")),
                }
            }
            r.line(
                "convergence",
                stable >= MIN_SEED_WINS,
                format!(
                    "TDL 4 Mbps/20 m/s moving-average variance last 10% <= first 10% in {stable}/5 seeds (need {MIN_SEED_WINS}) [{}]",
                    detail.join(", ")
                ),
            );
        }
        Err(e) => {
            r.line("speed trend at 4 Mbps", false, e.to_string());
            r.line("convergence", false, e.to_string());
        }
    }

    // Frozen random-init policies under two loads.
    let frozen: Result<Vec<(u64, Mode, f64, f64)>, SimError> = pairs()
        .par_iter()
        .map(|&(seed, mode)| {
            let mut s = desk(mode, seed);
            s.train.learning = false;
            s.traffic.mean_rate = LOW_LOAD;
            let low = run_scenario(&s)?.pdr_final;
            s.traffic.mean_rate = HIGH_LOAD;
            let high = run_scenario(&s)?.pdr_final;
            Ok((seed, mode, low, high))
        })
        .collect();
    match frozen {
        Ok(f) => {
            let ok = f.iter().all(|&(_, _, lo, hi)| hi >= lo);
            let detail: Vec<String> = f
                .iter()
                .map(|(s, m, lo, hi)| format!("{m} s{s} {lo:.4}->{hi:.4}"))
                .collect();
            r.line(
                "load monotonicity",
                ok,
                format!(
                    "frozen-policy PDR at 3 Mbps -> 6 Mbps [{}]",
                    detail.join(", ")
                ),
            );
        }
        Err(e) => r.line("load monotonicity", false, e.to_string()),
    }

    match determinism() {
        Ok(detail) => r.line("determinism", true, detail),
        Err(e) => r.line("determinism", false, e),
    }

    println!(
        "{} of 9 criteria passed in {:.0?}",
        9 - r.failed,
        total.elapsed()
    );
    if r.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

/// Runs a scenario, rebuilds it from the written manifest, runs it again and
/// compares the CSVs byte for byte.
fn determinism() -> Result<String, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let dir = tempfile::tempdir().map_err(|e| err(&e))?;
    let mut checked = Vec::new();
    for mode in [Mode::Tdl, Mode::Idl] {
        let mut s = desk(mode, 11);
        s.n_slots = 700;
        s.train.epsilon_decay_slots = 350;
        let a = dir.path().join(format!("{mode}-a"));
        let b = dir.path().join(format!("{mode}-b"));
        let first =
            write_run(&a, &s, &run_scenario(&s).map_err(|e| err(&e))?).map_err(|e| err(&e))?;

        let manifest = std::fs::read_to_string(&first.manifest).map_err(|e| err(&e))?;
        let mut doc: toml::Table = manifest.parse().map_err(|e| err(&e))?;
        let replayed: Scenario = doc
            .remove("scenario")
            .ok_or("manifest has no scenario")?
            .try_into()
            .map_err(|e| err(&e))?;
        if replayed != s {
            return Err(format!("{mode}: manifest does not round-trip the scenario"));
        }
        let second = write_run(
            &b,
            &replayed,
            &run_scenario(&replayed).map_err(|e| err(&e))?,
        )
        .map_err(|e| err(&e))?;
        for (x, y) in [
            (&first.series_csv, &second.series_csv),
            (&first.summary_csv, &second.summary_csv),
            (&first.manifest, &second.manifest),
        ] {
            let bx = std::fs::read(x).map_err(|e| err(&e))?;
            let by = std::fs::read(y).map_err(|e| err(&e))?;
            if bx != by {
                return Err(format!("{mode}: {} differs between runs", x.display()));
            }
            checked.push(bx.len());
        }
    }
    Ok(format!(
        "TDL and IDL 700-slot runs replayed from their manifests give byte-identical CSVs and manifests ({} files, {} bytes)",
        checked.len(),
        checked.iter().sum::<usize>()
    ))
}
