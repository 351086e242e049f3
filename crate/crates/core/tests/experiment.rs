use rand::Rng;
use rand_distr::StandardNormal;
use teamlearn::experiment::{
    convergence_stats, moving_average, read_run_csv, run_scenario, run_scenario_with, sweep,
    variance, write_run, RunMetrics, Scenario, SweepAxis,
};
use teamlearn::rng::{SeedStreams, Stream};
use teamlearn::xapps::Mode;

fn quick(n_slots: u64) -> Scenario {
    let mut s = Scenario::desk();
    s.n_slots = n_slots;
    s.train.power_hidden = [16, 16];
    s.train.rra_hidden = [24, 16];
    s.train.warmup = 16;
    s.train.batch_size = 8;
    s.train.epsilon_decay_slots = n_slots / 2;
    s
}

#[test]
fn single_slot_run() {
    let m = run_scenario(&quick(1)).unwrap();
    assert_eq!(m.throughput_series.len(), 1);
    assert_eq!(m.reward_series.len(), 1);
    assert_eq!(m.pdr_series.len(), 1);
}

#[test]
fn identical_scenarios_give_identical_metrics() {
    for mode in [Mode::Tdl, Mode::Idl] {
        let mut s = quick(80);
        s.mode = mode;
        assert_eq!(run_scenario(&s).unwrap(), run_scenario(&s).unwrap());
    }
}

#[test]
fn no_traffic_means_nothing_sent_or_dropped() {
    let mut s = quick(60);
    s.traffic.mean_rate = 0.0;
    let m = run_scenario(&s).unwrap();
    assert!(m.throughput_series.iter().all(|&x| x == 0.0));
    assert!(m.pdr_series.iter().all(|&x| x == 0.0));
}

#[test]
fn metrics_round_trip_through_csv() {
    let s = quick(50);
    let m = run_scenario(&s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_run(dir.path(), &s, &m).unwrap();
    let rows = read_run_csv(&files.series_csv).unwrap();
    let again = RunMetrics::from_series(
        rows.iter().map(|r| r.throughput_bps).collect(),
        rows.iter().map(|r| r.reward).collect(),
        rows.iter().map(|r| r.cumulative_pdr).collect(),
        m.env_trace_hash.clone(),
    );
    assert_eq!(again, m);
}

#[test]
fn observer_errors_abort_the_run() {
    let err = run_scenario_with(&quick(10), |v| {
        if v.env.slot() == 3 {
            Err(teamlearn::SimError::contract("stop"))
        } else {
            Ok(())
        }
    });
    assert!(err.is_err());
}

#[test]
fn sweep_pairs_modes_on_shared_traces() {
    let t = sweep(&quick(40), SweepAxis::Speed, &[5.0], &[3]).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.gains.len(), 1);
    let tdl = t.rows.iter().find(|r| r.mode == Mode::Tdl).unwrap();
    let idl = t.rows.iter().find(|r| r.mode == Mode::Idl).unwrap();
    let g = &t.gains[0];
    assert_eq!(
        g.relative_gain,
        (tdl.tail_throughput_bps - idl.tail_throughput_bps) / idl.tail_throughput_bps
    );
    assert_eq!(
        t.cell(5.0, Mode::Tdl).unwrap().tail_throughput_mean,
        tdl.tail_throughput_bps
    );

    let mut a = quick(40);
    a.mobility.speed = 5.0;
    a.seed = 3;
    let mut b = a.clone();
    b.mode = Mode::Idl;
    assert_eq!(
        run_scenario(&a).unwrap().env_trace_hash,
        run_scenario(&b).unwrap().env_trace_hash
    );

    let t = sweep(&quick(20), SweepAxis::Traffic, &[1e6, 2e6], &[1, 2]).unwrap();
    assert_eq!(t.rows.len(), 8);
    assert_eq!(t.cells.len(), 4);
    assert!(sweep(&quick(20), SweepAxis::Traffic, &[], &[1]).is_err());
}

#[test]
fn moving_average_of_white_noise() {
    // Averaging 100 i.i.d. samples divides the variance by 100.
    let mut rng = SeedStreams::new(11).rng(Stream::Traffic, 0);
    let x: Vec<f64> = (0..200_000)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let c = convergence_stats(&x).unwrap();
    let raw = variance(&x[..20_000]);
    assert!(
        (c.early_var / (raw / 100.0) - 1.0).abs() < 0.2,
        "{}",
        c.early_var
    );
    assert!(
        (c.late_var / (raw / 100.0) - 1.0).abs() < 0.2,
        "{}",
        c.late_var
    );
    assert_eq!(
        moving_average(&[1.0, 2.0, 3.0, 4.0], 2),
        vec![1.5, 2.5, 3.5]
    );
}
