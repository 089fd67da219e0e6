//! Runs the 14-client desk-scale experiment for a list of seeds: filtered and
//! unfiltered at r = 1, unfiltered at r = 0. Prints per-seed final accuracies,
//! the worst filter recall from round 2 on, and the two accuracy gaps.
//!
//! `cargo run --release -p probefl-core --example desk_scale -- [seed...]`

use std::time::Instant;

use probefl_core::federation::run_experiment;
use probefl_core::ExperimentConfig;

fn desk(seed: u64, ratio: f64, filter: bool) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed,
        n_clients: 14,
        per_client: 200,
        subject_normal: 5,
        subject_abnormal: 5,
        noise_ratio: ratio,
        validation_size: 1000,
        ..ExperimentConfig::default()
    };
    cfg.train.rounds = 5;
    cfg.train.epochs_per_round = 1;
    cfg.train.filter_enabled = filter;
    cfg
}

fn main() {
    let seeds: Vec<u64> = std::env::args().skip(1).map(|s| s.parse().unwrap()).collect();
    let seeds = if seeds.is_empty() { vec![7] } else { seeds };
    println!("seed  acc_filter  acc_nofilter  acc_r0  min_recall  filter_gap_pp  noise_gap_pp  (secs)");
    for seed in seeds {
        let start = Instant::now();
        let filtered = run_experiment(&desk(seed, 1.0, true)).unwrap();
        let unfiltered = run_experiment(&desk(seed, 1.0, false)).unwrap();
        let clean = run_experiment(&desk(seed, 0.0, false)).unwrap();
        let last = |r: &probefl_core::federation::ExperimentRun| r.reports.last().unwrap().accuracy;
        let min_recall = filtered.reports[1..]
            .iter()
            .map(|r| r.metrics.recall)
            .fold(f64::INFINITY, f64::min);
        let (f, u, c) = (last(&filtered), last(&unfiltered), last(&clean));
        println!(
            "{seed:4}  {f:10.4}  {u:12.4}  {c:6.4}  {min_recall:10.2}  {:13.1}  {:12.1}  ({:.0})",
            100.0 * (f - u),
            100.0 * (c - u),
            start.elapsed().as_secs_f64()
        );
    }
}
