//! Proportional sampling at a few rates on the same trace.

use rpt_core::gen::{gen_trace, GenMode, GenSpec};
use rpt_core::{run_full, run_pacer, PacerConfig};

fn main() {
    let trace = gen_trace(&GenSpec::new(
        4,
        500_000,
        GenMode::SparseRacy { count: 50 },
        9,
    ))
    .unwrap();
    let full = run_full(&trace);
    println!("full: {} warnings", full.reports.len());
    for rate in [0.01, 0.03, 0.1, 0.3, 1.0] {
        let runs: Vec<_> = (0..20)
            .map(|seed| run_pacer(&trace, &PacerConfig::new(rate, 1000, seed).unwrap()))
            .collect();
        let warnings =
            runs.iter().map(|r| r.reports.len()).sum::<usize>() as f64 / runs.len() as f64;
        let sampled =
            runs.iter().map(|r| r.sampled_events).sum::<usize>() as f64 / runs.len() as f64;
        let work = runs.iter().map(|r| r.metadata_work).sum::<u64>() as f64 / runs.len() as f64;
        println!("rate {rate:<5} mean warnings {warnings:6.1}  sampled events {sampled:9.0}  metadata work {work:9.0}");
    }
}
