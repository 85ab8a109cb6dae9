//! Detection rate and work of the tester as epsilon shrinks.

use rpt_core::gen::{gen_trace, measured_params, GenMode, GenSpec};
use rpt_core::{run_rpt, RptParams};

fn main() {
    let trace = gen_trace(&GenSpec::new(
        2,
        200_000,
        GenMode::SparseRacy { count: 5 },
        3,
    ))
    .unwrap();
    let (threads, held) = measured_params(&trace);
    println!("epsilon      k      s  detection  mean work");
    for eps in [0.5, 0.2, 0.1, 0.05, 0.02, 0.01] {
        let params = RptParams::derive(threads, held, eps, 0.1, 0).unwrap();
        let runs = 50;
        let (mut hits, mut work) = (0, 0u64);
        for seed in 0..runs {
            let v = run_rpt(&trace, &params.with_seed(seed));
            hits += v.racy as u32;
            work += v.metadata_work;
        }
        println!(
            "{eps:<8} {:>6} {:>6}  {:>9.2}  {:>9.0}",
            params.k,
            params.s,
            f64::from(hits) / runs as f64,
            work as f64 / runs as f64
        );
    }
}
