//! The constant-sample tester next to the full detector on a long trace with
//! a handful of races.

use rpt_core::gen::{gen_trace, measured_params, GenMode, GenSpec};
use rpt_core::{run_full, run_rpt, RptParams};

fn main() {
    let trace = gen_trace(&GenSpec::new(
        4,
        2_000_000,
        GenMode::SparseRacy { count: 40 },
        1,
    ))
    .unwrap();
    let (threads, held) = measured_params(&trace);
    let params = RptParams::derive(threads, held, 0.1, 0.1, 42).unwrap();
    println!(
        "|T| = {threads}, h = {held}: m = {}, k = {}, s = {}",
        params.m, params.k, params.s
    );

    let full = run_full(&trace);
    println!(
        "full:    {} warnings, {} events processed, {:?}",
        full.reports.len(),
        full.metadata_work,
        full.elapsed
    );

    let verdict = run_rpt(&trace, &params);
    println!(
        "sampled: racy = {}, {} warnings, {} events processed in {} merged windows, {:?}",
        verdict.racy,
        verdict.reports.len(),
        verdict.metadata_work,
        verdict.windows.len(),
        verdict.elapsed
    );
}
