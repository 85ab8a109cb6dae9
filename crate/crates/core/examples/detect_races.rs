//! Exact detection on a small hand-written trace.

use rpt_core::{parse_str, run_full};

const TRACE: &str = "\
main|w(config)|main.c:10
main|acq(m)
main|w(queue)|main.c:14
main|rel(m)
worker|acq(m)
worker|r(queue)|worker.c:7
worker|rel(m)
worker|r(config)|worker.c:9
worker|w(stats)|worker.c:12
main|r(stats)|main.c:30
";

fn main() {
    let trace = parse_str(TRACE).expect("valid trace");
    let result = run_full(&trace);
    println!("{} events, {} race(s)", trace.len(), result.reports.len());
    for r in &result.reports {
        println!(
            "  {:?} on {}: event {} ({}) vs event {} ({})",
            r.kind,
            trace.var_name(r.var),
            r.prior_index,
            trace.thread_name(r.prior_thread),
            r.event_index,
            trace.thread_name(r.thread),
        );
    }
}
