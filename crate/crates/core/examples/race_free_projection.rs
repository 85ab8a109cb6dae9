//! Repairing a racy trace into a nearby race-free one, and the connector
//! used to do it.

use rpt_core::construction::{build_connector, racefree_projection, Reserved};
use rpt_core::gen::{gen_trace, measured_params, GenMode, GenSpec};
use rpt_core::trace::{hamming_distance, ThreadId};
use rpt_core::{parse_str, run_full};

fn main() {
    let small = parse_str("t1|acq(l)\nt1|w(x)\nt2|w(y)\nt1|rel(l)\n").unwrap();
    let reserved = Reserved::for_trace(&small);
    let threads = [ThreadId(0), ThreadId(1)];
    let mu = build_connector(
        small.slice(0, 2),
        small.slice(2, 4),
        &threads,
        &reserved,
        None,
    )
    .unwrap();
    println!("connector between [0, 2) and [2, 4):");
    for e in &mu.events {
        let lock = e.op.lock().map(|l| {
            if l == reserved.lock {
                reserved.lock_name.as_str()
            } else {
                small.lock_name(l)
            }
        });
        println!(
            "  {}|{}({})",
            small.thread_name(e.thread),
            e.op.kind().token(),
            lock.unwrap_or("?")
        );
    }

    let trace = gen_trace(&GenSpec::new(
        3,
        10_000,
        GenMode::SparseRacy { count: 6 },
        5,
    ))
    .unwrap();
    let m = 4 * trace.num_threads() + 2 * measured_params(&trace).1;
    let p = racefree_projection(&trace, m).unwrap();
    println!(
        "projection with m = {m}: u = {}, changed {} of {} events (bound {}), races left: {}",
        p.u(),
        p.changed,
        trace.len(),
        p.u() * m,
        run_full(&p.projected).reports.len()
    );
    assert_eq!(
        hamming_distance(&trace, &p.projected).finite(),
        Some(p.changed)
    );
}
