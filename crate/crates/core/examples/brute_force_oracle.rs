//! The reference happens-before closure: race enumeration, the context-free
//! check and racy-window counting.

use rpt_core::gen::{gen_trace, GenMode, GenSpec};
use rpt_core::oracle::{count_racy_windows, enumerate_races, hb_closure, verify_context_free};
use rpt_core::parse_str;

fn main() {
    let trace =
        parse_str("t1|acq(l)\nt1|w(x)\nt1|rel(l)\nt2|acq(l)\nt2|r(x)\nt2|rel(l)\nt3|w(x)\n")
            .unwrap();
    let hb = hb_closure(trace.view()).unwrap();
    println!("w(x)@1 before r(x)@4: {}", hb.ordered(1, 4));
    println!("r(x)@4 before w(x)@6: {}", hb.ordered(4, 6));
    for r in enumerate_races(trace.view()).unwrap() {
        println!(
            "race on {} between {} and {}",
            trace.var_name(r.var),
            r.i,
            r.j
        );
    }
    println!("context free: {}", verify_context_free(&trace).unwrap());

    let dense = gen_trace(&GenSpec::new(2, 3000, GenMode::DenseRacy { window: 50 }, 4)).unwrap();
    for k in [10, 50, 200] {
        println!(
            "windows of length {k} with a race: {} of {}",
            count_racy_windows(&dense, k).unwrap(),
            dense.len() - k + 1
        );
    }
}
