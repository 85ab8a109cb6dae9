//! Reading a log that contains operations outside the model, and rolling the
//! warnings up by variable and by source location.

use rpt_core::io::{parse_trace, ParseOptions};
use rpt_core::report::summarize;
use rpt_core::run_full;

const LOG: &str = "\
# exported from an instrumented run
T0|w(buf)|io.c:40
T0|fork(T1)
T1|r(buf)|io.c:88
T1|w(len)|io.c:90
T0|r(len)|io.c:44
T2|w(buf)|io.c:40
T0|join(T1)
";

fn main() {
    let parsed = parse_trace(
        LOG.as_bytes(),
        ParseOptions {
            ignore_unknown: true,
        },
    )
    .unwrap();
    println!("skipped {} unknown operations", parsed.skipped_unknown);
    let trace = parsed.trace;
    let run = run_full(&trace);
    let s = summarize(&run, &trace, Some(4));
    println!(
        "warnings {}, racy variables {}, racy source pairs {}, short fraction {:?}",
        s.warnings, s.distinct_vars, s.distinct_source_pairs, s.short_race_fraction
    );
    println!("{}", serde_json::to_string_pretty(&s).unwrap());
}
