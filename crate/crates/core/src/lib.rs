//! Happens-before race detection over recorded execution traces, with a
//! sublinear randomized property tester and the constructions behind it.
//!
//! The usual flow is: parse a trace with [`io`], then run [`detectors::run_full`]
//! for an exact answer or [`rpt::run_rpt`] for a constant-work probabilistic one.
//! [`oracle`] is a quadratic reference implementation for small traces.

pub mod cli;
pub mod clock;
pub mod construction;
pub mod detectors;
pub mod gen;
pub mod io;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod rpt;
pub mod trace;

pub use clock::{RaceKind, RaceReport, VectorTime};
pub use detectors::{run_full, run_pacer, PacerConfig, RunResult};
pub use io::{parse_str, parse_trace, write_trace, ParseOptions};
pub use rpt::{run_rpt, RptParams, RptVerdict};
pub use trace::{Event, LocId, LockId, Op, SubtraceView, ThreadId, Trace, VarId};
