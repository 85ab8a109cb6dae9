//! Synchronisation connectors, greedy racy segmentation and the race-free
//! projection built from them.
//!
//! A connector `μ(σ₁, σ₂)` is a block of acquire/release events that, placed
//! between two well-formed sub-traces, keeps the result well formed and puts
//! every event of `σ₁` before every event of `σ₂` in happens-before. It uses
//! one reserved lock that does not occur in the input:
//!
//! 1. release the reserved lock if `σ₁` ends holding it (never, for a fresh lock);
//! 2. every thread acquires and releases the reserved lock, twice around;
//! 3. release every lock still held at the end of `σ₁`;
//! 4. acquire every lock held at the start of `σ₂` by its holder.
//!
//! The block has no data accesses and at most `4|T| + 2h` events. Padding to
//! a fixed length uses reads of a reserved variable, which can never conflict.

use thiserror::Error;

use crate::clock::DetectorState;
use crate::trace::{
    hamming_distance, locks_held_at, Event, LockId, Op, SubtraceView, ThreadId, Trace, VarId,
};

pub const RESERVED_LOCK: &str = "__connector";
pub const RESERVED_VAR: &str = "__pad";

/// Names and ids of the reserved lock and padding variable for one trace.
///
/// The ids are the ones the names receive when interned into a copy of the
/// trace's tables, see [`Reserved::install`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reserved {
    pub lock_name: String,
    pub var_name: String,
    pub lock: LockId,
    pub pad_var: VarId,
    pub pad_thread: ThreadId,
}

impl Reserved {
    pub fn for_trace(trace: &Trace) -> Self {
        Reserved {
            lock_name: trace.locks.fresh_name(RESERVED_LOCK),
            var_name: trace.vars.fresh_name(RESERVED_VAR),
            lock: LockId(trace.locks.len() as u32),
            pad_var: VarId(trace.vars.len() as u32),
            pad_thread: ThreadId(0),
        }
    }

    /// Interns the reserved names into `trace`, which must carry a copy of the
    /// tables this value was computed from.
    pub fn install(&self, trace: &mut Trace) {
        let lock = trace.intern_lock(&self.lock_name);
        let var = trace.intern_var(&self.var_name);
        assert_eq!(
            (lock, var),
            (self.lock, self.pad_var),
            "reserved ids do not match the trace tables"
        );
    }

    fn pad_event(&self) -> Event {
        Event::new(self.pad_thread, Op::Read(self.pad_var))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Connector {
    pub events: Vec<Event>,
    /// Length before padding.
    pub unpadded_len: usize,
}

impl Connector {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum ConstructionError {
    #[error("connector needs {needed} events but padding target is {target}")]
    PadTooShort { needed: usize, target: usize },
    #[error("trace is not well formed: {0}")]
    NotWellFormed(#[from] crate::trace::WellFormedError),
}

/// Builds `μ(σ₁, σ₂)` over `threads`, optionally padded to `pad_to` events.
pub fn build_connector(
    sigma1: SubtraceView<'_>,
    sigma2: SubtraceView<'_>,
    threads: &[ThreadId],
    reserved: &Reserved,
    pad_to: Option<usize>,
) -> Result<Connector, ConstructionError> {
    let held_end = locks_held_at(sigma1, sigma1.len()).expect("end position is in range");
    let held_start = locks_held_at(sigma2, 0).expect("start position is in range");
    let mut events = Vec::with_capacity(4 * threads.len() + held_end.len() + held_start.len());

    if let Some(t) = held_end.get(reserved.lock) {
        events.push(Event::new(t, Op::Release(reserved.lock)));
    }
    for _ in 0..2 {
        for &t in threads {
            events.push(Event::new(t, Op::Acquire(reserved.lock)));
            events.push(Event::new(t, Op::Release(reserved.lock)));
        }
    }
    for (l, t) in held_end.iter().filter(|&(l, _)| l != reserved.lock) {
        events.push(Event::new(t, Op::Release(l)));
    }
    for (l, t) in held_start.iter() {
        events.push(Event::new(t, Op::Acquire(l)));
    }

    let unpadded_len = events.len();
    if let Some(target) = pad_to {
        if target < unpadded_len {
            return Err(ConstructionError::PadTooShort {
                needed: unpadded_len,
                target,
            });
        }
        events.resize(target, reserved.pad_event());
    }
    Ok(Connector {
        events,
        unpadded_len,
    })
}

/// `σ₁ μ σ₂` as a new trace whose tables include the reserved names.
pub fn join_with_connector(
    base: &Trace,
    sigma1: SubtraceView<'_>,
    connector: &Connector,
    sigma2: SubtraceView<'_>,
    reserved: &Reserved,
) -> Trace {
    let mut out = Trace::with_tables_of(base);
    reserved.install(&mut out);
    out.extend_events(sigma1.events().iter().copied());
    out.extend_events(connector.events.iter().copied());
    out.extend_events(sigma2.events().iter().copied());
    out
}

/// Increasing index pairs `(i¹_j, i²_j)`: each `[i¹_j, i²_j)` has a race,
/// each `[i¹_j, i²_j - 1)` does not, and `i¹_{j+1} = i²_j + m - 1`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Segmentation {
    pub segments: Vec<(usize, usize)>,
    pub m: usize,
}

impl Segmentation {
    pub fn u(&self) -> usize {
        self.segments.len()
    }
}

/// Position just past the first race of `trace[from..]`, found by streaming
/// a fresh detector forward.
fn first_race_end(trace: &Trace, from: usize) -> Option<usize> {
    let mut state = DetectorState::new(trace.num_threads().max(1));
    let mut reports = Vec::new();
    for (i, e) in trace.events().iter().enumerate().skip(from) {
        state
            .step(i, e, &mut reports)
            .expect("thread ids come from the trace's own table");
        if !reports.is_empty() {
            return Some(i + 1);
        }
    }
    None
}

pub fn greedy_racy_segments(trace: &Trace, m: usize) -> Segmentation {
    assert!(m >= 1, "gap must be at least 1");
    let n = trace.len();
    let mut segments = Vec::new();
    let mut start = 0;
    while let Some(end) = first_race_end(trace, start) {
        segments.push((start, end));
        let next = end + m - 1;
        if next >= n {
            break;
        }
        start = next;
    }
    Segmentation { segments, m }
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub projected: Trace,
    /// Hamming distance between input and projection.
    pub changed: usize,
    pub segmentation: Segmentation,
}

impl Projection {
    pub fn u(&self) -> usize {
        self.segmentation.u()
    }
}

/// Repairs a well-formed trace into a race-free one of the same length by
/// replacing `m` events after each racy segment with a padded connector.
///
/// `m` must be at least `4|T| + 2h` for the trace, otherwise a connector may
/// not fit and [`ConstructionError::PadTooShort`] is returned.
pub fn racefree_projection(trace: &Trace, m: usize) -> Result<Projection, ConstructionError> {
    crate::trace::check_well_formed(trace)?;
    let n = trace.len();
    let segmentation = greedy_racy_segments(trace, m);
    if segmentation.segments.is_empty() {
        return Ok(Projection {
            projected: trace.clone(),
            changed: 0,
            segmentation,
        });
    }

    let reserved = Reserved::for_trace(trace);
    let threads: Vec<ThreadId> = (0..trace.num_threads() as u32).map(ThreadId).collect();
    let mut out = Trace::with_tables_of(trace);
    reserved.install(&mut out);

    // σ_j is the race-free part [i¹_j, i²_j - 1).
    let pieces: Vec<SubtraceView<'_>> = segmentation
        .segments
        .iter()
        .map(|&(a, b)| trace.slice(a, b - 1))
        .collect();
    for pair in pieces.windows(2) {
        out.extend_events(pair[0].events().iter().copied());
        let mu = build_connector(pair[0], pair[1], &threads, &reserved, Some(m))?;
        out.extend_events(mu.events);
    }
    let last = *pieces.last().expect("at least one segment");
    out.extend_events(last.events().iter().copied());

    let (_, last_end) = *segmentation.segments.last().expect("at least one segment");
    let rest = last_end + m - 1;
    if rest >= n {
        let fill = n - (last_end - 1);
        out.extend_events(std::iter::repeat_n(reserved.pad_event(), fill));
    } else {
        let suffix = trace.slice(rest, n);
        let mu = build_connector(last, suffix, &threads, &reserved, Some(m))?;
        out.extend_events(mu.events);
        out.extend_events(suffix.events().iter().copied());
    }
    debug_assert_eq!(out.len(), n);

    let changed = hamming_distance(trace, &out)
        .finite()
        .expect("projection preserves length");
    Ok(Projection {
        projected: out,
        changed,
        segmentation,
    })
}
