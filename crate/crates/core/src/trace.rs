//! Event and trace model.
//!
//! A trace is a sequence of events `<thread, op>` where the op is a read or
//! write of a variable, or an acquire or release of a lock. Thread, lock,
//! variable and source-location names are interned to dense ids when the
//! trace is built, so the hot paths index plain arrays.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

macro_rules! dense_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

dense_id!(
    /// Dense id of a thread in a trace's thread table.
    ThreadId
);
dense_id!(
    /// Dense id of a lock in a trace's lock table.
    LockId
);
dense_id!(
    /// Dense id of a memory location in a trace's variable table.
    VarId
);
dense_id!(
    /// Dense id of an interned source location string.
    LocId
);

/// The operation of an event. The operand kind is fixed by the variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Read(VarId),
    Write(VarId),
    Acquire(LockId),
    Release(LockId),
}

impl Op {
    pub fn kind(self) -> OpKind {
        match self {
            Op::Read(_) => OpKind::Read,
            Op::Write(_) => OpKind::Write,
            Op::Acquire(_) => OpKind::Acquire,
            Op::Release(_) => OpKind::Release,
        }
    }

    pub fn var(self) -> Option<VarId> {
        match self {
            Op::Read(x) | Op::Write(x) => Some(x),
            _ => None,
        }
    }

    pub fn lock(self) -> Option<LockId> {
        match self {
            Op::Acquire(l) | Op::Release(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_access(self) -> bool {
        self.var().is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Read,
    Write,
    Acquire,
    Release,
}

impl OpKind {
    /// Token used by the line format.
    pub fn token(self) -> &'static str {
        match self {
            OpKind::Read => "r",
            OpKind::Write => "w",
            OpKind::Acquire => "acq",
            OpKind::Release => "rel",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "r" => Some(OpKind::Read),
            "w" => Some(OpKind::Write),
            "acq" => Some(OpKind::Acquire),
            "rel" => Some(OpKind::Release),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    pub thread: ThreadId,
    pub op: Op,
    pub loc: Option<LocId>,
}

impl Event {
    pub fn new(thread: ThreadId, op: Op) -> Self {
        Event {
            thread,
            op,
            loc: None,
        }
    }

    /// Two accesses conflict when they touch the same variable from different
    /// threads and at least one of them writes.
    pub fn conflicts_with(&self, other: &Event) -> bool {
        if self.thread == other.thread {
            return false;
        }
        match (self.op, other.op) {
            (Op::Write(x), Op::Write(y))
            | (Op::Write(x), Op::Read(y))
            | (Op::Read(x), Op::Write(y)) => x == y,
            _ => false,
        }
    }
}

/// Bidirectional name table assigning ids in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = u32::try_from(self.names.len()).expect("intern table overflow");
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    /// Returns `base` if unused, otherwise the first `base#N` that is unused.
    pub fn fresh_name(&self, base: &str) -> String {
        if self.get(base).is_none() {
            return base.to_owned();
        }
        (1..)
            .map(|n| format!("{base}#{n}"))
            .find(|cand| self.get(cand).is_none())
            .expect("unbounded search")
    }
}

/// A concurrent execution trace with its intern tables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    events: Vec<Event>,
    pub threads: Interner,
    pub locks: Interner,
    pub vars: Interner,
    pub locs: Interner,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    /// An empty trace sharing this trace's intern tables.
    pub fn with_tables_of(other: &Trace) -> Self {
        Trace {
            events: Vec::new(),
            threads: other.threads.clone(),
            locks: other.locks.clone(),
            vars: other.vars.clone(),
            locs: other.locs.clone(),
        }
    }

    pub fn intern_thread(&mut self, name: &str) -> ThreadId {
        ThreadId(self.threads.intern(name))
    }

    pub fn intern_lock(&mut self, name: &str) -> LockId {
        LockId(self.locks.intern(name))
    }

    pub fn intern_var(&mut self, name: &str) -> VarId {
        VarId(self.vars.intern(name))
    }

    pub fn intern_loc(&mut self, name: &str) -> LocId {
        LocId(self.locs.intern(name))
    }

    /// Appends an event whose ids are already present in the tables.
    pub fn push(&mut self, event: Event) {
        debug_assert!(event.thread.index() < self.threads.len());
        debug_assert!(match event.op {
            Op::Read(x) | Op::Write(x) => x.index() < self.vars.len(),
            Op::Acquire(l) | Op::Release(l) => l.index() < self.locks.len(),
        });
        self.events.push(event);
    }

    /// Appends an event given by names, interning as needed.
    pub fn push_named(&mut self, thread: &str, kind: OpKind, operand: &str, loc: Option<&str>) {
        let thread = self.intern_thread(thread);
        let op = match kind {
            OpKind::Read => Op::Read(self.intern_var(operand)),
            OpKind::Write => Op::Write(self.intern_var(operand)),
            OpKind::Acquire => Op::Acquire(self.intern_lock(operand)),
            OpKind::Release => Op::Release(self.intern_lock(operand)),
        };
        let loc = loc.map(|l| self.intern_loc(l));
        self.events.push(Event { thread, op, loc });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn num_threads(&self) -> usize {
        self.threads.len()
    }

    pub fn thread_name(&self, t: ThreadId) -> &str {
        self.threads.name(t.0)
    }

    pub fn lock_name(&self, l: LockId) -> &str {
        self.locks.name(l.0)
    }

    pub fn var_name(&self, x: VarId) -> &str {
        self.vars.name(x.0)
    }

    pub fn loc_name(&self, loc: LocId) -> &str {
        self.locs.name(loc.0)
    }

    pub fn operand_name(&self, op: Op) -> &str {
        match op {
            Op::Read(x) | Op::Write(x) => self.var_name(x),
            Op::Acquire(l) | Op::Release(l) => self.lock_name(l),
        }
    }

    /// Resolves an event to its external names.
    pub fn named(&self, event: &Event) -> NamedEvent<'_> {
        NamedEvent {
            thread: self.thread_name(event.thread),
            kind: event.op.kind(),
            operand: self.operand_name(event.op),
            loc: event.loc.map(|l| self.loc_name(l)),
        }
    }

    pub fn view(&self) -> SubtraceView<'_> {
        SubtraceView {
            base: self,
            start: 0,
            end: self.len(),
        }
    }

    /// The sub-trace `[start, end)`. Empty when `end <= start`.
    ///
    /// Panics if `end` exceeds the trace length.
    pub fn slice(&self, start: usize, end: usize) -> SubtraceView<'_> {
        assert!(
            end <= self.len(),
            "slice end {end} past trace length {}",
            self.len()
        );
        let start = start.min(end);
        SubtraceView {
            base: self,
            start,
            end,
        }
    }

    /// Concatenation of views over this trace, as a new trace with the same tables.
    pub fn concat(&self, parts: &[SubtraceView<'_>]) -> Trace {
        let mut out = Trace::with_tables_of(self);
        for part in parts {
            debug_assert!(std::ptr::eq(part.base, self));
            out.events.extend_from_slice(part.events());
        }
        out
    }

    pub(crate) fn extend_events(&mut self, events: impl IntoIterator<Item = Event>) {
        self.events.extend(events);
    }
}

/// An event with names resolved, used for comparisons across intern tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NamedEvent<'a> {
    pub thread: &'a str,
    pub kind: OpKind,
    pub operand: &'a str,
    pub loc: Option<&'a str>,
}

impl fmt::Display for NamedEvent<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}({})", self.thread, self.kind.token(), self.operand)?;
        if let Some(loc) = self.loc {
            write!(f, "|{loc}")?;
        }
        Ok(())
    }
}

/// Non-owning `[start, end)` window over a trace.
#[derive(Clone, Copy, Debug)]
pub struct SubtraceView<'a> {
    pub base: &'a Trace,
    pub start: usize,
    pub end: usize,
}

impl<'a> SubtraceView<'a> {
    pub fn events(&self) -> &'a [Event] {
        &self.base.events[self.start..self.end]
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// A view relative to this one: `[start, end)` in local positions.
    pub fn slice(&self, start: usize, end: usize) -> SubtraceView<'a> {
        assert!(end <= self.len());
        let start = start.min(end);
        SubtraceView {
            base: self.base,
            start: self.start + start,
            end: self.start + end,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    OverlappingCriticalSection,
    ReentrantAcquire,
    UnmatchedRelease,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("trace is not well formed at event {index}: {reason:?}")]
pub struct WellFormedError {
    pub index: usize,
    pub reason: Violation,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum LockState {
    // Only reachable for sub-traces: the lock may be held at the start.
    Unknown,
    Free,
    Held(ThreadId),
}

fn check_lock_discipline(
    events: &[Event],
    num_locks: usize,
    initial: LockState,
) -> Result<(), WellFormedError> {
    let mut state = vec![initial; num_locks];
    for (index, e) in events.iter().enumerate() {
        let fail = |reason| Err(WellFormedError { index, reason });
        match e.op {
            Op::Acquire(l) => match state[l.index()] {
                LockState::Held(t) if t == e.thread => return fail(Violation::ReentrantAcquire),
                LockState::Held(_) => return fail(Violation::OverlappingCriticalSection),
                LockState::Free | LockState::Unknown => {
                    state[l.index()] = LockState::Held(e.thread)
                }
            },
            Op::Release(l) => match state[l.index()] {
                LockState::Held(t) if t == e.thread => state[l.index()] = LockState::Free,
                LockState::Unknown => state[l.index()] = LockState::Free,
                LockState::Held(_) | LockState::Free => return fail(Violation::UnmatchedRelease),
            },
            Op::Read(_) | Op::Write(_) => {}
        }
    }
    Ok(())
}

/// Checks a complete trace: every release matches a prior acquire of the same
/// lock by the same thread, and locks are neither re-entered nor shared.
pub fn check_well_formed(trace: &Trace) -> Result<(), WellFormedError> {
    check_lock_discipline(trace.events(), trace.locks.len(), LockState::Free)
}

/// Checks that a view could be a contiguous slice of some well-formed trace.
/// Releases of locks never touched earlier in the view are allowed.
pub fn check_well_formed_subtrace(view: SubtraceView<'_>) -> Result<(), WellFormedError> {
    check_lock_discipline(view.events(), view.base.locks.len(), LockState::Unknown)
}

/// Locks held at a position of a sub-trace, with the holding thread.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LockHeldMap {
    held: Vec<(LockId, ThreadId)>,
}

impl LockHeldMap {
    pub fn get(&self, lock: LockId) -> Option<ThreadId> {
        self.held.iter().find(|(l, _)| *l == lock).map(|&(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.held.len()
    }

    pub fn is_empty(&self) -> bool {
        self.held.is_empty()
    }

    /// Entries sorted by lock id.
    pub fn iter(&self) -> impl Iterator<Item = (LockId, ThreadId)> + '_ {
        self.held.iter().copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("position {position} out of range for sub-trace of length {len}")]
pub struct PositionOutOfRange {
    pub position: usize,
    pub len: usize,
}

/// Lock ownership at position `j` (`0 ..= view.len()`) of a well-formed sub-trace.
///
/// A lock is held by `t` at `j` if `t` acquired it before `j` without a release
/// in between, or if `t` releases it at or after `j` with no acquire in between.
pub fn locks_held_at(view: SubtraceView<'_>, j: usize) -> Result<LockHeldMap, PositionOutOfRange> {
    let events = view.events();
    if j > events.len() {
        return Err(PositionOutOfRange {
            position: j,
            len: events.len(),
        });
    }
    let num_locks = view.base.locks.len();
    let mut holder: Vec<Option<ThreadId>> = vec![None; num_locks];
    // Last acquire/release before j decides clause (a).
    for e in &events[..j] {
        match e.op {
            Op::Acquire(l) => holder[l.index()] = Some(e.thread),
            Op::Release(l) => holder[l.index()] = None,
            _ => {}
        }
    }
    // First acquire/release at or after j decides clause (b).
    let mut decided = vec![false; num_locks];
    for e in &events[j..] {
        if let Some(l) = e.op.lock() {
            if !decided[l.index()] {
                decided[l.index()] = true;
                if matches!(e.op, Op::Release(_)) && holder[l.index()].is_none() {
                    holder[l.index()] = Some(e.thread);
                }
            }
        }
    }
    let held = holder
        .into_iter()
        .enumerate()
        .filter_map(|(l, t)| t.map(|t| (LockId(l as u32), t)))
        .collect();
    Ok(LockHeldMap { held })
}

/// Distance between two traces: number of differing positions, or infinite
/// when the lengths differ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Distance {
    Finite(usize),
    Infinite,
}

impl Distance {
    pub fn finite(self) -> Option<usize> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Infinite => None,
        }
    }
}

/// Hamming distance over `(thread, op, operand)`; source locations are ignored.
/// Events are compared by name so the traces may have different intern tables.
pub fn hamming_distance(u: &Trace, v: &Trace) -> Distance {
    if u.len() != v.len() {
        return Distance::Infinite;
    }
    let same_tables = u.threads == v.threads && u.locks == v.locks && u.vars == v.vars;
    let differ = u
        .events()
        .iter()
        .zip(v.events())
        .filter(|(a, b)| {
            if same_tables {
                a.thread != b.thread || a.op != b.op
            } else {
                let (na, nb) = (u.named(a), v.named(b));
                na.thread != nb.thread || na.kind != nb.kind || na.operand != nb.operand
            }
        })
        .count();
    Distance::Finite(differ)
}
