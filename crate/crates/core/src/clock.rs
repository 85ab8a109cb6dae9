//! Vector clocks and the per-event happens-before detector.
//!
//! Each thread `t` carries a clock `C_t`, each lock a clock `L_l` and each
//! variable a last-write clock `W_x` plus per-thread last-read epochs `R_x`.
//! Local components are bumped only after a release; events between two
//! releases of a thread share a timestamp, which is enough to order them
//! against every other thread.
//!
//! The read metadata keeps one epoch per reading thread rather than a single
//! overwritten clock, so a write racing with an older read by a third thread
//! is still caught.

use serde::Serialize;
use thiserror::Error;

use crate::trace::{Event, LocId, LockId, Op, ThreadId, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("vector time length mismatch: {left} vs {right}")]
pub struct LengthMismatch {
    pub left: usize,
    pub right: usize,
}

/// A map from thread ids to natural timestamps.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct VectorTime(Vec<u32>);

impl VectorTime {
    /// The all-zero time.
    pub fn bottom(num_threads: usize) -> Self {
        VectorTime(vec![0; num_threads])
    }

    /// Bottom with a 1 at `t`.
    pub fn unit(num_threads: usize, t: ThreadId) -> Self {
        let mut v = Self::bottom(num_threads);
        v.0[t.index()] = 1;
        v
    }

    pub fn from_slice(values: &[u32]) -> Self {
        VectorTime(values.to_vec())
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, t: ThreadId) -> u32 {
        self.0[t.index()]
    }

    fn check_len(&self, other: &VectorTime) -> Result<(), LengthMismatch> {
        if self.len() == other.len() {
            Ok(())
        } else {
            Err(LengthMismatch {
                left: self.len(),
                right: other.len(),
            })
        }
    }

    /// Componentwise `<=`.
    pub fn leq(&self, other: &VectorTime) -> Result<bool, LengthMismatch> {
        self.check_len(other)?;
        Ok(self.leq_unchecked(other))
    }

    fn leq_unchecked(&self, other: &VectorTime) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Componentwise max.
    pub fn join(&self, other: &VectorTime) -> Result<VectorTime, LengthMismatch> {
        let mut out = self.clone();
        out.join_assign(other)?;
        Ok(out)
    }

    pub fn join_assign(&mut self, other: &VectorTime) -> Result<(), LengthMismatch> {
        self.check_len(other)?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a = (*a).max(*b);
        }
        Ok(())
    }
}

/// Which check of the access handlers failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RaceKind {
    /// A read not ordered after the last write.
    WriteRead,
    /// A write not ordered after some earlier read.
    ReadWrite,
    /// A write not ordered after the last write.
    WriteWrite,
}

/// A flagged race. `event_index` is the access that failed the check;
/// the `prior_*` fields describe the earlier access it conflicts with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RaceReport {
    pub event_index: usize,
    pub thread: ThreadId,
    pub var: VarId,
    pub kind: RaceKind,
    pub prior_index: usize,
    pub prior_thread: ThreadId,
    pub loc: Option<LocId>,
    pub prior_loc: Option<LocId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Access {
    index: usize,
    thread: ThreadId,
    loc: Option<LocId>,
}

#[derive(Clone, Debug)]
struct VarMeta {
    write: VectorTime,
    last_write: Option<Access>,
    read: VectorTime,
    last_read: Vec<Option<Access>>,
}

impl VarMeta {
    fn new(num_threads: usize) -> Self {
        VarMeta {
            write: VectorTime::bottom(num_threads),
            last_write: None,
            read: VectorTime::bottom(num_threads),
            last_read: vec![None; num_threads],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("thread {thread} out of range for a detector over {num_threads} threads")]
pub struct ThreadOutOfRange {
    pub thread: u32,
    pub num_threads: usize,
}

/// Detector metadata. Lock and variable clocks are created on first touch.
#[derive(Clone, Debug)]
pub struct DetectorState {
    clocks: Vec<VectorTime>,
    locks: Vec<Option<VectorTime>>,
    vars: Vec<Option<VarMeta>>,
    touched_locks: Vec<LockId>,
    touched_vars: Vec<VarId>,
    work: u64,
}

impl DetectorState {
    /// `C_t = bottom[1/t]` for every thread; everything else bottom.
    pub fn new(num_threads: usize) -> Self {
        assert!(num_threads >= 1, "detector needs at least one thread");
        DetectorState {
            clocks: (0..num_threads)
                .map(|t| VectorTime::unit(num_threads, ThreadId(t as u32)))
                .collect(),
            locks: Vec::new(),
            vars: Vec::new(),
            touched_locks: Vec::new(),
            touched_vars: Vec::new(),
            work: 0,
        }
    }

    /// Back to the freshly initialised state. The work counter is kept.
    pub fn reset(&mut self) {
        for (t, c) in self.clocks.iter_mut().enumerate() {
            c.0.iter_mut().for_each(|v| *v = 0);
            c.0[t] = 1;
        }
        for l in self.touched_locks.drain(..) {
            self.locks[l.index()] = None;
        }
        for x in self.touched_vars.drain(..) {
            self.vars[x.index()] = None;
        }
    }

    pub fn num_threads(&self) -> usize {
        self.clocks.len()
    }

    /// Number of events that went through [`DetectorState::step`].
    pub fn work(&self) -> u64 {
        self.work
    }

    pub fn thread_clock(&self, t: ThreadId) -> &VectorTime {
        &self.clocks[t.index()]
    }

    /// `L_l`, bottom when the lock has not been released yet.
    pub fn lock_clock(&self, l: LockId) -> VectorTime {
        self.locks
            .get(l.index())
            .and_then(Option::as_ref)
            .cloned()
            .unwrap_or_else(|| VectorTime::bottom(self.num_threads()))
    }

    /// `W_x`, bottom when untouched.
    pub fn write_clock(&self, x: VarId) -> VectorTime {
        self.var_meta(x)
            .map(|m| m.write.clone())
            .unwrap_or_else(|| VectorTime::bottom(self.num_threads()))
    }

    /// `R_x`, bottom when untouched.
    pub fn read_clock(&self, x: VarId) -> VectorTime {
        self.var_meta(x)
            .map(|m| m.read.clone())
            .unwrap_or_else(|| VectorTime::bottom(self.num_threads()))
    }

    /// Whether any access to `x` has been processed since the last reset.
    pub fn has_metadata(&self, x: VarId) -> bool {
        self.var_meta(x).is_some()
    }

    fn var_meta(&self, x: VarId) -> Option<&VarMeta> {
        self.vars.get(x.index()).and_then(Option::as_ref)
    }

    /// Runs the handler for `event` (at absolute position `index`), appending
    /// one report per failed check.
    pub fn step(
        &mut self,
        index: usize,
        event: &Event,
        reports: &mut Vec<RaceReport>,
    ) -> Result<(), ThreadOutOfRange> {
        let t = event.thread;
        if t.index() >= self.clocks.len() {
            return Err(ThreadOutOfRange {
                thread: t.0,
                num_threads: self.clocks.len(),
            });
        }
        self.work += 1;
        match event.op {
            Op::Acquire(l) => {
                if let Some(Some(lc)) = self.locks.get(l.index()) {
                    let c = &mut self.clocks[t.index()];
                    for (a, b) in c.0.iter_mut().zip(&lc.0) {
                        *a = (*a).max(*b);
                    }
                }
            }
            Op::Release(l) => {
                let i = l.index();
                if i >= self.locks.len() {
                    self.locks.resize_with(i + 1, || None);
                }
                let c = &self.clocks[t.index()];
                match &mut self.locks[i] {
                    Some(lc) => lc.0.copy_from_slice(&c.0),
                    slot @ None => {
                        *slot = Some(c.clone());
                        self.touched_locks.push(l);
                    }
                }
                self.clocks[t.index()].0[t.index()] += 1;
            }
            Op::Read(x) => {
                let access = Access {
                    index,
                    thread: t,
                    loc: event.loc,
                };
                let c = &self.clocks[t.index()];
                let meta = var_slot(&mut self.vars, &mut self.touched_vars, x, c.len());
                if let Some(w) = meta.last_write {
                    if !meta.write.leq_unchecked(c) {
                        reports.push(report(access, x, RaceKind::WriteRead, w));
                    }
                }
                meta.read.0[t.index()] = c.0[t.index()];
                meta.last_read[t.index()] = Some(access);
            }
            Op::Write(x) => {
                let access = Access {
                    index,
                    thread: t,
                    loc: event.loc,
                };
                let c = &self.clocks[t.index()];
                let meta = var_slot(&mut self.vars, &mut self.touched_vars, x, c.len());
                if let Some(u) = meta.read.0.iter().zip(&c.0).position(|(r, ct)| r > ct) {
                    let prior = meta.last_read[u].expect("nonzero read epoch has a recorded read");
                    reports.push(report(access, x, RaceKind::ReadWrite, prior));
                }
                if let Some(w) = meta.last_write {
                    if !meta.write.leq_unchecked(c) {
                        reports.push(report(access, x, RaceKind::WriteWrite, w));
                    }
                }
                meta.write.0.copy_from_slice(&c.0);
                meta.last_write = Some(access);
            }
        }
        Ok(())
    }
}

fn var_slot<'a>(
    vars: &'a mut Vec<Option<VarMeta>>,
    touched: &mut Vec<VarId>,
    x: VarId,
    num_threads: usize,
) -> &'a mut VarMeta {
    let i = x.index();
    if i >= vars.len() {
        vars.resize_with(i + 1, || None);
    }
    match &mut vars[i] {
        Some(m) => m,
        slot @ None => {
            touched.push(x);
            slot.insert(VarMeta::new(num_threads))
        }
    }
}

fn report(current: Access, var: VarId, kind: RaceKind, prior: Access) -> RaceReport {
    RaceReport {
        event_index: current.index,
        thread: current.thread,
        var,
        kind,
        prior_index: prior.index,
        prior_thread: prior.thread,
        loc: current.loc,
        prior_loc: prior.loc,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_str;
    use proptest::prelude::*;

    fn run(text: &str) -> Vec<RaceReport> {
        let tr = parse_str(text).unwrap();
        let mut st = DetectorState::new(tr.num_threads().max(1));
        let mut out = Vec::new();
        for (i, e) in tr.events().iter().enumerate() {
            st.step(i, e, &mut out).unwrap();
        }
        out
    }

    fn vt(v: &[u32]) -> VectorTime {
        VectorTime::from_slice(v)
    }

    #[test]
    fn leq_examples() {
        assert!(vt(&[0, 0]).leq(&vt(&[1, 2])).unwrap());
        assert!(!vt(&[1, 2]).leq(&vt(&[2, 1])).unwrap());
        assert!(vt(&[3, 1]).leq(&vt(&[3, 1])).unwrap());
        assert_eq!(
            vt(&[1]).leq(&vt(&[1, 2])),
            Err(LengthMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn join_examples() {
        assert_eq!(vt(&[1, 0]).join(&vt(&[0, 2])).unwrap(), vt(&[1, 2]));
        assert_eq!(
            vt(&[4, 5]).join(&VectorTime::bottom(2)).unwrap(),
            vt(&[4, 5])
        );
        assert_eq!(vt(&[4, 5]).join(&vt(&[4, 5])).unwrap(), vt(&[4, 5]));
        assert!(vt(&[1]).join(&vt(&[1, 2])).is_err());
    }

    #[test]
    fn init_examples() {
        let st = DetectorState::new(2);
        assert_eq!(st.thread_clock(ThreadId(0)), &vt(&[1, 0]));
        assert_eq!(st.thread_clock(ThreadId(1)), &vt(&[0, 1]));
        assert_eq!(DetectorState::new(1).thread_clock(ThreadId(0)), &vt(&[1]));
        assert_eq!(st.write_clock(VarId(7)), VectorTime::bottom(2));
        assert_eq!(st.lock_clock(LockId(3)), VectorTime::bottom(2));
        assert_eq!(st.work(), 0);
    }

    #[test]
    fn unsynchronized_write_read() {
        let reports = run("t1|w(x)\nt2|r(x)");
        assert_eq!(reports.len(), 1);
        let r = reports[0];
        assert_eq!(
            (r.event_index, r.prior_index, r.kind),
            (1, 0, RaceKind::WriteRead)
        );
    }

    #[test]
    fn lock_ordered_accesses() {
        assert!(run("t1|w(x)\nt1|rel(l)\nt2|acq(l)\nt2|r(x)").is_empty());
        assert!(run("t1|acq(l)\nt1|w(x)\nt1|rel(l)\nt2|acq(l)\nt2|w(x)\nt2|rel(l)").is_empty());
    }

    #[test]
    fn program_order() {
        assert!(run("t1|w(x)\nt1|r(x)\nt1|w(x)").is_empty());
    }

    #[test]
    fn write_can_fail_both_checks() {
        let reports = run("t1|w(x)\nt2|r(x)\nt3|w(x)");
        let kinds: Vec<_> = reports.iter().map(|r| (r.event_index, r.kind)).collect();
        assert_eq!(
            kinds,
            vec![
                (1, RaceKind::WriteRead),
                (2, RaceKind::ReadWrite),
                (2, RaceKind::WriteWrite)
            ]
        );
    }

    #[test]
    fn older_read_by_other_thread_is_kept() {
        // t2's read is ordered before t3's write through the lock, t1's is not.
        let reports = run("t1|r(x)\nt2|r(x)\nt2|rel(l)\nt3|acq(l)\nt3|w(x)");
        assert_eq!(reports.len(), 1);
        assert_eq!(
            (reports[0].kind, reports[0].prior_index),
            (RaceKind::ReadWrite, 0)
        );
    }

    #[test]
    fn dangling_release_is_legal() {
        let reports = run("t1|w(x)\nt1|rel(l)\nt2|acq(l)\nt2|w(x)");
        assert!(reports.is_empty());
        let tr = parse_str("t1|rel(l)").unwrap();
        let mut st = DetectorState::new(1);
        st.step(0, &tr.events()[0], &mut Vec::new()).unwrap();
        assert_eq!(st.lock_clock(LockId(0)), vt(&[1]));
        assert_eq!(st.thread_clock(ThreadId(0)), &vt(&[2]));
    }

    #[test]
    fn thread_out_of_range() {
        let tr = parse_str("t1|w(x)\nt2|w(x)").unwrap();
        let mut st = DetectorState::new(1);
        assert!(st.step(1, &tr.events()[1], &mut Vec::new()).is_err());
    }

    #[test]
    fn reset_clears_metadata() {
        let tr = parse_str("t1|w(x)\nt1|rel(l)\nt2|w(x)").unwrap();
        let mut st = DetectorState::new(2);
        let mut out = Vec::new();
        st.step(0, &tr.events()[0], &mut out).unwrap();
        st.step(1, &tr.events()[1], &mut out).unwrap();
        st.reset();
        assert!(!st.has_metadata(VarId(0)));
        assert_eq!(st.thread_clock(ThreadId(0)), &vt(&[1, 0]));
        assert_eq!(st.lock_clock(LockId(0)), VectorTime::bottom(2));
        st.step(2, &tr.events()[2], &mut out).unwrap();
        assert!(out.is_empty());
        assert_eq!(st.work(), 3);
    }

    fn vec3() -> impl Strategy<Value = VectorTime> {
        proptest::collection::vec(0u32..5, 3).prop_map(VectorTime)
    }

    proptest! {
        #[test]
        fn join_laws(a in vec3(), b in vec3(), c in vec3()) {
            prop_assert_eq!(a.join(&b).unwrap(), b.join(&a).unwrap());
            prop_assert_eq!(a.join(&b).unwrap().join(&c).unwrap(), a.join(&b.join(&c).unwrap()).unwrap());
            prop_assert_eq!(a.join(&a).unwrap(), a.clone());
            let j = a.join(&b).unwrap();
            prop_assert!(a.leq(&j).unwrap() && b.leq(&j).unwrap());
        }

        #[test]
        fn leq_is_partial_order(a in vec3(), b in vec3(), c in vec3()) {
            prop_assert!(a.leq(&a).unwrap());
            if a.leq(&b).unwrap() && b.leq(&a).unwrap() {
                prop_assert_eq!(&a, &b);
            }
            if a.leq(&b).unwrap() && b.leq(&c).unwrap() {
                prop_assert!(a.leq(&c).unwrap());
            }
        }
    }
}
