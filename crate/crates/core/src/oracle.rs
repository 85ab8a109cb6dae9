//! Brute-force happens-before computation for small traces.
//!
//! The relation is materialised as one predecessor bitset per event, built in
//! a single forward pass: an event's predecessors are those of the previous
//! event of its thread (plus that event), and for an acquire, every earlier
//! release of the same lock together with its predecessors. Memory is
//! quadratic, so every entry point enforces a length cap.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::trace::{Op, SubtraceView, Trace, VarId};

pub const DEFAULT_CAP: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("sub-trace of length {len} exceeds the oracle cap of {cap} events")]
    CapExceeded { len: usize, cap: usize },
    #[error("window length {k} is not in 1..={len}")]
    WindowTooLong { k: usize, len: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct BitRow(Vec<u64>);

impl BitRow {
    fn new(bits: usize) -> Self {
        BitRow(vec![0; bits.div_ceil(64)])
    }

    #[inline]
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] & (1 << (i % 64)) != 0
    }

    fn union_with(&mut self, other: &BitRow) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= *b;
        }
    }
}

/// Strict happens-before over the events of a sub-trace, in local positions.
#[derive(Clone, Debug)]
pub struct HbRelation {
    preds: Vec<BitRow>,
}

impl HbRelation {
    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }

    /// Whether event `i` happens before event `j` (local positions).
    pub fn ordered(&self, i: usize, j: usize) -> bool {
        i < j && self.preds[j].get(i)
    }
}

/// An unordered conflicting pair, absolute indices, `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RacePair {
    pub i: usize,
    pub j: usize,
    pub var: VarId,
}

#[derive(Clone, Copy, Debug)]
pub struct Oracle {
    pub cap: usize,
}

impl Default for Oracle {
    fn default() -> Self {
        Oracle { cap: DEFAULT_CAP }
    }
}

impl Oracle {
    pub fn with_cap(cap: usize) -> Self {
        Oracle { cap }
    }

    fn check_cap(&self, len: usize) -> Result<(), OracleError> {
        if len > self.cap {
            Err(OracleError::CapExceeded { len, cap: self.cap })
        } else {
            Ok(())
        }
    }

    pub fn hb_closure(&self, view: SubtraceView<'_>) -> Result<HbRelation, OracleError> {
        self.check_cap(view.len())?;
        Ok(closure(view))
    }

    /// All HB-races of the view, sorted by `(j, i)`.
    pub fn enumerate_races(&self, view: SubtraceView<'_>) -> Result<Vec<RacePair>, OracleError> {
        let hb = self.hb_closure(view)?;
        Ok(races_with(view, &hb, false))
    }

    pub fn has_race(&self, view: SubtraceView<'_>) -> Result<bool, OracleError> {
        let hb = self.hb_closure(view)?;
        Ok(!races_with(view, &hb, true).is_empty())
    }

    /// Checks that HB between `e_i` and `e_j` is the same in the whole view
    /// and in the slice `[i, j + 1)`, for every pair `i < j`.
    pub fn verify_context_free(&self, view: SubtraceView<'_>) -> Result<bool, OracleError> {
        let full = self.hb_closure(view)?;
        let n = view.len();
        for i in 0..n {
            // The forward pass is causal: row j of the closure of [i, n) only
            // depends on events i..=j, so it is the closure of [i, j + 1).
            let local = closure(view.slice(i, n));
            for j in (i + 1)..n {
                if local.ordered(0, j - i) != full.ordered(i, j) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Number of start positions `i` in `[0, n - k]` whose window `[i, i + k)`
    /// contains an HB-race.
    ///
    /// Ordering between two events does not depend on anything outside the
    /// slice between them, so a window is racy exactly when it contains both
    /// endpoints of a race of the whole trace. One closure of the trace
    /// therefore answers every window.
    pub fn count_racy_windows(&self, trace: &Trace, k: usize) -> Result<usize, OracleError> {
        let n = trace.len();
        if k > n || k == 0 {
            return Err(OracleError::WindowTooLong { k, len: n });
        }
        let races = self.enumerate_races(trace.view())?;
        let last_start = n - k;
        // Race (a, b) lies in the windows starting in [b + 1 - k, a].
        let mut delta = vec![0i64; last_start + 2];
        for r in &races {
            let lo = (r.j + 1).saturating_sub(k);
            let hi = r.i.min(last_start);
            if lo <= hi {
                delta[lo] += 1;
                delta[hi + 1] -= 1;
            }
        }
        let mut covered = 0;
        let mut depth = 0;
        for d in &delta[..=last_start] {
            depth += d;
            if depth > 0 {
                covered += 1;
            }
        }
        Ok(covered)
    }

    /// Same count as [`Oracle::count_racy_windows`], but closing every window
    /// separately. Quadratic in `k` per window; meant for cross-checks.
    pub fn count_racy_windows_direct(&self, trace: &Trace, k: usize) -> Result<usize, OracleError> {
        let n = trace.len();
        if k > n || k == 0 {
            return Err(OracleError::WindowTooLong { k, len: n });
        }
        self.check_cap(k)?;
        let count = (0..=n - k)
            .into_par_iter()
            .filter(|&i| self.has_race(trace.slice(i, i + k)).unwrap())
            .count();
        Ok(count)
    }
}

fn closure(view: SubtraceView<'_>) -> HbRelation {
    let events = view.events();
    let n = events.len();
    let mut preds: Vec<BitRow> = Vec::with_capacity(n);
    let mut last_of_thread: Vec<Option<usize>> = vec![None; view.base.num_threads()];
    let mut released: Vec<Option<BitRow>> = vec![None; view.base.locks.len()];
    for (j, e) in events.iter().enumerate() {
        let mut row = BitRow::new(n);
        if let Some(k) = last_of_thread[e.thread.index()] {
            row.union_with(&preds[k]);
            row.set(k);
        }
        if let Op::Acquire(l) = e.op {
            if let Some(rel) = &released[l.index()] {
                row.union_with(rel);
            }
        }
        if let Op::Release(l) = e.op {
            let acc = released[l.index()].get_or_insert_with(|| BitRow::new(n));
            acc.union_with(&row);
            acc.set(j);
        }
        last_of_thread[e.thread.index()] = Some(j);
        preds.push(row);
    }
    HbRelation { preds }
}

fn races_with(view: SubtraceView<'_>, hb: &HbRelation, first_only: bool) -> Vec<RacePair> {
    let events = view.events();
    let mut out = Vec::new();
    for j in 0..events.len() {
        let Some(var) = events[j].op.var() else {
            continue;
        };
        for i in 0..j {
            if events[i].conflicts_with(&events[j]) && !hb.ordered(i, j) {
                out.push(RacePair {
                    i: view.start + i,
                    j: view.start + j,
                    var,
                });
                if first_only {
                    return out;
                }
            }
        }
    }
    out
}

pub fn hb_closure(view: SubtraceView<'_>) -> Result<HbRelation, OracleError> {
    Oracle::default().hb_closure(view)
}

pub fn enumerate_races(view: SubtraceView<'_>) -> Result<Vec<RacePair>, OracleError> {
    Oracle::default().enumerate_races(view)
}

pub fn verify_context_free(trace: &Trace) -> Result<bool, OracleError> {
    Oracle::default().verify_context_free(trace.view())
}

pub fn count_racy_windows(trace: &Trace, k: usize) -> Result<usize, OracleError> {
    Oracle::default().count_racy_windows(trace, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_str;

    #[test]
    fn closure_examples() {
        let tr = parse_str("t1|w(x)\nt1|r(x)").unwrap();
        assert!(hb_closure(tr.view()).unwrap().ordered(0, 1));
        let tr = parse_str("t1|rel(l)\nt2|acq(l)").unwrap();
        assert!(hb_closure(tr.view()).unwrap().ordered(0, 1));
        let tr = parse_str("t1|w(x)\nt2|w(x)").unwrap();
        assert!(!hb_closure(tr.view()).unwrap().ordered(0, 1));
    }

    #[test]
    fn release_orders_every_later_acquire() {
        let tr = parse_str("t1|w(x)\nt1|rel(l)\nt2|acq(l)\nt2|rel(l)\nt3|acq(l)\nt3|r(x)").unwrap();
        let hb = hb_closure(tr.view()).unwrap();
        assert!(hb.ordered(0, 5));
        assert!(hb.ordered(1, 4));
        assert!(!hb.ordered(5, 0));
    }

    #[test]
    fn race_examples() {
        let tr = parse_str("t1|w(x)\nt2|r(x)").unwrap();
        assert_eq!(
            enumerate_races(tr.view()).unwrap(),
            vec![RacePair {
                i: 0,
                j: 1,
                var: VarId(0)
            }]
        );
        let tr = parse_str("t1|r(x)\nt2|r(x)").unwrap();
        assert!(enumerate_races(tr.view()).unwrap().is_empty());
    }

    #[test]
    fn races_are_sorted_and_absolute() {
        let tr = parse_str("t3|r(y)\nt1|w(x)\nt2|w(x)\nt3|w(x)\nt1|w(y)").unwrap();
        let races = enumerate_races(tr.slice(1, 5)).unwrap();
        let pairs: Vec<_> = races.iter().map(|r| (r.i, r.j)).collect();
        assert_eq!(pairs, vec![(1, 2), (1, 3), (2, 3)]);
        let all = enumerate_races(tr.view()).unwrap();
        assert_eq!(all.last().map(|r| (r.i, r.j)), Some((0, 4)));
    }

    #[test]
    fn context_free_small() {
        assert!(verify_context_free(&Trace::new()).unwrap());
        assert!(verify_context_free(&parse_str("t1|w(x)").unwrap()).unwrap());
        let tr = parse_str("t1|acq(l)\nt1|w(x)\nt1|rel(l)\nt2|acq(l)\nt2|r(x)\nt2|rel(l)").unwrap();
        assert!(verify_context_free(&tr).unwrap());
    }

    #[test]
    fn window_counts() {
        let text: String = (0..50).map(|_| "t1|w(x)\nt2|w(x)\n").collect();
        let tr = parse_str(&text).unwrap();
        assert_eq!(count_racy_windows(&tr, 2).unwrap(), 99);
        let free = parse_str("t1|w(x)\nt1|rel(l)\nt2|acq(l)\nt2|w(x)").unwrap();
        assert_eq!(count_racy_windows(&free, 2).unwrap(), 0);
        assert_eq!(
            count_racy_windows(&free, 5),
            Err(OracleError::WindowTooLong { k: 5, len: 4 })
        );
    }

    #[test]
    fn window_count_matches_direct() {
        let tr = parse_str(
            "t1|acq(l)\nt1|w(x)\nt2|r(y)\nt1|rel(l)\nt3|w(y)\nt2|acq(l)\nt2|r(x)\nt2|rel(l)\nt3|w(x)\nt1|r(y)",
        )
        .unwrap();
        let o = Oracle::default();
        for k in 1..=tr.len() {
            assert_eq!(
                o.count_racy_windows(&tr, k),
                o.count_racy_windows_direct(&tr, k),
                "k = {k}"
            );
        }
    }

    #[test]
    fn cap_is_enforced() {
        let tr = parse_str("t1|w(x)\nt2|w(x)\nt1|w(x)").unwrap();
        let small = Oracle::with_cap(2);
        assert_eq!(
            small.enumerate_races(tr.view()).unwrap_err(),
            OracleError::CapExceeded { len: 3, cap: 2 }
        );
        assert!(small.enumerate_races(tr.slice(0, 2)).is_ok());
    }
}
