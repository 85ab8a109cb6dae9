//! Synthetic well-formed traces with a controlled race profile.
//!
//! All modes share a race-free background: every shared variable `x<i>` is
//! guarded by lock `L<i mod locks>` and only touched while the guard is held,
//! and each thread also has a private variable nobody else touches. Racy
//! modes then splice unsynchronised conflicting writes on dedicated variables
//! into that background.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::rng::seeded;
use crate::trace::{locks_held_at, Event, LockId, Op, SubtraceView, ThreadId, Trace, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GenMode {
    /// Every shared access under its guard lock.
    RaceFreeLocked,
    /// One thread only.
    RaceFreeSingleThread,
    /// Shared variables are only ever read.
    ReadOnly,
    /// A conflicting adjacent write pair every `window / 2` events, so every
    /// window of length `window` contains a race.
    DenseRacy { window: usize },
    /// Exactly `count` racy pairs, each on its own variable.
    SparseRacy { count: usize },
    /// Racy pairs whose endpoints are exactly `min_gap` apart.
    LongRacesOnly { min_gap: usize },
    /// Background where each shared access skips its guard with the given
    /// probability; races appear naturally.
    Random { unguarded: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GenSpec {
    pub num_threads: usize,
    pub num_locks: usize,
    pub num_vars: usize,
    pub len: usize,
    pub max_nesting: usize,
    pub mode: GenMode,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("mode needs at least {needed} threads")]
    TooFewThreads { needed: usize },
    #[error("need at least one thread")]
    NoThreads,
    #[error("dense window must be at least 4")]
    WindowTooSmall,
    #[error("{count} racy pairs do not fit in {len} events")]
    TooManyRaces { count: usize, len: usize },
    #[error("gap {min_gap} must be at least 1 and below the length {len}")]
    BadGap { min_gap: usize, len: usize },
}

impl GenSpec {
    pub fn new(num_threads: usize, len: usize, mode: GenMode, seed: u64) -> Self {
        GenSpec {
            num_threads,
            num_locks: 2,
            num_vars: 4,
            len,
            max_nesting: 2,
            mode,
            seed,
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        if self.num_threads == 0 {
            return Err(GenError::NoThreads);
        }
        let racy = matches!(
            self.mode,
            GenMode::DenseRacy { .. } | GenMode::SparseRacy { .. } | GenMode::LongRacesOnly { .. }
        );
        if racy && self.num_threads < 2 {
            return Err(GenError::TooFewThreads { needed: 2 });
        }
        match self.mode {
            GenMode::DenseRacy { window } if window < 4 => Err(GenError::WindowTooSmall),
            GenMode::SparseRacy { count } if 2 * count > self.len => Err(GenError::TooManyRaces {
                count,
                len: self.len,
            }),
            GenMode::LongRacesOnly { min_gap } if min_gap == 0 || min_gap >= self.len => {
                Err(GenError::BadGap {
                    min_gap,
                    len: self.len,
                })
            }
            _ => Ok(()),
        }
    }
}

struct Background {
    rng: ChaCha8Rng,
    threads: Vec<ThreadId>,
    locks: Vec<LockId>,
    shared: Vec<VarId>,
    private: Vec<VarId>,
    held: Vec<Vec<LockId>>,
    owner: Vec<Option<ThreadId>>,
    max_nesting: usize,
    writes: bool,
    unguarded: f64,
}

impl Background {
    fn new(trace: &mut Trace, spec: &GenSpec, threads_used: usize, rng: ChaCha8Rng) -> Self {
        let threads: Vec<ThreadId> = (0..threads_used)
            .map(|t| trace.intern_thread(&format!("T{t}")))
            .collect();
        let locks: Vec<LockId> = (0..spec.num_locks)
            .map(|l| trace.intern_lock(&format!("L{l}")))
            .collect();
        let shared: Vec<VarId> = (0..spec.num_vars)
            .map(|x| trace.intern_var(&format!("x{x}")))
            .collect();
        let private: Vec<VarId> = (0..threads_used)
            .map(|t| trace.intern_var(&format!("p{t}")))
            .collect();
        Background {
            rng,
            held: vec![Vec::new(); threads.len()],
            owner: vec![None; locks.len()],
            threads,
            locks,
            shared,
            private,
            max_nesting: spec.max_nesting,
            writes: !matches!(spec.mode, GenMode::ReadOnly),
            unguarded: match spec.mode {
                GenMode::Random { unguarded } => unguarded,
                _ => 0.0,
            },
        }
    }

    fn access(&mut self, t: ThreadId, x: VarId) -> Event {
        let op = if self.writes && self.rng.gen_bool(0.5) {
            Op::Write(x)
        } else {
            Op::Read(x)
        };
        Event::new(t, op)
    }

    /// One background event by a thread drawn from `allowed`.
    fn next(&mut self, allowed: &[ThreadId]) -> Event {
        let t = *allowed.choose(&mut self.rng).expect("nonempty thread set");
        let ti = t.index();
        let roll: f64 = self.rng.gen();
        if roll < 0.2 && self.held[ti].len() < self.max_nesting {
            let free: Vec<LockId> = self
                .locks
                .iter()
                .copied()
                .filter(|l| self.owner[l.index()].is_none())
                .collect();
            if let Some(&l) = free.choose(&mut self.rng) {
                self.owner[l.index()] = Some(t);
                self.held[ti].push(l);
                return Event::new(t, Op::Acquire(l));
            }
        }
        if roll < 0.4 {
            if let Some(l) = self.held[ti].pop() {
                self.owner[l.index()] = None;
                return Event::new(t, Op::Release(l));
            }
        }
        if !self.shared.is_empty() && self.unguarded > 0.0 && self.rng.gen_bool(self.unguarded) {
            let x = *self.shared.choose(&mut self.rng).expect("nonempty");
            return self.access(t, x);
        }
        if !self.locks.is_empty() && !self.held[ti].is_empty() && roll < 0.85 {
            let guarded: Vec<VarId> = self
                .shared
                .iter()
                .copied()
                .filter(|x| self.held[ti].contains(&self.locks[x.index() % self.locks.len()]))
                .collect();
            if let Some(&x) = guarded.choose(&mut self.rng) {
                return self.access(t, x);
            }
        }
        if !self.writes && !self.shared.is_empty() && roll < 0.85 {
            let x = *self.shared.choose(&mut self.rng).expect("nonempty");
            return Event::new(t, Op::Read(x));
        }
        let x = self.private[ti];
        self.access(t, x)
    }

    /// Releases everything `t` holds, innermost first.
    fn release_all(&mut self, t: ThreadId) -> Vec<Event> {
        let mut out = Vec::new();
        while let Some(l) = self.held[t.index()].pop() {
            self.owner[l.index()] = None;
            out.push(Event::new(t, Op::Release(l)));
        }
        out
    }

    fn two_threads(&mut self) -> (ThreadId, ThreadId) {
        let mut pick = self.threads.choose_multiple(&mut self.rng, 2);
        let a = *pick.next().expect("two threads");
        let b = *pick.next().expect("two threads");
        (a, b)
    }
}

/// Generates a trace for `spec`. Deterministic in the spec (including seed).
pub fn gen_trace(spec: &GenSpec) -> Result<Trace, GenError> {
    spec.validate()?;
    let rng = seeded(spec.seed);
    let mut trace = Trace::new();
    let threads_used = if matches!(spec.mode, GenMode::RaceFreeSingleThread) {
        1
    } else {
        spec.num_threads
    };
    let mut bg = Background::new(&mut trace, spec, threads_used, rng);
    let all = bg.threads.clone();
    let n = spec.len;
    let mut events: Vec<Event> = Vec::with_capacity(n);

    match spec.mode {
        GenMode::RaceFreeLocked
        | GenMode::RaceFreeSingleThread
        | GenMode::ReadOnly
        | GenMode::Random { .. } => {
            while events.len() < n {
                events.push(bg.next(&all));
            }
        }
        GenMode::DenseRacy { window } => {
            let race = trace.intern_var("race");
            let stride = window / 2;
            while events.len() < n {
                if events.len().is_multiple_of(stride) && events.len() + 2 <= n {
                    let (a, b) = bg.two_threads();
                    events.push(Event::new(a, Op::Write(race)));
                    events.push(Event::new(b, Op::Write(race)));
                } else {
                    events.push(bg.next(&all));
                }
            }
        }
        GenMode::SparseRacy { count } => {
            let racy_vars: Vec<VarId> = (0..count)
                .map(|q| trace.intern_var(&format!("race{q}")))
                .collect();
            let site_a = trace.intern_loc("race.c:1");
            let site_b = trace.intern_loc("race.c:2");
            // Pair q starts at (q + 1) * free / (count + 1) + 2q, which spreads
            // the pairs evenly and always leaves room for the last one.
            let free = n - 2 * count;
            let start_of = |q: usize| (q + 1) * free / (count + 1) + 2 * q;
            let mut next_pair = 0;
            while events.len() < n {
                if next_pair < count && events.len() == start_of(next_pair) {
                    let (a, b) = bg.two_threads();
                    let x = racy_vars[next_pair];
                    events.push(Event {
                        thread: a,
                        op: Op::Write(x),
                        loc: Some(site_a),
                    });
                    events.push(Event {
                        thread: b,
                        op: Op::Write(x),
                        loc: Some(site_b),
                    });
                    next_pair += 1;
                } else {
                    events.push(bg.next(&all));
                }
            }
        }
        GenMode::LongRacesOnly { min_gap } => {
            let site_a = trace.intern_loc("long.c:1");
            let site_b = trace.intern_loc("long.c:2");
            let mut q = 0;
            while events.len() < n {
                let (a, b) = bg.two_threads();
                let releases = bg.release_all(a);
                // A pair needs the releases, the first write, the gap and the
                // second write to fit.
                if events.len() + releases.len() + min_gap + 1 > n {
                    events.extend(releases);
                    while events.len() < n {
                        events.push(bg.next(&all));
                    }
                    break;
                }
                events.extend(releases);
                let x = trace.intern_var(&format!("long{q}"));
                q += 1;
                events.push(Event {
                    thread: a,
                    op: Op::Write(x),
                    loc: Some(site_a),
                });
                // Thread `a` stays silent for the whole gap, so nothing it did
                // after the first write can order it before the second.
                let others: Vec<ThreadId> = all.iter().copied().filter(|&t| t != a).collect();
                for _ in 1..min_gap {
                    events.push(bg.next(&others));
                }
                events.push(Event {
                    thread: b,
                    op: Op::Write(x),
                    loc: Some(site_b),
                });
                let filler = min_gap.min(n - events.len());
                for _ in 0..filler {
                    events.push(bg.next(&all));
                }
            }
        }
    }
    events.truncate(n);
    trace.extend_events(events);
    Ok(trace)
}

/// Thread count (largest thread id seen, plus one) and the maximum number of
/// locks simultaneously held.
pub fn measured_params(trace: &Trace) -> (usize, usize) {
    measured_params_view(trace.view())
}

pub fn measured_params_view(view: SubtraceView<'_>) -> (usize, usize) {
    let threads = view
        .events()
        .iter()
        .map(|e| e.thread.index() + 1)
        .max()
        .unwrap_or(0);
    // Locks released before any acquire in the view are held at its start.
    let mut held = locks_held_at(view, 0).map(|m| m.len()).unwrap_or(0);
    let mut max_held = held;
    for e in view.events() {
        match e.op {
            Op::Acquire(_) => {
                held += 1;
                max_held = max_held.max(held);
            }
            Op::Release(_) => held = held.saturating_sub(1),
            _ => {}
        }
    }
    (threads, max_held)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::run_full;
    use crate::io::parse_str;
    use crate::oracle::{count_racy_windows, enumerate_races};
    use crate::trace::check_well_formed;

    #[test]
    fn measured_examples() {
        let tr = parse_str("t1|acq(l1)\nt2|acq(l2)\nt1|rel(l1)\nt2|rel(l2)").unwrap();
        assert_eq!(measured_params(&tr), (2, 2));
        let tr = parse_str("t1|w(x)\nt1|r(y)").unwrap();
        assert_eq!(measured_params(&tr), (1, 0));
        assert_eq!(measured_params(&Trace::new()), (0, 0));
    }

    #[test]
    fn race_free_locked() {
        let spec = GenSpec {
            num_threads: 4,
            num_locks: 3,
            num_vars: 6,
            len: 10_000,
            max_nesting: 2,
            mode: GenMode::RaceFreeLocked,
            seed: 5,
        };
        let tr = gen_trace(&spec).unwrap();
        assert_eq!(tr.len(), 10_000);
        assert_eq!(check_well_formed(&tr), Ok(()));
        assert!(!run_full(&tr).racy());
        let (threads, h) = measured_params(&tr);
        assert!(threads <= 4 && h <= 3);
        assert!(tr
            .events()
            .iter()
            .any(|e| matches!(e.op, Op::Write(x) if tr.var_name(x).starts_with('x'))));
    }

    #[test]
    fn deterministic() {
        let spec = GenSpec::new(3, 500, GenMode::Random { unguarded: 0.1 }, 11);
        assert_eq!(gen_trace(&spec).unwrap(), gen_trace(&spec).unwrap());
        assert_ne!(
            gen_trace(&spec).unwrap(),
            gen_trace(&GenSpec { seed: 12, ..spec }).unwrap()
        );
    }

    #[test]
    fn sparse_has_exact_race_count() {
        let spec = GenSpec::new(4, 2000, GenMode::SparseRacy { count: 3 }, 1);
        let tr = gen_trace(&spec).unwrap();
        assert_eq!(check_well_formed(&tr), Ok(()));
        assert_eq!(enumerate_races(tr.view()).unwrap().len(), 3);
    }

    #[test]
    fn dense_every_window_racy() {
        let spec = GenSpec::new(3, 400, GenMode::DenseRacy { window: 40 }, 2);
        let tr = gen_trace(&spec).unwrap();
        assert_eq!(check_well_formed(&tr), Ok(()));
        assert_eq!(count_racy_windows(&tr, 40).unwrap(), 400 - 40 + 1);
    }

    #[test]
    fn long_races_are_long() {
        let spec = GenSpec::new(3, 1500, GenMode::LongRacesOnly { min_gap: 200 }, 3);
        let tr = gen_trace(&spec).unwrap();
        assert_eq!(check_well_formed(&tr), Ok(()));
        let races = enumerate_races(tr.view()).unwrap();
        assert!(!races.is_empty());
        assert!(races.iter().all(|r| r.j - r.i >= 200));
    }

    #[test]
    fn infeasible_specs() {
        assert_eq!(
            gen_trace(&GenSpec::new(1, 100, GenMode::DenseRacy { window: 10 }, 0)),
            Err(GenError::TooFewThreads { needed: 2 })
        );
        assert_eq!(
            gen_trace(&GenSpec::new(2, 100, GenMode::DenseRacy { window: 3 }, 0)),
            Err(GenError::WindowTooSmall)
        );
        assert!(gen_trace(&GenSpec::new(2, 10, GenMode::SparseRacy { count: 6 }, 0)).is_err());
        assert!(gen_trace(&GenSpec::new(
            2,
            10,
            GenMode::LongRacesOnly { min_gap: 10 },
            0
        ))
        .is_err());
        assert_eq!(
            gen_trace(&GenSpec::new(0, 10, GenMode::RaceFreeLocked, 0)),
            Err(GenError::NoThreads)
        );
    }

    #[test]
    fn single_thread_and_read_only() {
        let tr = gen_trace(&GenSpec::new(4, 3000, GenMode::RaceFreeSingleThread, 4)).unwrap();
        assert_eq!(measured_params(&tr).0, 1);
        assert!(!run_full(&tr).racy());
        let tr = gen_trace(&GenSpec::new(4, 3000, GenMode::ReadOnly, 4)).unwrap();
        assert!(tr.events().iter().all(|e| !matches!(e.op, Op::Write(_))));
        assert!(!run_full(&tr).racy());
    }
}
