//! The constant-sample race property tester.
//!
//! For a trace over `|T|` threads holding at most `h` locks at once, let
//! `m = 4|T| + 2h`. If the trace is `ε`-far (in hamming distance) from every
//! race-free trace and `n >= 12m/ε`, at least a `2ε/15` fraction of its
//! windows of length `k = 4m/ε` contain a race. Sampling
//! `s = 15 ln(1/δ) / (2ε)` such windows therefore misses every racy one with
//! probability `(1 - 2ε/15)^s < δ`. A race-free trace has race-free windows,
//! so a reported race is always real.
//!
//! Sampled windows are merged when they overlap or touch, and the detector is
//! re-initialised at the start of every merged interval. Events outside the
//! intervals are skipped without touching any clock, so the metadata work is
//! at most `s * k` no matter how long the trace is.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::clock::RaceReport;
use crate::detectors::{detector_for, run_full};
use crate::rng::seeded;
use crate::trace::Trace;

#[derive(Clone, Copy, Debug, PartialEq, Error)]
pub enum ParamError {
    #[error("epsilon {0} outside (0, 1]")]
    Epsilon(f64),
    #[error("delta {0} outside (0, 1)")]
    Delta(f64),
    #[error("need at least one thread")]
    NoThreads,
    #[error("failure bound (1 - 2ε/15)^s < δ does not hold for s = {s}")]
    Bound { s: usize },
}

/// Derived tester constants. All ratios are rounded up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RptParams {
    pub epsilon: f64,
    pub delta: f64,
    pub num_threads: usize,
    pub max_locks_held: usize,
    /// Connector length bound `4|T| + 2h`.
    pub m: usize,
    /// Window length.
    pub k: usize,
    /// Number of sampled windows.
    pub s: usize,
    /// Traces shorter than this are checked exhaustively.
    pub short_threshold: usize,
    pub seed: u64,
}

/// `ceil`, except that values within float noise of an integer round to it,
/// so `4 * 68 / 0.01` gives 27200 rather than 27201.
fn ceil_guarded(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

impl RptParams {
    pub fn derive(
        num_threads: usize,
        max_locks_held: usize,
        epsilon: f64,
        delta: f64,
        seed: u64,
    ) -> Result<Self, ParamError> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(ParamError::Epsilon(epsilon));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(ParamError::Delta(delta));
        }
        if num_threads == 0 {
            return Err(ParamError::NoThreads);
        }
        let m = 4 * num_threads + 2 * max_locks_held;
        let k = ceil_guarded(4.0 * m as f64 / epsilon);
        let s = ceil_guarded(15.0 * (1.0 / delta).ln() / (2.0 * epsilon)).max(1);
        let short_threshold = ceil_guarded(12.0 * m as f64 / epsilon);
        let params = RptParams {
            epsilon,
            delta,
            num_threads,
            max_locks_held,
            m,
            k,
            s,
            short_threshold,
            seed,
        };
        if params.miss_probability_bound() >= delta {
            return Err(ParamError::Bound { s });
        }
        Ok(params)
    }

    /// `(1 - 2ε/15)^s`, the chance that no sampled window is racy when at
    /// least a `2ε/15` fraction of windows are.
    pub fn miss_probability_bound(&self) -> f64 {
        (1.0 - 2.0 * self.epsilon / 15.0).powf(self.s as f64)
    }

    pub fn with_seed(self, seed: u64) -> Self {
        RptParams { seed, ..self }
    }

    /// Upper bound on metadata work in sampled mode.
    pub fn work_bound(&self) -> u64 {
        self.s as u64 * self.k as u64
    }
}

/// Sorted, disjoint half-open intervals of event positions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WindowSet {
    pub merged: Vec<(usize, usize)>,
}

impl WindowSet {
    /// Windows `[i, i + k)` for the given starts, with overlapping or adjacent
    /// windows coalesced and everything clipped to `[0, n)`.
    pub fn from_starts(starts: &[usize], k: usize, n: usize) -> Self {
        let mut sorted = starts.to_vec();
        sorted.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::new();
        for start in sorted {
            let (a, b) = (start.min(n), (start + k).min(n));
            if a == b {
                continue;
            }
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        WindowSet { merged }
    }

    pub fn total_len(&self) -> usize {
        self.merged.iter().map(|(a, b)| b - a).sum()
    }

    pub fn len(&self) -> usize {
        self.merged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merged.is_empty()
    }
}

/// Draws `s` window starts i.i.d. uniform over `[0, n - k]` (with
/// replacement) and merges the windows.
///
/// Panics if `n < k`; callers route short traces to exhaustive detection.
pub fn sample_windows(n: usize, params: &RptParams) -> WindowSet {
    assert!(
        n >= params.k,
        "trace of length {n} shorter than window {}",
        params.k
    );
    let mut rng = seeded(params.seed);
    let hi = (n - params.k) as u64;
    let starts: Vec<usize> = (0..params.s)
        .map(|_| rng.gen_range(0..=hi) as usize)
        .collect();
    WindowSet::from_starts(&starts, params.k, n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RptMode {
    Sampled,
    ShortTraceFallback,
}

#[derive(Clone, Debug)]
pub struct RptVerdict {
    pub racy: bool,
    /// Reports with absolute event positions.
    pub reports: Vec<RaceReport>,
    pub sampled_events: usize,
    pub metadata_work: u64,
    pub mode: RptMode,
    /// Merged intervals analysed; empty in fallback mode.
    pub windows: WindowSet,
    pub elapsed: Duration,
}

/// Runs the tester over a well-formed trace.
pub fn run_rpt(trace: &Trace, params: &RptParams) -> RptVerdict {
    let start = Instant::now();
    let n = trace.len();
    if n < params.short_threshold {
        let full = run_full(trace);
        return RptVerdict {
            racy: full.racy(),
            reports: full.reports,
            sampled_events: full.sampled_events,
            metadata_work: full.metadata_work,
            mode: RptMode::ShortTraceFallback,
            windows: WindowSet::default(),
            elapsed: start.elapsed(),
        };
    }

    let windows = sample_windows(n, params);
    let mut state = detector_for(trace);
    let mut reports = Vec::new();
    let mut intervals = windows.merged.iter().peekable();
    // One forward pass; the cursor only compares against the next boundary
    // until it enters an interval.
    for (i, e) in trace.events().iter().enumerate() {
        let Some(&&(a, b)) = intervals.peek() else {
            break;
        };
        if i < a {
            continue;
        }
        if i == a {
            state.reset();
        }
        state
            .step(i, e, &mut reports)
            .expect("thread ids come from the trace's own table");
        if i + 1 == b {
            intervals.next();
        }
    }
    RptVerdict {
        racy: !reports.is_empty(),
        reports,
        sampled_events: windows.total_len(),
        metadata_work: state.work(),
        mode: RptMode::Sampled,
        windows,
        elapsed: start.elapsed(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_str;

    #[test]
    fn param_examples() {
        let p = RptParams::derive(4, 1, 0.3, 0.2, 0).unwrap();
        assert_eq!(p.m, 18);

        let p = RptParams::derive(16, 2, 0.01, 0.1, 0).unwrap();
        assert_eq!((p.m, p.k, p.s, p.short_threshold), (68, 27200, 1727, 81600));

        let p = RptParams::derive(1, 0, 0.5, 0.5, 0).unwrap();
        assert_eq!((p.m, p.k, p.s, p.short_threshold), (4, 32, 11, 96));
    }

    #[test]
    fn param_validation() {
        assert_eq!(
            RptParams::derive(2, 0, 0.0, 0.1, 0),
            Err(ParamError::Epsilon(0.0))
        );
        assert_eq!(
            RptParams::derive(2, 0, 1.1, 0.1, 0),
            Err(ParamError::Epsilon(1.1))
        );
        assert!(RptParams::derive(2, 0, 1.0, 0.1, 0).is_ok());
        assert_eq!(
            RptParams::derive(2, 0, 0.5, 1.0, 0),
            Err(ParamError::Delta(1.0))
        );
        assert_eq!(
            RptParams::derive(2, 0, 0.5, 0.0, 0),
            Err(ParamError::Delta(0.0))
        );
        assert_eq!(
            RptParams::derive(0, 0, 0.5, 0.5, 0),
            Err(ParamError::NoThreads)
        );
    }

    #[test]
    fn ceil_guard() {
        assert_eq!(ceil_guarded(272.0 / 0.01), 27200);
        assert_eq!(ceil_guarded(1726.94), 1727);
        assert_eq!(ceil_guarded(3.0000001), 4);
    }

    #[test]
    fn merge_examples() {
        assert_eq!(
            WindowSet::from_starts(&[10, 15], 10, 100).merged,
            vec![(10, 25)]
        );
        assert_eq!(
            WindowSet::from_starts(&[0, 50], 10, 100).merged,
            vec![(0, 10), (50, 60)]
        );
        assert_eq!(
            WindowSet::from_starts(&[20, 10], 10, 100).merged,
            vec![(10, 30)]
        );
        assert_eq!(
            WindowSet::from_starts(&[50, 50, 50], 10, 100).merged,
            vec![(50, 60)]
        );
    }

    #[test]
    fn sampling_is_seeded() {
        let p = RptParams::derive(2, 1, 0.5, 0.1, 42).unwrap();
        let a = sample_windows(10_000, &p);
        assert_eq!(a, sample_windows(10_000, &p));
        assert_ne!(a, sample_windows(10_000, &p.with_seed(43)));
        assert!(a.total_len() <= p.s * p.k);
        for w in a.merged.windows(2) {
            assert!(w[0].1 < w[1].0);
        }
        let whole = sample_windows(p.k, &p);
        assert_eq!(whole.merged, vec![(0, p.k)]);
    }

    #[test]
    fn short_trace_matches_full() {
        let tr = parse_str("t1|w(x)\nt2|w(x)").unwrap();
        let p = RptParams::derive(2, 0, 0.5, 0.1, 1).unwrap();
        let v = run_rpt(&tr, &p);
        assert_eq!(v.mode, RptMode::ShortTraceFallback);
        assert_eq!(v.reports, run_full(&tr).reports);
        assert!(v.racy);
    }

    #[test]
    fn race_spanning_separate_windows_is_not_reported() {
        let mut text = String::from("t1|w(x)\n");
        text.push_str(&"t1|r(y)\n".repeat(98));
        text.push_str("t2|w(x)\n");
        let tr = parse_str(&text).unwrap();
        assert!(run_full(&tr).racy());
        let p = RptParams {
            k: 10,
            s: 2,
            short_threshold: 50,
            ..RptParams::derive(1, 0, 1.0, 0.5, 0).unwrap()
        };
        for seed in 0..50 {
            let v = run_rpt(&tr, &p.with_seed(seed));
            assert_eq!(v.mode, RptMode::Sampled);
            assert!(!v.racy);
            assert!(v.metadata_work <= 20);
        }
    }

    #[test]
    fn reports_use_absolute_positions() {
        let mut text = "t1|r(y)\n".repeat(50);
        text.push_str("t1|w(x)\nt2|w(x)\n");
        text.push_str(&"t1|r(y)\n".repeat(48));
        let tr = parse_str(&text).unwrap();
        let p = RptParams {
            k: 100,
            s: 1,
            short_threshold: 50,
            ..RptParams::derive(2, 0, 1.0, 0.5, 0).unwrap()
        };
        let v = run_rpt(&tr, &p);
        assert_eq!(v.windows.merged, vec![(0, 100)]);
        assert_eq!(v.reports.len(), 1);
        assert_eq!(
            (v.reports[0].prior_index, v.reports[0].event_index),
            (50, 51)
        );
    }
}
