//! Baseline detectors: the full vector-clock pass and a proportional
//! period sampler in the style of Pacer.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::clock::{DetectorState, RaceReport};
use crate::rng::seeded;
use crate::trace::{Op, Trace};

/// Outcome of a detector run.
#[derive(Clone, Debug, Default)]
pub struct RunResult {
    pub reports: Vec<RaceReport>,
    /// Events that fell in sampled regions and were fully analysed.
    pub sampled_events: usize,
    /// Events that received a metadata update.
    pub metadata_work: u64,
    pub elapsed: Duration,
}

impl RunResult {
    pub fn racy(&self) -> bool {
        !self.reports.is_empty()
    }
}

pub(crate) fn detector_for(trace: &Trace) -> DetectorState {
    DetectorState::new(trace.num_threads().max(1))
}

/// Processes every event of the trace.
pub fn run_full(trace: &Trace) -> RunResult {
    let start = Instant::now();
    let mut state = detector_for(trace);
    let mut reports = Vec::new();
    for (i, e) in trace.events().iter().enumerate() {
        state
            .step(i, e, &mut reports)
            .expect("thread ids come from the trace's own table");
    }
    RunResult {
        reports,
        sampled_events: trace.len(),
        metadata_work: state.work(),
        elapsed: start.elapsed(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PacerConfig {
    pub rate: f64,
    pub period: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Error)]
pub enum PacerConfigError {
    #[error("sampling rate {0} outside (0, 1]")]
    Rate(f64),
    #[error("period length must be at least 1")]
    Period,
}

impl PacerConfig {
    pub const DEFAULT_RATE: f64 = 0.03;
    pub const DEFAULT_PERIOD: usize = 1000;

    pub fn new(rate: f64, period: usize, seed: u64) -> Result<Self, PacerConfigError> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(PacerConfigError::Rate(rate));
        }
        if period == 0 {
            return Err(PacerConfigError::Period);
        }
        Ok(PacerConfig { rate, period, seed })
    }
}

/// Splits the trace into periods of `config.period` events, each sampled
/// independently with probability `config.rate`.
///
/// Sampling periods get full analysis. Outside them, synchronisation events
/// are still processed, and accesses are processed only when their variable
/// already carries metadata from an earlier sampling period.
pub fn run_pacer(trace: &Trace, config: &PacerConfig) -> RunResult {
    let start = Instant::now();
    let mut rng = seeded(config.seed);
    let mut state = detector_for(trace);
    let mut reports = Vec::new();
    let mut sampled_events = 0;
    for (p, period) in trace.events().chunks(config.period).enumerate() {
        let sampling = rng.gen_bool(config.rate);
        let base = p * config.period;
        if sampling {
            sampled_events += period.len();
        }
        for (offset, e) in period.iter().enumerate() {
            let process = sampling
                || match e.op {
                    Op::Acquire(_) | Op::Release(_) => true,
                    Op::Read(x) | Op::Write(x) => state.has_metadata(x),
                };
            if process {
                state
                    .step(base + offset, e, &mut reports)
                    .expect("thread ids come from the trace's own table");
            }
        }
    }
    RunResult {
        reports,
        sampled_events,
        metadata_work: state.work(),
        elapsed: start.elapsed(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::RaceKind;
    use crate::io::parse_str;

    #[test]
    fn full_two_writes() {
        let r = run_full(&parse_str("t1|w(x)\nt2|w(x)").unwrap());
        assert_eq!(r.reports.len(), 1);
        assert_eq!(
            (r.reports[0].event_index, r.reports[0].kind),
            (1, RaceKind::WriteWrite)
        );
        assert_eq!(r.metadata_work, 2);
    }

    #[test]
    fn full_on_empty_trace() {
        let r = run_full(&Trace::new());
        assert!(!r.racy());
        assert_eq!(r.metadata_work, 0);
    }

    #[test]
    fn pacer_rate_one_is_full() {
        let tr = parse_str(
            "t1|w(x)\nt2|r(x)\nt1|acq(l)\nt1|w(y)\nt1|rel(l)\nt2|acq(l)\nt2|w(y)\nt3|w(x)",
        )
        .unwrap();
        let full = run_full(&tr);
        let pacer = run_pacer(&tr, &PacerConfig::new(1.0, 3, 9).unwrap());
        assert_eq!(pacer.reports, full.reports);
        assert_eq!(pacer.sampled_events, tr.len());
    }

    #[test]
    fn pacer_skips_untracked_accesses_but_not_sync() {
        let tr = parse_str("t1|acq(l)\nt1|w(x)\nt1|rel(l)\nt2|w(x)").unwrap();
        // A tiny rate with period 1: almost surely nothing is sampled.
        let r = run_pacer(&tr, &PacerConfig::new(1e-12, 1, 3).unwrap());
        assert_eq!(r.sampled_events, 0);
        assert_eq!(r.metadata_work, 2);
        assert!(!r.racy());
    }

    #[test]
    fn pacer_config_validation() {
        assert_eq!(
            PacerConfig::new(0.0, 10, 0),
            Err(PacerConfigError::Rate(0.0))
        );
        assert_eq!(
            PacerConfig::new(1.5, 10, 0),
            Err(PacerConfigError::Rate(1.5))
        );
        assert_eq!(PacerConfig::new(0.5, 0, 0), Err(PacerConfigError::Period));
    }
}
