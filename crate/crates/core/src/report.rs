//! Roll-ups of race reports: warning counts, racy memory locations, racy
//! source-location pairs and the fraction of short races.

use std::collections::HashSet;
use std::time::Duration;

use serde::Serialize;

use crate::clock::RaceReport;
use crate::detectors::RunResult;
use crate::oracle::RacePair;
use crate::rpt::RptVerdict;
use crate::trace::Trace;

/// Anything that produced race reports and counted its work.
pub trait Outcome {
    fn reports(&self) -> &[RaceReport];
    fn metadata_work(&self) -> u64;
    fn sampled_events(&self) -> usize;
    fn elapsed(&self) -> Duration;
}

impl Outcome for RunResult {
    fn reports(&self) -> &[RaceReport] {
        &self.reports
    }
    fn metadata_work(&self) -> u64 {
        self.metadata_work
    }
    fn sampled_events(&self) -> usize {
        self.sampled_events
    }
    fn elapsed(&self) -> Duration {
        self.elapsed
    }
}

impl Outcome for RptVerdict {
    fn reports(&self) -> &[RaceReport] {
        &self.reports
    }
    fn metadata_work(&self) -> u64 {
        self.metadata_work
    }
    fn sampled_events(&self) -> usize {
        self.sampled_events
    }
    fn elapsed(&self) -> Duration {
        self.elapsed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub warnings: usize,
    pub distinct_vars: usize,
    pub distinct_source_pairs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub short_race_fraction: Option<f64>,
    pub metadata_work: u64,
    pub sampled_events: usize,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Share of pairs `(i, j)` with `j - i < k`; `None` for no pairs.
pub fn short_race_fraction(
    pairs: impl IntoIterator<Item = (usize, usize)>,
    k: usize,
) -> Option<f64> {
    let (mut short, mut total) = (0usize, 0usize);
    for (i, j) in pairs {
        total += 1;
        if j.abs_diff(i) < k {
            short += 1;
        }
    }
    (total > 0).then(|| short as f64 / total as f64)
}

/// Counts distinct source-location pairs by name, unordered. Reports missing
/// either location are left out.
fn distinct_source_pairs(reports: &[RaceReport], trace: &Trace) -> usize {
    reports
        .iter()
        .filter_map(|r| {
            let (a, b) = (trace.loc_name(r.prior_loc?), trace.loc_name(r.loc?));
            Some(if a <= b { (a, b) } else { (b, a) })
        })
        .collect::<HashSet<_>>()
        .len()
}

/// Aggregates an outcome. `k` enables the short-race fraction.
pub fn summarize<O: Outcome + ?Sized>(outcome: &O, trace: &Trace, k: Option<usize>) -> Summary {
    let reports = outcome.reports();
    Summary {
        warnings: reports.len(),
        distinct_vars: reports.iter().map(|r| r.var).collect::<HashSet<_>>().len(),
        distinct_source_pairs: distinct_source_pairs(reports, trace),
        short_race_fraction: k.and_then(|k| {
            short_race_fraction(reports.iter().map(|r| (r.prior_index, r.event_index)), k)
        }),
        metadata_work: outcome.metadata_work(),
        sampled_events: outcome.sampled_events(),
        elapsed: outcome.elapsed(),
    }
}

/// Short-race fraction over exact race pairs from the oracle.
pub fn oracle_short_fraction(races: &[RacePair], k: usize) -> Option<f64> {
    short_race_fraction(races.iter().map(|r| (r.i, r.j)), k)
}
