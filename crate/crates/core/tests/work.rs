use rpt_core::detectors::run_full;
use rpt_core::gen::{gen_trace, GenMode, GenSpec};
use rpt_core::rpt::{run_rpt, RptMode, RptParams};

// Once the trace is much longer than the s*k sampled events, the tester's
// work stops growing with n.
#[test]
fn work_is_flat_once_trace_dwarfs_the_sample() {
    let params = RptParams::derive(16, 2, 0.5, 0.1, 3).unwrap();
    assert_eq!((params.k, params.s), (544, 35));
    let mut works = Vec::new();
    for n in [1_000_000, 4_000_000] {
        let mut spec = GenSpec::new(16, n, GenMode::RaceFreeLocked, 8);
        spec.num_locks = 4;
        let trace = gen_trace(&spec).unwrap();
        let v = run_rpt(&trace, &params);
        assert_eq!(v.mode, RptMode::Sampled);
        assert!(v.metadata_work <= params.work_bound());
        assert_eq!(run_full(&trace).metadata_work, n as u64);
        works.push(v.metadata_work as f64);
    }
    let ratio = works[1] / works[0];
    assert!((0.9..=1.1).contains(&ratio), "{works:?}");
}

#[test]
fn work_tracks_coverage_when_sample_exceeds_trace() {
    // s*k is about 4.7e7 here, so a 1e6-event trace is covered almost entirely.
    let params = RptParams::derive(16, 2, 0.01, 0.1, 3).unwrap();
    let trace = gen_trace(&GenSpec::new(16, 1_000_000, GenMode::RaceFreeLocked, 8)).unwrap();
    let v = run_rpt(&trace, &params);
    assert!(v.metadata_work as f64 > 0.99 * trace.len() as f64);
    assert_eq!(v.metadata_work as usize, v.windows.total_len());
}
