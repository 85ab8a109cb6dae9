use rpt_core::detectors::run_full;
use rpt_core::gen::{gen_trace, GenMode, GenSpec};
use rpt_core::oracle::enumerate_races;
use rpt_core::report::{oracle_short_fraction, summarize};

#[test]
fn long_races_are_never_short() {
    for seed in 0..5 {
        let trace = gen_trace(&GenSpec::new(
            3,
            3000,
            GenMode::LongRacesOnly { min_gap: 300 },
            seed,
        ))
        .unwrap();
        let races = enumerate_races(trace.view()).unwrap();
        assert!(!races.is_empty());
        assert_eq!(oracle_short_fraction(&races, 250), Some(0.0));
        let s = summarize(&run_full(&trace), &trace, Some(250));
        assert_eq!(s.short_race_fraction, Some(0.0));
        assert!(s.distinct_vars <= s.warnings);
    }
}

#[test]
fn race_free_summary_is_empty() {
    let trace = gen_trace(&GenSpec::new(4, 5000, GenMode::RaceFreeLocked, 1)).unwrap();
    let s = summarize(&run_full(&trace), &trace, Some(100));
    assert_eq!(
        (
            s.warnings,
            s.distinct_vars,
            s.distinct_source_pairs,
            s.short_race_fraction
        ),
        (0, 0, 0, None)
    );
    assert_eq!(s.metadata_work, 5000);
}

#[test]
fn sparse_pairs_share_one_source_pair() {
    let trace = gen_trace(&GenSpec::new(2, 4000, GenMode::SparseRacy { count: 4 }, 2)).unwrap();
    let s = summarize(&run_full(&trace), &trace, Some(10));
    assert_eq!(
        (s.warnings, s.distinct_vars, s.distinct_source_pairs),
        (4, 4, 1)
    );
    assert_eq!(s.short_race_fraction, Some(1.0));
}
