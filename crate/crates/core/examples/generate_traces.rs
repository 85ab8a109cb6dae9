//! Every generator mode, with what the full detector finds in it.
//! Pass a directory to also write the traces there.

use rpt_core::gen::{gen_trace, measured_params, GenMode, GenSpec};
use rpt_core::run_full;

fn main() {
    let out_dir = std::env::args().nth(1);
    let modes = [
        ("race_free", GenMode::RaceFreeLocked),
        ("single_thread", GenMode::RaceFreeSingleThread),
        ("read_only", GenMode::ReadOnly),
        ("dense", GenMode::DenseRacy { window: 100 }),
        ("sparse", GenMode::SparseRacy { count: 5 }),
        ("long", GenMode::LongRacesOnly { min_gap: 2000 }),
        ("random", GenMode::Random { unguarded: 0.01 }),
    ];
    for (name, mode) in modes {
        let trace = gen_trace(&GenSpec::new(4, 20_000, mode, 7)).unwrap();
        let (threads, held) = measured_params(&trace);
        let warnings = run_full(&trace).reports.len();
        println!(
            "{name:<14} {} events, |T| = {threads}, h = {held}, {warnings} warnings",
            trace.len()
        );
        if let Some(dir) = &out_dir {
            let path = std::path::Path::new(dir).join(format!("{name}.trace"));
            let file = std::io::BufWriter::new(std::fs::File::create(&path).unwrap());
            rpt_core::write_trace(&trace, file).unwrap();
        }
    }
}
