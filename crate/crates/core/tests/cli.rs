use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use rpt_core::cli::{run, EXIT_CLEAN, EXIT_RACY, EXIT_USAGE};
use serde_json::Value;

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn tmp(name: &str) -> String {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR"))
        .join(name)
        .display()
        .to_string()
}

fn call(args: &[&str]) -> (i32, String, String) {
    let mut stdin: &[u8] = &[];
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(
        std::iter::once("racetest").chain(args.iter().copied()),
        &mut stdin,
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn json(args: &[&str]) -> (i32, Value) {
    let (code, out, err) = call(args);
    (
        code,
        serde_json::from_str(&out).unwrap_or_else(|e| panic!("{e}: {out}{err}")),
    )
}

#[test]
fn detect_two_writes_matches_golden() {
    let (code, out, _) = call(&["detect", "--json", "-i", &fixture("two_writes.trace")]);
    assert_eq!(code, EXIT_RACY);
    let golden = std::fs::read_to_string(fixture("two_writes.detect.json")).unwrap();
    assert_eq!(out, golden);
}

#[test]
fn rpt_on_race_free_input() {
    let (code, v) = json(&[
        "rpt",
        "--json",
        "-i",
        &fixture("racefree.trace"),
        "--epsilon",
        "0.01",
        "--delta",
        "0.1",
        "--seed",
        "7",
    ]);
    assert_eq!(code, EXIT_CLEAN);
    assert_eq!(v["racy"], false);
    assert_eq!(v["seed"], 7);
    assert_eq!(v["params"]["m"], 10);
    assert!(v["prng"].as_str().unwrap().contains("chacha8"));
}

#[test]
fn rpt_runs_on_dense_input() {
    let dense = tmp("dense.trace");
    let (code, _, _) = call(&[
        "gen",
        "--mode",
        "dense",
        "--threads",
        "2",
        "--len",
        "30000",
        "--window",
        "64",
        "-o",
        &dense,
    ]);
    assert_eq!(code, EXIT_CLEAN);
    let (code, v) = json(&[
        "rpt", "--json", "-i", &dense, "--runs", "200", "--delta", "0.1",
    ]);
    assert_eq!(code, EXIT_RACY);
    assert_eq!(v["runs"].as_array().unwrap().len(), 200);
    assert!(
        v["detection_rate"].as_f64().unwrap() >= 0.9,
        "{}",
        v["detection_rate"]
    );
    let seeds: Vec<u64> = v["runs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, (0..200).collect::<Vec<_>>());
}

#[test]
fn exit_codes() {
    let two = fixture("two_writes.trace");
    let free = fixture("racefree.trace");
    for (args, expected) in [
        (vec!["detect", "-i", &two], EXIT_RACY),
        (vec!["detect", "-i", &free], EXIT_CLEAN),
        (vec!["rpt", "-i", &two], EXIT_RACY),
        (vec!["rpt", "-i", &free], EXIT_CLEAN),
        (vec!["pacer", "-i", &two, "--rate", "1"], EXIT_RACY),
        (vec!["pacer", "-i", &free], EXIT_CLEAN),
        (vec!["oracle", "-i", &two], EXIT_CLEAN),
        (vec!["stats", "-i", &two], EXIT_CLEAN),
        (vec!["project", "-i", &two], EXIT_CLEAN),
        (vec!["sweep", "-i", &free, "--runs", "3"], EXIT_CLEAN),
        (
            vec!["detect", "-i", &fixture("malformed.trace")],
            EXIT_USAGE,
        ),
        (
            vec!["detect", "-i", &fixture("unknown_op.trace")],
            EXIT_USAGE,
        ),
        (
            vec![
                "detect",
                "-i",
                &fixture("unknown_op.trace"),
                "--ignore-unknown",
            ],
            EXIT_RACY,
        ),
        (
            vec!["detect", "-i", &fixture("does_not_exist.trace")],
            EXIT_USAGE,
        ),
        (vec!["rpt", "-i", &free, "--epsilon", "1.5"], EXIT_USAGE),
        (vec!["pacer", "-i", &free, "--period", "0"], EXIT_USAGE),
        (vec!["gen", "--mode", "dense", "--threads", "1"], EXIT_USAGE),
        (vec!["detect", "--bogus"], EXIT_USAGE),
    ] {
        assert_eq!(call(&args).0, expected, "{args:?}");
    }
}

#[test]
fn identical_invocations_give_identical_bytes() {
    let sparse = tmp("sparse.trace");
    call(&[
        "gen",
        "--mode",
        "sparse",
        "--threads",
        "3",
        "--len",
        "20000",
        "--seed",
        "4",
        "-o",
        &sparse,
    ]);
    for args in [
        vec!["detect", "--json"],
        vec!["rpt", "--json", "--seed", "9", "--epsilon", "0.2"],
        vec!["rpt", "--json", "--runs", "16", "--epsilon", "0.2"],
        vec!["pacer", "--json", "--runs", "8", "--period", "100"],
        vec!["stats", "--json"],
        vec!["project", "--json"],
        vec!["sweep", "--json", "--epsilons", "0.5,0.2", "--runs", "5"],
    ] {
        let mut args = args;
        args.extend(["-i", &sparse]);
        let first = call(&args);
        assert_ne!(first.0, EXIT_USAGE, "{args:?}: {}", first.2);
        assert_eq!(first, call(&args), "{args:?}");
    }
    let a = call(&["gen", "--mode", "random", "--len", "500", "--seed", "3"]);
    assert_eq!(
        a,
        call(&["gen", "--mode", "random", "--len", "500", "--seed", "3"])
    );
}

#[test]
fn oracle_counts_windows() {
    let (_, v) = json(&[
        "oracle",
        "--json",
        "-i",
        &fixture("two_writes.trace"),
        "--window",
        "2",
    ]);
    assert_eq!(v["race_pairs"], 1);
    assert_eq!(v["racy_windows"], 1);
    assert_eq!(v["short_race_fraction"], 1.0);
}

#[test]
fn sweep_reports_each_epsilon() {
    let sparse = tmp("sweep.trace");
    call(&[
        "gen",
        "--mode",
        "sparse",
        "--threads",
        "2",
        "--nesting",
        "1",
        "--len",
        "50000",
        "--seed",
        "21",
        "-o",
        &sparse,
    ]);
    let (code, v) = json(&[
        "sweep",
        "--json",
        "-i",
        &sparse,
        "--epsilons",
        "0.5,0.1,0.02",
        "--runs",
        "20",
    ]);
    assert_eq!(code, EXIT_CLEAN);
    let points = v["points"].as_array().unwrap();
    assert_eq!(points.len(), 3);
    let work: Vec<f64> = points
        .iter()
        .map(|p| p["mean_metadata_work"].as_f64().unwrap())
        .collect();
    assert!(work[0] < work[1] && work[1] <= work[2], "{work:?}");
}

#[test]
fn project_output_is_race_free() {
    let (code, v) = json(&["project", "--json", "-i", &fixture("two_writes.trace")]);
    assert_eq!(code, EXIT_CLEAN);
    assert_eq!(v["u"], 1);
    let projected = tmp("projected.trace");
    std::fs::write(&projected, v["trace"].as_str().unwrap()).unwrap();
    assert_eq!(call(&["detect", "-i", &projected]).0, EXIT_CLEAN);
}

#[test]
fn binary_reads_standard_input() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_racetest"))
        .args(["detect", "--json"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"t1|w(x)\nt2|r(x)\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_RACY));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["reports"][0]["kind"], "write_read");
}
