//! The `racetest` command line.
//!
//! [`run`] takes the argument list and explicit streams so it can be driven
//! from tests; the binary only forwards the process's own.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::clock::{RaceKind, RaceReport};
use crate::construction::racefree_projection;
use crate::detectors::{run_full, run_pacer, PacerConfig, RunResult};
use crate::gen::{gen_trace, measured_params, GenMode, GenSpec};
use crate::io::{parse_trace, write_trace, ParseOptions};
use crate::oracle::{Oracle, DEFAULT_CAP};
use crate::report::{oracle_short_fraction, summarize, Summary};
use crate::rng::PRNG_NAME;
use crate::rpt::{run_rpt, RptMode, RptParams};
use crate::trace::{check_well_formed, Op, Trace};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_RACY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "racetest",
    version,
    about = "Happens-before race detection and sampling-based race testing over traces"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact vector-clock detection over the whole trace.
    Detect(DetectArgs),
    /// Constant-sample randomized race tester.
    Rpt(RptArgs),
    /// Proportional period sampling.
    Pacer(PacerArgs),
    /// Generate a synthetic trace.
    Gen(GenArgs),
    /// Brute-force race enumeration for small traces.
    Oracle(OracleArgs),
    /// Repair a trace into a race-free one of the same length.
    Project(ProjectArgs),
    /// Trace statistics.
    Stats(StatsArgs),
    /// Run the tester across several epsilons.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Trace file, or `-` for standard input.
    #[arg(long, short, default_value = "-")]
    pub input: String,
    /// Output file, or `-` for standard output.
    #[arg(long, short, default_value = "-")]
    pub output: String,
    #[arg(long)]
    pub json: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip lines with unknown operations instead of failing.
    #[arg(long)]
    pub ignore_unknown: bool,
    /// Include wall-clock times in the output.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TesterArgs {
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Thread count used for the parameters; measured from the trace by default.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Maximum locks held at once; measured from the trace by default.
    #[arg(long)]
    pub locks_held: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RptArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub tester: TesterArgs,
    /// Repeat with seeds seed, seed+1, ..., seed+runs-1.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,
}

#[derive(Debug, Args)]
pub struct PacerArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = PacerConfig::DEFAULT_RATE)]
    pub rate: f64,
    #[arg(long, default_value_t = PacerConfig::DEFAULT_PERIOD)]
    pub period: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    RaceFree,
    SingleThread,
    ReadOnly,
    Dense,
    Sparse,
    Long,
    Random,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, short, default_value = "-")]
    pub output: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "race-free")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1000)]
    pub len: usize,
    #[arg(long, default_value_t = 4)]
    pub threads: usize,
    #[arg(long, default_value_t = 2)]
    pub locks: usize,
    #[arg(long, default_value_t = 4)]
    pub vars: usize,
    /// Maximum critical-section nesting depth.
    #[arg(long, default_value_t = 2)]
    pub nesting: usize,
    /// Window length every racy pair must fall in (dense).
    #[arg(long, default_value_t = 64)]
    pub window: usize,
    /// Number of racy pairs (sparse).
    #[arg(long, default_value_t = 3)]
    pub count: usize,
    /// Distance between racy endpoints (long).
    #[arg(long, default_value_t = 500)]
    pub min_gap: usize,
    /// Probability that a shared access skips its lock (random).
    #[arg(long, default_value_t = 0.05)]
    pub unguarded: f64,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    /// Also count racy windows of this length.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    pub cap: usize,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub common: Common,
    /// Connector length; defaults to 4|T| + 2h measured from the trace.
    #[arg(long)]
    pub gap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.5,0.2,0.1,0.05,0.02,0.01"
    )]
    pub epsilons: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub locks_held: Option<usize>,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,
}

/// A failure that ends the command with exit code 2.
#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(
    args: I,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_CLEAN
            };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let mut io = Streams {
        stdin,
        stdout,
        stderr,
    };
    let outcome = match cli.command {
        Command::Detect(a) => detect(&a, &mut io),
        Command::Rpt(a) => rpt(&a, &mut io),
        Command::Pacer(a) => pacer(&a, &mut io),
        Command::Gen(a) => generate(&a, &mut io),
        Command::Oracle(a) => oracle(&a, &mut io),
        Command::Project(a) => project(&a, &mut io),
        Command::Stats(a) => stats(&a, &mut io),
        Command::Sweep(a) => sweep(&a, &mut io),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure(msg)) => {
            let _ = writeln!(io.stderr, "racetest: {msg}");
            EXIT_USAGE
        }
    }
}

struct Streams<'a> {
    stdin: &'a mut dyn BufRead,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

impl Streams<'_> {
    fn read_trace(&mut self, common: &Common) -> Result<Trace, Failure> {
        let options = ParseOptions {
            ignore_unknown: common.ignore_unknown,
        };
        let parsed = if common.input == "-" {
            parse_trace(&mut *self.stdin, options)
        } else {
            let file =
                File::open(&common.input).map_err(|e| Failure(format!("{}: {e}", common.input)))?;
            parse_trace(BufReader::new(file), options)
        }
        .map_err(|e| Failure(format!("{}: {e}", common.input)))?;
        if parsed.skipped_unknown > 0 {
            writeln!(
                self.stderr,
                "racetest: skipped {} lines with unknown operations",
                parsed.skipped_unknown
            )?;
        }
        Ok(parsed.trace)
    }

    fn emit(&mut self, output: &str, body: &[u8]) -> Result<(), Failure> {
        if output == "-" {
            self.stdout.write_all(body)?;
            self.stdout.flush()?;
        } else {
            let path = PathBuf::from(output);
            let mut f = File::create(&path).map_err(|e| Failure(format!("{output}: {e}")))?;
            f.write_all(body)?;
        }
        Ok(())
    }

    fn emit_json<T: Serialize>(&mut self, output: &str, value: &T) -> Result<(), Failure> {
        let mut body = serde_json::to_vec_pretty(value)?;
        body.push(b'\n');
        self.emit(output, &body)
    }
}

#[derive(Serialize)]
struct Envelope<'a, P: Serialize, R: Serialize> {
    tool_version: &'static str,
    subcommand: &'a str,
    params: P,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prng: Option<&'static str>,
    #[serde(flatten)]
    result: R,
}

fn envelope<'a, P: Serialize, R: Serialize>(
    subcommand: &'a str,
    params: P,
    seed: Option<u64>,
    result: R,
) -> Envelope<'a, P, R> {
    Envelope {
        tool_version: TOOL_VERSION,
        subcommand,
        params,
        seed,
        prng: seed.map(|_| PRNG_NAME),
        result,
    }
}

#[derive(Serialize)]
struct ReportJson<'a> {
    event_index: usize,
    thread: &'a str,
    var: &'a str,
    kind: RaceKind,
    prior_index: usize,
    prior_thread: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    loc: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prior_loc: Option<&'a str>,
}

fn report_json<'a>(trace: &'a Trace, r: &RaceReport) -> ReportJson<'a> {
    ReportJson {
        event_index: r.event_index,
        thread: trace.thread_name(r.thread),
        var: trace.var_name(r.var),
        kind: r.kind,
        prior_index: r.prior_index,
        prior_thread: trace.thread_name(r.prior_thread),
        loc: r.loc.map(|l| trace.loc_name(l)),
        prior_loc: r.prior_loc.map(|l| trace.loc_name(l)),
    }
}

/// Serialises as `{}`.
#[derive(Serialize)]
struct NoParams {}

fn kind_text(kind: RaceKind) -> &'static str {
    match kind {
        RaceKind::WriteRead => "write-read",
        RaceKind::ReadWrite => "read-write",
        RaceKind::WriteWrite => "write-write",
    }
}

fn mode_text(mode: RptMode) -> &'static str {
    match mode {
        RptMode::Sampled => "sampled",
        RptMode::ShortTraceFallback => "exhaustive (trace shorter than the sampling threshold)",
    }
}

fn report_line(trace: &Trace, r: &RaceReport) -> String {
    let site = |loc: Option<crate::trace::LocId>| {
        loc.map(|l| format!(" at {}", trace.loc_name(l)))
            .unwrap_or_default()
    };
    format!(
        "{} race on {}: #{} {}{} vs #{} {}{}",
        kind_text(r.kind),
        trace.var_name(r.var),
        r.prior_index,
        trace.thread_name(r.prior_thread),
        site(r.prior_loc),
        r.event_index,
        trace.thread_name(r.thread),
        site(r.loc),
    )
}

#[derive(Serialize)]
struct SummaryJson {
    #[serde(flatten)]
    summary: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    elapsed_ms: Option<f64>,
}

fn summary_json(summary: Summary, timing: bool) -> SummaryJson {
    let elapsed_ms = timing.then(|| millis(summary.elapsed));
    SummaryJson {
        summary,
        elapsed_ms,
    }
}

fn millis(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn summary_text(s: &Summary, timing: bool) -> String {
    let mut out = format!(
        "warnings: {}\nracy variables: {}\nracy source pairs: {}\nmetadata work: {}\nsampled events: {}\n",
        s.warnings, s.distinct_vars, s.distinct_source_pairs, s.metadata_work, s.sampled_events
    );
    if let Some(f) = s.short_race_fraction {
        out += &format!("short races: {:.3}\n", f);
    }
    if timing {
        out += &format!("elapsed: {:.3} ms\n", millis(s.elapsed));
    }
    out
}

fn racy_code(racy: bool) -> i32 {
    if racy {
        EXIT_RACY
    } else {
        EXIT_CLEAN
    }
}

fn detect(a: &DetectArgs, io: &mut Streams<'_>) -> CmdResult {
    let trace = io.read_trace(&a.common)?;
    let result = run_full(&trace);
    single_result(
        io,
        &a.common,
        "detect",
        NoParams {},
        None,
        &trace,
        &result,
        None,
    )?;
    Ok(racy_code(result.racy()))
}

#[allow(clippy::too_many_arguments)]
fn single_result<P: Serialize>(
    io: &mut Streams<'_>,
    common: &Common,
    name: &str,
    params: P,
    seed: Option<u64>,
    trace: &Trace,
    result: &RunResult,
    k: Option<usize>,
) -> Result<(), Failure> {
    let summary = summarize(result, trace, k);
    if common.json {
        #[derive(Serialize)]
        struct Body<'a> {
            racy: bool,
            events: usize,
            summary: SummaryJson,
            reports: Vec<ReportJson<'a>>,
        }
        let body = Body {
            racy: result.racy(),
            events: trace.len(),
            summary: summary_json(summary, common.timing),
            reports: result
                .reports
                .iter()
                .map(|r| report_json(trace, r))
                .collect(),
        };
        io.emit_json(&common.output, &envelope(name, params, seed, body))
    } else {
        let mut text = format!("racy: {}\nevents: {}\n", yes_no(result.racy()), trace.len());
        text += &summary_text(&summary, common.timing);
        for r in &result.reports {
            text += &report_line(trace, r);
            text.push('\n');
        }
        io.emit(&common.output, text.as_bytes())
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn tester_params(
    trace: &Trace,
    threads: Option<usize>,
    locks_held: Option<usize>,
    epsilon: f64,
    delta: f64,
    seed: u64,
) -> Result<RptParams, Failure> {
    let (measured_t, measured_h) = measured_params(trace);
    let t = threads.unwrap_or(measured_t.max(1));
    let h = locks_held.unwrap_or(measured_h);
    Ok(RptParams::derive(t, h, epsilon, delta, seed)?)
}

fn warn_if_malformed(trace: &Trace, io: &mut Streams<'_>) -> Result<(), Failure> {
    if let Err(e) = check_well_formed(trace) {
        writeln!(
            io.stderr,
            "racetest: warning: trace is not well formed ({e}); guarantees do not apply"
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RunRow {
    run: u64,
    seed: u64,
    racy: bool,
    warnings: usize,
    metadata_work: u64,
    sampled_events: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    elapsed_ms: Option<f64>,
}

#[derive(Serialize)]
struct RunsBody {
    runs: Vec<RunRow>,
    detection_rate: f64,
    mean_metadata_work: f64,
}

fn runs_body(rows: Vec<RunRow>) -> RunsBody {
    let n = rows.len() as f64;
    let detection_rate = rows.iter().filter(|r| r.racy).count() as f64 / n;
    let mean_metadata_work = rows.iter().map(|r| r.metadata_work as f64).sum::<f64>() / n;
    RunsBody {
        runs: rows,
        detection_rate,
        mean_metadata_work,
    }
}

fn runs_text(body: &RunsBody) -> String {
    let mut out = String::from("run\tseed\tracy\twarnings\tmetadata_work\tsampled_events\n");
    for r in &body.runs {
        out += &format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.run,
            r.seed,
            yes_no(r.racy),
            r.warnings,
            r.metadata_work,
            r.sampled_events
        );
    }
    out += &format!(
        "detection rate: {:.4}\nmean metadata work: {:.1}\n",
        body.detection_rate, body.mean_metadata_work
    );
    out
}

fn rpt(a: &RptArgs, io: &mut Streams<'_>) -> CmdResult {
    let trace = io.read_trace(&a.common)?;
    warn_if_malformed(&trace, io)?;
    let t = &a.tester;
    let params = tester_params(
        &trace,
        t.threads,
        t.locks_held,
        t.epsilon,
        t.delta,
        a.common.seed,
    )?;
    let timing = a.common.timing;

    if a.runs == 1 {
        let v = run_rpt(&trace, &params);
        let summary = summarize(&v, &trace, Some(params.k));
        if a.common.json {
            #[derive(Serialize)]
            struct Body<'a> {
                racy: bool,
                mode: RptMode,
                events: usize,
                merged_windows: usize,
                summary: SummaryJson,
                reports: Vec<ReportJson<'a>>,
            }
            let body = Body {
                racy: v.racy,
                mode: v.mode,
                events: trace.len(),
                merged_windows: v.windows.len(),
                summary: summary_json(summary, timing),
                reports: v.reports.iter().map(|r| report_json(&trace, r)).collect(),
            };
            io.emit_json(
                &a.common.output,
                &envelope("rpt", params, Some(params.seed), body),
            )?;
        } else {
            let mut text = format!(
                "racy: {}\nmode: {}\nevents: {}\nm = {}, k = {}, s = {}\nmerged windows: {}\n",
                yes_no(v.racy),
                mode_text(v.mode),
                trace.len(),
                params.m,
                params.k,
                params.s,
                v.windows.len()
            );
            text += &summary_text(&summary, timing);
            for r in &v.reports {
                text += &report_line(&trace, r);
                text.push('\n');
            }
            io.emit(&a.common.output, text.as_bytes())?;
        }
        return Ok(racy_code(v.racy));
    }

    let rows: Vec<RunRow> = (0..a.runs)
        .into_par_iter()
        .map(|i| {
            let seed = a.common.seed.wrapping_add(i);
            let v = run_rpt(&trace, &params.with_seed(seed));
            RunRow {
                run: i,
                seed,
                racy: v.racy,
                warnings: v.reports.len(),
                metadata_work: v.metadata_work,
                sampled_events: v.sampled_events,
                elapsed_ms: timing.then(|| millis(v.elapsed)),
            }
        })
        .collect();
    let body = runs_body(rows);
    let any = body.detection_rate > 0.0;
    if a.common.json {
        io.emit_json(
            &a.common.output,
            &envelope("rpt", params, Some(a.common.seed), body),
        )?;
    } else {
        let text = format!(
            "m = {}, k = {}, s = {}\n{}",
            params.m,
            params.k,
            params.s,
            runs_text(&body)
        );
        io.emit(&a.common.output, text.as_bytes())?;
    }
    Ok(racy_code(any))
}

fn pacer(a: &PacerArgs, io: &mut Streams<'_>) -> CmdResult {
    let trace = io.read_trace(&a.common)?;
    let config = PacerConfig::new(a.rate, a.period, a.common.seed)?;
    if a.runs == 1 {
        let result = run_pacer(&trace, &config);
        single_result(
            io,
            &a.common,
            "pacer",
            config,
            Some(config.seed),
            &trace,
            &result,
            None,
        )?;
        return Ok(racy_code(result.racy()));
    }
    let timing = a.common.timing;
    let rows: Vec<RunRow> = (0..a.runs)
        .into_par_iter()
        .map(|i| {
            let seed = a.common.seed.wrapping_add(i);
            let r = run_pacer(&trace, &PacerConfig { seed, ..config });
            RunRow {
                run: i,
                seed,
                racy: r.racy(),
                warnings: r.reports.len(),
                metadata_work: r.metadata_work,
                sampled_events: r.sampled_events,
                elapsed_ms: timing.then(|| millis(r.elapsed)),
            }
        })
        .collect();
    let body = runs_body(rows);
    let any = body.detection_rate > 0.0;
    if a.common.json {
        io.emit_json(
            &a.common.output,
            &envelope("pacer", config, Some(a.common.seed), body),
        )?;
    } else {
        io.emit(&a.common.output, runs_text(&body).as_bytes())?;
    }
    Ok(racy_code(any))
}

fn generate(a: &GenArgs, io: &mut Streams<'_>) -> CmdResult {
    let mode = match a.mode {
        ModeArg::RaceFree => GenMode::RaceFreeLocked,
        ModeArg::SingleThread => GenMode::RaceFreeSingleThread,
        ModeArg::ReadOnly => GenMode::ReadOnly,
        ModeArg::Dense => GenMode::DenseRacy { window: a.window },
        ModeArg::Sparse => GenMode::SparseRacy { count: a.count },
        ModeArg::Long => GenMode::LongRacesOnly { min_gap: a.min_gap },
        ModeArg::Random => GenMode::Random {
            unguarded: a.unguarded,
        },
    };
    let spec = GenSpec {
        num_threads: a.threads,
        num_locks: a.locks,
        num_vars: a.vars,
        len: a.len,
        max_nesting: a.nesting,
        mode,
        seed: a.seed,
    };
    let trace = gen_trace(&spec)?;
    let mut body = Vec::with_capacity(trace.len() * 12);
    write_trace(&trace, &mut body)?;
    io.emit(&a.output, &body)?;
    Ok(EXIT_CLEAN)
}

fn oracle(a: &OracleArgs, io: &mut Streams<'_>) -> CmdResult {
    let trace = io.read_trace(&a.common)?;
    let oracle = Oracle::with_cap(a.cap);
    let races = oracle.enumerate_races(trace.view())?;
    let racy_windows = a
        .window
        .map(|k| oracle.count_racy_windows(&trace, k))
        .transpose()?;
    let short = a.window.and_then(|k| oracle_short_fraction(&races, k));

    if a.common.json {
        #[derive(Serialize)]
        struct Pair<'a> {
            i: usize,
            j: usize,
            var: &'a str,
        }
        #[derive(Serialize)]
        struct Params {
            cap: usize,
            #[serde(skip_serializing_if = "Option::is_none")]
            window: Option<usize>,
        }
        #[derive(Serialize)]
        struct Body<'a> {
            racy: bool,
            events: usize,
            race_pairs: usize,
            #[serde(skip_serializing_if = "Option::is_none")]
            racy_windows: Option<usize>,
            #[serde(skip_serializing_if = "Option::is_none")]
            short_race_fraction: Option<f64>,
            races: Vec<Pair<'a>>,
        }
        let body = Body {
            racy: !races.is_empty(),
            events: trace.len(),
            race_pairs: races.len(),
            racy_windows,
            short_race_fraction: short,
            races: races
                .iter()
                .map(|r| Pair {
                    i: r.i,
                    j: r.j,
                    var: trace.var_name(r.var),
                })
                .collect(),
        };
        io.emit_json(
            &a.common.output,
            &envelope(
                "oracle",
                Params {
                    cap: a.cap,
                    window: a.window,
                },
                None,
                body,
            ),
        )?;
    } else {
        let mut text = format!(
            "racy: {}\nevents: {}\nrace pairs: {}\n",
            yes_no(!races.is_empty()),
            trace.len(),
            races.len()
        );
        if let (Some(k), Some(w)) = (a.window, racy_windows) {
            text += &format!("racy windows of length {k}: {w}\n");
        }
        if let Some(f) = short {
            text += &format!("short races: {f:.3}\n");
        }
        for r in &races {
            text += &format!("#{} #{} on {}\n", r.i, r.j, trace.var_name(r.var));
        }
        io.emit(&a.common.output, text.as_bytes())?;
    }
    Ok(EXIT_CLEAN)
}

fn project(a: &ProjectArgs, io: &mut Streams<'_>) -> CmdResult {
    let trace = io.read_trace(&a.common)?;
    let m = match a.gap {
        Some(m) => m,
        None => {
            // The connector involves every thread in the table.
            let (_, h) = measured_params(&trace);
            4 * trace.num_threads().max(1) + 2 * h
        }
    };
    let p = racefree_projection(&trace, m)?;
    let mut text = Vec::with_capacity(p.projected.len() * 12);
    write_trace(&p.projected, &mut text)?;
    if a.common.json {
        #[derive(Serialize)]
        struct Params {
            m: usize,
        }
        #[derive(Serialize)]
        struct Body {
            events: usize,
            u: usize,
            changed: usize,
            segments: Vec<(usize, usize)>,
            trace: String,
        }
        let body = Body {
            events: p.projected.len(),
            u: p.u(),
            changed: p.changed,
            segments: p.segmentation.segments.clone(),
            trace: String::from_utf8(text).expect("trace text is UTF-8"),
        };
        io.emit_json(
            &a.common.output,
            &envelope("project", Params { m }, None, body),
        )?;
    } else {
        writeln!(io.stderr, "m = {m}, u = {}, changed = {}", p.u(), p.changed)?;
        io.emit(&a.common.output, &text)?;
    }
    Ok(EXIT_CLEAN)
}

#[derive(Serialize)]
struct TraceStats {
    events: usize,
    threads: usize,
    locks: usize,
    vars: usize,
    locs: usize,
    reads: usize,
    writes: usize,
    acquires: usize,
    releases: usize,
    max_locks_held: usize,
    connector_bound: usize,
    well_formed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    not_well_formed_at: Option<usize>,
}

fn stats(a: &StatsArgs, io: &mut Streams<'_>) -> CmdResult {
    let trace = io.read_trace(&a.common)?;
    let (mut reads, mut writes, mut acquires, mut releases) = (0, 0, 0, 0);
    for e in trace.events() {
        match e.op {
            Op::Read(_) => reads += 1,
            Op::Write(_) => writes += 1,
            Op::Acquire(_) => acquires += 1,
            Op::Release(_) => releases += 1,
        }
    }
    let (threads, max_locks_held) = measured_params(&trace);
    let wf = check_well_formed(&trace);
    let s = TraceStats {
        events: trace.len(),
        threads,
        locks: trace.locks.len(),
        vars: trace.vars.len(),
        locs: trace.locs.len(),
        reads,
        writes,
        acquires,
        releases,
        max_locks_held,
        connector_bound: 4 * threads + 2 * max_locks_held,
        well_formed: wf.is_ok(),
        not_well_formed_at: wf.err().map(|e| e.index),
    };
    if a.common.json {
        io.emit_json(&a.common.output, &envelope("stats", NoParams {}, None, s))?;
    } else {
        let mut text = format!(
            "events: {}\nthreads: {}\nlocks: {}\nvariables: {}\nsource locations: {}\nreads: {}\nwrites: {}\nacquires: {}\nreleases: {}\nmax locks held: {}\nconnector bound (4|T| + 2h): {}\nwell formed: {}\n",
            s.events, s.threads, s.locks, s.vars, s.locs, s.reads, s.writes, s.acquires, s.releases, s.max_locks_held, s.connector_bound, yes_no(s.well_formed)
        );
        if let Some(i) = s.not_well_formed_at {
            text += &format!("first violation at: {i}\n");
        }
        io.emit(&a.common.output, text.as_bytes())?;
    }
    Ok(EXIT_CLEAN)
}

#[derive(Serialize)]
struct SweepRow {
    epsilon: f64,
    m: usize,
    k: usize,
    s: usize,
    mode: RptMode,
    detection_rate: f64,
    mean_metadata_work: f64,
}

fn sweep(a: &SweepArgs, io: &mut Streams<'_>) -> CmdResult {
    let trace = io.read_trace(&a.common)?;
    warn_if_malformed(&trace, io)?;
    let mut rows = Vec::with_capacity(a.epsilons.len());
    for &epsilon in &a.epsilons {
        let params = tester_params(
            &trace,
            a.threads,
            a.locks_held,
            epsilon,
            a.delta,
            a.common.seed,
        )?;
        let verdicts: Vec<(bool, u64, RptMode)> = (0..a.runs)
            .into_par_iter()
            .map(|i| {
                let v = run_rpt(&trace, &params.with_seed(a.common.seed.wrapping_add(i)));
                (v.racy, v.metadata_work, v.mode)
            })
            .collect();
        let n = verdicts.len() as f64;
        rows.push(SweepRow {
            epsilon,
            m: params.m,
            k: params.k,
            s: params.s,
            mode: verdicts[0].2,
            detection_rate: verdicts.iter().filter(|v| v.0).count() as f64 / n,
            mean_metadata_work: verdicts.iter().map(|v| v.1 as f64).sum::<f64>() / n,
        });
    }
    if a.common.json {
        #[derive(Serialize)]
        struct Params<'a> {
            epsilons: &'a [f64],
            delta: f64,
            runs: u64,
        }
        #[derive(Serialize)]
        struct Body {
            events: usize,
            points: Vec<SweepRow>,
        }
        let params = Params {
            epsilons: &a.epsilons,
            delta: a.delta,
            runs: a.runs,
        };
        io.emit_json(
            &a.common.output,
            &envelope(
                "sweep",
                params,
                Some(a.common.seed),
                Body {
                    events: trace.len(),
                    points: rows,
                },
            ),
        )?;
    } else {
        let mut text = String::from("epsilon\tk\ts\tdetection_rate\tmean_metadata_work\n");
        for r in &rows {
            text += &format!(
                "{}\t{}\t{}\t{:.4}\t{:.1}\n",
                r.epsilon, r.k, r.s, r.detection_rate, r.mean_metadata_work
            );
        }
        io.emit(&a.common.output, text.as_bytes())?;
    }
    Ok(EXIT_CLEAN)
}

/// Runs against the real process streams.
pub fn main_with_process_streams() -> i32 {
    let stdin = io::stdin();
    let mut stdin = stdin.lock();
    let stdout = io::stdout();
    let mut stdout = stdout.lock();
    let stderr = io::stderr();
    let mut stderr = stderr.lock();
    run(std::env::args_os(), &mut stdin, &mut stdout, &mut stderr)
}
