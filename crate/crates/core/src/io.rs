//! Line-based trace format.
//!
//! One event per line: `<thread>|<op>(<operand>)` optionally followed by
//! `|<loc>`, where `<op>` is one of `r`, `w`, `acq`, `rel`. Blank lines and
//! lines starting with `#` are skipped. Thread and operand tokens may contain
//! anything except `|`, `(` and `)`.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::trace::{OpKind, Trace};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: LineError },
    #[error("read failed: {0}")]
    Io(#[from] io::Error),
}

impl ParseError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::Malformed { line, .. } => Some(*line),
            ParseError::Io(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LineError {
    #[error("expected `<thread>|<op>(<operand>)`")]
    MissingSeparator,
    #[error("empty thread name")]
    EmptyThread,
    #[error("malformed operation `{0}`")]
    MalformedOp(String),
    #[error("unknown operation `{0}`")]
    UnknownOp(String),
    #[error("invalid token `{0}`")]
    InvalidToken(String),
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ParseOptions {
    /// Skip lines whose op is outside `{r, w, acq, rel}` instead of failing.
    pub ignore_unknown: bool,
}

#[derive(Debug)]
pub struct Parsed {
    pub trace: Trace,
    /// Lines skipped because of an unknown op (permissive mode only).
    pub skipped_unknown: usize,
}

struct Line<'a> {
    thread: &'a str,
    op: &'a str,
    operand: &'a str,
    loc: Option<&'a str>,
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && !s.contains(['|', '(', ')'])
}

fn split_line(line: &str) -> Result<Line<'_>, LineError> {
    let (thread, rest) = line.split_once('|').ok_or(LineError::MissingSeparator)?;
    if thread.is_empty() {
        return Err(LineError::EmptyThread);
    }
    if !valid_token(thread) {
        return Err(LineError::InvalidToken(thread.to_owned()));
    }
    let (op_part, loc) = match rest.split_once('|') {
        Some((op, loc)) => (op, (!loc.is_empty()).then_some(loc)),
        None => (rest, None),
    };
    let (op, operand) = op_part
        .strip_suffix(')')
        .and_then(|s| s.split_once('('))
        .ok_or_else(|| LineError::MalformedOp(op_part.to_owned()))?;
    if !valid_token(operand) {
        return Err(LineError::InvalidToken(operand.to_owned()));
    }
    Ok(Line {
        thread,
        op,
        operand,
        loc,
    })
}

/// Reads a trace in a single pass. Ids are assigned in first-appearance order.
/// Well-formedness is not checked here.
pub fn parse_trace<R: BufRead>(mut source: R, options: ParseOptions) -> Result<Parsed, ParseError> {
    let mut trace = Trace::new();
    let mut skipped_unknown = 0;
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if source.read_line(&mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let line = buf.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed = split_line(line).map_err(|reason| ParseError::Malformed {
            line: line_no,
            reason,
        })?;
        let Some(kind) = OpKind::from_token(parsed.op) else {
            if options.ignore_unknown {
                skipped_unknown += 1;
                continue;
            }
            return Err(ParseError::Malformed {
                line: line_no,
                reason: LineError::UnknownOp(parsed.op.to_owned()),
            });
        };
        trace.push_named(parsed.thread, kind, parsed.operand, parsed.loc);
    }
    Ok(Parsed {
        trace,
        skipped_unknown,
    })
}

/// Strict parse of an in-memory string.
pub fn parse_str(text: &str) -> Result<Trace, ParseError> {
    parse_trace(text.as_bytes(), ParseOptions::default()).map(|p| p.trace)
}

pub fn write_trace<W: Write>(trace: &Trace, mut sink: W) -> io::Result<()> {
    for e in trace.events() {
        writeln!(sink, "{}", trace.named(e))?;
    }
    sink.flush()
}

pub fn to_string(trace: &Trace) -> String {
    let mut out = Vec::new();
    write_trace(trace, &mut out).expect("writing to a Vec cannot fail");
    String::from_utf8(out).expect("trace names are UTF-8")
}
