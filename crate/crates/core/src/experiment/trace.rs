//! CSV emission and parsing of solver traces.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::solvers::{SolveTrace, TraceRecord};

pub const TRACE_HEADER: &str = "iter,objective,elapsed_s,val_error,rank";

/// Trace as CSV text. A missing validation error is an empty field.
pub fn trace_to_csv(trace: &SolveTrace) -> String {
    let mut out = String::with_capacity(32 * (trace.records.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let val = r.val_error.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", r.iter, r.objective, r.elapsed_s, val, r.rank);
    }
    out
}

pub fn emit_trace(trace: &SolveTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if trace.records.is_empty() {
        return Err(Error::invalid("refusing to write an empty trace"));
    }
    std::fs::write(path, trace_to_csv(trace)).map_err(|e| Error::io(path, e))
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRecord>> {
    let err = |line: usize, message: String| Error::Parse {
        path: "<trace>".into(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        _ => return Err(err(1, format!("expected header `{TRACE_HEADER}`"))),
    }
    let mut records = Vec::new();
    for (n, line) in lines {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(err(line_no, format!("expected 5 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(line_no, format!("`{s}`: {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| err(line_no, format!("`{s}`: {e}")));
        records.push(TraceRecord {
            iter: int(f[0])?,
            objective: num(f[1])?,
            elapsed_s: num(f[2])?,
            val_error: if f[3].is_empty() { None } else { Some(num(f[3])?) },
            rank: int(f[4])?,
        });
    }
    Ok(records)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace_csv(&text).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::SolveStatus;

    fn record(iter: usize, val_error: Option<f64>) -> TraceRecord {
        TraceRecord {
            iter,
            objective: 1.0 / 3.0 + iter as f64,
            elapsed_s: 1e-7 * iter as f64,
            val_error,
            rank: 2,
        }
    }

    #[test]
    fn one_record_is_two_lines() {
        let trace = SolveTrace {
            records: vec![record(0, None)],
            status: SolveStatus::Converged,
        };
        let csv = trace_to_csv(&trace);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().contains(",,"));
    }

    #[test]
    fn round_trip_is_exact() {
        let trace = SolveTrace {
            records: vec![record(0, Some(0.1 + 0.2)), record(1, None), record(2, Some(1e-300))],
            status: SolveStatus::MaxIters,
        };
        assert_eq!(parse_trace_csv(&trace_to_csv(&trace)).unwrap(), trace.records);
    }

    #[test]
    fn empty_trace_and_bad_header_rejected() {
        let empty = SolveTrace {
            records: vec![],
            status: SolveStatus::MaxIters,
        };
        assert!(emit_trace(&empty, "/nonexistent/x.csv").is_err());
        assert!(parse_trace_csv("a,b\n").is_err());
    }
}
