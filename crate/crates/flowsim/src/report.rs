//! CSV output. Floats carry 17 significant digits so every value parses back
//! to the same double.

use std::io::Write;

use flowsim_core::grid::GridState;
use flowsim_core::stats::CheckRow;

use crate::error::Result;

pub const REPORT_HEADER: [&str; 7] = ["suite", "check", "statistic", "target", "stderr", "tolerance", "pass"];
pub const PATH_HEADER: [&str; 4] = ["replica", "time", "label", "value"];

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer<W: Write>(mut out: W, comment: Option<&str>) -> Result<csv::Writer<W>> {
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out))
}

/// Check report: one row per `(suite, row)` in the given order.
pub fn write_report<W: Write>(out: W, rows: &[(String, CheckRow)], comment: Option<&str>) -> Result<()> {
    let mut w = writer(out, comment)?;
    w.write_record(REPORT_HEADER)?;
    for (suite, r) in rows {
        w.write_record([
            suite.clone(),
            r.check.clone(),
            fmt_float(r.statistic),
            fmt_float(r.target),
            fmt_float(r.stderr),
            fmt_float(r.tolerance),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Path dump: `paths[replica][output]`, one row per label.
pub fn write_paths<W: Write>(out: W, paths: &[Vec<GridState>], comment: Option<&str>) -> Result<()> {
    let mut w = writer(out, comment)?;
    w.write_record(PATH_HEADER)?;
    for (r, path) in paths.iter().enumerate() {
        for s in path {
            for (v, x) in s.labels.iter().zip(&s.values) {
                w.write_record([r.to_string(), fmt_float(s.clock), fmt_float(*v), fmt_float(*x)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
