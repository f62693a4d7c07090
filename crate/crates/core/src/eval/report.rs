use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use super::{EvalError, EvalResult, Mode, TracePoint};
use crate::data::Family;

pub const REPORT_COLUMNS: [&str; 6] = [
    "family",
    "train_ms",
    "horizon_ms",
    "mede_px",
    "n_windows",
    "mode",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Md,
}

impl FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" => Ok(ReportFormat::Md),
            _ => Err(EvalError::Parse(format!("unknown report format `{s}`"))),
        }
    }
}

fn horizon_label(ms: u32) -> String {
    if ms % 1000 == 0 {
        format!("{} s", ms / 1000)
    } else {
        format!("{ms} ms")
    }
}

/// Renders a result table. `preamble` holds `key=value` lines (the effective
/// configuration and protocol notes) and is echoed at the top: as `#`
/// comments in CSV, an HTML comment in Markdown, a `header` object in JSON.
pub fn emit_report(results: &[EvalResult], format: ReportFormat, preamble: &str) -> String {
    match format {
        ReportFormat::Csv => emit_csv(results, preamble),
        ReportFormat::Json => emit_json(results, preamble),
        ReportFormat::Md => emit_md(results, preamble),
    }
}

fn emit_csv(results: &[EvalResult], preamble: &str) -> String {
    let mut s = String::new();
    for line in preamble.lines() {
        writeln!(s, "# {line}").unwrap();
    }
    writeln!(s, "{}", REPORT_COLUMNS.join(",")).unwrap();
    for r in results {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.family, r.train_ms, r.horizon_ms, r.mede_px, r.n_windows, r.mode
        )
        .unwrap();
    }
    s
}

fn emit_json(results: &[EvalResult], preamble: &str) -> String {
    let header: BTreeMap<&str, &str> = preamble
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect();
    let doc = serde_json::json!({ "header": header, "results": results });
    let mut s = serde_json::to_string_pretty(&doc).expect("plain data");
    s.push('\n');
    s
}

fn emit_md(results: &[EvalResult], preamble: &str) -> String {
    let mut s = String::new();
    if !preamble.trim().is_empty() {
        writeln!(s, "<!--").unwrap();
        for line in preamble.lines() {
            writeln!(s, "{line}").unwrap();
        }
        writeln!(s, "-->\n").unwrap();
    }
    let horizons: BTreeSet<u32> = results.iter().map(|r| r.horizon_ms).collect();
    let mut rows: BTreeMap<(Family, u32, Mode), BTreeMap<u32, f64>> = BTreeMap::new();
    for r in results {
        rows.entry((r.family, r.train_ms, r.mode))
            .or_default()
            .insert(r.horizon_ms, r.mede_px);
    }
    write!(s, "| Family | Train | Mode |").unwrap();
    for h in &horizons {
        write!(s, " {} |", horizon_label(*h)).unwrap();
    }
    writeln!(s).unwrap();
    write!(s, "|---|---|---|").unwrap();
    for _ in &horizons {
        write!(s, "---:|").unwrap();
    }
    writeln!(s).unwrap();
    for ((family, train, mode), cells) in &rows {
        write!(s, "| {family} | {} | {mode} |", horizon_label(*train)).unwrap();
        for h in &horizons {
            match cells.get(h) {
                Some(v) => write!(s, " {v:.1} |").unwrap(),
                None => write!(s, " - |").unwrap(),
            }
        }
        writeln!(s).unwrap();
    }
    writeln!(s, "\nMEDE in pixels; rows are encoder window lengths, columns forecast horizons.")
        .unwrap();
    s
}

fn field<T: FromStr>(text: &str, what: &str, line: usize) -> Result<T, EvalError> {
    text.parse()
        .map_err(|_| EvalError::Parse(format!("line {line}: bad {what} `{text}`")))
}

/// Reads a CSV report back, skipping `#` lines.
pub fn parse_report_csv(text: &str) -> Result<Vec<EvalResult>, EvalError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h == REPORT_COLUMNS.join(",") => {}
        _ => return Err(EvalError::Parse("missing report header".into())),
    }
    lines
        .map(|(i, l)| {
            let n = i + 1;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != REPORT_COLUMNS.len() {
                return Err(EvalError::Parse(format!("line {n}: expected 6 fields")));
            }
            Ok(EvalResult {
                family: f[0]
                    .parse()
                    .map_err(|_| EvalError::Parse(format!("line {n}: bad family `{}`", f[0])))?,
                train_ms: field(f[1], "train_ms", n)?,
                horizon_ms: field(f[2], "horizon_ms", n)?,
                mede_px: field(f[3], "mede_px", n)?,
                n_windows: field(f[4], "n_windows", n)?,
                mode: f[5].parse()?,
            })
        })
        .collect()
}

pub fn parse_report_json(text: &str) -> Result<Vec<EvalResult>, EvalError> {
    #[derive(serde::Deserialize)]
    struct Doc {
        results: Vec<EvalResult>,
    }
    let doc: Doc = serde_json::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))?;
    Ok(doc.results)
}

/// Reads a CSV or JSON report, returning its rows and its preamble as
/// `key=value` lines.
pub fn parse_report(text: &str) -> Result<(Vec<EvalResult>, String), EvalError> {
    if text.trim_start().starts_with('{') {
        let doc: serde_json::Value =
            serde_json::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))?;
        let mut preamble = String::new();
        if let Some(h) = doc.get("header").and_then(|h| h.as_object()) {
            for (k, v) in h {
                let v = v.as_str().map_or_else(|| v.to_string(), str::to_string);
                writeln!(preamble, "{k}={v}").unwrap();
            }
        }
        return Ok((parse_report_json(text)?, preamble));
    }
    let mut preamble = String::new();
    for line in text.lines().filter_map(|l| l.strip_prefix('#')) {
        writeln!(preamble, "{}", line.trim()).unwrap();
    }
    Ok((parse_report_csv(text)?, preamble))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Predicted-vs-truth series for one axis, one row per forecast step.
pub fn write_axis_trace<W: Write>(
    cells: &[(EvalResult, Vec<TracePoint>)],
    axis: Axis,
    preamble: &str,
    mut out: W,
) -> std::io::Result<()> {
    let k = match axis {
        Axis::X => 0,
        Axis::Y => 1,
    };
    for line in preamble.lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "family,train_ms,horizon_ms,mode,window,frame,step,truth,pred")?;
    for (r, trace) in cells {
        for t in trace {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.family, r.train_ms, r.horizon_ms, r.mode, t.window, t.frame, t.step,
                t.truth[k], t.pred[k]
            )?;
        }
    }
    Ok(())
}
