//! Trajectory-log persistence (append-only JSONL) and report emission:
//! summary CSV, per-question CSV, curve JSON, and static SVG curve plots.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{CurveAxis, MetricCurve, MetricReport};
use crate::orchestrator::{AbortReason, BudgetState, RunRecord};
use crate::protocol::{parse_stream, Trajectory};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("log I/O failed after {durable_lines} durable lines: {source}")]
    LogIo {
        durable_lines: usize,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    FileIo {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("log line {line}: {message}")]
    BadLogLine { line: usize, message: String },
}

/// One trajectory-log line. The trajectory is stored as its serialized
/// wire text, so the log is greppable and replayable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub question_id: String,
    pub trajectory: String,
    pub final_answer: String,
    pub turns: usize,
    pub calls: usize,
    pub generated_tokens: usize,
    pub forced: bool,
    pub aborted: bool,
    pub abort_reason: Option<AbortReason>,
    pub wall_time_ms: u64,
}

impl LogLine {
    pub fn from_record(record: &RunRecord) -> Self {
        Self {
            question_id: record.question_id.clone(),
            trajectory: record.trajectory.serialize(),
            final_answer: record.final_answer.clone(),
            turns: record.budget.turns_used,
            calls: record.budget.calls_used,
            generated_tokens: record.generated_tokens(),
            forced: record.budget.forced,
            aborted: record.aborted,
            abort_reason: record.abort_reason,
            wall_time_ms: record.wall_time_ms,
        }
    }

    /// Reconstruct a RunRecord. The question text and budget limits are not
    /// part of the line schema and must come from the dataset and config.
    pub fn into_record(
        self,
        question: &str,
        max_turns: usize,
        max_calls: usize,
    ) -> Result<RunRecord, String> {
        let segments = parse_stream(&self.trajectory).map_err(|e| e.to_string())?;
        Ok(RunRecord {
            question_id: self.question_id,
            question: question.to_owned(),
            trajectory: Trajectory { segments },
            final_answer: self.final_answer,
            budget: BudgetState {
                max_turns,
                max_calls,
                turns_used: self.turns,
                calls_used: self.calls,
                forced: self.forced,
            },
            wall_time_ms: self.wall_time_ms,
            aborted: self.aborted,
            abort_reason: self.abort_reason,
        })
    }
}

/// Append-only log writer. Each line is serialized first and written with a
/// single `write_all`, so concurrent appenders never interleave bytes.
pub struct RunLog {
    file: Mutex<std::fs::File>,
    lines: Mutex<usize>,
}

impl RunLog {
    pub fn create(path: &Path) -> Result<Self, ReportError> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| ReportError::LogIo {
                durable_lines: 0,
                source,
            })?;
        Ok(Self {
            file: Mutex::new(file),
            lines: Mutex::new(0),
        })
    }

    pub fn append(&self, record: &RunRecord) -> Result<(), ReportError> {
        let mut buf = serde_json::to_vec(&LogLine::from_record(record)).expect("log line json");
        buf.push(b'\n');
        let file = self.file.lock().expect("log lock");
        let mut lines = self.lines.lock().expect("line count lock");
        (&*file).write_all(&buf).map_err(|source| ReportError::LogIo {
            durable_lines: *lines,
            source,
        })?;
        (&*file).flush().map_err(|source| ReportError::LogIo {
            durable_lines: *lines,
            source,
        })?;
        *lines += 1;
        Ok(())
    }
}

pub fn persist_run(record: &RunRecord, log: &RunLog) -> Result<(), ReportError> {
    log.append(record)
}

pub fn read_log(path: &Path) -> Result<Vec<LogLine>, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::FileIo {
        path: path.to_owned(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ReportError::BadLogLine {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn fmt_float(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// Summary CSV with the fixed column order:
/// dataset, mode, n, mean_f1, mean_mbe, mean_turns, mean_calls,
/// auc_turns, auc_calls, mean_coverage.
pub fn summary_csv(report: &MetricReport) -> String {
    let a = &report.aggregates;
    let mut out = String::from(
        "dataset,mode,n,mean_f1,mean_mbe,mean_turns,mean_calls,auc_turns,auc_calls,mean_coverage\n",
    );
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{}\n",
        report.dataset,
        report.mode,
        report.n,
        fmt_float(a.mean_f1),
        fmt_float(a.mean_mbe),
        fmt_float(a.mean_turns),
        fmt_float(a.mean_calls),
        fmt_float(a.auc_turns),
        fmt_float(a.auc_calls),
        fmt_opt(a.mean_coverage),
    ));
    out
}

pub fn per_question_csv(report: &MetricReport) -> String {
    let mut out = String::from("id,f1,mbe,turns,calls,generated_tokens,coverage\n");
    for row in &report.per_question {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.id,
            fmt_float(row.f1),
            row.mbe.map(|v| v.to_string()).unwrap_or_default(),
            row.turns,
            row.calls,
            row.generated_tokens,
            fmt_opt(row.coverage),
        ));
    }
    out
}

/// Minimal static SVG line plot of one curve. Deterministic output: fixed
/// canvas, fixed precision, no timestamps.
pub fn curve_svg(curve: &MetricCurve, title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const ML: f64 = 60.0; // left margin
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;
    let plot_w = W - ML - MR;
    let plot_h = H - MT - MB;
    let t_max = curve.points.last().map(|(t, _)| *t).unwrap_or(1).max(1) as f64;

    let x = |t: usize| ML + (t as f64 / t_max) * plot_w;
    let y = |f: f64| MT + (1.0 - f) * plot_h;

    let path = curve
        .points
        .iter()
        .map(|(t, f)| format!("{:.2},{:.2}", x(*t), y(*f)))
        .collect::<Vec<_>>()
        .join(" ");

    let axis_label = match curve.axis {
        CurveAxis::Turns => "turns",
        CurveAxis::Calls => "search calls",
        CurveAxis::GeneratedTokens => "generated tokens",
    };

    let mut ticks = String::new();
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        ticks.push_str(&format!(
            "<line x1=\"{ml:.1}\" y1=\"{yy:.2}\" x2=\"{xr:.1}\" y2=\"{yy:.2}\" stroke=\"#ddd\"/>\
             <text x=\"{tx:.1}\" y=\"{ty:.2}\" font-size=\"11\" text-anchor=\"end\">{f:.2}</text>",
            ml = ML,
            xr = W - MR,
            yy = y(f),
            tx = ML - 6.0,
            ty = y(f) + 4.0,
        ));
    }

    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\
         <text x=\"{tx:.1}\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\
         {ticks}\
         <line x1=\"{ml:.1}\" y1=\"{mt:.1}\" x2=\"{ml:.1}\" y2=\"{yb:.1}\" stroke=\"black\"/>\
         <line x1=\"{ml:.1}\" y1=\"{yb:.1}\" x2=\"{xr:.1}\" y2=\"{yb:.1}\" stroke=\"black\"/>\
         <text x=\"{tx:.1}\" y=\"{lby:.1}\" font-size=\"12\" text-anchor=\"middle\">{axis_label}</text>\
         <text x=\"16\" y=\"{mid:.1}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {mid:.1})\">mean score</text>\
         <polyline points=\"{path}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\
         </svg>\n",
        tx = ML + plot_w / 2.0,
        ml = ML,
        mt = MT,
        yb = H - MB,
        xr = W - MR,
        lby = H - 14.0,
        mid = MT + plot_h / 2.0,
    )
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, ReportError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| ReportError::FileIo {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Write summary CSV, per-question CSV, curve JSON, and SVG plots of the
/// turn and call curves. Emission is deterministic: the same report always
/// produces byte-identical files.
pub fn emit_report(report: &MetricReport, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::FileIo {
        path: out_dir.to_owned(),
        source,
    })?;
    let mut written = vec![
        write_file(out_dir, "summary.csv", &summary_csv(report))?,
        write_file(out_dir, "per_question.csv", &per_question_csv(report))?,
        write_file(
            out_dir,
            "curves.json",
            &format!(
                "{}\n",
                serde_json::to_string_pretty(&report.curves).expect("curve json")
            ),
        )?,
        write_file(
            out_dir,
            "report.json",
            &format!(
                "{}\n",
                serde_json::to_string_pretty(report).expect("report json")
            ),
        )?,
    ];
    for curve in &report.curves {
        let (name, title) = match curve.axis {
            CurveAxis::Turns => ("accuracy_turns.svg", "mean score vs. turn budget"),
            CurveAxis::Calls => ("accuracy_calls.svg", "mean score vs. call budget"),
            CurveAxis::GeneratedTokens => continue,
        };
        written.push(write_file(out_dir, name, &curve_svg(curve, title))?);
    }
    Ok(written)
}
