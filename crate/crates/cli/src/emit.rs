//! Report output: aligned text tables, CSV, JSON and plot series.
//!
//! CSV rows are `phase,server,task1..taskS,total` where phase is `before` or `after`.
//! Plot series are CSV triples `series,x,y`: series `before/S1`, x the task index
//! (1-based) and y the cumulative demand of the server's first x tasks.

use std::fmt::Write as _;
use std::io;

use clap::ValueEnum;
use serde::Serialize;
use thiserror::Error;

use crate::run::{BatchRow, ComparisonRow, RunReport};
use consolidation_core::{PlanStep, UtilizationRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
    Plotdata,
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("format {0:?} is not available for batch summaries")]
    Unsupported(Format),
}

fn csv_string(records: impl IntoIterator<Item = Vec<String>>) -> Result<String, EmitError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize to JSON");
    s.push('\n');
    s
}

fn num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}")
    }
}

fn table_rows(rows: &[UtilizationRow], dim: usize, columns: usize) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let mut cells = vec![r.server.to_string()];
            cells.extend(r.padded(dim, columns).iter().map(u64::to_string));
            cells.push(r.total[dim].to_string());
            cells
        })
        .collect()
}

fn header(columns: usize) -> Vec<String> {
    let mut h = vec!["Server".to_owned()];
    h.extend((1..=columns).map(|i| format!("Task{i}")));
    h.push("Total".to_owned());
    h
}

fn aligned(out: &mut String, rows: &[Vec<String>]) {
    let columns = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..columns)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    for row in rows {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
}

pub fn render_table(r: &RunReport) -> String {
    let cols = r.task_columns();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "scenario {}  algorithm {} ({})",
        r.scenario,
        r.algorithm.as_str(),
        r.mode.as_str()
    );
    for (label, rows) in [("before", &r.before_table), ("after", &r.after_table)] {
        let _ = writeln!(out, "\n{label}");
        let mut lines = vec![header(cols)];
        lines.extend(table_rows(rows, r.primary_dim, cols));
        aligned(&mut out, &lines);
    }
    let m = &r.metrics;
    let _ = writeln!(
        out,
        "\nservers used {}  released {}  migrated {}  cost {}  benefit {}",
        m.servers_used,
        m.servers_released,
        m.tasks_migrated,
        num(r.cost_benefit.cost),
        num(r.cost_benefit.benefit)
    );
    for step in &r.plan.steps {
        let _ = match step {
            PlanStep::Move(m) => writeln!(out, "move {} {} -> {}", m.task, m.from, m.to),
            PlanStep::Allocate(a) => writeln!(out, "allocate {} -> {}", a.task, a.server),
        };
    }
    if !r.unplaced.is_empty() {
        let ids: Vec<&str> = r.unplaced.iter().map(|t| t.as_str()).collect();
        let _ = writeln!(out, "unplaced {}", ids.join(", "));
    }
    out
}

pub fn render_csv(r: &RunReport) -> Result<String, EmitError> {
    let cols = r.task_columns();
    let mut head = vec!["phase".to_owned(), "server".to_owned()];
    head.extend((1..=cols).map(|i| format!("task{i}")));
    head.push("total".to_owned());
    let mut records = vec![head];
    for (phase, rows) in [("before", &r.before_table), ("after", &r.after_table)] {
        for mut row in table_rows(rows, r.primary_dim, cols) {
            row.insert(0, phase.to_owned());
            records.push(row);
        }
    }
    csv_string(records)
}

fn series(prefix: &str, r: &RunReport) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for (phase, rows) in [("before", &r.before_table), ("after", &r.after_table)] {
        for row in rows {
            let mut acc = 0u64;
            for (x, d) in row.task_demands.iter().enumerate() {
                acc += d[r.primary_dim];
                out.push(vec![
                    format!("{prefix}{phase}/{}", row.server),
                    (x + 1).to_string(),
                    acc.to_string(),
                ]);
            }
        }
    }
    out
}

fn plot_header() -> Vec<String> {
    ["series", "x", "y"].map(String::from).to_vec()
}

pub fn render_plotdata(r: &RunReport) -> Result<String, EmitError> {
    csv_string(std::iter::once(plot_header()).chain(series("", r)))
}

pub fn render_report(r: &RunReport, format: Format) -> Result<String, EmitError> {
    match format {
        Format::Table => Ok(render_table(r)),
        Format::Csv => render_csv(r),
        Format::Json => Ok(json_string(r)),
        Format::Plotdata => render_plotdata(r),
    }
}

const COMPARISON_HEADER: [&str; 8] = [
    "algorithm",
    "mode",
    "servers_used",
    "servers_released",
    "tasks_migrated",
    "cost",
    "benefit",
    "unplaced",
];

fn comparison_cells(r: &ComparisonRow) -> Vec<String> {
    vec![
        r.algorithm.as_str().to_owned(),
        r.mode.as_str().to_owned(),
        r.servers_used.to_string(),
        r.servers_released.to_string(),
        r.tasks_migrated.to_string(),
        num(r.cost),
        num(r.benefit),
        r.unplaced.to_string(),
    ]
}

/// One row per algorithm. Plot series are prefixed with the algorithm name.
pub fn render_comparison(reports: &[RunReport], format: Format) -> Result<String, EmitError> {
    let rows: Vec<ComparisonRow> = reports.iter().map(ComparisonRow::from).collect();
    let header = COMPARISON_HEADER.map(String::from).to_vec();
    match format {
        Format::Table => {
            let mut out = String::new();
            if let Some(r) = reports.first() {
                let _ = writeln!(out, "scenario {}", r.scenario);
            }
            let lines: Vec<Vec<String>> = std::iter::once(header).chain(rows.iter().map(comparison_cells)).collect();
            aligned(&mut out, &lines);
            Ok(out)
        }
        Format::Csv => csv_string(std::iter::once(header).chain(rows.iter().map(comparison_cells))),
        Format::Json => Ok(json_string(&rows)),
        Format::Plotdata => {
            let all = reports.iter().flat_map(|r| series(&format!("{}/", r.algorithm.as_str()), r));
            csv_string(std::iter::once(plot_header()).chain(all))
        }
    }
}

pub fn render_batch(rows: &[BatchRow], format: Format) -> Result<String, EmitError> {
    let header: Vec<String> = [
        "algorithm",
        "mode",
        "scenarios",
        "mean_servers_used",
        "mean_servers_released",
        "mean_tasks_migrated",
        "mean_cost",
        "mean_benefit",
        "infeasible_runs",
    ]
    .map(String::from)
    .to_vec();
    let cells = |r: &BatchRow| {
        vec![
            r.algorithm.as_str().to_owned(),
            r.mode.as_str().to_owned(),
            r.scenarios.to_string(),
            num(r.mean_servers_used),
            num(r.mean_servers_released),
            num(r.mean_tasks_migrated),
            num(r.mean_cost),
            num(r.mean_benefit),
            r.infeasible_runs.to_string(),
        ]
    };
    match format {
        Format::Table => {
            let mut out = String::new();
            let lines: Vec<Vec<String>> = std::iter::once(header).chain(rows.iter().map(cells)).collect();
            aligned(&mut out, &lines);
            Ok(out)
        }
        Format::Csv => csv_string(std::iter::once(header).chain(rows.iter().map(cells))),
        Format::Json => Ok(json_string(&rows)),
        Format::Plotdata => Err(EmitError::Unsupported(format)),
    }
}
