//! CSV and aligned plain-text renderings of the evaluation results.
//!
//! PR CSV: `table,iou_threshold,confidence_threshold,tp,fp,fn,precision,recall`
//! with `table` one of `pure` | `tracked`; the count columns may be empty
//! when only the rates are known.
//!
//! Error CSV: `group,source,axis,mae,rmse,count`.

use std::fmt::Write as _;

use super::pr::{Counts, PrTable};
use super::{AxisError, ErrorReport, EvalError};
use crate::detection_io::DetectionSource;

/// Three decimals with trailing zeros removed, keeping one decimal
/// (`0.020` → `0.02`, `1.000` → `1.0`).
pub fn format_metric(v: f64) -> String {
    let s = format!("{v:.3}");
    let trimmed = s.trim_end_matches('0');
    if trimmed.ends_with('.') {
        format!("{trimmed}0")
    } else {
        trimmed.to_string()
    }
}

fn threshold_label(v: f64) -> String {
    let s = format!("{v:.2}");
    let t = s.trim_end_matches('0');
    if t.ends_with('.') {
        format!("{t}0")
    } else {
        t.to_string()
    }
}

fn source_title(source: DetectionSource) -> &'static str {
    match source {
        DetectionSource::Rgb => "RGB-Based Detection",
        DetectionSource::Event => "Event-Based Detection",
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrEntry {
    pub tracked: bool,
    pub iou: f64,
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
    pub counts: Option<Counts>,
}

/// Precision/recall values keyed by table and thresholds, either computed
/// or read back from CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrValues {
    pub entries: Vec<PrEntry>,
}

impl PrValues {
    pub fn from_tables(pure: &PrTable, tracked: Option<&PrTable>) -> Self {
        let mut entries = Vec::new();
        for (flag, table) in [(false, Some(pure)), (true, tracked)] {
            let Some(table) = table else { continue };
            entries.extend(table.iter().map(|c| PrEntry {
                tracked: flag,
                iou: c.iou_threshold,
                confidence: c.confidence_threshold,
                precision: c.precision(),
                recall: c.recall(),
                counts: Some(c.counts),
            }));
        }
        Self { entries }
    }

    fn find(&self, tracked: bool, iou: f64, conf: f64) -> Option<&PrEntry> {
        self.entries
            .iter()
            .find(|e| e.tracked == tracked && same(e.iou, iou) && same(e.confidence, conf))
    }

    fn has(&self, tracked: bool) -> bool {
        self.entries.iter().any(|e| e.tracked == tracked)
    }

    fn axis(&self, pick: impl Fn(&PrEntry) -> Option<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = self.entries.iter().filter_map(pick).collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| same(*a, *b));
        v
    }

    pub fn iou_values(&self) -> Vec<f64> {
        self.axis(|e| Some(e.iou))
    }

    pub fn confidence_values(&self) -> Vec<f64> {
        self.axis(|e| Some(e.confidence))
    }
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// Column-aligned text: label columns left-aligned, the rest right-aligned.
struct TextTable {
    label_cols: usize,
    rows: Vec<Option<Vec<String>>>,
}

impl TextTable {
    fn new(label_cols: usize) -> Self {
        Self {
            label_cols,
            rows: Vec::new(),
        }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push(Some(cells));
    }

    fn rule(&mut self) {
        self.rows.push(None);
    }

    fn render(&self, out: &mut String) {
        let ncols = self.rows.iter().flatten().map(Vec::len).max().unwrap_or(0);
        let mut width = vec![0; ncols];
        for r in self.rows.iter().flatten() {
            for (k, c) in r.iter().enumerate() {
                width[k] = width[k].max(c.chars().count());
            }
        }
        let total = width.iter().sum::<usize>() + 2 * ncols.saturating_sub(1);
        for r in &self.rows {
            let Some(r) = r else {
                out.push_str(&"-".repeat(total));
                out.push('\n');
                continue;
            };
            let mut line = String::new();
            for (k, w) in width.iter().enumerate() {
                let c = r.get(k).map(String::as_str).unwrap_or("");
                if k > 0 {
                    line.push_str("  ");
                }
                if k < self.label_cols {
                    write!(line, "{c:<w$}").unwrap();
                } else {
                    write!(line, "{c:>w$}").unwrap();
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
    }
}

fn pr_block(values: &PrValues, title: String, columns: &[f64], cell: impl Fn(bool, f64) -> Option<PrEntry>) -> String {
    let mut out = String::new();
    writeln!(out, "{title}").unwrap();
    let mut t = TextTable::new(2);
    let mut header = vec![String::new(), String::new()];
    header.extend(columns.iter().map(|&c| threshold_label(c)));
    t.row(header);
    for (tracked, label) in [(false, "Pure Detection"), (true, "Tracked w/ SORT")] {
        if !values.has(tracked) {
            continue;
        }
        t.rule();
        for (k, metric) in ["Precision", "Recall"].into_iter().enumerate() {
            let mut row = vec![
                if k == 0 { label.to_string() } else { String::new() },
                metric.to_string(),
            ];
            row.extend(columns.iter().map(|&c| match cell(tracked, c) {
                Some(e) => format_metric(if k == 0 { e.precision } else { e.recall }),
                None => "-".into(),
            }));
            t.row(row);
        }
    }
    t.rule();
    t.render(&mut out);
    out
}

/// Varying IoU threshold at a fixed confidence threshold.
pub fn render_iou_table(values: &PrValues, source: DetectionSource, confidence: f64) -> String {
    let cols: Vec<f64> = values
        .iou_values()
        .into_iter()
        .filter(|&i| {
            values
                .entries
                .iter()
                .any(|e| same(e.iou, i) && same(e.confidence, confidence))
        })
        .collect();
    pr_block(
        values,
        format!(
            "{}: IoU thresholds @ Confidence threshold = {}",
            source_title(source),
            threshold_label(confidence)
        ),
        &cols,
        |tracked, iou| values.find(tracked, iou, confidence).copied(),
    )
}

/// Varying confidence threshold at a fixed IoU threshold.
pub fn render_conf_table(values: &PrValues, source: DetectionSource, iou: f64) -> String {
    let cols: Vec<f64> = values
        .confidence_values()
        .into_iter()
        .filter(|&c| values.entries.iter().any(|e| same(e.iou, iou) && same(e.confidence, c)))
        .collect();
    pr_block(
        values,
        format!(
            "{}: Confidence thresholds @ IoU threshold = {}",
            source_title(source),
            threshold_label(iou)
        ),
        &cols,
        |tracked, conf| values.find(tracked, iou, conf).copied(),
    )
}

pub fn pr_csv(values: &PrValues) -> String {
    let mut out = String::from("table,iou_threshold,confidence_threshold,tp,fp,fn,precision,recall\n");
    for e in &values.entries {
        let counts = match e.counts {
            Some(c) => format!("{},{},{}", c.tp, c.fp, c.fn_),
            None => ",,".into(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            if e.tracked { "tracked" } else { "pure" },
            e.iou,
            e.confidence,
            counts,
            e.precision,
            e.recall
        )
        .unwrap();
    }
    out
}

fn report_err(line: usize, message: impl Into<String>) -> EvalError {
    EvalError::Report {
        line,
        message: message.into(),
    }
}

fn csv_rows(text: &str, header: &str) -> Result<Vec<(usize, Vec<String>)>, EvalError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, h)) if h == header => {}
        Some((n, h)) => return Err(report_err(n, format!("expected header {header:?}, found {h:?}"))),
        None => return Err(report_err(0, "empty file")),
    }
    let ncols = header.split(',').count();
    lines
        .map(|(n, l)| {
            let cells: Vec<String> = l.split(',').map(|c| c.trim().to_string()).collect();
            if cells.len() != ncols {
                return Err(report_err(
                    n,
                    format!("expected {ncols} columns, found {}", cells.len()),
                ));
            }
            Ok((n, cells))
        })
        .collect()
}

fn num<T: std::str::FromStr>(line: usize, name: &str, s: &str) -> Result<T, EvalError> {
    s.parse()
        .map_err(|_| report_err(line, format!("{name}: cannot parse {s:?}")))
}

pub fn parse_pr_csv(text: &str) -> Result<PrValues, EvalError> {
    let mut entries = Vec::new();
    for (n, c) in csv_rows(
        text,
        "table,iou_threshold,confidence_threshold,tp,fp,fn,precision,recall",
    )? {
        let tracked = match c[0].as_str() {
            "pure" => false,
            "tracked" => true,
            other => return Err(report_err(n, format!("unknown table {other:?}"))),
        };
        let counts = if c[3].is_empty() && c[4].is_empty() && c[5].is_empty() {
            None
        } else {
            Some(Counts {
                tp: num(n, "tp", &c[3])?,
                fp: num(n, "fp", &c[4])?,
                fn_: num(n, "fn", &c[5])?,
            })
        };
        entries.push(PrEntry {
            tracked,
            iou: num(n, "iou_threshold", &c[1])?,
            confidence: num(n, "confidence_threshold", &c[2])?,
            precision: num(n, "precision", &c[6])?,
            recall: num(n, "recall", &c[7])?,
            counts,
        });
    }
    Ok(PrValues { entries })
}

/// Row groups (e.g. filtering only / with the 3D filter) × source columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorTable {
    pub sources: Vec<String>,
    pub groups: Vec<(String, Vec<Option<ErrorReport>>)>,
}

impl ErrorTable {
    pub fn insert(&mut self, group: &str, source: &str, report: ErrorReport) {
        let si = match self.sources.iter().position(|s| s == source) {
            Some(i) => i,
            None => {
                self.sources.push(source.to_string());
                for (_, g) in &mut self.groups {
                    g.push(None);
                }
                self.sources.len() - 1
            }
        };
        let gi = match self.groups.iter().position(|(g, _)| g == group) {
            Some(i) => i,
            None => {
                self.groups.push((group.to_string(), vec![None; self.sources.len()]));
                self.groups.len() - 1
            }
        };
        self.groups[gi].1[si] = Some(report);
    }
}

pub fn render_error_table(table: &ErrorTable) -> String {
    let mut t = TextTable::new(2);
    let mut head1 = vec![String::new(), String::new()];
    let mut head2 = vec![String::new(), String::new()];
    for s in &table.sources {
        head1.push(format!("{s} detection"));
        head1.push(String::new());
        head2.push("MAE".into());
        head2.push("RMSE".into());
    }
    t.row(head1);
    t.row(head2);
    for (group, reports) in &table.groups {
        t.rule();
        for (k, axis) in ["X", "Y", "Z", "XZ"].into_iter().enumerate() {
            let mut row = vec![if k == 0 { group.clone() } else { String::new() }, axis.to_string()];
            for r in reports {
                match r {
                    Some(r) => {
                        let a = r.rows()[k].1;
                        row.push(format_metric(a.mae));
                        row.push(format_metric(a.rmse));
                    }
                    None => row.extend(["-".to_string(), "-".to_string()]),
                }
            }
            t.row(row);
        }
    }
    t.rule();
    let mut out = String::new();
    t.render(&mut out);
    out
}

pub fn error_csv(table: &ErrorTable) -> String {
    let mut out = String::from("group,source,axis,mae,rmse,count\n");
    for (group, reports) in &table.groups {
        for (source, r) in table.sources.iter().zip(reports) {
            let Some(r) = r else { continue };
            for (axis, a) in r.rows() {
                writeln!(out, "{group},{source},{axis},{},{},{}", a.mae, a.rmse, r.count).unwrap();
            }
        }
    }
    out
}

pub fn parse_error_csv(text: &str) -> Result<ErrorTable, EvalError> {
    let mut table = ErrorTable::default();
    let mut partial: Vec<((String, String), ErrorReport)> = Vec::new();
    for (n, c) in csv_rows(text, "group,source,axis,mae,rmse,count")? {
        let a = AxisError {
            mae: num(n, "mae", &c[3])?,
            rmse: num(n, "rmse", &c[4])?,
        };
        let count: usize = num(n, "count", &c[5])?;
        let key = (c[0].clone(), c[1].clone());
        let idx = match partial.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                partial.push((key, ErrorReport::default()));
                partial.len() - 1
            }
        };
        let r = &mut partial[idx].1;
        r.count = count;
        match c[2].as_str() {
            "X" => r.x = a,
            "Y" => r.y = a,
            "Z" => r.z = a,
            "XZ" => r.xz = a,
            other => return Err(report_err(n, format!("unknown axis {other:?}"))),
        }
    }
    for ((g, s), r) in partial {
        table.insert(&g, &s, r);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_formatting() {
        assert_eq!(format_metric(0.625), "0.625");
        assert_eq!(format_metric(0.02), "0.02");
        assert_eq!(format_metric(1.0), "1.0");
        assert_eq!(format_metric(0.0), "0.0");
        assert_eq!(format_metric(0.4234), "0.423");
        assert_eq!(threshold_label(0.5), "0.5");
        assert_eq!(threshold_label(0.55), "0.55");
    }

    #[test]
    fn pr_csv_roundtrip() {
        let v = PrValues {
            entries: vec![
                PrEntry {
                    tracked: false,
                    iou: 0.5,
                    confidence: 0.3,
                    precision: 0.625,
                    recall: 0.423,
                    counts: None,
                },
                PrEntry {
                    tracked: true,
                    iou: 0.55,
                    confidence: 0.3,
                    precision: 0.5,
                    recall: 0.25,
                    counts: Some(Counts { tp: 1, fp: 1, fn_: 3 }),
                },
            ],
        };
        assert_eq!(parse_pr_csv(&pr_csv(&v)).unwrap(), v);
        assert!(parse_pr_csv("nope\n").is_err());
    }

    #[test]
    fn error_csv_roundtrip_and_render() {
        let mut t = ErrorTable::default();
        let r = ErrorReport {
            x: AxisError { mae: 0.1, rmse: 0.2 },
            y: AxisError { mae: 0.3, rmse: 0.4 },
            z: AxisError { mae: 0.5, rmse: 0.6 },
            xz: AxisError { mae: 0.7, rmse: 0.8 },
            count: 12,
        };
        t.insert("Filtering only", "RGB", r);
        t.insert("Filtering and CVKF", "Event", r);
        assert_eq!(parse_error_csv(&error_csv(&t)).unwrap(), t);
        let text = render_error_table(&t);
        assert!(text.contains("RGB detection"));
        assert!(text
            .lines()
            .any(|l| l.starts_with("Filtering only") && l.contains("0.1") && l.trim_end().ends_with('-')));
    }

    #[test]
    fn missing_cells_render_as_dash() {
        let v = PrValues {
            entries: vec![PrEntry {
                tracked: false,
                iou: 0.5,
                confidence: 0.3,
                precision: 1.0,
                recall: 0.5,
                counts: None,
            }],
        };
        let s = render_iou_table(&v, DetectionSource::Event, 0.3);
        assert!(s.starts_with("Event-Based Detection: IoU thresholds @ Confidence threshold = 0.3\n"));
        assert!(!s.contains("Tracked"));
    }
}
