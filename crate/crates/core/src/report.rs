//! Report serialization: one JSON object per line, or an aligned text table.

use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::metrics::{AgenticReport, Rate, StateControlReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    JsonLines,
    Table,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" | "json" => Ok(Self::JsonLines),
            "table" => Ok(Self::Table),
            _ => Err(format!("unknown report format `{s}` (jsonl, table)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub hits: u64,
    pub total: u64,
    /// `null` when the denominator is zero.
    pub value: Option<f64>,
}

impl MetricRow {
    pub fn rate(&self) -> Rate {
        Rate::new(self.hits, self.total)
    }
}

/// A named list of metric rows plus free-form parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub report: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    pub metrics: Vec<MetricRow>,
}

impl MetricsReport {
    pub fn new(report: &str, rows: &[(&str, Rate)]) -> Self {
        Self {
            report: report.to_string(),
            params: Map::new(),
            metrics: rows
                .iter()
                .map(|(name, r)| MetricRow {
                    name: name.to_string(),
                    hits: r.hits,
                    total: r.total,
                    value: r.value(),
                })
                .collect(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn state_control(r: &StateControlReport) -> Self {
        Self::new("state-control", &r.rows())
            .param("samples", r.positives() + r.negatives())
            .param("positives", r.positives())
            .param("negatives", r.negatives())
    }

    pub fn agentic(r: &AgenticReport) -> Self {
        Self::new("agentic", &r.rows())
            .param("steps", r.step_count)
            .param("trajectories", r.trajectory_count)
            .param("click_steps", r.click_step_count)
    }

    pub fn get(&self, name: &str) -> Option<&MetricRow> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.report);
        for (k, v) in &self.params {
            let v = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let _ = writeln!(out, "  {k}: {v}");
        }
        let width = self
            .metrics
            .iter()
            .map(|m| m.name.len())
            .max()
            .unwrap_or(0)
            .max("metric".len());
        let _ = writeln!(out, "  {:<width$}  {:>8}  {:>13}", "metric", "value", "hits/total");
        for m in &self.metrics {
            let _ = writeln!(
                out,
                "  {:<width$}  {:>8}  {:>13}",
                m.name,
                match m.rate().value() {
                    Some(v) => format!("{:.2}%", v * 100.0),
                    None => "n/a".to_string(),
                },
                format!("{}/{}", m.hits, m.total)
            );
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::JsonLines => self.to_json_line() + "\n",
            ReportFormat::Table => self.to_table(),
        }
    }
}

fn percent(r: &MetricRow) -> String {
    match r.rate().value() {
        Some(v) => format!("{:.2}", v * 100.0),
        None => "n/a".to_string(),
    }
}

/// One row per labelled report, one column per metric (in first-seen
/// order), values in percent. Reports of different kinds get separate
/// blocks.
pub fn comparison_table(reports: &[(String, MetricsReport)]) -> String {
    let mut kinds: Vec<&str> = Vec::new();
    for (_, r) in reports {
        if !kinds.contains(&r.report.as_str()) {
            kinds.push(&r.report);
        }
    }
    let mut out = String::new();
    for kind in kinds {
        let rows: Vec<&(String, MetricsReport)> =
            reports.iter().filter(|(_, r)| r.report == kind).collect();
        let mut cols: Vec<&str> = Vec::new();
        for (_, r) in &rows {
            for m in &r.metrics {
                if !cols.contains(&m.name.as_str()) {
                    cols.push(&m.name);
                }
            }
        }
        let label_w = rows
            .iter()
            .map(|(l, _)| l.len())
            .max()
            .unwrap_or(0)
            .max(kind.len());
        let cells: Vec<Vec<String>> = rows
            .iter()
            .map(|(_, r)| {
                cols.iter()
                    .map(|c| r.get(c).map(percent).unwrap_or_else(|| "-".into()))
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = cols
            .iter()
            .enumerate()
            .map(|(i, c)| cells.iter().map(|row| row[i].len()).fold(c.len(), usize::max))
            .collect();
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = write!(out, "{kind:<label_w$}");
        for (c, w) in cols.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
        for ((label, _), row) in rows.iter().zip(&cells) {
            let _ = write!(out, "{label:<label_w$}");
            for (v, w) in row.iter().zip(&widths) {
                let _ = write!(out, "  {v:>w$}");
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparison_rows_and_columns() {
        let a = MetricsReport::new("state-control", &[("O-TMR", Rate::new(3, 4)), ("O-AMR", Rate::new(1, 4))]);
        let b = MetricsReport::new("state-control", &[("O-TMR", Rate::new(0, 0)), ("O-AMR", Rate::new(4, 4))]);
        let c = MetricsReport::new("agentic", &[("TSR", Rate::new(1, 3))]);
        let t = comparison_table(&[("model-a".into(), a), ("model-b".into(), b), ("x".into(), c)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0].split_whitespace().collect::<Vec<_>>(), ["state-control", "O-TMR", "O-AMR"]);
        assert_eq!(lines[1].split_whitespace().collect::<Vec<_>>(), ["model-a", "75.00", "25.00"]);
        assert_eq!(lines[2].split_whitespace().collect::<Vec<_>>(), ["model-b", "n/a", "100.00"]);
        assert_eq!(lines[3], "");
        assert_eq!(lines[5].split_whitespace().collect::<Vec<_>>(), ["x", "33.33"]);
    }

    #[test]
    fn json_and_table() {
        let r = MetricsReport::new("demo", &[("O-AMR", Rate::new(1, 2)), ("N-FPR", Rate::new(0, 0))])
            .param("click_threshold", 0.04);
        let line = r.to_json_line();
        let back: MetricsReport = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
        let v: Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["metrics"][0]["value"], 0.5);
        assert!(v["metrics"][1]["value"].is_null());
        let t = r.to_table();
        assert!(t.contains("O-AMR"));
        assert!(t.contains("50.00%"));
        assert!(t.contains("n/a"));
        assert!(t.contains("0/0"));
        assert!(t.contains("click_threshold: 0.04"));
    }

    #[test]
    fn format_names() {
        assert_eq!("table".parse::<ReportFormat>(), Ok(ReportFormat::Table));
        assert_eq!("jsonl".parse::<ReportFormat>(), Ok(ReportFormat::JsonLines));
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
