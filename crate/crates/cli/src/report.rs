use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;
use togglebench_core::report::{comparison_table, MetricsReport, ReportFormat};

use crate::ReportArgs;

/// What one input file holds.
enum Loaded {
    Metrics(Vec<MetricsReport>),
    /// summary.json of a dynamic run.
    Dynamic(Value),
}

fn load(path: &Path) -> Result<Loaded> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(v) = serde_json::from_str::<Value>(&text) {
        if v.get("summary").is_some() && v.get("episodes").is_some() {
            return Ok(Loaded::Dynamic(v));
        }
    }
    let reports = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .with_context(|| format!("{}:{}: not a report line", path.display(), i + 1))
        })
        .collect::<Result<Vec<MetricsReport>>>()?;
    Ok(Loaded::Metrics(reports))
}

fn label(path: &Path, r: &MetricsReport) -> String {
    r.params
        .get("model")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| {
            let dir = path
                .parent()
                .and_then(Path::file_name)
                .map(|s| s.to_string_lossy().into_owned());
            dir.unwrap_or_else(|| path.display().to_string())
        })
}

pub fn run(a: ReportArgs) -> Result<()> {
    let mut metrics = Vec::new();
    let mut dynamic = Vec::new();
    for p in &a.input {
        match load(p)? {
            Loaded::Metrics(rs) => metrics.extend(rs.into_iter().map(|r| (label(p, &r), r))),
            Loaded::Dynamic(v) => dynamic.push(v),
        }
    }
    match a.report_format {
        ReportFormat::JsonLines => {
            for (_, r) in &metrics {
                println!("{}", r.to_json_line());
            }
            for v in &dynamic {
                println!("{}", serde_json::to_string(v)?);
            }
        }
        ReportFormat::Table => {
            if !metrics.is_empty() {
                print!("{}", comparison_table(&metrics));
            }
            if !dynamic.is_empty() {
                if !metrics.is_empty() {
                    println!();
                }
                let name = |v: &Value| v["agent"].as_str().unwrap_or("?").to_string();
                let w = dynamic.iter().map(|v| name(v).len()).max().unwrap_or(0).max(5);
                println!("{:<w$}  success", "agent");
                for v in &dynamic {
                    println!("{:<w$}  {}", name(v), v["summary"].as_str().unwrap_or("?"));
                }
            }
        }
    }
    Ok(())
}
