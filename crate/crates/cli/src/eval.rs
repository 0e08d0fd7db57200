use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use togglebench_core::action::{Action, ActionGrammar, BBox, Dialect};
use togglebench_core::builder::Sample;
use togglebench_core::jsonl;
use togglebench_core::matching::{GroundTruthStep, MatchConfig, MatchResult};
use togglebench_core::metrics::{
    eval_agentic, eval_state_control, score_samples, SampleInput, ScoredStep, ScoredTrajectory,
};
use togglebench_core::report::MetricsReport;
use togglebench_core::star::Episode;

use crate::output::OutDir;
use crate::{EvalAgenticArgs, EvalStateArgs, MatchArgs};

#[derive(Debug, Deserialize)]
struct SamplePrediction {
    sample_id: String,
    prediction: String,
}

#[derive(Debug, Deserialize)]
struct StepPrediction {
    episode_id: String,
    step_id: String,
    prediction: String,
}

/// Parsed prediction for one ground-truth item, plus what was read.
struct Resolved {
    raw: Option<String>,
    action: Option<Action>,
    parse_error: Option<String>,
}

#[derive(Serialize)]
struct ItemRecord<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    polarity: Option<&'a str>,
    prediction: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    parse_error: Option<&'a str>,
    missing: bool,
    #[serde(flatten)]
    result: MatchResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    hits_toggle: Option<bool>,
}

/// Aligns predictions to ground-truth keys. Duplicate keys are an error;
/// predictions for unknown keys are reported and ignored; missing keys are
/// an error unless `strict`, where they score as non-matches.
fn align(
    what: &str,
    keys: &[String],
    preds: Vec<(String, String)>,
    dialect: Dialect,
    strict: bool,
) -> Result<(Vec<Resolved>, Vec<String>, usize)> {
    let known: BTreeSet<&str> = keys.iter().map(String::as_str).collect();
    let mut by_key: BTreeMap<String, String> = BTreeMap::new();
    let mut unknown = 0;
    for (k, p) in preds {
        if !known.contains(k.as_str()) {
            unknown += 1;
            tracing::warn!("prediction for unknown {what} `{k}` ignored");
            continue;
        }
        if by_key.insert(k.clone(), p).is_some() {
            bail!("more than one prediction for {what} `{k}`");
        }
    }
    let missing: Vec<String> = keys
        .iter()
        .filter(|k| !by_key.contains_key(*k))
        .cloned()
        .collect();
    if !missing.is_empty() && !strict {
        let shown: Vec<&str> = missing.iter().take(10).map(String::as_str).collect();
        bail!(
            "{} {what}s have no prediction (first: {}); pass --strict to score them as non-matches",
            missing.len(),
            shown.join(", ")
        );
    }
    let resolved = keys
        .iter()
        .map(|k| match by_key.remove(k) {
            None => Resolved {
                raw: None,
                action: None,
                parse_error: None,
            },
            Some(raw) => match dialect.parse(&raw) {
                Ok(a) => Resolved {
                    raw: Some(raw),
                    action: Some(a),
                    parse_error: None,
                },
                Err(e) => Resolved {
                    raw: Some(raw),
                    action: None,
                    parse_error: Some(e.to_string()),
                },
            },
        })
        .collect();
    Ok((resolved, missing, unknown))
}

fn finish(
    out: &OutDir,
    name: &str,
    report: MetricsReport,
    common: &MatchArgs,
    missing: &[String],
) -> Result<()> {
    out.text(&format!("{name}.jsonl"), &(report.to_json_line() + "\n"))?;
    out.text(&format!("{name}.txt"), &report.to_table())?;
    let mut list = missing.join("\n");
    if !list.is_empty() {
        list.push('\n');
    }
    out.text("missing.txt", &list)?;
    if !missing.is_empty() {
        eprintln!(
            "{} items had no prediction and were scored as non-matches (listed in {})",
            missing.len(),
            out.path("missing.txt").display()
        );
    }
    print!("{}", report.render(common.report_format));
    Ok(())
}

fn with_params(
    mut report: MetricsReport,
    cfg: &MatchConfig,
    common: &MatchArgs,
    missing: usize,
    unparsed: usize,
    unknown: usize,
) -> MetricsReport {
    if let Some(m) = &common.model {
        report = report.param("model", m.clone());
    }
    report
        .param("click_threshold", cfg.click_threshold())
        .param("distance_metric", serde_json::to_value(cfg.distance_metric()).unwrap_or_default())
        .param("dialect", common.dialect.to_string())
        .param("missing", missing)
        .param("unparsed", unparsed)
        .param("unknown_ids", unknown)
}

fn config(base: MatchConfig, common: &MatchArgs) -> MatchConfig {
    base.with_metric(common.distance_metric.into())
}

pub fn run_state(a: EvalStateArgs) -> Result<()> {
    let cfg = config(a.click_threshold, &a.common);
    let samples: Vec<Sample> = jsonl::read(&a.samples)?;
    if samples.is_empty() {
        bail!("{} holds no samples", a.samples.display());
    }
    let preds: Vec<SamplePrediction> = jsonl::read(&a.predictions)?;
    let keys: Vec<String> = samples.iter().map(|s| s.sample_id.clone()).collect();
    let (resolved, missing, unknown) = align(
        "sample",
        &keys,
        preds.into_iter().map(|p| (p.sample_id, p.prediction)).collect(),
        a.common.dialect,
        a.common.strict,
    )?;
    let inputs = samples
        .iter()
        .zip(&resolved)
        .map(|(s, r)| SampleInput {
            polarity: s.polarity,
            gt: s.ground_truth(),
            pred: r.action.clone(),
            positive_click_point: s.toggle_center(),
        })
        .collect();
    let scored = score_samples(inputs, &cfg)?;
    let report = eval_state_control(&scored)?;

    let out = OutDir::create(&a.out_dir)?;
    let records: Vec<ItemRecord> = samples
        .iter()
        .zip(&resolved)
        .zip(&scored)
        .map(|((s, r), sc)| ItemRecord {
            id: &s.sample_id,
            polarity: Some(s.polarity.as_str()),
            prediction: r.raw.as_deref(),
            parse_error: r.parse_error.as_deref(),
            missing: r.raw.is_none(),
            result: sc.result,
            hits_toggle: Some(sc.hits_toggle),
        })
        .collect();
    out.jsonl("per_sample.jsonl", &records)?;
    let unparsed = resolved.iter().filter(|r| r.parse_error.is_some()).count();
    let report = with_params(
        MetricsReport::state_control(&report),
        &cfg,
        &a.common,
        missing.len(),
        unparsed,
        unknown,
    );
    finish(&out, "state_control", report, &a.common, &missing)
}

fn step_layout(step: &togglebench_core::star::EpisodeStep, line: &Path) -> Result<Vec<BBox>> {
    match step.extra.get("layout") {
        None => Ok(Vec::new()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| {
            anyhow::anyhow!("{}: step `{}` has a bad layout: {e}", line.display(), step.step_id)
        }),
    }
}

pub fn run_agentic(a: EvalAgenticArgs) -> Result<()> {
    let cfg = config(a.click_threshold, &a.common);
    let episodes: Vec<Episode> = jsonl::read(&a.episodes)?;
    if episodes.is_empty() {
        bail!("{} holds no episodes", a.episodes.display());
    }
    let key = |e: &str, s: &str| format!("{e}/{s}");
    let keys: Vec<String> = episodes
        .iter()
        .flat_map(|e| e.steps.iter().map(|s| key(&e.episode_id, &s.step_id)))
        .collect();
    let preds: Vec<StepPrediction> = jsonl::read(&a.predictions)?;
    let (resolved, missing, unknown) = align(
        "step",
        &keys,
        preds
            .into_iter()
            .map(|p| (key(&p.episode_id, &p.step_id), p.prediction))
            .collect(),
        a.common.dialect,
        a.common.strict,
    )?;
    let mut it = resolved.iter();
    let mut trajectories = Vec::with_capacity(episodes.len());
    for e in &episodes {
        let mut steps = Vec::with_capacity(e.steps.len());
        for s in &e.steps {
            let r = it.next().expect("one resolution per step");
            let gt = GroundTruthStep::new(s.action.clone(), step_layout(s, &a.episodes)?);
            steps.push(ScoredStep::score(s.step_id.clone(), gt, r.action.clone(), &cfg));
        }
        trajectories.push(ScoredTrajectory {
            episode_id: e.episode_id.clone(),
            steps,
        });
    }
    let report = eval_agentic(&trajectories)?;

    let out = OutDir::create(&a.out_dir)?;
    let records: Vec<ItemRecord> = keys
        .iter()
        .zip(&resolved)
        .zip(trajectories.iter().flat_map(|t| t.steps.iter()))
        .map(|((k, r), st)| ItemRecord {
            id: k,
            polarity: None,
            prediction: r.raw.as_deref(),
            parse_error: r.parse_error.as_deref(),
            missing: r.raw.is_none(),
            result: st.result,
            hits_toggle: None,
        })
        .collect();
    out.jsonl("per_step.jsonl", &records)?;
    let unparsed = resolved.iter().filter(|r| r.parse_error.is_some()).count();
    let report = with_params(
        MetricsReport::agentic(&report),
        &cfg,
        &a.common,
        missing.len(),
        unparsed,
        unknown,
    );
    finish(&out, "agentic", report, &a.common, &missing)
}
