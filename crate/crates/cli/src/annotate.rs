use std::fs;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use togglebench_core::annotation::{
    run_pipeline, AnnotatorClient, AnnotatorScript, Audit, HttpAnnotator, PipelineConfig,
    PromptSet, ResumeMode, RetryPolicy, ScreenRecord, ScriptedAnnotator,
};
use togglebench_core::jsonl;

use crate::output::OutDir;
use crate::AnnotateArgs;

pub const CHECKPOINT: &str = "checkpoint.jsonl";
const OUTPUTS: [&str; 3] = ["quadruplets.jsonl", "units.jsonl", "audit.json"];

type Pair = (Box<dyn AnnotatorClient>, Box<dyn AnnotatorClient>);

fn mock_pair(path: &std::path::Path) -> Result<Pair> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scripts: Vec<AnnotatorScript> = serde_json::from_str(&text)
        .with_context(|| format!("{}: expected a JSON array of two annotator scripts", path.display()))?;
    let [a, b]: [AnnotatorScript; 2] = scripts
        .try_into()
        .map_err(|v: Vec<_>| anyhow::anyhow!("{}: expected 2 annotator scripts, found {}", path.display(), v.len()))?;
    Ok((
        Box::new(ScriptedAnnotator::from_script(a)),
        Box::new(ScriptedAnnotator::from_script(b)),
    ))
}

fn http_pair(timeout: Duration) -> Result<Pair> {
    let make = |id: &str, prefix: &str| {
        HttpAnnotator::from_env(id, prefix, timeout).context(
            "annotator credentials missing; set the environment variables or pass --mock-annotators",
        )
    };
    let a = make("annotator-a", "TOGGLEBENCH_ANNOTATOR_A")?;
    let b = make("annotator-b", "TOGGLEBENCH_ANNOTATOR_B")?;
    Ok((Box::new(a), Box::new(b)))
}

fn print_funnel(audit: &Audit) {
    let row = |label: &str, n: usize| println!("{label:<30}{n:>8}");
    row("records", audit.records);
    row("candidate boxes", audit.candidate_boxes);
    row("units", audit.units);
    row("identified toggles", audit.identified_toggles);
    row("retained", audit.retained);
    for (reason, n) in &audit.dropped {
        let name = serde_json::to_value(reason)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        row(&format!("dropped ({name})"), *n);
    }
    row("errored", audit.errored);
    row("pending", audit.pending);
}

pub fn run(a: AnnotateArgs) -> Result<()> {
    let prompts = match &a.prompts {
        Some(dir) => PromptSet::load_dir(dir)?,
        None => PromptSet::default(),
    };
    let (first, second) = match &a.mock_annotators {
        Some(p) => mock_pair(p)?,
        None => http_pair(Duration::from_secs(a.timeout_secs))?,
    };
    let retry = if a.mock_annotators.is_some() {
        RetryPolicy::immediate(a.max_attempts)
    } else {
        RetryPolicy {
            max_attempts: a.max_attempts,
            ..RetryPolicy::default()
        }
    };
    let config = PipelineConfig {
        prompts,
        retry,
        strict_feature_match: a.strict_feature_match,
        iou_cutoff: a.iou_cutoff,
        workers: a.workers,
        max_new_units: a.max_units,
        fail_fast: !a.keep_going,
    };
    let mode = if a.resume {
        ResumeMode::Resume
    } else if a.restart {
        ResumeMode::Restart
    } else {
        ResumeMode::Fresh
    };
    let records: Vec<ScreenRecord> = jsonl::read(&a.input)?;
    let out = OutDir::create(&a.out_dir)?;
    let checkpoint = out.path(CHECKPOINT);
    if mode == ResumeMode::Fresh && togglebench_core::annotation::checkpoint::exists(&checkpoint) {
        bail!(
            "{} already exists; pass --resume to continue it or --restart to discard it",
            checkpoint.display()
        );
    }
    // results of an earlier run must not survive a failed one
    for name in OUTPUTS {
        out.remove(name)?;
    }
    let result = run_pipeline(
        &records,
        first.as_ref(),
        second.as_ref(),
        &config,
        Some(&checkpoint),
        mode,
    )?;
    print_funnel(&result.audit);
    if !result.complete {
        println!(
            "incomplete: {} units pending; rerun with --resume to continue",
            result.audit.pending
        );
        return Ok(());
    }
    out.jsonl("quadruplets.jsonl", &result.quadruplets)?;
    out.jsonl("units.jsonl", &result.units)?;
    out.json("audit.json", &result.audit)?;
    Ok(())
}
