//! Two-annotator toggle labelling.
//!
//! Each screen contributes the union of its dataset boxes and parser boxes.
//! Every resulting (screen, box) unit is shown to two independent annotators
//! twice: first to decide whether the box is a toggle at all (both must say
//! yes), then to read its state and feature (both must agree). Units that
//! survive become [`ToggleQuadruplet`]s; every other unit is accounted for in
//! the [`Audit`].

pub mod checkpoint;
pub mod client;
pub mod prompts;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{BBox, ScreenDims};
use crate::domain::ToggleState;
pub use checkpoint::CheckpointWriter;
pub use client::{
    AnnotationTask, AnnotatorClient, AnnotatorScript, ChatMessage, ChatRequest, Highlight,
    HttpAnnotator, RequestMetadata, RetryPolicy, ScriptedAnnotator, ScriptedReply, TransportError,
};
pub use prompts::PromptSet;

pub const DEFAULT_IOU_CUTOFF: f64 = 0.9;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("prompt assets: {0}")]
    Prompt(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("checkpoint {} is corrupt ({message}); rerun with restart to discard it", path.display())]
    CorruptCheckpoint { path: PathBuf, message: String },
    #[error("checkpoint {} already exists; resume or restart explicitly", .0.display())]
    CheckpointExists(PathBuf),
    #[error("checkpoint {} does not belong to this input: {message}", path.display())]
    CheckpointMismatch { path: PathBuf, message: String },
    #[error("screen `{0}` appears more than once in the input")]
    DuplicateScreen(String),
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("annotation aborted at {screen_id} {bbox}: {source}")]
    Transport {
        screen_id: String,
        bbox: BBox,
        source: TransportError,
    },
}

/// One screenshot with its candidate widget boxes, in normalized space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenRecord {
    pub screen_id: String,
    pub image_ref: String,
    pub screen_dims: ScreenDims,
    #[serde(default)]
    pub original_boxes: Vec<BBox>,
    #[serde(default)]
    pub parsed_boxes: Vec<BBox>,
    #[serde(default)]
    pub source_dataset: String,
    #[serde(default)]
    pub source_instruction: String,
}

impl ScreenRecord {
    pub fn merged_boxes(&self, iou_cutoff: f64) -> Vec<BBox> {
        merge_boxes_with(&self.original_boxes, &self.parsed_boxes, iou_cutoff)
    }
}

/// One annotator's answers for one unit. `state` and `feature` are set only
/// once the state/feature question was asked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorVerdict {
    pub annotator_id: String,
    pub is_toggle: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<ToggleState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<String>,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ToggleQuadruplet {
    pub screen_id: String,
    pub image_ref: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub state: ToggleState,
    pub feature: String,
}

/// Greedy union: originals first, then parsed boxes, each skipped when it
/// overlaps an already kept box with IoU at or above `cutoff`.
pub fn merge_boxes_with(original: &[BBox], parsed: &[BBox], cutoff: f64) -> Vec<BBox> {
    let mut kept: Vec<BBox> = Vec::with_capacity(original.len() + parsed.len());
    for b in original.iter().chain(parsed) {
        if !kept.iter().any(|k| k.iou(b) >= cutoff) {
            kept.push(*b);
        }
    }
    kept
}

pub fn merge_boxes(original: &[BBox], parsed: &[BBox]) -> Vec<BBox> {
    merge_boxes_with(original, parsed, DEFAULT_IOU_CUTOFF)
}

/// Lowercases and collapses runs of whitespace.
pub fn normalize_feature(f: &str) -> String {
    f.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NotToggle,
    StateDisagreement,
    FeatureDisagreement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Identify,
    StateFeature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum UnitOutcome {
    Retained { quadruplet: ToggleQuadruplet },
    Dropped { reason: DropReason },
    /// `annotator-error`: excluded from the output but kept in the audit.
    Errored {
        stage: Stage,
        annotator: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub screen_id: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(flatten)]
    pub outcome: UnitOutcome,
    #[serde(default)]
    pub verdicts: Vec<AnnotatorVerdict>,
}

/// Why a single annotator query produced no usable verdict.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryFailure {
    Transport(TransportError),
    /// Still unparseable after the re-prompt; carries the last response.
    Unparseable(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageError {
    pub stage: Stage,
    pub annotator: String,
    pub failure: QueryFailure,
}

impl StageError {
    fn message(&self) -> String {
        match &self.failure {
            QueryFailure::Transport(e) => e.to_string(),
            QueryFailure::Unparseable(raw) => format!("unparseable response: {raw:?}"),
        }
    }
}

/// The two independent annotators (𝒢 and 𝒬 roles) plus the shared settings
/// for querying them.
pub struct Annotators<'a> {
    pub first: &'a dyn AnnotatorClient,
    pub second: &'a dyn AnnotatorClient,
    pub prompts: &'a PromptSet,
    pub retry: RetryPolicy,
}

impl Annotators<'_> {
    fn request(
        client: &dyn AnnotatorClient,
        task: AnnotationTask,
        record: &ScreenRecord,
        bbox: BBox,
        prompt: String,
    ) -> ChatRequest {
        ChatRequest {
            model: client.model().to_string(),
            messages: vec![ChatMessage {
                image_ref: Some(record.image_ref.clone()),
                highlight: Some(Highlight::red(bbox)),
                ..ChatMessage::user(prompt)
            }],
            temperature: 0.0,
            metadata: RequestMetadata {
                task,
                screen_id: record.screen_id.clone(),
                bbox,
            },
        }
    }

    /// Asks once, re-prompts once on an unparseable answer.
    fn query<T>(
        &self,
        client: &dyn AnnotatorClient,
        mut req: ChatRequest,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<(T, String), QueryFailure> {
        let first = self
            .retry
            .call(client, &req)
            .map_err(QueryFailure::Transport)?;
        if let Some(v) = parse(&first) {
            return Ok((v, first));
        }
        tracing::debug!(annotator = client.id(), "re-prompting after unparseable answer");
        req.messages.push(ChatMessage::assistant(first));
        req.messages.push(ChatMessage::user(self.prompts.reprompt.clone()));
        let second = self
            .retry
            .call(client, &req)
            .map_err(QueryFailure::Transport)?;
        match parse(&second) {
            Some(v) => Ok((v, second)),
            None => Err(QueryFailure::Unparseable(second)),
        }
    }

    fn both<T: Send>(
        &self,
        stage: Stage,
        ask: impl Fn(&dyn AnnotatorClient) -> Result<T, QueryFailure> + Sync,
    ) -> Result<(T, T), StageError> {
        let (a, b) = rayon::join(|| ask(self.first), || ask(self.second));
        let wrap = |client: &dyn AnnotatorClient, failure| StageError {
            stage,
            annotator: client.id().to_string(),
            failure,
        };
        Ok((
            a.map_err(|f| wrap(self.first, f))?,
            b.map_err(|f| wrap(self.second, f))?,
        ))
    }

    /// Both annotators' identification verdicts, first annotator first.
    pub fn identify_verdicts(
        &self,
        record: &ScreenRecord,
        bbox: BBox,
    ) -> Result<[AnnotatorVerdict; 2], StageError> {
        let ask = |client: &dyn AnnotatorClient| {
            let prompt = self
                .prompts
                .identify_prompt(&bbox, &record.source_instruction);
            let req = Self::request(
                client,
                AnnotationTask::ToggleIdentification,
                record,
                bbox,
                prompt,
            );
            self.query(client, req, |r| self.prompts.parse_identify(r))
                .map(|(is_toggle, raw)| AnnotatorVerdict {
                    annotator_id: client.id().to_string(),
                    is_toggle,
                    state: None,
                    feature: None,
                    raw_response: raw,
                })
        };
        let (a, b) = self.both(Stage::Identify, ask)?;
        Ok([a, b])
    }

    /// Conjunction of the two identification verdicts.
    pub fn identify_toggle(&self, record: &ScreenRecord, bbox: BBox) -> Result<bool, StageError> {
        let [a, b] = self.identify_verdicts(record, bbox)?;
        Ok(a.is_toggle && b.is_toggle)
    }

    /// Both annotators' (state, feature) readings.
    pub fn state_feature_verdicts(
        &self,
        record: &ScreenRecord,
        bbox: BBox,
    ) -> Result<[AnnotatorVerdict; 2], StageError> {
        let ask = |client: &dyn AnnotatorClient| {
            let prompt = self
                .prompts
                .state_feature_prompt(&bbox, &record.source_instruction);
            let req = Self::request(client, AnnotationTask::StateFeature, record, bbox, prompt);
            self.query(client, req, |r| self.prompts.parse_state_feature(r))
                .map(|((state, feature), raw)| AnnotatorVerdict {
                    annotator_id: client.id().to_string(),
                    is_toggle: true,
                    state: Some(state),
                    feature: Some(feature),
                    raw_response: raw,
                })
        };
        let (a, b) = self.both(Stage::StateFeature, ask)?;
        Ok([a, b])
    }

    /// Retains the unit when both states are equal and both features agree.
    pub fn annotate_state_feature(
        &self,
        record: &ScreenRecord,
        bbox: BBox,
        strict_feature_match: bool,
    ) -> Result<Result<ToggleQuadruplet, DropReason>, StageError> {
        let verdicts = self.state_feature_verdicts(record, bbox)?;
        Ok(agree(record, bbox, &verdicts, strict_feature_match))
    }
}

/// The state/feature agreement rule applied to a pair of verdicts.
pub fn agree(
    record: &ScreenRecord,
    bbox: BBox,
    verdicts: &[AnnotatorVerdict; 2],
    strict_feature_match: bool,
) -> Result<ToggleQuadruplet, DropReason> {
    let [a, b] = verdicts;
    let (Some(sa), Some(sb)) = (a.state, b.state) else {
        return Err(DropReason::StateDisagreement);
    };
    if sa != sb {
        return Err(DropReason::StateDisagreement);
    }
    let fa = a.feature.as_deref().unwrap_or_default();
    let fb = b.feature.as_deref().unwrap_or_default();
    let feature = if strict_feature_match {
        (fa == fb).then(|| fa.to_string())
    } else {
        let (na, nb) = (normalize_feature(fa), normalize_feature(fb));
        (na == nb).then_some(na)
    };
    match feature {
        Some(f) if !f.is_empty() => Ok(ToggleQuadruplet {
            screen_id: record.screen_id.clone(),
            image_ref: record.image_ref.clone(),
            bbox,
            state: sa,
            feature: f,
        }),
        _ => Err(DropReason::FeatureDisagreement),
    }
}

/// Runs both stages for one unit. `Err` only for transport failures, which
/// the pipeline may treat as fatal.
fn process_unit(
    ann: &Annotators<'_>,
    record: &ScreenRecord,
    bbox: BBox,
    strict: bool,
) -> Result<UnitRecord, StageError> {
    let unit = |outcome, verdicts| UnitRecord {
        screen_id: record.screen_id.clone(),
        bbox,
        outcome,
        verdicts,
    };
    let errored = |e: StageError| UnitOutcome::Errored {
        stage: e.stage,
        annotator: e.annotator.clone(),
        message: e.message(),
    };
    let identified = match ann.identify_verdicts(record, bbox) {
        Ok(v) => v,
        Err(e) if matches!(e.failure, QueryFailure::Transport(_)) => return Err(e),
        Err(e) => return Ok(unit(errored(e), Vec::new())),
    };
    if !identified.iter().all(|v| v.is_toggle) {
        return Ok(unit(
            UnitOutcome::Dropped {
                reason: DropReason::NotToggle,
            },
            identified.to_vec(),
        ));
    }
    let verdicts = match ann.state_feature_verdicts(record, bbox) {
        Ok(v) => v,
        Err(e) if matches!(e.failure, QueryFailure::Transport(_)) => return Err(e),
        Err(e) => return Ok(unit(errored(e), identified.to_vec())),
    };
    let outcome = match agree(record, bbox, &verdicts, strict) {
        Ok(quadruplet) => UnitOutcome::Retained { quadruplet },
        Err(reason) => {
            tracing::debug!(screen = %record.screen_id, %bbox, ?reason, "annotators disagree");
            UnitOutcome::Dropped { reason }
        }
    };
    Ok(unit(outcome, verdicts.to_vec()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResumeMode {
    /// Refuses to touch an existing non-empty checkpoint.
    #[default]
    Fresh,
    /// Skips units already journaled.
    Resume,
    /// Discards any existing checkpoint.
    Restart,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub prompts: PromptSet,
    pub retry: RetryPolicy,
    pub strict_feature_match: bool,
    pub iou_cutoff: f64,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
    /// Stop after processing this many new units (the run is then incomplete).
    pub max_new_units: Option<usize>,
    /// Abort the run when a transport failure survives its retries. When
    /// false such units are journaled as annotator errors instead.
    pub fail_fast: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            prompts: PromptSet::default(),
            retry: RetryPolicy::default(),
            strict_feature_match: false,
            iou_cutoff: DEFAULT_IOU_CUTOFF,
            workers: 0,
            max_new_units: None,
            fail_fast: true,
        }
    }
}

/// Per-stage counts. Every unit ends up in exactly one bucket.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Audit {
    pub records: usize,
    /// Boxes before merging (original + parsed).
    pub candidate_boxes: usize,
    /// Units after merging; the conservation total.
    pub units: usize,
    pub identified_toggles: usize,
    pub retained: usize,
    pub dropped: BTreeMap<DropReason, usize>,
    pub errored: usize,
    /// Units not processed yet (non-zero only for an interrupted run).
    pub pending: usize,
}

impl Audit {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }

    pub fn is_conserved(&self) -> bool {
        self.units == self.retained + self.dropped_total() + self.errored + self.pending
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Sorted by (screen_id, box).
    pub quadruplets: Vec<ToggleQuadruplet>,
    /// Every processed unit, sorted by (screen_id, box).
    pub units: Vec<UnitRecord>,
    pub audit: Audit,
    pub complete: bool,
}

fn index_units<'r>(
    records: &'r [ScreenRecord],
    iou_cutoff: f64,
) -> Result<(Vec<(&'r ScreenRecord, BBox)>, usize), AnnotationError> {
    let mut seen = HashSet::new();
    let mut units = Vec::new();
    let mut candidates = 0;
    for r in records {
        if !seen.insert(r.screen_id.as_str()) {
            return Err(AnnotationError::DuplicateScreen(r.screen_id.clone()));
        }
        candidates += r.original_boxes.len() + r.parsed_boxes.len();
        units.extend(r.merged_boxes(iou_cutoff).into_iter().map(|b| (r, b)));
    }
    Ok((units, candidates))
}

fn open_checkpoint(
    path: &Path,
    mode: ResumeMode,
    known: &HashSet<(&str, BBox)>,
) -> Result<(Vec<UnitRecord>, CheckpointWriter), AnnotationError> {
    let present = checkpoint::exists(path);
    match mode {
        ResumeMode::Fresh if present => Err(AnnotationError::CheckpointExists(path.into())),
        ResumeMode::Resume if present => {
            let done = checkpoint::load(path)?;
            let mut keys = HashSet::new();
            for u in &done {
                let key = (u.screen_id.as_str(), u.bbox);
                if !known.contains(&key) {
                    return Err(AnnotationError::CheckpointMismatch {
                        path: path.into(),
                        message: format!("unknown unit {} {}", u.screen_id, u.bbox),
                    });
                }
                if !keys.insert(key) {
                    return Err(AnnotationError::CorruptCheckpoint {
                        path: path.into(),
                        message: format!("unit {} {} recorded twice", u.screen_id, u.bbox),
                    });
                }
            }
            let writer = if done.is_empty() && std::fs::metadata(path).is_ok_and(|m| m.len() == 0)
            {
                CheckpointWriter::create(path)?
            } else {
                CheckpointWriter::append(path)?
            };
            Ok((done, writer))
        }
        _ => Ok((Vec::new(), CheckpointWriter::create(path)?)),
    }
}

/// Annotates every unit of `records`.
///
/// With a checkpoint path, each finished unit is journaled before the next
/// batch starts, and [`ResumeMode::Resume`] skips journaled units, so an
/// interrupted run resumed to completion yields the same output as an
/// uninterrupted one.
pub fn run_pipeline(
    records: &[ScreenRecord],
    first: &dyn AnnotatorClient,
    second: &dyn AnnotatorClient,
    config: &PipelineConfig,
    checkpoint_path: Option<&Path>,
    mode: ResumeMode,
) -> Result<PipelineOutput, AnnotationError> {
    if !(config.iou_cutoff > 0.0 && config.iou_cutoff <= 1.0) {
        return Err(AnnotationError::Config(format!(
            "iou cutoff {} outside (0, 1]",
            config.iou_cutoff
        )));
    }
    let (units, candidate_boxes) = index_units(records, config.iou_cutoff)?;
    let known: HashSet<(&str, BBox)> = units
        .iter()
        .map(|(r, b)| (r.screen_id.as_str(), *b))
        .collect();

    let (mut done, mut writer) = match checkpoint_path {
        Some(p) => {
            let (d, w) = open_checkpoint(p, mode, &known)?;
            (d, Some(w))
        }
        None => (Vec::new(), None),
    };
    let finished: HashSet<(String, BBox)> = done
        .iter()
        .map(|u| (u.screen_id.clone(), u.bbox))
        .collect();
    let mut todo: Vec<(&ScreenRecord, BBox)> = units
        .iter()
        .filter(|(r, b)| !finished.contains(&(r.screen_id.clone(), *b)))
        .copied()
        .collect();
    let budget = config.max_new_units.unwrap_or(usize::MAX);
    let complete = todo.len() <= budget;
    todo.truncate(budget);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| AnnotationError::Config(e.to_string()))?;
    let ann = Annotators {
        first,
        second,
        prompts: &config.prompts,
        retry: config.retry,
    };
    let batch = pool.current_num_threads().max(1) * 4;
    for chunk in todo.chunks(batch) {
        let results: Vec<Result<UnitRecord, StageError>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|(r, b)| process_unit(&ann, r, *b, config.strict_feature_match))
                .collect()
        });
        for ((r, b), res) in chunk.iter().zip(results) {
            let rec = match res {
                Ok(rec) => rec,
                Err(e) if config.fail_fast => {
                    let QueryFailure::Transport(source) = e.failure else {
                        unreachable!("only transport failures escape process_unit")
                    };
                    return Err(AnnotationError::Transport {
                        screen_id: r.screen_id.clone(),
                        bbox: *b,
                        source,
                    });
                }
                Err(e) => UnitRecord {
                    screen_id: r.screen_id.clone(),
                    bbox: *b,
                    outcome: UnitOutcome::Errored {
                        stage: e.stage,
                        annotator: e.annotator.clone(),
                        message: e.message(),
                    },
                    verdicts: Vec::new(),
                },
            };
            if let Some(w) = writer.as_mut() {
                w.record(&rec)?;
            }
            done.push(rec);
        }
    }

    done.sort_by(|a, b| (&a.screen_id, a.bbox).cmp(&(&b.screen_id, b.bbox)));
    let mut audit = Audit {
        records: records.len(),
        candidate_boxes,
        units: units.len(),
        pending: units.len() - done.len(),
        ..Audit::default()
    };
    let mut quadruplets = Vec::new();
    for u in &done {
        match &u.outcome {
            UnitOutcome::Retained { quadruplet } => {
                audit.identified_toggles += 1;
                audit.retained += 1;
                quadruplets.push(quadruplet.clone());
            }
            UnitOutcome::Dropped { reason } => {
                if *reason != DropReason::NotToggle {
                    audit.identified_toggles += 1;
                }
                *audit.dropped.entry(*reason).or_default() += 1;
            }
            UnitOutcome::Errored { stage, .. } => {
                if *stage == Stage::StateFeature {
                    audit.identified_toggles += 1;
                }
                audit.errored += 1;
            }
        }
    }
    debug_assert!(audit.is_conserved());
    Ok(PipelineOutput {
        quadruplets,
        units: done,
        audit,
        complete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(a: u32, b: u32, c: u32, d: u32) -> BBox {
        BBox::new(a, b, c, d).unwrap()
    }

    fn record(id: &str, boxes: Vec<BBox>) -> ScreenRecord {
        ScreenRecord {
            screen_id: id.into(),
            image_ref: format!("{id}.png"),
            screen_dims: ScreenDims::new(1080, 2400),
            original_boxes: boxes,
            parsed_boxes: Vec::new(),
            source_dataset: "test".into(),
            source_instruction: "open settings".into(),
        }
    }

    fn quiet() -> PipelineConfig {
        PipelineConfig {
            retry: RetryPolicy::immediate(2),
            workers: 2,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn merge_examples() {
        let p = vec![bb(0, 0, 10, 10), bb(20, 20, 30, 30)];
        assert_eq!(merge_boxes(&[], &p), p);
        assert_eq!(merge_boxes(&[bb(0, 0, 10, 10)], &[bb(0, 0, 10, 10)]).len(), 1);
        // IoU 0.5: a 10x10 box against the same box widened to 10x20
        let a = bb(0, 0, 10, 10);
        let b = bb(0, 0, 10, 20);
        assert!((a.iou(&b) - 0.5).abs() < 1e-12);
        assert_eq!(merge_boxes(&[a], &[b]), vec![a, b]);
        // near-duplicate collapses to the original
        let c = bb(0, 0, 100, 100);
        let d = bb(0, 0, 100, 99);
        assert!(c.iou(&d) >= 0.9);
        assert_eq!(merge_boxes(&[c], &[d]), vec![c]);
        assert_eq!(merge_boxes(&[d], &[c]), vec![d]);
    }

    #[test]
    fn feature_normalization() {
        assert_eq!(normalize_feature("  Wi-Fi \t Calling "), "wi-fi calling");
        assert_eq!(normalize_feature("Wi-Fi"), normalize_feature("wi-fi"));
    }

    fn pair_fixture(
        s: &str,
        b: BBox,
        a: (bool, &str, &str),
        q: (bool, &str, &str),
    ) -> (ScriptedAnnotator, ScriptedAnnotator) {
        (
            ScriptedAnnotator::new("g")
                .identify(s, b, a.0)
                .state_feature(s, b, a.1, a.2),
            ScriptedAnnotator::new("q")
                .identify(s, b, q.0)
                .state_feature(s, b, q.1, q.2),
        )
    }

    #[test]
    fn identification_is_a_conjunction() {
        let b = bb(0, 0, 10, 10);
        let r = record("s", vec![b]);
        let prompts = PromptSet::default();
        for (x, y) in [(true, true), (true, false), (false, true), (false, false)] {
            let (g, q) = pair_fixture("s", b, (x, "on", "f"), (y, "on", "f"));
            let ann = Annotators {
                first: &g,
                second: &q,
                prompts: &prompts,
                retry: RetryPolicy::immediate(1),
            };
            assert_eq!(ann.identify_toggle(&r, b).unwrap(), x && y);
        }
    }

    #[test]
    fn state_feature_agreement() {
        let b = bb(0, 0, 10, 10);
        let r = record("s", vec![b]);
        let prompts = PromptSet::default();
        let run = |a: (&str, &str), q: (&str, &str), strict| {
            let (g, q) = pair_fixture("s", b, (true, a.0, a.1), (true, q.0, q.1));
            let ann = Annotators {
                first: &g,
                second: &q,
                prompts: &prompts,
                retry: RetryPolicy::immediate(1),
            };
            ann.annotate_state_feature(&r, b, strict).unwrap()
        };
        let kept = run(("on", "Wi-Fi"), ("on", "wi-fi"), false).unwrap();
        assert_eq!(kept.feature, "wi-fi");
        assert_eq!(kept.state, ToggleState::On);
        assert_eq!(
            run(("on", "Wi-Fi"), ("off", "Wi-Fi"), false),
            Err(DropReason::StateDisagreement)
        );
        assert_eq!(
            run(("on", "Bluetooth"), ("on", "Alarm"), false),
            Err(DropReason::FeatureDisagreement)
        );
        assert_eq!(
            run(("on", "Wi-Fi"), ("on", "wi-fi"), true),
            Err(DropReason::FeatureDisagreement)
        );
        assert_eq!(
            run(("off", "Wi-Fi"), ("off", "Wi-Fi"), true).unwrap().feature,
            "Wi-Fi"
        );
    }

    #[test]
    fn reprompt_then_error() {
        let b = bb(0, 0, 10, 10);
        let recs = vec![record("s", vec![b])];
        let garbage = |id: &str| {
            ScriptedAnnotator::new(id).replies(
                AnnotationTask::ToggleIdentification,
                "s",
                b,
                vec![ScriptedReply::Text("hmm".into())],
            )
        };
        // unparseable, then fixed by the re-prompt
        let g = ScriptedAnnotator::new("g")
            .replies(
                AnnotationTask::ToggleIdentification,
                "s",
                b,
                vec![
                    ScriptedReply::Text("hmm".into()),
                    ScriptedReply::Text("yes".into()),
                ],
            )
            .state_feature("s", b, "on", "Wi-Fi");
        let q = ScriptedAnnotator::new("q")
            .identify("s", b, true)
            .state_feature("s", b, "on", "Wi-Fi");
        let out = run_pipeline(&recs, &g, &q, &quiet(), None, ResumeMode::Fresh).unwrap();
        assert_eq!(out.quadruplets.len(), 1);

        let out = run_pipeline(&recs, &garbage("g"), &q, &quiet(), None, ResumeMode::Fresh)
            .unwrap();
        assert_eq!(out.audit.errored, 1);
        assert!(out.quadruplets.is_empty());
        assert!(matches!(
            &out.units[0].outcome,
            UnitOutcome::Errored { stage: Stage::Identify, annotator, .. } if annotator == "g"
        ));
        assert!(out.audit.is_conserved());
    }

    #[test]
    fn pipeline_examples() {
        let b1 = bb(0, 0, 10, 10);
        let b2 = bb(0, 100, 10, 110);
        // one box, full agreement
        let (g, q) = pair_fixture("s", b1, (true, "on", "Wi-Fi"), (true, "on", "Wi-Fi"));
        let out = run_pipeline(&[record("s", vec![b1])], &g, &q, &quiet(), None, ResumeMode::Fresh)
            .unwrap();
        assert_eq!(out.quadruplets.len(), 1);
        assert!(out.complete);

        // two boxes, identification disagreement on one
        let g = g.identify("s", b2, true);
        let q = q.identify("s", b2, false);
        let out = run_pipeline(
            &[record("s", vec![b1, b2])],
            &g,
            &q,
            &quiet(),
            None,
            ResumeMode::Fresh,
        )
        .unwrap();
        assert_eq!(out.quadruplets.len(), 1);
        assert_eq!(out.audit.dropped[&DropReason::NotToggle], 1);
        assert!(out.audit.is_conserved());

        let out = run_pipeline(&[], &g, &q, &quiet(), None, ResumeMode::Fresh).unwrap();
        assert!(out.quadruplets.is_empty());
        assert_eq!(out.audit, Audit::default());
    }

    #[test]
    fn transport_failure_policy() {
        let b = bb(0, 0, 10, 10);
        let recs = vec![record("s", vec![b])];
        let dead = ScriptedAnnotator::new("g").replies(
            AnnotationTask::ToggleIdentification,
            "s",
            b,
            vec![ScriptedReply::Fail {
                error: "connection refused".into(),
            }],
        );
        let q = ScriptedAnnotator::new("q");
        let err = run_pipeline(&recs, &dead, &q, &quiet(), None, ResumeMode::Fresh).unwrap_err();
        assert!(matches!(err, AnnotationError::Transport { .. }));

        let keep_going = PipelineConfig {
            fail_fast: false,
            ..quiet()
        };
        let out = run_pipeline(&recs, &dead, &q, &keep_going, None, ResumeMode::Fresh).unwrap();
        assert_eq!(out.audit.errored, 1);
    }

    #[test]
    fn duplicate_screens_rejected() {
        let r = record("s", vec![]);
        let g = ScriptedAnnotator::new("g");
        assert!(matches!(
            run_pipeline(&[r.clone(), r], &g, &g, &quiet(), None, ResumeMode::Fresh),
            Err(AnnotationError::DuplicateScreen(_))
        ));
    }

    #[test]
    fn checkpoint_modes() {
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("ck.jsonl");
        let b = bb(0, 0, 10, 10);
        let recs = vec![record("s", vec![b])];
        let g = ScriptedAnnotator::new("g");
        let run = |mode| run_pipeline(&recs, &g, &g, &quiet(), Some(&ck), mode);
        run(ResumeMode::Fresh).unwrap();
        assert!(matches!(
            run(ResumeMode::Fresh),
            Err(AnnotationError::CheckpointExists(_))
        ));
        let resumed = run(ResumeMode::Resume).unwrap();
        assert_eq!(resumed.units.len(), 1);
        std::fs::write(&ck, "garbage\n").unwrap();
        assert!(matches!(
            run(ResumeMode::Resume),
            Err(AnnotationError::CorruptCheckpoint { .. })
        ));
        run(ResumeMode::Restart).unwrap();
        let other = vec![record("t", vec![b])];
        assert!(matches!(
            run_pipeline(&other, &g, &g, &quiet(), Some(&ck), ResumeMode::Resume),
            Err(AnnotationError::CheckpointMismatch { .. })
        ));
    }
}
