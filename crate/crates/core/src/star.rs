//! State-aware reasoning chains for training data.
//!
//! A chain has three parts: what state the toggle is in now, what state the
//! instruction asks for, and the decision that follows from comparing the
//! two (click when they differ, COMPLETED when they match).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::action::{Action, ActionGrammar, ActionType, Dialect};
use crate::builder::Sample;
use crate::domain::ToggleState;
use crate::jsonl::JsonlError;

const BUILTIN_TEMPLATES: &str = include_str!("../assets/templates/star_chain.json");

#[derive(Debug, Error)]
pub enum StarError {
    #[error("chain templates: {0}")]
    Templates(String),
    #[error("{id}: label {found} contradicts state {state} -> {desired}")]
    Inconsistent {
        id: String,
        state: ToggleState,
        desired: ToggleState,
        found: ActionType,
    },
    #[error("episode {episode_id}: toggle steps without a state/feature annotation: {}", step_ids.join(", "))]
    MissingAnnotation {
        episode_id: String,
        step_ids: Vec<String>,
    },
    #[error("episode {episode_id}: annotated steps not found: {}", step_ids.join(", "))]
    UnknownSteps {
        episode_id: String,
        step_ids: Vec<String>,
    },
    #[error("episode line {line}: {message}")]
    Episode { line: usize, message: String },
    #[error("example {id}: action text {text:?} does not round-trip under {dialect}: {message}")]
    RoundTrip {
        id: String,
        dialect: Dialect,
        text: String,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] JsonlError),
}

/// Sentence templates with `{feature}`, `{state}` and `{desired}` slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainTemplates {
    pub perceive: String,
    pub analyze: String,
    pub decide_change: String,
    pub decide_keep: String,
}

impl Default for ChainTemplates {
    fn default() -> Self {
        Self::from_json(BUILTIN_TEMPLATES).expect("builtin chain templates")
    }
}

impl ChainTemplates {
    pub fn from_json(json: &str) -> Result<Self, StarError> {
        serde_json::from_str(json).map_err(|e| StarError::Templates(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, StarError> {
        let json = fs::read_to_string(path)
            .map_err(|e| StarError::Templates(format!("{}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    fn fill(t: &str, feature: &str, state: ToggleState, desired: ToggleState) -> String {
        t.replace("{feature}", feature)
            .replace("{state}", state.as_str())
            .replace("{desired}", desired.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarChain {
    pub perceive: String,
    pub analyze: String,
    pub decide: String,
    pub final_action: Action,
}

impl StarChain {
    pub fn render(&self) -> String {
        format!(
            "Perceiving: {}\nAnalyzing: {}\nDeciding: {}",
            self.perceive, self.analyze, self.decide
        )
    }
}

/// Builds the chain for a toggle currently in `state` that should end up
/// `desired`. The action must agree: CLICK when the states differ,
/// COMPLETED when they match.
pub fn chain_for(
    id: &str,
    feature: &str,
    state: ToggleState,
    desired: ToggleState,
    action: &Action,
    templates: &ChainTemplates,
) -> Result<StarChain, StarError> {
    let expected = if state == desired {
        ActionType::Completed
    } else {
        ActionType::Click
    };
    if action.action_type() != expected {
        return Err(StarError::Inconsistent {
            id: id.to_string(),
            state,
            desired,
            found: action.action_type(),
        });
    }
    let decide = if state == desired {
        &templates.decide_keep
    } else {
        &templates.decide_change
    };
    let fill = |t: &str| ChainTemplates::fill(t, feature, state, desired);
    Ok(StarChain {
        perceive: fill(&templates.perceive),
        analyze: fill(&templates.analyze),
        decide: fill(decide),
        final_action: action.clone(),
    })
}

pub fn synth_chain(sample: &Sample, templates: &ChainTemplates) -> Result<StarChain, StarError> {
    chain_for(
        &sample.sample_id,
        &sample.feature,
        sample.toggle_state,
        sample.desired_state(),
        &sample.label_action,
        templates,
    )
}

/// Sidecar entry declaring one episode step as a toggle step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToggleStepAnnotation {
    pub episode_id: String,
    pub step_id: String,
    #[serde(default)]
    pub state: Option<ToggleState>,
    #[serde(default)]
    pub feature: Option<String>,
    /// Inferred from the step's action when absent.
    #[serde(default)]
    pub desired: Option<ToggleState>,
}

/// Sidecar entries grouped by episode, then step.
pub type ToggleSteps = BTreeMap<String, BTreeMap<String, ToggleStepAnnotation>>;

pub fn index_toggle_steps(entries: Vec<ToggleStepAnnotation>) -> ToggleSteps {
    let mut out = ToggleSteps::new();
    for e in entries {
        out.entry(e.episode_id.clone())
            .or_default()
            .insert(e.step_id.clone(), e);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub step_id: String,
    #[serde(default)]
    pub instruction: String,
    #[serde(default)]
    pub image_ref: String,
    #[serde(default)]
    pub reasoning: String,
    pub action: Action,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    pub steps: Vec<EpisodeStep>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

fn step_desired(a: &ToggleStepAnnotation, state: ToggleState, action: &Action) -> ToggleState {
    a.desired.unwrap_or(match action.action_type() {
        ActionType::Click => !state,
        _ => state,
    })
}

fn toggle_chain(
    episode: &Episode,
    step: &EpisodeStep,
    a: &ToggleStepAnnotation,
    templates: &ChainTemplates,
) -> Result<String, StarError> {
    let (Some(state), Some(feature)) = (a.state, a.feature.as_deref()) else {
        unreachable!("checked by caller")
    };
    let id = format!("{}/{}", episode.episode_id, step.step_id);
    let desired = step_desired(a, state, &step.action);
    Ok(chain_for(&id, feature, state, desired, &step.action, templates)?.render())
}

fn check_annotations(
    episode_id: &str,
    step_ids: &BTreeSet<&str>,
    annotations: &BTreeMap<String, ToggleStepAnnotation>,
) -> Result<(), StarError> {
    let unknown: Vec<String> = annotations
        .keys()
        .filter(|k| !step_ids.contains(k.as_str()))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(StarError::UnknownSteps {
            episode_id: episode_id.to_string(),
            step_ids: unknown,
        });
    }
    let missing: Vec<String> = annotations
        .values()
        .filter(|a| a.state.is_none() || a.feature.as_deref().is_none_or(|f| f.trim().is_empty()))
        .map(|a| a.step_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(StarError::MissingAnnotation {
            episode_id: episode_id.to_string(),
            step_ids: missing,
        });
    }
    Ok(())
}

/// Replaces the reasoning of annotated steps with rendered chains.
pub fn refine_episode(
    episode: &Episode,
    toggle_steps: &ToggleSteps,
    templates: &ChainTemplates,
) -> Result<Episode, StarError> {
    let Some(annotations) = toggle_steps.get(&episode.episode_id) else {
        return Ok(episode.clone());
    };
    let ids: BTreeSet<&str> = episode.steps.iter().map(|s| s.step_id.as_str()).collect();
    check_annotations(&episode.episode_id, &ids, annotations)?;
    let mut out = episode.clone();
    for step in &mut out.steps {
        if let Some(a) = annotations.get(&step.step_id) {
            step.reasoning = toggle_chain(episode, step, a, templates)?;
        }
    }
    Ok(out)
}

/// Refines one JSON line. Only the `reasoning` values of annotated steps
/// change; key order and every other value are kept, and a line without
/// annotated steps is returned untouched.
pub fn refine_line(
    line: &str,
    toggle_steps: &ToggleSteps,
    templates: &ChainTemplates,
) -> Result<String, String> {
    let episode: Episode = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let Some(annotations) = toggle_steps.get(&episode.episode_id) else {
        return Ok(line.to_string());
    };
    let refined = refine_episode(&episode, toggle_steps, templates).map_err(|e| e.to_string())?;
    let mut value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let steps = value
        .get_mut("steps")
        .and_then(Value::as_array_mut)
        .expect("validated by Episode");
    for (raw, step) in steps.iter_mut().zip(&refined.steps) {
        if annotations.contains_key(&step.step_id) {
            raw.as_object_mut()
                .expect("validated by Episode")
                .insert("reasoning".into(), Value::String(step.reasoning.clone()));
        }
    }
    Ok(serde_json::to_string(&value).expect("json value"))
}

/// Refines an episode file line by line.
pub fn refine_file(
    input: &Path,
    output: &Path,
    toggle_steps: &ToggleSteps,
    templates: &ChainTemplates,
) -> Result<usize, StarError> {
    let text = fs::read_to_string(input).map_err(|e| JsonlError::io(input, e))?;
    let mut seen = BTreeSet::new();
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let refined = refine_line(line, toggle_steps, templates).map_err(|message| {
            StarError::Episode {
                line: i + 1,
                message,
            }
        })?;
        if let Ok(ep) = serde_json::from_str::<Episode>(line) {
            seen.insert(ep.episode_id);
        }
        out.push_str(&refined);
        out.push('\n');
    }
    if let Some(id) = toggle_steps.keys().find(|k| !seen.contains(*k)) {
        return Err(StarError::UnknownSteps {
            episode_id: id.clone(),
            step_ids: toggle_steps[id].keys().cloned().collect(),
        });
    }
    if let Some(parent) = output.parent() {
        fs::create_dir_all(parent).map_err(|e| JsonlError::io(parent, e))?;
    }
    fs::write(output, out).map_err(|e| JsonlError::io(output, e))?;
    Ok(seen.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryMode {
    /// Earlier actions as text.
    TextChain,
    /// Earlier screenshots as images.
    ScreenshotChain,
    #[default]
    None,
}

impl std::str::FromStr for HistoryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text-chain" => Ok(Self::TextChain),
            "screenshot-chain" => Ok(Self::ScreenshotChain),
            "none" => Ok(Self::None),
            _ => Err(format!(
                "unknown history mode `{s}` (text-chain, screenshot-chain, none)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum History {
    None,
    TextChain { actions: Vec<String> },
    ScreenshotChain { image_refs: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub id: String,
    pub instruction: String,
    pub image_ref: String,
    pub history: History,
    pub reasoning: String,
    pub action_text: String,
    pub action: Action,
}

fn format_action(id: &str, action: &Action, dialect: Dialect) -> Result<String, StarError> {
    dialect.format(action).map_err(|e| StarError::RoundTrip {
        id: id.to_string(),
        dialect,
        text: String::new(),
        message: e.to_string(),
    })
}

/// One example per sample, reasoning from its synthesized chain. A
/// single-screen sample has no earlier steps, so its history is empty.
pub fn examples_from_samples(
    samples: &[Sample],
    templates: &ChainTemplates,
    dialect: Dialect,
    mode: HistoryMode,
) -> Result<Vec<TrainingExample>, StarError> {
    samples
        .par_iter()
        .map(|s| {
            let chain = synth_chain(s, templates)?;
            Ok(TrainingExample {
                id: s.sample_id.clone(),
                instruction: s.instruction.clone(),
                image_ref: s.image_ref.clone(),
                history: empty_history(mode),
                reasoning: chain.render(),
                action_text: format_action(&s.sample_id, &chain.final_action, dialect)?,
                action: chain.final_action,
            })
        })
        .collect()
}

fn empty_history(mode: HistoryMode) -> History {
    match mode {
        HistoryMode::None => History::None,
        HistoryMode::TextChain => History::TextChain {
            actions: Vec::new(),
        },
        HistoryMode::ScreenshotChain => History::ScreenshotChain {
            image_refs: Vec::new(),
        },
    }
}

/// One example per step; the history carries the steps before it.
pub fn examples_from_episode(
    episode: &Episode,
    dialect: Dialect,
    mode: HistoryMode,
) -> Result<Vec<TrainingExample>, StarError> {
    let mut out = Vec::with_capacity(episode.steps.len());
    let mut texts = Vec::new();
    for (i, step) in episode.steps.iter().enumerate() {
        let id = format!("{}/{}", episode.episode_id, step.step_id);
        let action_text = format_action(&id, &step.action, dialect)?;
        let history = match mode {
            HistoryMode::None => History::None,
            HistoryMode::TextChain => History::TextChain {
                actions: texts.clone(),
            },
            HistoryMode::ScreenshotChain => History::ScreenshotChain {
                image_refs: episode.steps[..i]
                    .iter()
                    .map(|s| s.image_ref.clone())
                    .collect(),
            },
        };
        texts.push(action_text.clone());
        out.push(TrainingExample {
            id,
            instruction: step.instruction.clone(),
            image_ref: step.image_ref.clone(),
            history,
            reasoning: step.reasoning.clone(),
            action_text,
            action: step.action.clone(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub role: String,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
}

/// One line of the exported training file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub dialect: Dialect,
    pub history_mode: HistoryMode,
    pub messages: Vec<ConversationTurn>,
    pub action_text: String,
}

pub fn to_conversation(ex: &TrainingExample, dialect: Dialect) -> Conversation {
    let mut prompt = format!("Task: {}", ex.instruction);
    let mut images = Vec::new();
    let history_mode = match &ex.history {
        History::None => HistoryMode::None,
        History::TextChain { actions } => {
            prompt.push_str("\nPrevious actions:");
            if actions.is_empty() {
                prompt.push_str(" none");
            }
            for (i, a) in actions.iter().enumerate() {
                prompt.push_str(&format!("\n{}. {a}", i + 1));
            }
            HistoryMode::TextChain
        }
        History::ScreenshotChain { image_refs } => {
            images.extend(image_refs.iter().cloned());
            HistoryMode::ScreenshotChain
        }
    };
    images.push(ex.image_ref.clone());
    let answer = if ex.reasoning.is_empty() {
        ex.action_text.clone()
    } else {
        format!("{}\n{}", ex.reasoning, ex.action_text)
    };
    Conversation {
        id: ex.id.clone(),
        dialect,
        history_mode,
        messages: vec![
            ConversationTurn {
                role: "user".into(),
                content: prompt,
                images,
            },
            ConversationTurn {
                role: "assistant".into(),
                content: answer,
                images: Vec::new(),
            },
        ],
        action_text: ex.action_text.clone(),
    }
}

/// Checks that `action_text` parses back to `action` for every example.
pub fn verify_round_trip(examples: &[TrainingExample], dialect: Dialect) -> Result<(), StarError> {
    for ex in examples {
        let fail = |message: String| StarError::RoundTrip {
            id: ex.id.clone(),
            dialect,
            text: ex.action_text.clone(),
            message,
        };
        match dialect.parse(&ex.action_text) {
            Ok(a) if a == ex.action => {}
            Ok(a) => return Err(fail(format!("parsed as {a}"))),
            Err(e) => return Err(fail(e.to_string())),
        }
    }
    Ok(())
}

/// Writes conversations as JSON lines after verifying the round trip; on
/// failure nothing is written.
pub fn export_training(
    examples: &[TrainingExample],
    dialect: Dialect,
    path: &Path,
) -> Result<usize, StarError> {
    verify_round_trip(examples, dialect)?;
    let mut buf = Vec::new();
    for ex in examples {
        writeln!(buf, "{}", crate::jsonl::to_line(&to_conversation(ex, dialect)))
            .expect("write to vec");
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| JsonlError::io(parent, e))?;
    }
    fs::write(path, buf).map_err(|e| JsonlError::io(path, e))?;
    Ok(examples.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{BBox, Point};
    use crate::annotation::ToggleQuadruplet;
    use crate::builder::{expand_quadruplet, Phrasing, TemplateSet};

    fn samples(state: ToggleState) -> [Sample; 2] {
        let q = ToggleQuadruplet {
            screen_id: "s".into(),
            image_ref: "s.png".into(),
            bbox: BBox::new(800, 100, 900, 140).unwrap(),
            state,
            feature: "Wi-Fi".into(),
        };
        expand_quadruplet(&q, &TemplateSet::default(), Phrasing::Default).unwrap()
    }

    #[test]
    fn chain_decisions() {
        let t = ChainTemplates::default();
        let [pos, neg] = samples(ToggleState::On);
        // "Turn on Wi-Fi" while on: keep
        let c = synth_chain(&neg, &t).unwrap();
        assert_eq!(c.final_action, Action::completed());
        assert!(c.decide.contains("COMPLETED to preserve the current state"));
        assert_eq!(c.perceive, "The Wi-Fi toggle is currently on.");
        // "Turn off Wi-Fi" while on: click
        let c = synth_chain(&pos, &t).unwrap();
        assert_eq!(c.final_action, pos.label_action);
        assert_eq!(c.final_action.point(), Some(Point::new(850, 120).unwrap()));
        assert!(c.decide.contains("click the toggle"));
        let text = c.render();
        assert!(text.starts_with("Perceiving: "));
        assert!(text.contains("\nAnalyzing: "));
        assert!(text.contains("\nDeciding: "));
    }

    #[test]
    fn inconsistent_label_rejected() {
        let [mut pos, _] = samples(ToggleState::Off);
        pos.label_action = Action::completed();
        assert!(matches!(
            synth_chain(&pos, &ChainTemplates::default()),
            Err(StarError::Inconsistent { .. })
        ));
    }

    const EPISODE: &str = r#"{"episode_id":"e1","goal":"x","steps":[{"step_id":"1","instruction":"Turn on dark theme","image_ref":"a.png","reasoning":"open settings","action":{"type":"OPENAPP","app_name":"Settings"},"extra":1.5},{"step_id":"2","instruction":"Turn on dark theme","image_ref":"b.png","reasoning":"scroll","action":{"type":"SCROLL","direction":"down"}},{"step_id":"3","instruction":"Turn on dark theme","image_ref":"c.png","reasoning":"tap it","action":{"type":"CLICK","point":[900,300]}}]}"#;

    fn annotation(step: &str, state: Option<ToggleState>) -> ToggleStepAnnotation {
        ToggleStepAnnotation {
            episode_id: "e1".into(),
            step_id: step.into(),
            state,
            feature: Some("Dark theme".into()),
            desired: None,
        }
    }

    #[test]
    fn no_toggle_steps_is_byte_identical() {
        let t = ChainTemplates::default();
        let empty = ToggleSteps::new();
        assert_eq!(refine_line(EPISODE, &empty, &t).unwrap(), EPISODE);
        let spaced = EPISODE.replace(",\"", ", \"");
        assert_eq!(refine_line(&spaced, &empty, &t).unwrap(), spaced);
    }

    #[test]
    fn one_toggle_step_changes_one_field() {
        let t = ChainTemplates::default();
        let steps = index_toggle_steps(vec![annotation("3", Some(ToggleState::Off))]);
        let out = refine_line(EPISODE, &steps, &t).unwrap();
        let a: Value = serde_json::from_str(EPISODE).unwrap();
        let b: Value = serde_json::from_str(&out).unwrap();
        let mut diffs = 0;
        for (x, y) in a["steps"]
            .as_array()
            .unwrap()
            .iter()
            .zip(b["steps"].as_array().unwrap())
        {
            for (k, v) in x.as_object().unwrap() {
                if &y[k] != v {
                    diffs += 1;
                    assert_eq!(k, "reasoning");
                }
            }
        }
        assert_eq!(diffs, 1);
        assert_eq!(a["goal"], b["goal"]);
        let refined = &b["steps"][2]["reasoning"];
        assert!(refined.as_str().unwrap().contains("click the toggle"));
        // idempotent
        assert_eq!(refine_line(&out, &steps, &t).unwrap(), out);
    }

    #[test]
    fn missing_and_unknown_annotations() {
        let t = ChainTemplates::default();
        let ep: Episode = serde_json::from_str(EPISODE).unwrap();
        let steps = index_toggle_steps(vec![annotation("3", None), annotation("2", None)]);
        match refine_episode(&ep, &steps, &t) {
            Err(StarError::MissingAnnotation { step_ids, .. }) => {
                assert_eq!(step_ids, vec!["2".to_string(), "3".to_string()])
            }
            other => panic!("{other:?}"),
        }
        let steps = index_toggle_steps(vec![annotation("9", Some(ToggleState::On))]);
        assert!(matches!(
            refine_episode(&ep, &steps, &t),
            Err(StarError::UnknownSteps { .. })
        ));
        // declared desired state contradicting the click
        let mut a = annotation("3", Some(ToggleState::On));
        a.desired = Some(ToggleState::On);
        assert!(matches!(
            refine_episode(&ep, &index_toggle_steps(vec![a]), &t),
            Err(StarError::Inconsistent { .. })
        ));
    }

    #[test]
    fn history_modes() {
        let ep: Episode = serde_json::from_str(EPISODE).unwrap();
        let ex = examples_from_episode(&ep, Dialect::Canonical, HistoryMode::TextChain).unwrap();
        assert_eq!(
            ex[2].history,
            History::TextChain {
                actions: vec![
                    "OPENAPP <app>Settings</app>".into(),
                    "SCROLL down".into()
                ]
            }
        );
        let conv = to_conversation(&ex[2], Dialect::Canonical);
        assert!(conv.messages[0].content.contains("1. OPENAPP <app>Settings</app>\n2. SCROLL down"));

        let ex =
            examples_from_episode(&ep, Dialect::Canonical, HistoryMode::ScreenshotChain).unwrap();
        let conv = to_conversation(&ex[2], Dialect::Canonical);
        assert_eq!(conv.messages[0].images, vec!["a.png", "b.png", "c.png"]);

        let [pos, _] = samples(ToggleState::On);
        let ex = examples_from_samples(
            &[pos],
            &ChainTemplates::default(),
            Dialect::Canonical,
            HistoryMode::None,
        )
        .unwrap();
        let conv = to_conversation(&ex[0], Dialect::Canonical);
        assert_eq!(conv.messages.len(), 2);
        assert!(!conv.messages[0].content.contains("Previous"));
        assert_eq!(conv.messages[0].images, vec!["s.png"]);
    }

    #[test]
    fn export_round_trip_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        let ss = samples(ToggleState::Off);
        for d in Dialect::ALL {
            let ex = examples_from_samples(&ss, &ChainTemplates::default(), d, HistoryMode::None)
                .unwrap();
            assert_eq!(export_training(&ex, d, &path).unwrap(), 2);
        }
        let mut ex = examples_from_samples(
            &ss,
            &ChainTemplates::default(),
            Dialect::Canonical,
            HistoryMode::None,
        )
        .unwrap();
        ex[1].action_text = "CLICK <point>[[1,1]]</point>".into();
        fs::remove_file(&path).unwrap();
        match export_training(&ex, Dialect::Canonical, &path) {
            Err(StarError::RoundTrip { id, .. }) => assert_eq!(id, ex[1].id),
            other => panic!("{other:?}"),
        }
        assert!(!path.exists());
    }
}
