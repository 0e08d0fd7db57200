//! Episode loop, partial-credit scoring and suite reports.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::agents::{AgentAdapter, AgentError, AgentRequest, ObservationRenderer};
use super::tasks::{DynTask, Goal, TaskInstance};
use super::{Observation, World, WorldState, DEFAULT_BUDGET};
use crate::action::{Action, ActionGrammar, Dialect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    AgentCompleted,
    BudgetExhausted,
    /// The agent's answer did not parse, twice in a row.
    ProtocolError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub step: u32,
    pub observation: Observation,
    pub raw_action: String,
    /// `None` when the answer never parsed.
    pub action: Option<Action>,
    /// 2 when the first answer had to be retried.
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskResult {
    pub goal: Goal,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task_id: String,
    pub instruction: String,
    /// Satisfied subtasks over all subtasks.
    pub success_ratio: f64,
    pub subtasks: Vec<SubtaskResult>,
    pub steps_taken: u32,
    pub termination: Termination,
    pub initial_state: WorldState,
    pub final_state: WorldState,
    pub transcript: Vec<TranscriptEntry>,
}

/// Fraction of goals the final state satisfies, with the per-goal detail.
pub fn score_episode(goals: &[Goal], final_state: &WorldState) -> (f64, Vec<SubtaskResult>) {
    let subtasks: Vec<SubtaskResult> = goals
        .iter()
        .map(|g| SubtaskResult {
            goal: g.clone(),
            satisfied: g.satisfied(final_state),
        })
        .collect();
    let hit = subtasks.iter().filter(|s| s.satisfied).count();
    let ratio = if subtasks.is_empty() {
        0.0
    } else {
        hit as f64 / subtasks.len() as f64
    };
    (ratio, subtasks)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub budget: u32,
    pub seed: u64,
    pub dialect: Dialect,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            seed: 0,
            dialect: Dialect::Canonical,
        }
    }
}

/// Runs one episode to completion, budget exhaustion or a protocol error.
/// Transport failures abort with an error; everything else is scored.
pub fn run_episode(
    world: &World,
    agent: &mut dyn AgentAdapter,
    task: &TaskInstance,
    config: &SuiteConfig,
    renderer: Option<&dyn ObservationRenderer>,
) -> Result<EpisodeResult, AgentError> {
    agent.begin(task)?;
    let mut state = task.initial.clone();
    let mut history: Vec<String> = Vec::new();
    let mut transcript = Vec::new();
    let termination = loop {
        if state.step_count >= config.budget {
            break Termination::BudgetExhausted;
        }
        let observation = world.observe(&state, &task.instruction);
        let image_ref = renderer
            .map(|r| r.render(&task.task_id, state.step_count, &observation))
            .transpose()
            .map_err(AgentError::Transport)?;
        let mut req = AgentRequest {
            task_id: task.task_id.clone(),
            instruction: task.instruction.clone(),
            step: state.step_count,
            dialect: config.dialect,
            observation,
            history: history.clone(),
            image_ref,
            retry_reason: None,
        };
        let mut raw = agent.act(&req)?;
        let mut attempts = 1;
        let mut parsed = config.dialect.parse(&raw);
        if let Err(e) = &parsed {
            tracing::debug!(task = %task.task_id, error = %e, "retrying unparseable action");
            req.retry_reason = Some(e.to_string());
            raw = agent.act(&req)?;
            attempts = 2;
            parsed = config.dialect.parse(&raw);
        }
        let step = state.step_count;
        match parsed {
            Ok(action) => {
                let done = world.step(&mut state, &action);
                transcript.push(TranscriptEntry {
                    step,
                    observation: req.observation,
                    raw_action: raw.clone(),
                    action: Some(action),
                    attempts,
                    error: None,
                });
                history.push(raw);
                if done {
                    break Termination::AgentCompleted;
                }
            }
            Err(e) => {
                transcript.push(TranscriptEntry {
                    step,
                    observation: req.observation,
                    raw_action: raw,
                    action: None,
                    attempts,
                    error: Some(e.to_string()),
                });
                break Termination::ProtocolError;
            }
        }
    };
    let (success_ratio, subtasks) = score_episode(&task.goals, &state);
    Ok(EpisodeResult {
        task_id: task.task_id.clone(),
        instruction: task.instruction.clone(),
        success_ratio,
        subtasks,
        steps_taken: state.step_count,
        termination,
        initial_state: task.initial.clone(),
        final_state: state,
        transcript,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub agent: String,
    pub seed: u64,
    pub budget: u32,
    pub dialect: Dialect,
    pub episodes: Vec<EpisodeResult>,
}

impl SuiteReport {
    /// Sum of per-task success ratios.
    pub fn successes(&self) -> f64 {
        self.episodes.iter().map(|e| e.success_ratio).sum()
    }

    /// Mean success ratio as a percentage; `None` for an empty suite.
    pub fn rate(&self) -> Option<f64> {
        (!self.episodes.is_empty()).then(|| self.successes() * 100.0 / self.episodes.len() as f64)
    }

    pub fn summary(&self) -> String {
        format_rate(self.successes(), self.episodes.len())
    }

    /// Writes `summary.json` and one `transcripts/<task_id>.json` per episode.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let tdir = dir.join("transcripts");
        fs::create_dir_all(&tdir)?;
        for e in &self.episodes {
            let json = serde_json::to_string_pretty(e).expect("episode serializes");
            fs::write(tdir.join(format!("{}.json", e.task_id)), json + "\n")?;
        }
        let summary = serde_json::json!({
            "agent": self.agent,
            "seed": self.seed,
            "budget": self.budget,
            "dialect": self.dialect,
            "tasks": self.episodes.len(),
            "successes": self.successes(),
            "rate": self.rate(),
            "summary": self.summary(),
            "episodes": self.episodes.iter().map(|e| serde_json::json!({
                "task_id": e.task_id,
                "success_ratio": e.success_ratio,
                "steps_taken": e.steps_taken,
                "termination": e.termination,
            })).collect::<Vec<_>>(),
        });
        fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
        )
    }
}

fn trim_number(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// `rate_{k/n}`: the mean success percentage, then the summed success
/// ratios over the task count, e.g. `42.5_{8.5/20}`.
pub fn format_rate(successes: f64, total: usize) -> String {
    if total == 0 {
        return "n/a_{0/0}".into();
    }
    let rate = successes * 100.0 / total as f64;
    format!(
        "{}_{{{}/{total}}}",
        trim_number(rate),
        trim_number(successes)
    )
}

/// Runs every task once, in order, against fresh world states.
pub fn run_suite(
    agent: &mut dyn AgentAdapter,
    tasks: &[DynTask],
    config: &SuiteConfig,
    renderer: Option<&dyn ObservationRenderer>,
) -> Result<SuiteReport, AgentError> {
    let world = World::new();
    let mut episodes = Vec::with_capacity(tasks.len());
    for t in tasks {
        let inst = t.instantiate(&world, config.seed);
        episodes.push(run_episode(&world, agent, &inst, config, renderer)?);
    }
    Ok(SuiteReport {
        agent: agent.name().to_string(),
        seed: config.seed,
        budget: config.budget,
        dialect: config.dialect,
        episodes,
    })
}
