//! State-control and agentic metric aggregation.
//!
//! Every rate is kept as an integer `hits / total` pair so the weighted
//! identities between overall and per-polarity rates can be checked exactly.
//! A bucket with no samples reports an undefined rate, never zero.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, ActionType, Point};
use crate::domain::Polarity;
use crate::matching::{click_match, match_prediction, GroundTruthStep, MatchConfig, MatchResult};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("trajectory `{0}` has no steps")]
    EmptyTrajectory(String),
    #[error("{polarity} sample must have a {expected} label, found {found}")]
    LabelPolarity {
        polarity: Polarity,
        expected: ActionType,
        found: ActionType,
    },
}

/// A fraction with its integer counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Rate {
    pub hits: u64,
    pub total: u64,
}

impl Rate {
    pub fn new(hits: u64, total: u64) -> Self {
        debug_assert!(hits <= total);
        Self { hits, total }
    }

    /// `None` when the bucket is empty.
    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }

    fn count(total: u64, hits: impl Iterator<Item = bool>) -> Self {
        Self::new(hits.filter(|h| *h).count() as u64, total)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(v) => write!(f, "{:.2}", v * 100.0),
            None => f.write_str("n/a"),
        }
    }
}

/// One state-control sample after matching.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub polarity: Polarity,
    pub gt: GroundTruthStep,
    /// `None` for a missing or unparseable prediction.
    pub pred: Option<Action>,
    pub result: MatchResult,
    /// Location of the toggle, i.e. the click the positive twin expects.
    pub positive_click_point: Point,
    /// Negative sample whose predicted CLICK lands on the toggle.
    pub hits_toggle: bool,
}

impl ScoredSample {
    pub fn score(
        polarity: Polarity,
        gt: GroundTruthStep,
        pred: Option<Action>,
        positive_click_point: Point,
        cfg: &MatchConfig,
    ) -> Result<Self, MetricsError> {
        let expected = match polarity {
            Polarity::Positive => ActionType::Click,
            Polarity::Negative => ActionType::Completed,
        };
        if gt.action.action_type() != expected {
            return Err(MetricsError::LabelPolarity {
                polarity,
                expected,
                found: gt.action.action_type(),
            });
        }
        let result = match_prediction(&gt, pred.as_ref(), cfg);
        let hits_toggle = match (polarity, pred.as_ref().and_then(Action::point)) {
            (Polarity::Negative, Some(p)) => {
                click_match(positive_click_point, &gt.layout, p, cfg).exact_match
            }
            _ => false,
        };
        Ok(Self {
            polarity,
            gt,
            pred,
            result,
            positive_click_point,
            hits_toggle,
        })
    }

    fn predicted(&self, t: ActionType) -> bool {
        self.pred.as_ref().map(Action::action_type) == Some(t)
    }
}

/// Input to [`score_samples`]: everything needed to score one sample.
#[derive(Debug, Clone)]
pub struct SampleInput {
    pub polarity: Polarity,
    pub gt: GroundTruthStep,
    pub pred: Option<Action>,
    pub positive_click_point: Point,
}

/// Scores samples in parallel; output order follows input order.
pub fn score_samples(
    inputs: Vec<SampleInput>,
    cfg: &MatchConfig,
) -> Result<Vec<ScoredSample>, MetricsError> {
    inputs
        .into_par_iter()
        .map(|i| ScoredSample::score(i.polarity, i.gt, i.pred, i.positive_click_point, cfg))
        .collect()
}

/// The eight state-control metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateControlReport {
    pub o_tmr: Rate,
    pub o_amr: Rate,
    pub p_tmr: Rate,
    pub p_amr: Rate,
    pub p_fnr: Rate,
    pub n_amr: Rate,
    pub n_fptr: Rate,
    pub n_fpr: Rate,
}

impl StateControlReport {
    pub fn positives(&self) -> u64 {
        self.p_tmr.total
    }

    pub fn negatives(&self) -> u64 {
        self.n_amr.total
    }

    /// The overall rates are the sample-weighted mix of the positive and
    /// negative rates; checked on integer counts.
    pub fn identities_hold(&self) -> bool {
        let n = self.positives() + self.negatives();
        self.o_tmr.total == n
            && self.o_amr.total == n
            && self.o_tmr.hits == self.p_tmr.hits + self.n_amr.hits
            && self.o_amr.hits == self.p_amr.hits + self.n_amr.hits
    }

    /// Metric rows in presentation order.
    pub fn rows(&self) -> [(&'static str, Rate); 8] {
        [
            ("O-TMR", self.o_tmr),
            ("O-AMR", self.o_amr),
            ("P-TMR", self.p_tmr),
            ("P-AMR", self.p_amr),
            ("P-FNR", self.p_fnr),
            ("N-AMR", self.n_amr),
            ("N-FPTR", self.n_fptr),
            ("N-FPR", self.n_fpr),
        ]
    }
}

pub fn eval_state_control(samples: &[ScoredSample]) -> Result<StateControlReport, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let (pos, neg): (Vec<&ScoredSample>, Vec<&ScoredSample>) = samples
        .iter()
        .partition(|s| s.polarity == Polarity::Positive);
    let n = samples.len() as u64;
    let np = pos.len() as u64;
    let nn = neg.len() as u64;

    let report = StateControlReport {
        o_tmr: Rate::count(n, samples.iter().map(|s| s.result.type_match)),
        o_amr: Rate::count(n, samples.iter().map(|s| s.result.exact_match)),
        p_tmr: Rate::count(np, pos.iter().map(|s| s.predicted(ActionType::Click))),
        p_amr: Rate::count(np, pos.iter().map(|s| s.result.exact_match)),
        p_fnr: Rate::count(np, pos.iter().map(|s| s.predicted(ActionType::Completed))),
        n_amr: Rate::count(nn, neg.iter().map(|s| s.predicted(ActionType::Completed))),
        n_fptr: Rate::count(nn, neg.iter().map(|s| s.predicted(ActionType::Click))),
        n_fpr: Rate::count(nn, neg.iter().map(|s| s.hits_toggle)),
    };
    debug_assert!(report.identities_hold());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredStep {
    pub step_id: String,
    pub gt: GroundTruthStep,
    pub pred: Option<Action>,
    pub result: MatchResult,
}

impl ScoredStep {
    pub fn score(
        step_id: impl Into<String>,
        gt: GroundTruthStep,
        pred: Option<Action>,
        cfg: &MatchConfig,
    ) -> Self {
        let result = match_prediction(&gt, pred.as_ref(), cfg);
        Self {
            step_id: step_id.into(),
            gt,
            pred,
            result,
        }
    }
}

/// An episode's steps in order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrajectory {
    pub episode_id: String,
    pub steps: Vec<ScoredStep>,
}

/// Step, trajectory and grounding rates for agentic benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgenticReport {
    pub tmr: Rate,
    pub amr: Rate,
    pub tsr: Rate,
    /// Exact matches among steps whose ground truth is a CLICK.
    pub gmr: Rate,
    pub step_count: u64,
    pub trajectory_count: u64,
    pub click_step_count: u64,
}

impl AgenticReport {
    pub fn rows(&self) -> [(&'static str, Rate); 4] {
        [
            ("TMR", self.tmr),
            ("AMR", self.amr),
            ("TSR", self.tsr),
            ("GMR", self.gmr),
        ]
    }
}

pub fn eval_agentic(trajectories: &[ScoredTrajectory]) -> Result<AgenticReport, MetricsError> {
    if trajectories.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(t) = trajectories.iter().find(|t| t.steps.is_empty()) {
        return Err(MetricsError::EmptyTrajectory(t.episode_id.clone()));
    }
    let steps = || trajectories.iter().flat_map(|t| t.steps.iter());
    let step_count = steps().count() as u64;
    let clicks: Vec<&ScoredStep> = steps()
        .filter(|s| s.gt.action.action_type() == ActionType::Click)
        .collect();
    let click_step_count = clicks.len() as u64;
    let trajectory_count = trajectories.len() as u64;
    Ok(AgenticReport {
        tmr: Rate::count(step_count, steps().map(|s| s.result.type_match)),
        amr: Rate::count(step_count, steps().map(|s| s.result.exact_match)),
        tsr: Rate::count(
            trajectory_count,
            trajectories
                .iter()
                .map(|t| t.steps.iter().all(|s| s.result.exact_match)),
        ),
        gmr: Rate::count(click_step_count, clicks.iter().map(|s| s.result.exact_match)),
        step_count,
        trajectory_count,
        click_step_count,
    })
}
