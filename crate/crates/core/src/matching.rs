//! Step-level exact action matching.
//!
//! Dispatch is on the ground-truth type:
//!
//! * `PRESS`, `COMPLETED`, `OTHER`: type equality only.
//! * `SCROLL`: type and direction.
//! * `TYPE`: type and text, both lower-cased and trimmed.
//! * `OPENAPP`: type and app name, lower-cased and stemmed per word; either
//!   name may be a substring of the other.
//! * `CLICK`: type, then the layout box holding the ground-truth point. A
//!   prediction inside that box matches outright; otherwise the relative
//!   distance must be strictly below the configured fraction of the screen.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, ActionKind, BBox, Point, NORM_MAX};

/// Click threshold for the state-control benchmark.
pub const STATE_CONTROL_THRESHOLD: f64 = 0.04;
/// Click threshold for agentic benchmarks.
pub const AGENTIC_THRESHOLD: f64 = 0.14;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("click threshold must lie strictly between 0 and 1, got {0}")]
    Threshold(f64),
    #[error("unknown click threshold `{0}` (use state-control, agentic or a fraction)")]
    UnknownPreset(String),
}

/// How the distance between two normalized points is measured, as a fraction
/// of the screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    /// `sqrt(dx^2 + dy^2)` over the unit square.
    #[default]
    Euclidean,
    /// `max(|dx|, |dy|)`, a per-axis reading of the threshold.
    Chebyshev,
}

/// Word normalizer applied to app names before substring comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StemmerId {
    /// Snowball English (Porter2) suffix stripping.
    #[default]
    SnowballEnglish,
    /// Lower-casing only.
    None,
}

impl StemmerId {
    pub fn stem(&self, word: &str) -> String {
        static ENGLISH: OnceLock<rust_stemmers::Stemmer> = OnceLock::new();
        match self {
            StemmerId::SnowballEnglish => ENGLISH
                .get_or_init(|| rust_stemmers::Stemmer::create(rust_stemmers::Algorithm::English))
                .stem(word)
                .into_owned(),
            StemmerId::None => word.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    click_threshold: f64,
    #[serde(default)]
    distance_metric: DistanceMetric,
    #[serde(default)]
    stemmer: StemmerId,
}

impl MatchConfig {
    pub fn new(click_threshold: f64) -> Result<Self, ConfigError> {
        if !(click_threshold > 0.0 && click_threshold < 1.0) {
            return Err(ConfigError::Threshold(click_threshold));
        }
        Ok(Self {
            click_threshold,
            distance_metric: DistanceMetric::default(),
            stemmer: StemmerId::default(),
        })
    }

    pub fn state_control() -> Self {
        Self::new(STATE_CONTROL_THRESHOLD).expect("preset is valid")
    }

    pub fn agentic() -> Self {
        Self::new(AGENTIC_THRESHOLD).expect("preset is valid")
    }

    pub fn with_metric(mut self, metric: DistanceMetric) -> Self {
        self.distance_metric = metric;
        self
    }

    pub fn with_stemmer(mut self, stemmer: StemmerId) -> Self {
        self.stemmer = stemmer;
        self
    }

    pub fn click_threshold(&self) -> f64 {
        self.click_threshold
    }

    pub fn distance_metric(&self) -> DistanceMetric {
        self.distance_metric
    }

    pub fn stemmer(&self) -> StemmerId {
        self.stemmer
    }
}

/// Accepts `state-control`, `agentic`, or a bare fraction such as `0.1`.
impl FromStr for MatchConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "state-control" => Ok(Self::state_control()),
            "agentic" => Ok(Self::agentic()),
            other => match other.parse::<f64>() {
                Ok(t) => Self::new(t),
                Err(_) => Err(ConfigError::UnknownPreset(other.to_string())),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MatchReason {
    TypeMismatch,
    BboxHit,
    DistancePass,
    DistanceFail,
    ParamMismatch,
    ParamPass,
}

impl fmt::Display for MatchReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::TypeMismatch => "TYPE_MISMATCH",
            Self::BboxHit => "BBOX_HIT",
            Self::DistancePass => "DISTANCE_PASS",
            Self::DistanceFail => "DISTANCE_FAIL",
            Self::ParamMismatch => "PARAM_MISMATCH",
            Self::ParamPass => "PARAM_PASS",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub type_match: bool,
    pub exact_match: bool,
    pub reason: MatchReason,
}

impl MatchResult {
    const TYPE_MISMATCH: MatchResult = MatchResult {
        type_match: false,
        exact_match: false,
        reason: MatchReason::TypeMismatch,
    };

    fn params(pass: bool) -> Self {
        MatchResult {
            type_match: true,
            exact_match: pass,
            reason: if pass {
                MatchReason::ParamPass
            } else {
                MatchReason::ParamMismatch
            },
        }
    }
}

/// A labelled step: the expected action plus the widget boxes of its screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthStep {
    pub action: Action,
    #[serde(default)]
    pub layout: Vec<BBox>,
}

impl GroundTruthStep {
    pub fn new(action: Action, layout: Vec<BBox>) -> Self {
        Self { action, layout }
    }
}

/// Scores one prediction against one ground-truth step.
pub fn match_step(gt: &GroundTruthStep, pred: &Action, cfg: &MatchConfig) -> MatchResult {
    if gt.action.action_type() != pred.action_type() {
        return MatchResult::TYPE_MISMATCH;
    }
    match (&gt.action.kind, &pred.kind) {
        (ActionKind::Click(g), ActionKind::Click(p)) => click_match(*g, &gt.layout, *p, cfg),
        (ActionKind::Scroll(g), ActionKind::Scroll(p)) => MatchResult::params(g == p),
        (ActionKind::Type(g), ActionKind::Type(p)) => MatchResult::params(type_text_match(g, p)),
        (ActionKind::OpenApp(g), ActionKind::OpenApp(p)) => {
            MatchResult::params(openapp_match_with(g, p, cfg.stemmer))
        }
        // PRESS, COMPLETED and OTHER carry no scored parameters
        _ => MatchResult::params(true),
    }
}

/// Like [`match_step`], but a missing or unparseable prediction scores as a
/// type mismatch.
pub fn match_prediction(
    gt: &GroundTruthStep,
    pred: Option<&Action>,
    cfg: &MatchConfig,
) -> MatchResult {
    match pred {
        Some(p) => match_step(gt, p, cfg),
        None => MatchResult::TYPE_MISMATCH,
    }
}

/// Relative distance between two normalized points, in screen fractions.
pub fn relative_distance(a: Point, b: Point, metric: DistanceMetric) -> f64 {
    let dx = (a.x() as f64 - b.x() as f64) / NORM_MAX as f64;
    let dy = (a.y() as f64 - b.y() as f64) / NORM_MAX as f64;
    match metric {
        DistanceMetric::Euclidean => (dx * dx + dy * dy).sqrt(),
        DistanceMetric::Chebyshev => dx.abs().max(dy.abs()),
    }
}

/// `relative_distance(a, b) < threshold`, evaluated on integer offsets so
/// boundary cases are decided exactly.
fn within_threshold(a: Point, b: Point, cfg: &MatchConfig) -> bool {
    let dx = (a.x() as i64 - b.x() as i64).unsigned_abs();
    let dy = (a.y() as i64 - b.y() as i64).unsigned_abs();
    let limit = cfg.click_threshold * NORM_MAX as f64;
    match cfg.distance_metric {
        DistanceMetric::Euclidean => ((dx * dx + dy * dy) as f64) < limit * limit,
        DistanceMetric::Chebyshev => (dx.max(dy) as f64) < limit,
    }
}

/// The smallest-area layout box containing `p`; ties go to the earlier box.
pub fn containing_box(layout: &[BBox], p: Point) -> Option<&BBox> {
    layout
        .iter()
        .filter(|b| b.contains(p))
        .min_by_key(|b| b.area())
}

/// Click correctness: box hit first, relative distance otherwise.
pub fn click_match(gt: Point, layout: &[BBox], pred: Point, cfg: &MatchConfig) -> MatchResult {
    if let Some(b) = containing_box(layout, gt) {
        if b.contains(pred) {
            return MatchResult {
                type_match: true,
                exact_match: true,
                reason: MatchReason::BboxHit,
            };
        }
    }
    let pass = within_threshold(gt, pred, cfg);
    MatchResult {
        type_match: true,
        exact_match: pass,
        reason: if pass {
            MatchReason::DistancePass
        } else {
            MatchReason::DistanceFail
        },
    }
}

/// Lower-case and trim both sides, then compare exactly. Interior whitespace
/// is left alone.
pub fn type_text_match(gt: &str, pred: &str) -> bool {
    gt.trim().to_lowercase() == pred.trim().to_lowercase()
}

/// Lower-cases, splits on whitespace, stems each word and re-joins with
/// single spaces.
pub fn normalize_app_name(name: &str, stemmer: StemmerId) -> String {
    name.to_lowercase()
        .split_whitespace()
        .map(|w| stemmer.stem(w))
        .collect::<Vec<_>>()
        .join(" ")
}

/// App-name match with the default stemmer.
pub fn openapp_match(gt: &str, pred: &str) -> bool {
    openapp_match_with(gt, pred, StemmerId::default())
}

/// True when either normalized name contains the other. An empty name only
/// matches another empty name.
pub fn openapp_match_with(gt: &str, pred: &str, stemmer: StemmerId) -> bool {
    let g = normalize_app_name(gt, stemmer);
    let p = normalize_app_name(pred, stemmer);
    if g.is_empty() || p.is_empty() {
        return g.is_empty() && p.is_empty();
    }
    g.contains(&p) || p.contains(&g)
}
