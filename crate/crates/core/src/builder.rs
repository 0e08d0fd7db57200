//! Expansion of agreed toggle records into instruction samples, and the
//! train/test split.
//!
//! Each quadruplet yields one positive sample (the instruction asks for the
//! opposite state, labelled CLICK at the toggle center) and one negative
//! sample (the instruction asks for the current state, labelled COMPLETED).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::{Action, BBox, Point};
use crate::annotation::ToggleQuadruplet;
use crate::domain::{Polarity, ToggleState};
use crate::matching::GroundTruthStep;

pub const DEFAULT_RATIO: f64 = 0.9;

const BUILTIN_TEMPLATES: &str = include_str!("../assets/templates/instructions.json");

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("quadruplet {screen_id} {bbox} has an empty feature")]
    EmptyFeature { screen_id: String, bbox: BBox },
    #[error("split ratio {0} outside (0, 1)")]
    Ratio(f64),
    #[error("templates: {0}")]
    Templates(String),
    #[error("sample pair {0} is incomplete or duplicated")]
    Unpaired(String),
}

/// Instruction phrasings. The first entry of each list is the default; the
/// others are only used when paraphrasing is enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSet {
    pub turn_on: Vec<String>,
    pub turn_off: Vec<String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::from_json(BUILTIN_TEMPLATES).expect("builtin templates")
    }
}

impl TemplateSet {
    pub fn from_json(json: &str) -> Result<Self, BuildError> {
        let set: Self =
            serde_json::from_str(json).map_err(|e| BuildError::Templates(e.to_string()))?;
        for (name, list) in [("turn_on", &set.turn_on), ("turn_off", &set.turn_off)] {
            if list.is_empty() {
                return Err(BuildError::Templates(format!("`{name}` is empty")));
            }
            if let Some(t) = list.iter().find(|t| !t.contains("{feature}")) {
                return Err(BuildError::Templates(format!(
                    "`{name}` template {t:?} lacks {{feature}}"
                )));
            }
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, BuildError> {
        let json = fs::read_to_string(path)
            .map_err(|e| BuildError::Templates(format!("{}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    fn list(&self, target: ToggleState) -> &[String] {
        match target {
            ToggleState::On => &self.turn_on,
            ToggleState::Off => &self.turn_off,
        }
    }
}

/// How instruction text is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Phrasing {
    #[default]
    Default,
    /// Template picked per sample by a seeded hash of its id.
    Paraphrase { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub screen_id: String,
    pub image_ref: String,
    pub polarity: Polarity,
    pub instruction: String,
    pub label_action: Action,
    pub toggle_box: BBox,
    pub toggle_state: ToggleState,
    pub feature: String,
    /// Widget boxes used for click matching; the toggle box alone when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layout: Vec<BBox>,
}

impl Sample {
    /// Key shared by the two samples of one quadruplet.
    pub fn pair_key(&self) -> String {
        pair_key(&self.screen_id, &self.toggle_box)
    }

    pub fn toggle_center(&self) -> Point {
        self.toggle_box.center()
    }

    pub fn ground_truth(&self) -> GroundTruthStep {
        let layout = if self.layout.is_empty() {
            vec![self.toggle_box]
        } else {
            self.layout.clone()
        };
        GroundTruthStep {
            action: self.label_action.clone(),
            layout,
        }
    }

    /// The state the instruction asks for.
    pub fn desired_state(&self) -> ToggleState {
        self.polarity.desired_state(self.toggle_state)
    }
}

fn pair_key(screen_id: &str, bbox: &BBox) -> String {
    format!("{screen_id}:{bbox}")
}

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn instruction(
    templates: &TemplateSet,
    target: ToggleState,
    feature: &str,
    sample_id: &str,
    phrasing: Phrasing,
) -> String {
    let list = templates.list(target);
    let idx = match phrasing {
        Phrasing::Default => 0,
        Phrasing::Paraphrase { seed } => {
            let d = digest(&[&seed.to_le_bytes(), sample_id.as_bytes()]);
            let v = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
            (v % list.len() as u64) as usize
        }
    };
    list[idx].replace("{feature}", feature)
}

/// The positive and negative sample for one quadruplet, positive first.
pub fn expand_quadruplet(
    q: &ToggleQuadruplet,
    templates: &TemplateSet,
    phrasing: Phrasing,
) -> Result<[Sample; 2], BuildError> {
    let feature = q.feature.trim();
    if feature.is_empty() {
        return Err(BuildError::EmptyFeature {
            screen_id: q.screen_id.clone(),
            bbox: q.bbox,
        });
    }
    let key = pair_key(&q.screen_id, &q.bbox);
    let make = |polarity: Polarity, label_action: Action| {
        let sample_id = format!(
            "{key}:{}",
            match polarity {
                Polarity::Positive => "pos",
                Polarity::Negative => "neg",
            }
        );
        let target = polarity.desired_state(q.state);
        Sample {
            instruction: instruction(templates, target, feature, &sample_id, phrasing),
            sample_id,
            screen_id: q.screen_id.clone(),
            image_ref: q.image_ref.clone(),
            polarity,
            label_action,
            toggle_box: q.bbox,
            toggle_state: q.state,
            feature: feature.to_string(),
            layout: Vec::new(),
        }
    };
    Ok([
        make(Polarity::Positive, Action::click(q.bbox.center())),
        make(Polarity::Negative, Action::completed()),
    ])
}

#[derive(Debug)]
pub struct Expansion {
    /// Positive/negative pairs, in input order.
    pub samples: Vec<Sample>,
    pub rejected: Vec<(ToggleQuadruplet, BuildError)>,
}

/// Expands every quadruplet; rejected ones are reported, not fatal.
pub fn expand_all(
    quads: &[ToggleQuadruplet],
    templates: &TemplateSet,
    phrasing: Phrasing,
) -> Expansion {
    let results: Vec<_> = quads
        .par_iter()
        .map(|q| expand_quadruplet(q, templates, phrasing))
        .collect();
    let mut samples = Vec::with_capacity(quads.len() * 2);
    let mut rejected = Vec::new();
    for (q, r) in quads.iter().zip(results) {
        match r {
            Ok(pair) => samples.extend(pair),
            Err(e) => rejected.push((q.clone(), e)),
        }
    }
    Expansion { samples, rejected }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratio: f64,
    /// Screen ids assigned to the training split.
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
}

impl SplitManifest {
    pub fn is_train(&self, sample: &Sample) -> bool {
        self.train_ids.contains(&sample.screen_id)
    }

    /// Partitions samples, preserving order within each side.
    pub fn assign<'a>(&self, samples: &'a [Sample]) -> (Vec<&'a Sample>, Vec<&'a Sample>) {
        samples.iter().partition(|s| self.is_train(s))
    }
}

fn check_pairs(samples: &[Sample]) -> Result<(), BuildError> {
    let mut seen: BTreeMap<String, [u32; 2]> = BTreeMap::new();
    for s in samples {
        let slot = match s.polarity {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
        };
        seen.entry(s.pair_key()).or_default()[slot] += 1;
    }
    match seen.into_iter().find(|(_, c)| *c != [1, 1]) {
        Some((key, _)) => Err(BuildError::Unpaired(key)),
        None => Ok(()),
    }
}

/// Seeded hash split over screen ids.
///
/// Screens are ordered by `sha256(seed, screen_id)` and the first
/// `round(ratio * screens)` go to training. Keeping whole screens together
/// keeps every positive/negative pair together, so both sides are exactly
/// balanced.
pub fn split_dataset(samples: &[Sample], seed: u64, ratio: f64) -> Result<SplitManifest, BuildError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(BuildError::Ratio(ratio));
    }
    check_pairs(samples)?;
    let screens: BTreeSet<&str> = samples.iter().map(|s| s.screen_id.as_str()).collect();
    let mut keyed: Vec<([u8; 32], &str)> = screens
        .into_iter()
        .map(|k| (digest(&[&seed.to_le_bytes(), k.as_bytes()]), k))
        .collect();
    keyed.sort_unstable();
    let n_train = (ratio * keyed.len() as f64).round() as usize;
    let (train, test) = keyed.split_at(n_train);
    Ok(SplitManifest {
        seed,
        ratio,
        train_ids: train.iter().map(|(_, k)| k.to_string()).collect(),
        test_ids: test.iter().map(|(_, k)| k.to_string()).collect(),
    })
}
