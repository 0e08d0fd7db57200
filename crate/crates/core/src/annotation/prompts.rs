//! Prompt templates and response patterns for the two annotation questions.
//!
//! Templates are plain text with `{box}` and `{instruction}` slots. The
//! built-in set is compiled in; [`PromptSet::load_dir`] overrides any subset
//! from a directory holding `toggle_identification.txt`, `state_feature.txt`,
//! `reprompt.txt` and an optional `patterns.json`.

use std::fs;
use std::path::Path;

use regex::Regex;
use serde::Deserialize;

use super::AnnotationError;
use crate::action::BBox;
use crate::domain::ToggleState;

const IDENTIFY: &str = include_str!("../../assets/prompts/toggle_identification.txt");
const STATE_FEATURE: &str = include_str!("../../assets/prompts/state_feature.txt");
const REPROMPT: &str = include_str!("../../assets/prompts/reprompt.txt");

const IDENTIFY_PATTERN: &str = r"(?i)\b(yes|no)\b";
const STATE_PATTERN: &str = r"(?im)^\s*state\s*[:=]\s*(on|off)\b";
const FEATURE_PATTERN: &str = r"(?im)^\s*feature\s*[:=]\s*(.*\S)\s*$";

/// Optional overrides for the verdict patterns. Each pattern must have one
/// capture group.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternOverrides {
    identify: Option<String>,
    state: Option<String>,
    feature: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PromptSet {
    pub identify_template: String,
    pub state_feature_template: String,
    pub reprompt: String,
    identify_pattern: Regex,
    state_pattern: Regex,
    feature_pattern: Regex,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            identify_template: IDENTIFY.to_string(),
            state_feature_template: STATE_FEATURE.to_string(),
            reprompt: REPROMPT.to_string(),
            identify_pattern: Regex::new(IDENTIFY_PATTERN).unwrap(),
            state_pattern: Regex::new(STATE_PATTERN).unwrap(),
            feature_pattern: Regex::new(FEATURE_PATTERN).unwrap(),
        }
    }
}

fn compile(name: &str, pattern: &str) -> Result<Regex, AnnotationError> {
    let re = Regex::new(pattern)
        .map_err(|e| AnnotationError::Prompt(format!("pattern `{name}`: {e}")))?;
    if re.captures_len() < 2 {
        return Err(AnnotationError::Prompt(format!(
            "pattern `{name}` needs a capture group"
        )));
    }
    Ok(re)
}

impl PromptSet {
    pub fn load_dir(dir: &Path) -> Result<Self, AnnotationError> {
        let mut set = Self::default();
        let read = |name: &str| -> Result<Option<String>, AnnotationError> {
            let path = dir.join(name);
            if !path.exists() {
                return Ok(None);
            }
            fs::read_to_string(&path)
                .map(Some)
                .map_err(|e| AnnotationError::Prompt(format!("{}: {e}", path.display())))
        };
        if let Some(t) = read("toggle_identification.txt")? {
            set.identify_template = t;
        }
        if let Some(t) = read("state_feature.txt")? {
            set.state_feature_template = t;
        }
        if let Some(t) = read("reprompt.txt")? {
            set.reprompt = t;
        }
        if let Some(json) = read("patterns.json")? {
            let o: PatternOverrides = serde_json::from_str(&json)
                .map_err(|e| AnnotationError::Prompt(format!("patterns.json: {e}")))?;
            if let Some(p) = o.identify {
                set.identify_pattern = compile("identify", &p)?;
            }
            if let Some(p) = o.state {
                set.state_pattern = compile("state", &p)?;
            }
            if let Some(p) = o.feature {
                set.feature_pattern = compile("feature", &p)?;
            }
        }
        Ok(set)
    }

    fn fill(template: &str, bbox: &BBox, instruction: &str) -> String {
        template
            .replace("{box}", &bbox.to_string())
            .replace("{instruction}", instruction)
    }

    pub fn identify_prompt(&self, bbox: &BBox, instruction: &str) -> String {
        Self::fill(&self.identify_template, bbox, instruction)
    }

    pub fn state_feature_prompt(&self, bbox: &BBox, instruction: &str) -> String {
        Self::fill(&self.state_feature_template, bbox, instruction)
    }

    /// First yes/no token in the response.
    pub fn parse_identify(&self, response: &str) -> Option<bool> {
        let caps = self.identify_pattern.captures(response)?;
        match caps.get(1)?.as_str().to_ascii_lowercase().as_str() {
            "yes" | "true" | "1" => Some(true),
            "no" | "false" | "0" => Some(false),
            _ => None,
        }
    }

    pub fn parse_state_feature(&self, response: &str) -> Option<(ToggleState, String)> {
        let state = self
            .state_pattern
            .captures(response)
            .and_then(|c| ToggleState::parse(c.get(1)?.as_str()))?;
        let feature = self
            .feature_pattern
            .captures(response)?
            .get(1)?
            .as_str()
            .trim()
            .trim_matches('"')
            .to_string();
        if feature.is_empty() {
            return None;
        }
        Some((state, feature))
    }
}
