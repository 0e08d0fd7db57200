//! Agent output dialects.
//!
//! Every dialect turns a raw agent string into an [`Action`] and back. The
//! canonical grammar (surrounding whitespace is ignored, verbs are
//! case-insensitive):
//!
//! ```text
//! CLICK <point>[[x,y]]</point>      x, y integers in [0,1000]
//! COMPLETED
//! SCROLL up|down|left|right
//! TYPE <text>...</text>             everything between the outer tags
//! OPENAPP <app>...</app>
//! PRESS [key]                       key: [A-Za-z0-9_]+
//! VERB [anything]                   any other identifier -> OTHER
//! ```
//!
//! `atlas` and `cpm` are illustrative approximations of two published agent
//! output styles (bracketed verbs, and a JSON object respectively). They are
//! not claimed to be byte-compatible with those agents.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::{Action, ActionKind, ActionType, Direction, Point};

/// Structured parse failure. Scoring treats it as a non-match.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{dialect}: {message} at byte {offset} in {raw:?}")]
pub struct ParseError {
    pub dialect: &'static str,
    pub offset: usize,
    pub message: String,
    pub raw: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DialectError {
    #[error("dialect `{dialect}` cannot express {action_type} action {detail}")]
    Unsupported {
        dialect: &'static str,
        action_type: ActionType,
        detail: String,
    },
    #[error("unknown dialect `{0}` (known: canonical, atlas, cpm)")]
    Unknown(String),
}

/// A parse/format rule set for one agent output style.
pub trait ActionGrammar {
    fn name(&self) -> &'static str;

    /// Types this grammar can express. Round-trip holds for all of them.
    fn supported_types(&self) -> &'static [ActionType];

    fn parse(&self, raw: &str) -> Result<Action, ParseError>;

    fn format(&self, action: &Action) -> Result<String, DialectError>;
}

/// The built-in dialects, selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    #[default]
    Canonical,
    Atlas,
    Cpm,
}

impl Dialect {
    pub const ALL: [Dialect; 3] = [Dialect::Canonical, Dialect::Atlas, Dialect::Cpm];

    fn grammar(&self) -> &'static dyn ActionGrammar {
        match self {
            Dialect::Canonical => &CanonicalGrammar,
            Dialect::Atlas => &AtlasGrammar,
            Dialect::Cpm => &CpmGrammar,
        }
    }
}

impl ActionGrammar for Dialect {
    fn name(&self) -> &'static str {
        self.grammar().name()
    }

    fn supported_types(&self) -> &'static [ActionType] {
        self.grammar().supported_types()
    }

    fn parse(&self, raw: &str) -> Result<Action, ParseError> {
        self.grammar().parse(raw)
    }

    fn format(&self, action: &Action) -> Result<String, DialectError> {
        self.grammar().format(action)
    }
}

impl FromStr for Dialect {
    type Err = DialectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dialect::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DialectError::Unknown(s.to_string()))
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const ALL_TYPES: &[ActionType] = &[
    ActionType::Click,
    ActionType::Completed,
    ActionType::Scroll,
    ActionType::Type,
    ActionType::OpenApp,
    ActionType::Press,
    ActionType::Other,
];

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_key(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Byte-offset-tracking view over the raw input.
struct Cursor<'a> {
    dialect: &'static str,
    raw: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(dialect: &'static str, raw: &'a str) -> Self {
        Self {
            dialect,
            raw,
            pos: 0,
        }
    }

    fn rest(&self) -> &'a str {
        &self.raw[self.pos..]
    }

    fn error(&self, at: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            dialect: self.dialect,
            offset: at,
            message: message.into(),
            raw: self.raw.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    /// Leading identifier, if any.
    fn verb(&mut self) -> Result<&'a str, ParseError> {
        let rest = self.rest();
        let len = rest
            .char_indices()
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        let verb = &rest[..len];
        if !is_identifier(verb) {
            return Err(self.error(self.pos, "expected an action verb"));
        }
        self.pos += len;
        Ok(verb)
    }

    fn expect(&mut self, lit: &str) -> Result<(), ParseError> {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            Ok(())
        } else {
            Err(self.error(self.pos, format!("expected `{lit}`")))
        }
    }

    fn integer(&mut self) -> Result<u32, ParseError> {
        let rest = self.rest();
        let len = rest
            .char_indices()
            .find(|(_, c)| !c.is_ascii_digit())
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        let start = self.pos;
        let v = rest[..len]
            .parse::<u32>()
            .map_err(|_| self.error(start, "expected an integer coordinate"))?;
        self.pos += len;
        Ok(v)
    }

    /// `[[x,y]]`, whitespace allowed around the numbers.
    fn point_pair(&mut self) -> Result<Point, ParseError> {
        let start = self.pos;
        self.expect("[[")?;
        self.skip_ws();
        let x = self.integer()?;
        self.skip_ws();
        self.expect(",")?;
        self.skip_ws();
        let y = self.integer()?;
        self.skip_ws();
        self.expect("]]")?;
        Point::new(x, y).map_err(|e| self.error(start, e.to_string()))
    }

    fn at_end(&self) -> bool {
        self.pos == self.raw.len()
    }

    fn expect_end(&self, what: &str) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error(self.pos, format!("unexpected trailing input after {what}")))
        }
    }

    /// Content of `open ... close` where `close` must end the input.
    fn enclosed(&mut self, open: &str, close: &str) -> Result<&'a str, ParseError> {
        self.expect(open)?;
        let rest = self.rest();
        match rest.strip_suffix(close) {
            Some(inner) => {
                self.pos = self.raw.len();
                Ok(inner)
            }
            None => Err(self.error(self.raw.len(), format!("expected closing `{close}`"))),
        }
    }
}

/// Restricts the cursor to the trimmed input while keeping offsets relative
/// to the original string.
fn trimmed_cursor<'a>(dialect: &'static str, raw: &'a str) -> Cursor<'a> {
    let lead = raw.len() - raw.trim_start().len();
    let end = raw.trim_end().len().max(lead);
    let mut c = Cursor::new(dialect, &raw[..end]);
    c.pos = lead;
    c
}

fn finish(raw: &str, kind: ActionKind) -> Action {
    Action {
        kind,
        raw: raw.to_string(),
    }
}

fn unsupported(dialect: &'static str, action: &Action, detail: impl Into<String>) -> DialectError {
    DialectError::Unsupported {
        dialect,
        action_type: action.action_type(),
        detail: detail.into(),
    }
}

const CANONICAL_VERBS: &[&str] = &["CLICK", "COMPLETED", "SCROLL", "TYPE", "OPENAPP", "PRESS"];

pub struct CanonicalGrammar;

impl ActionGrammar for CanonicalGrammar {
    fn name(&self) -> &'static str {
        "canonical"
    }

    fn supported_types(&self) -> &'static [ActionType] {
        ALL_TYPES
    }

    fn parse(&self, raw: &str) -> Result<Action, ParseError> {
        let mut c = trimmed_cursor(self.name(), raw);
        let c_err_raw = |e: ParseError| ParseError {
            raw: raw.to_string(),
            ..e
        };
        let verb = c.verb().map_err(c_err_raw)?.to_ascii_uppercase();
        let kind = match verb.as_str() {
            "COMPLETED" => {
                c.expect_end("COMPLETED").map_err(c_err_raw)?;
                ActionKind::Completed
            }
            "CLICK" => {
                c.skip_ws();
                c.expect("<point>").map_err(c_err_raw)?;
                let p = c.point_pair().map_err(c_err_raw)?;
                c.expect("</point>").map_err(c_err_raw)?;
                c.expect_end("CLICK").map_err(c_err_raw)?;
                ActionKind::Click(p)
            }
            "SCROLL" => {
                c.skip_ws();
                let at = c.pos;
                let word = c.rest();
                let d = Direction::parse(word).ok_or_else(|| {
                    c_err_raw(c.error(at, "expected scroll direction up|down|left|right"))
                })?;
                ActionKind::Scroll(d)
            }
            "TYPE" => {
                c.skip_ws();
                ActionKind::Type(c.enclosed("<text>", "</text>").map_err(c_err_raw)?.into())
            }
            "OPENAPP" => {
                c.skip_ws();
                ActionKind::OpenApp(c.enclosed("<app>", "</app>").map_err(c_err_raw)?.into())
            }
            "PRESS" => {
                c.skip_ws();
                let at = c.pos;
                let key = c.rest();
                if key.is_empty() {
                    ActionKind::Press(None)
                } else if is_key(key) {
                    ActionKind::Press(Some(key.to_string()))
                } else {
                    return Err(c_err_raw(c.error(at, "expected a key name")));
                }
            }
            _ => {
                if !(c.at_end() || c.rest().starts_with(char::is_whitespace)) {
                    return Err(c_err_raw(c.error(c.pos, "malformed verb")));
                }
                ActionKind::Other(verb)
            }
        };
        Ok(finish(raw, kind))
    }

    fn format(&self, action: &Action) -> Result<String, DialectError> {
        Ok(match &action.kind {
            ActionKind::Click(p) => format!("CLICK <point>[[{},{}]]</point>", p.x(), p.y()),
            ActionKind::Completed => "COMPLETED".to_string(),
            ActionKind::Scroll(d) => format!("SCROLL {}", d.as_str()),
            ActionKind::Type(t) => format!("TYPE <text>{t}</text>"),
            ActionKind::OpenApp(n) => format!("OPENAPP <app>{n}</app>"),
            ActionKind::Press(None) => "PRESS".to_string(),
            ActionKind::Press(Some(k)) if is_key(k) => format!("PRESS {k}"),
            ActionKind::Press(Some(k)) => {
                return Err(unsupported(self.name(), action, format!("key {k:?}")))
            }
            ActionKind::Other(v) if is_identifier(v) && !CANONICAL_VERBS.contains(&v.as_str()) => {
                v.clone()
            }
            ActionKind::Other(v) => {
                return Err(unsupported(self.name(), action, format!("verb {v:?}")))
            }
        })
    }
}

pub struct AtlasGrammar;

const ATLAS_VERBS: &[&str] = &[
    "CLICK", "COMPLETE", "COMPLETED", "SCROLL", "TYPE", "OPEN_APP", "ENTER", "PRESS",
];

impl AtlasGrammar {
    fn parse_body(&self, raw: &str, body: &str, base: usize) -> Result<Action, ParseError> {
        let shift = |e: ParseError| ParseError {
            offset: e.offset + base,
            raw: raw.to_string(),
            ..e
        };
        let mut c = trimmed_cursor(self.name(), body);
        let verb = c.verb().map_err(shift)?.to_ascii_uppercase();
        let bracketed = |c: &mut Cursor| -> Result<String, ParseError> {
            c.skip_ws();
            c.enclosed("[", "]").map(str::to_string)
        };
        let kind = match verb.as_str() {
            "COMPLETE" | "COMPLETED" => {
                c.expect_end("COMPLETE").map_err(shift)?;
                ActionKind::Completed
            }
            "CLICK" => {
                c.skip_ws();
                c.expect("<point>").map_err(shift)?;
                let p = c.point_pair().map_err(shift)?;
                c.expect("</point>").map_err(shift)?;
                c.expect_end("CLICK").map_err(shift)?;
                ActionKind::Click(p)
            }
            "SCROLL" => {
                let at = c.pos;
                let word = bracketed(&mut c).map_err(shift)?;
                let d = Direction::parse(&word)
                    .ok_or_else(|| shift(c.error(at, "expected [UP|DOWN|LEFT|RIGHT]")))?;
                ActionKind::Scroll(d)
            }
            "TYPE" => ActionKind::Type(bracketed(&mut c).map_err(shift)?),
            "OPEN_APP" => ActionKind::OpenApp(bracketed(&mut c).map_err(shift)?),
            "ENTER" => {
                c.expect_end("ENTER").map_err(shift)?;
                ActionKind::Press(Some("enter".into()))
            }
            "PRESS" => {
                c.expect_end("PRESS").map_err(shift)?;
                ActionKind::Press(None)
            }
            v if v.starts_with("PRESS_") && v.len() > "PRESS_".len() => {
                c.expect_end("PRESS").map_err(shift)?;
                ActionKind::Press(Some(v["PRESS_".len()..].to_ascii_lowercase()))
            }
            _ => {
                if !(c.at_end() || c.rest().starts_with(char::is_whitespace)) {
                    return Err(shift(c.error(c.pos, "malformed verb")));
                }
                ActionKind::Other(verb)
            }
        };
        Ok(finish(raw, kind))
    }
}

impl ActionGrammar for AtlasGrammar {
    fn name(&self) -> &'static str {
        "atlas"
    }

    fn supported_types(&self) -> &'static [ActionType] {
        ALL_TYPES
    }

    fn parse(&self, raw: &str) -> Result<Action, ParseError> {
        match self.parse_body(raw, raw, 0) {
            Ok(a) => Ok(a),
            // agents in this style often prefix a `thoughts:` block; the
            // action then follows the last `actions:` marker
            Err(e) => match raw.rfind("actions:") {
                Some(i) => {
                    let base = i + "actions:".len();
                    self.parse_body(raw, &raw[base..], base)
                }
                None => Err(e),
            },
        }
    }
    fn format(&self, action: &Action) -> Result<String, DialectError> {
        Ok(match &action.kind {
            ActionKind::Click(p) => format!("CLICK <point>[[{},{}]]</point>", p.x(), p.y()),
            ActionKind::Completed => "COMPLETE".to_string(),
            ActionKind::Scroll(d) => format!("SCROLL [{}]", d.as_str().to_ascii_uppercase()),
            ActionKind::Type(t) => format!("TYPE [{t}]"),
            ActionKind::OpenApp(n) => format!("OPEN_APP [{n}]"),
            ActionKind::Press(None) => "PRESS".to_string(),
            ActionKind::Press(Some(k)) if is_key(k) && k.to_ascii_lowercase() == *k => {
                format!("PRESS_{}", k.to_ascii_uppercase())
            }
            ActionKind::Press(Some(k)) => {
                return Err(unsupported(self.name(), action, format!("key {k:?}")))
            }
            ActionKind::Other(v)
                if is_identifier(v)
                    && !ATLAS_VERBS.contains(&v.as_str())
                    && !v.starts_with("PRESS_") =>
            {
                v.clone()
            }
            ActionKind::Other(v) => {
                return Err(unsupported(self.name(), action, format!("verb {v:?}")))
            }
        })
    }
}

pub struct CpmGrammar;

const CPM_KEYS: &[&str] = &["POINT", "TO", "TYPE", "PRESS", "STATUS", "OPEN_APP", "THOUGHT"];

const CPM_TYPES: &[ActionType] = &[
    ActionType::Click,
    ActionType::Completed,
    ActionType::Scroll,
    ActionType::Type,
    ActionType::OpenApp,
    ActionType::Other,
];

impl CpmGrammar {
    fn json_offset(raw: &str, e: &serde_json::Error) -> usize {
        // serde_json reports 1-based line/column
        let mut offset = 0;
        for (i, line) in raw.split_inclusive('\n').enumerate() {
            if i + 1 == e.line() {
                return (offset + e.column().saturating_sub(1)).min(raw.len());
            }
            offset += line.len();
        }
        raw.len()
    }
}

impl ActionGrammar for CpmGrammar {
    fn name(&self) -> &'static str {
        "cpm"
    }

    fn supported_types(&self) -> &'static [ActionType] {
        CPM_TYPES
    }

    fn parse(&self, raw: &str) -> Result<Action, ParseError> {
        let err = |offset, message: String| ParseError {
            dialect: "cpm",
            offset,
            message,
            raw: raw.to_string(),
        };
        let value: Value = serde_json::from_str(raw)
            .map_err(|e| err(Self::json_offset(raw, &e), format!("invalid JSON: {e}")))?;
        let obj = match value {
            Value::Object(obj) => obj,
            _ => return Err(err(0, "expected a JSON object".into())),
        };
        let get = |k: &str| obj.iter().find(|(key, _)| key.eq_ignore_ascii_case(k));
        let as_str = |k: &str| -> Result<Option<String>, ParseError> {
            match get(k) {
                None => Ok(None),
                Some((_, Value::String(s))) => Ok(Some(s.clone())),
                Some(_) => Err(err(0, format!("`{k}` must be a string"))),
            }
        };

        let kind = if let Some(dir) = as_str("to")? {
            let d = Direction::parse(&dir)
                .ok_or_else(|| err(0, format!("unknown scroll direction {dir:?}")))?;
            ActionKind::Scroll(d)
        } else if let Some((_, point)) = get("POINT") {
            let coords: Vec<u32> = serde_json::from_value(point.clone())
                .map_err(|_| err(0, "`POINT` must be [x, y]".into()))?;
            let [x, y] = coords[..] else {
                return Err(err(0, "`POINT` must be [x, y]".into()));
            };
            ActionKind::Click(Point::new(x, y).map_err(|e| err(0, e.to_string()))?)
        } else if let Some(text) = as_str("TYPE")? {
            ActionKind::Type(text)
        } else if let Some(name) = as_str("OPEN_APP")? {
            ActionKind::OpenApp(name)
        } else if let Some(key) = as_str("PRESS")? {
            if !is_key(&key) {
                return Err(err(0, format!("bad key {key:?}")));
            }
            ActionKind::Press(Some(key.to_ascii_lowercase()))
        } else if let Some(status) = as_str("STATUS")? {
            if status.eq_ignore_ascii_case("finish") {
                ActionKind::Completed
            } else {
                ActionKind::Other("STATUS".into())
            }
        } else {
            let verb = obj
                .keys()
                .find(|k| !k.eq_ignore_ascii_case("thought"))
                .ok_or_else(|| err(0, "object carries no action".into()))?;
            if !is_identifier(verb) {
                return Err(err(0, format!("malformed action key {verb:?}")));
            }
            ActionKind::Other(verb.to_ascii_uppercase())
        };
        Ok(finish(raw, kind))
    }

    fn format(&self, action: &Action) -> Result<String, DialectError> {
        let mut obj = Map::new();
        match &action.kind {
            ActionKind::Click(p) => {
                obj.insert("POINT".into(), serde_json::json!([p.x(), p.y()]));
            }
            ActionKind::Completed => {
                obj.insert("STATUS".into(), "finish".into());
            }
            ActionKind::Scroll(d) => {
                obj.insert("POINT".into(), serde_json::json!([500, 500]));
                obj.insert("to".into(), d.as_str().into());
            }
            ActionKind::Type(t) => {
                obj.insert("TYPE".into(), t.clone().into());
            }
            ActionKind::OpenApp(n) => {
                obj.insert("OPEN_APP".into(), n.clone().into());
            }
            ActionKind::Press(_) => {
                return Err(unsupported(self.name(), action, "(no PRESS round-trip)"))
            }
            ActionKind::Other(v)
                if is_identifier(v) && !CPM_KEYS.contains(&v.to_ascii_uppercase().as_str()) =>
            {
                obj.insert(v.clone(), Value::Null);
            }
            ActionKind::Other(v) => {
                return Err(unsupported(self.name(), action, format!("verb {v:?}")))
            }
        }
        Ok(Value::Object(obj).to_string())
    }
}
