//! Canonical action model shared by scoring, synthesis and simulation.
//!
//! Coordinates live in a normalized integer space: both axes run from 0 to
//! [`NORM_MAX`] regardless of the physical screen size. Agent outputs are
//! turned into [`Action`] values by a [`Dialect`]; see [`dialect`] for the
//! grammars that ship with the crate.

pub mod dialect;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dialect::{ActionGrammar, Dialect, DialectError, ParseError};

/// Upper bound of the normalized coordinate space on both axes.
pub const NORM_MAX: u16 = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("screen dimensions must be strictly positive, got {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("pixel coordinate is not finite: ({x}, {y})")]
    NonFinitePixel { x: f64, y: f64 },
    #[error("coordinate ({x}, {y}) outside [0,{NORM_MAX}]")]
    OutOfRange { x: u32, y: u32 },
    #[error("box [{x_min},{y_min},{x_max},{y_max}] has inverted corners")]
    InvertedBox {
        x_min: u16,
        y_min: u16,
        x_max: u16,
        y_max: u16,
    },
}

/// A point in normalized screen space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u32; 2]", into = "[u16; 2]")]
pub struct Point {
    x: u16,
    y: u16,
}

impl Point {
    pub fn new(x: u32, y: u32) -> Result<Self, GeometryError> {
        if x > NORM_MAX as u32 || y > NORM_MAX as u32 {
            return Err(GeometryError::OutOfRange { x, y });
        }
        Ok(Self {
            x: x as u16,
            y: y as u16,
        })
    }

    pub fn x(&self) -> u16 {
        self.x
    }

    pub fn y(&self) -> u16 {
        self.y
    }
}

impl TryFrom<[u32; 2]> for Point {
    type Error = GeometryError;

    fn try_from([x, y]: [u32; 2]) -> Result<Self, Self::Error> {
        Point::new(x, y)
    }
}

impl From<Point> for [u16; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Axis-aligned box in normalized screen space. Containment is inclusive of
/// all four edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u16; 4]")]
pub struct BBox {
    x_min: u16,
    y_min: u16,
    x_max: u16,
    y_max: u16,
}

impl BBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self, GeometryError> {
        let lo = Point::new(x_min, y_min)?;
        let hi = Point::new(x_max, y_max)?;
        if lo.x > hi.x || lo.y > hi.y {
            return Err(GeometryError::InvertedBox {
                x_min: lo.x,
                y_min: lo.y,
                x_max: hi.x,
                y_max: hi.y,
            });
        }
        Ok(Self {
            x_min: lo.x,
            y_min: lo.y,
            x_max: hi.x,
            y_max: hi.y,
        })
    }

    pub fn x_min(&self) -> u16 {
        self.x_min
    }
    pub fn y_min(&self) -> u16 {
        self.y_min
    }
    pub fn x_max(&self) -> u16 {
        self.x_max
    }
    pub fn y_max(&self) -> u16 {
        self.y_max
    }

    pub fn width(&self) -> u32 {
        (self.x_max - self.x_min) as u32
    }

    pub fn height(&self) -> u32 {
        (self.y_max - self.y_min) as u32
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    /// Integer center, rounded down.
    pub fn center(&self) -> Point {
        Point {
            x: ((self.x_min as u32 + self.x_max as u32) / 2) as u16,
            y: ((self.y_min as u32 + self.y_max as u32) / 2) as u16,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn intersection_area(&self, other: &BBox) -> u64 {
        let x0 = self.x_min.max(other.x_min);
        let y0 = self.y_min.max(other.y_min);
        let x1 = self.x_max.min(other.x_max);
        let y1 = self.y_max.min(other.y_max);
        if x0 >= x1 || y0 >= y1 {
            return 0;
        }
        (x1 - x0) as u64 * (y1 - y0) as u64
    }

    /// Intersection over union. Identical boxes score 1.0 even when degenerate.
    pub fn iou(&self, other: &BBox) -> f64 {
        if self == other {
            return 1.0;
        }
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            return 0.0;
        }
        inter as f64 / union as f64
    }

    /// True when the interiors of the two boxes share any area.
    pub fn overlaps(&self, other: &BBox) -> bool {
        self.intersection_area(other) > 0
    }
}

impl TryFrom<[u32; 4]> for BBox {
    type Error = GeometryError;

    fn try_from([a, b, c, d]: [u32; 4]) -> Result<Self, Self::Error> {
        BBox::new(a, b, c, d)
    }
}

impl From<BBox> for [u16; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{},{},{},{}]",
            self.x_min, self.y_min, self.x_max, self.y_max
        )
    }
}

/// Physical screen size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScreenDims {
    pub width: u32,
    pub height: u32,
}

impl ScreenDims {
    pub const NORMALIZED: ScreenDims = ScreenDims {
        width: NORM_MAX as u32,
        height: NORM_MAX as u32,
    };

    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }
}

/// Result of mapping a pixel coordinate into normalized space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Normalized {
    pub point: Point,
    /// Set when the pixel lay outside the screen and had to be clamped.
    pub clamped: bool,
}

/// Maps a pixel coordinate to `[0, 1000]` on both axes: `floor(px * 1000 / dim)`,
/// then clamped.
pub fn normalize_point(px: f64, py: f64, dims: ScreenDims) -> Result<Normalized, GeometryError> {
    if dims.width == 0 || dims.height == 0 {
        return Err(GeometryError::InvalidDimensions {
            width: dims.width,
            height: dims.height,
        });
    }
    if !px.is_finite() || !py.is_finite() {
        return Err(GeometryError::NonFinitePixel { x: px, y: py });
    }
    let scale = |v: f64, dim: u32| -> (u16, bool) {
        let raw = (v * NORM_MAX as f64 / dim as f64).floor();
        if raw < 0.0 {
            (0, true)
        } else if raw > NORM_MAX as f64 {
            (NORM_MAX, true)
        } else {
            // in-bounds pixels never clamp, even at the far edge
            (raw as u16, v > dim as f64)
        }
    };
    let (x, cx) = scale(px, dims.width);
    let (y, cy) = scale(py, dims.height);
    let clamped = cx || cy;
    if clamped {
        tracing::warn!(px, py, ?dims, "pixel outside screen, clamped");
    }
    Ok(Normalized {
        point: Point { x, y },
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Self::Up, Self::Down, Self::Left, Self::Right];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Up => "up",
            Self::Down => "down",
            Self::Left => "left",
            Self::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
    }
}

/// The type tag of an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ActionType {
    Click,
    Completed,
    Scroll,
    Type,
    OpenApp,
    Press,
    Other,
}

impl ActionType {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Click => "CLICK",
            Self::Completed => "COMPLETED",
            Self::Scroll => "SCROLL",
            Self::Type => "TYPE",
            Self::OpenApp => "OPENAPP",
            Self::Press => "PRESS",
            Self::Other => "OTHER",
        }
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Type plus the parameter slots that type requires.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Click(Point),
    Completed,
    Scroll(Direction),
    Type(String),
    OpenApp(String),
    /// Key name is informational; matching uses the type alone.
    Press(Option<String>),
    /// Any verb outside the known set, upper-cased.
    Other(String),
}

/// A canonical agent action.
///
/// Equality and hashing look at [`ActionKind`] only; `raw` records the agent
/// output the action was parsed from and is carried for provenance.
#[derive(Debug, Clone)]
pub struct Action {
    pub kind: ActionKind,
    pub raw: String,
}

impl PartialEq for Action {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for Action {}

impl std::hash::Hash for Action {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.kind.hash(state)
    }
}

impl From<ActionKind> for Action {
    fn from(kind: ActionKind) -> Self {
        Action {
            kind,
            raw: String::new(),
        }
    }
}

impl Action {
    pub fn click(p: Point) -> Self {
        ActionKind::Click(p).into()
    }

    pub fn completed() -> Self {
        ActionKind::Completed.into()
    }

    pub fn scroll(d: Direction) -> Self {
        ActionKind::Scroll(d).into()
    }

    pub fn type_text(text: impl Into<String>) -> Self {
        ActionKind::Type(text.into()).into()
    }

    pub fn open_app(name: impl Into<String>) -> Self {
        ActionKind::OpenApp(name.into()).into()
    }

    pub fn press(key: Option<&str>) -> Self {
        ActionKind::Press(key.map(str::to_string)).into()
    }

    pub fn other(verb: impl Into<String>) -> Self {
        ActionKind::Other(verb.into().to_ascii_uppercase()).into()
    }

    pub fn with_raw(mut self, raw: impl Into<String>) -> Self {
        self.raw = raw.into();
        self
    }

    pub fn action_type(&self) -> ActionType {
        match self.kind {
            ActionKind::Click(_) => ActionType::Click,
            ActionKind::Completed => ActionType::Completed,
            ActionKind::Scroll(_) => ActionType::Scroll,
            ActionKind::Type(_) => ActionType::Type,
            ActionKind::OpenApp(_) => ActionType::OpenApp,
            ActionKind::Press(_) => ActionType::Press,
            ActionKind::Other(_) => ActionType::Other,
        }
    }

    pub fn point(&self) -> Option<Point> {
        match self.kind {
            ActionKind::Click(p) => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match Dialect::Canonical.format(self) {
            Ok(s) => f.write_str(&s),
            Err(_) => f.write_str(self.action_type().as_str()),
        }
    }
}

/// Flat on-disk form of [`Action`], one optional slot per parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ActionRecord {
    #[serde(rename = "type")]
    action_type: ActionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    point: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    app_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    verb: Option<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    raw: String,
}

#[derive(Debug, Error)]
#[error("{action_type} action is missing its `{slot}` parameter")]
pub struct MissingSlot {
    action_type: ActionType,
    slot: &'static str,
}

impl TryFrom<ActionRecord> for Action {
    type Error = MissingSlot;

    fn try_from(r: ActionRecord) -> Result<Self, Self::Error> {
        let missing = |slot| MissingSlot {
            action_type: r.action_type,
            slot,
        };
        let kind = match r.action_type {
            ActionType::Click => ActionKind::Click(r.point.ok_or_else(|| missing("point"))?),
            ActionType::Completed => ActionKind::Completed,
            ActionType::Scroll => {
                ActionKind::Scroll(r.direction.ok_or_else(|| missing("direction"))?)
            }
            ActionType::Type => ActionKind::Type(r.text.clone().ok_or_else(|| missing("text"))?),
            ActionType::OpenApp => {
                ActionKind::OpenApp(r.app_name.clone().ok_or_else(|| missing("app_name"))?)
            }
            ActionType::Press => ActionKind::Press(r.key),
            ActionType::Other => {
                ActionKind::Other(r.verb.unwrap_or_else(|| "OTHER".into()).to_ascii_uppercase())
            }
        };
        Ok(Action { kind, raw: r.raw })
    }
}

impl From<Action> for ActionRecord {
    fn from(a: Action) -> Self {
        let mut r = ActionRecord {
            action_type: a.action_type(),
            point: None,
            direction: None,
            text: None,
            app_name: None,
            key: None,
            verb: None,
            raw: a.raw,
        };
        match a.kind {
            ActionKind::Click(p) => r.point = Some(p),
            ActionKind::Completed => {}
            ActionKind::Scroll(d) => r.direction = Some(d),
            ActionKind::Type(t) => r.text = Some(t),
            ActionKind::OpenApp(n) => r.app_name = Some(n),
            ActionKind::Press(k) => r.key = k,
            ActionKind::Other(v) => r.verb = Some(v),
        }
        r
    }
}

impl Serialize for Action {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ActionRecord::from(self.clone()).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = ActionRecord::deserialize(deserializer)?;
        Action::try_from(r).map_err(serde::de::Error::custom)
    }
}
