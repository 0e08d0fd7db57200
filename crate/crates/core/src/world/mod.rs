//! A small simulated phone for live toggle-control episodes.
//!
//! The device is a fixed navigation tree of screens. Each screen lists its
//! widgets as non-overlapping rows: toggles flip on click, navigation items
//! move to another screen, app icons open an app. Agents see a structured
//! [`Observation`] instead of pixels.

pub mod agents;
pub mod suite;
pub mod tasks;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::{Action, ActionKind, BBox, Point};
use crate::domain::ToggleState;
use crate::matching::{normalize_app_name, StemmerId};

pub use agents::{
    AgentAdapter, AgentError, AgentRequest, AlwaysToggleAgent, HttpAgent, ObservationRenderer,
    OptimalAgent, SubprocessAgent,
};
pub use suite::{
    format_rate, run_episode, run_suite, EpisodeResult, SuiteConfig, SuiteReport, Termination,
};
pub use tasks::{DynTask, Goal, TaskRegistry, UnknownTask};

pub const DEFAULT_BUDGET: u32 = 15;

pub const HOME: &str = "home";

/// Apps on the home screen, with the screen each one opens.
pub const APPS: [(&str, &str); 8] = [
    ("Settings", "settings"),
    ("Chrome", "chrome"),
    ("YouTube", "youtube"),
    ("Clock", "clock"),
    ("Camera", "camera"),
    ("Contacts", "contacts"),
    ("Files", "files"),
    ("Calendar", "calendar"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidgetKind {
    Toggle,
    Button,
    ListItem,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Target {
    /// Flips the named toggle.
    Toggle(&'static str),
    /// Moves to a screen.
    Screen(&'static str),
    /// Opens an app at its root screen.
    App(&'static str, &'static str),
}

#[derive(Debug, Clone)]
struct WidgetSpec {
    label: &'static str,
    kind: WidgetKind,
    target: Target,
}

#[derive(Debug, Clone)]
struct ScreenSpec {
    id: &'static str,
    title: &'static str,
    parent: &'static str,
    widgets: Vec<WidgetSpec>,
}

fn toggle(label: &'static str, key: &'static str) -> WidgetSpec {
    WidgetSpec {
        label,
        kind: WidgetKind::Toggle,
        target: Target::Toggle(key),
    }
}

fn item(label: &'static str, screen: &'static str) -> WidgetSpec {
    WidgetSpec {
        label,
        kind: WidgetKind::ListItem,
        target: Target::Screen(screen),
    }
}

fn button(label: &'static str, screen: &'static str) -> WidgetSpec {
    WidgetSpec {
        label,
        kind: WidgetKind::Button,
        target: Target::Screen(screen),
    }
}

fn screens() -> Vec<ScreenSpec> {
    let s = |id, title, parent, widgets| ScreenSpec {
        id,
        title,
        parent,
        widgets,
    };
    let apps = APPS
        .iter()
        .map(|(name, screen)| WidgetSpec {
            label: name,
            kind: WidgetKind::Button,
            target: Target::App(name, screen),
        })
        .collect();
    vec![
        s(HOME, "Home", HOME, apps),
        s(
            "settings",
            "Settings",
            HOME,
            vec![
                item("Network & internet", "settings.network"),
                item("Connected devices", "settings.connected"),
                item("Sound & vibration", "settings.sound"),
                item("Display", "settings.display"),
            ],
        ),
        s(
            "settings.network",
            "Network & internet",
            "settings",
            vec![toggle("Wi-Fi", "wifi"), toggle("Airplane mode", "airplane-mode")],
        ),
        s(
            "settings.connected",
            "Connected devices",
            "settings",
            vec![toggle("Bluetooth", "bluetooth"), toggle("NFC", "nfc")],
        ),
        s(
            "settings.sound",
            "Sound & vibration",
            "settings",
            vec![
                toggle("Do Not Disturb", "do-not-disturb"),
                toggle("Vibrate for calls", "vibrate-for-calls"),
            ],
        ),
        s(
            "settings.display",
            "Display",
            "settings",
            vec![toggle("Dark theme", "dark-theme")],
        ),
        s(
            "clock",
            "Alarms",
            HOME,
            vec![toggle("7:30 AM", "alarm-730am"), toggle("9:00 AM", "alarm-9am")],
        ),
        s(
            "youtube",
            "YouTube",
            HOME,
            vec![button("Settings", "youtube.settings")],
        ),
        s(
            "youtube.settings",
            "YouTube settings",
            "youtube",
            vec![toggle("Autoplay", "youtube-autoplay"), toggle("Captions", "captions")],
        ),
        s(
            "chrome",
            "Chrome",
            HOME,
            vec![button("Settings", "chrome.settings")],
        ),
        s(
            "chrome.settings",
            "Chrome settings",
            "chrome",
            vec![
                item("Payment methods", "chrome.payment"),
                item("Privacy and security", "chrome.privacy"),
            ],
        ),
        s(
            "chrome.payment",
            "Payment methods",
            "chrome.settings",
            vec![toggle("Save and fill payment methods", "chrome-payment-methods")],
        ),
        s(
            "chrome.privacy",
            "Privacy and security",
            "chrome.settings",
            vec![
                toggle("Send a \"Do Not Track\" request", "chrome-do-not-track"),
                toggle("Always use secure connections", "chrome-secure-connections"),
            ],
        ),
        s("camera", "Camera", HOME, Vec::new()),
        s("contacts", "Contacts", HOME, Vec::new()),
        s("files", "Files", HOME, Vec::new()),
        s("calendar", "Calendar", HOME, Vec::new()),
    ]
}

const ROW_TOP: u32 = 120;
const ROW_HEIGHT: u32 = 70;
const ROW_PITCH: u32 = 90;

fn row_box(i: usize) -> BBox {
    let top = ROW_TOP + ROW_PITCH * i as u32;
    BBox::new(40, top, 960, top + ROW_HEIGHT).expect("row inside screen")
}

/// What an agent sees of one widget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Widget {
    pub bbox: BBox,
    pub label: String,
    pub kind: WidgetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<ToggleState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub screen_id: String,
    pub title: String,
    /// App in the foreground, if any.
    #[serde(default)]
    pub app: Option<String>,
    pub widgets: Vec<Widget>,
    pub instruction: String,
}

impl Observation {
    pub fn widget(&self, label: &str) -> Option<&Widget> {
        self.widgets.iter().find(|w| w.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub toggles: BTreeMap<String, bool>,
    pub current_screen: String,
    pub opened_app: Option<String>,
    pub step_count: u32,
}

impl WorldState {
    pub fn toggle(&self, key: &str) -> Option<bool> {
        self.toggles.get(key).copied()
    }
}

/// The static device: screens, widgets and the navigation tree.
#[derive(Debug, Clone)]
pub struct World {
    screens: BTreeMap<&'static str, ScreenSpec>,
}

impl Default for World {
    fn default() -> Self {
        Self::new()
    }
}

impl World {
    pub fn new() -> Self {
        Self {
            screens: screens().into_iter().map(|s| (s.id, s)).collect(),
        }
    }

    /// Every toggle key, in screen order.
    pub fn toggle_keys(&self) -> Vec<&'static str> {
        self.screens
            .values()
            .flat_map(|s| &s.widgets)
            .filter_map(|w| match w.target {
                Target::Toggle(k) => Some(k),
                _ => None,
            })
            .collect()
    }

    pub fn screen_ids(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.screens.keys().copied()
    }

    pub fn parent(&self, screen: &str) -> Option<&'static str> {
        self.screens.get(screen).map(|s| s.parent)
    }

    /// Screen that holds a toggle, with the toggle's row box.
    pub fn locate_toggle(&self, key: &str) -> Option<(&'static str, BBox)> {
        self.screens.values().find_map(|s| {
            s.widgets
                .iter()
                .position(|w| matches!(w.target, Target::Toggle(k) if k == key))
                .map(|i| (s.id, row_box(i)))
        })
    }

    /// Screens from `home` down to `screen`, inclusive.
    pub fn path_from_home(&self, screen: &str) -> Vec<&'static str> {
        let mut path = Vec::new();
        let mut cur = match self.screens.get_key_value(screen) {
            Some((k, _)) => *k,
            None => return path,
        };
        loop {
            path.push(cur);
            if cur == HOME {
                break;
            }
            cur = self.screens[cur].parent;
        }
        path.reverse();
        path
    }

    /// Box of the widget on `from` that leads directly to `to`.
    pub fn link_box(&self, from: &str, to: &str) -> Option<BBox> {
        let s = self.screens.get(from)?;
        s.widgets
            .iter()
            .position(|w| match w.target {
                Target::Screen(t) | Target::App(_, t) => t == to,
                Target::Toggle(_) => false,
            })
            .map(row_box)
    }

    pub fn app_screen(&self, name: &str) -> Option<(&'static str, &'static str)> {
        let wanted = normalize_app_name(name, StemmerId::SnowballEnglish);
        APPS.iter()
            .find(|(app, _)| normalize_app_name(app, StemmerId::SnowballEnglish) == wanted)
            .copied()
    }

    pub fn initial_state(&self, toggles: BTreeMap<String, bool>) -> WorldState {
        WorldState {
            toggles,
            current_screen: HOME.into(),
            opened_app: None,
            step_count: 0,
        }
    }

    pub fn observe(&self, state: &WorldState, instruction: &str) -> Observation {
        let screen = &self.screens[state.current_screen.as_str()];
        let widgets = screen
            .widgets
            .iter()
            .enumerate()
            .map(|(i, w)| Widget {
                bbox: row_box(i),
                label: w.label.to_string(),
                kind: w.kind,
                state: match w.target {
                    Target::Toggle(k) => state.toggle(k).map(ToggleState::from),
                    _ => None,
                },
            })
            .collect();
        Observation {
            screen_id: screen.id.to_string(),
            title: screen.title.to_string(),
            app: state.opened_app.clone(),
            widgets,
            instruction: instruction.to_string(),
        }
    }

    fn widget_at(&self, screen: &str, p: Point) -> Option<&WidgetSpec> {
        let s = self.screens.get(screen)?;
        s.widgets
            .iter()
            .enumerate()
            .find(|(i, _)| row_box(*i).contains(p))
            .map(|(_, w)| w)
    }

    /// Applies one action and counts the step. Returns true when the agent
    /// declared the task complete. Actions with no effect on the current
    /// screen still consume the step.
    pub fn step(&self, state: &mut WorldState, action: &Action) -> bool {
        state.step_count += 1;
        match &action.kind {
            ActionKind::Completed => return true,
            ActionKind::Click(p) => match self.widget_at(&state.current_screen, *p).map(|w| &w.target) {
                Some(Target::Toggle(k)) => {
                    let v = state.toggles.entry(k.to_string()).or_insert(false);
                    *v = !*v;
                }
                Some(Target::Screen(s)) => state.current_screen = s.to_string(),
                Some(Target::App(name, s)) => {
                    state.current_screen = s.to_string();
                    state.opened_app = Some(name.to_string());
                }
                None => {}
            },
            ActionKind::OpenApp(name) => {
                if let Some((app, screen)) = self.app_screen(name) {
                    state.current_screen = screen.into();
                    state.opened_app = Some(app.into());
                }
            }
            ActionKind::Press(Some(key)) => match key.as_str() {
                "back" => {
                    let parent = self.screens[state.current_screen.as_str()].parent;
                    if parent == HOME {
                        state.opened_app = None;
                    }
                    state.current_screen = parent.into();
                }
                "home" => {
                    state.current_screen = HOME.into();
                    state.opened_app = None;
                }
                _ => {}
            },
            _ => {}
        }
        false
    }
}
