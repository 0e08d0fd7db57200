//! The twenty dynamic tasks and their success checks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{World, WorldState, APPS};

const BUILTIN_REGISTRY: &str = include_str!("../../assets/tasks.json");

#[derive(Debug, Error)]
#[error("unknown task `{task_id}`; registered tasks: {}", registered.join(", "))]
pub struct UnknownTask {
    pub task_id: String,
    pub registered: Vec<String>,
}

/// One subtask checked against the final world state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Goal {
    Toggle { key: String, on: bool },
    AppOpened { app: String },
}

impl Goal {
    pub fn satisfied(&self, state: &WorldState) -> bool {
        match self {
            Goal::Toggle { key, on } => state.toggle(key) == Some(*on),
            Goal::AppOpened { app } => state
                .opened_app
                .as_deref()
                .is_some_and(|a| a.eq_ignore_ascii_case(app)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Goal::Toggle { key, on } => format!("{key} {}", if *on { "on" } else { "off" }),
            Goal::AppOpened { app } => format!("{app} opened"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GoalSpec {
    Toggle(&'static str, bool),
    /// Opens the app chosen for the episode.
    OpenChosenApp,
}

fn goal_specs(task_id: &str) -> Option<(Vec<GoalSpec>, bool)> {
    use GoalSpec::*;
    let (base, verify) = match task_id.strip_suffix("Verify") {
        Some(b) => (b, true),
        None => (task_id, false),
    };
    let goals = match base {
        "SystemBluetoothTurnOff" => vec![Toggle("bluetooth", false)],
        "SystemBluetoothTurnOn" => vec![Toggle("bluetooth", true)],
        "SystemWifiTurnOff" => vec![Toggle("wifi", false)],
        "SystemWifiTurnOn" => vec![Toggle("wifi", true)],
        _ if verify => return None,
        "TurnOffWifiAndTurnOnBluetooth" => vec![Toggle("wifi", false), Toggle("bluetooth", true)],
        "TurnOnWifiAndOpenApp" => vec![Toggle("wifi", true), OpenChosenApp],
        "TurnOnAlarm9AM" => vec![Toggle("alarm-9am", true)],
        "TurnOffAlarm9AM" => vec![Toggle("alarm-9am", false)],
        "TurnOnCaptionYoutube" => vec![Toggle("captions", true)],
        "TurnOffCaptionYoutube" => vec![Toggle("captions", false)],
        "TurnOnDoNotDisturb" => vec![Toggle("do-not-disturb", true)],
        "TurnOffDoNotDisturb" => vec![Toggle("do-not-disturb", false)],
        "TurnOnSaveAndFillPaymentMethodsChrome" => vec![Toggle("chrome-payment-methods", true)],
        "TurnOffSaveAndFillPaymentMethodsChrome" => {
            vec![Toggle("chrome-payment-methods", false)]
        }
        "TurnOnAlwaysSecureConnChrome" => vec![Toggle("chrome-secure-connections", true)],
        "TurnOffAlwaysSecureConnChrome" => vec![Toggle("chrome-secure-connections", false)],
        _ => return None,
    };
    Some((goals, verify))
}

/// A registered task: its instruction template and subtasks.
#[derive(Debug, Clone, PartialEq)]
pub struct DynTask {
    pub task_id: String,
    /// May contain `{app_name}`.
    pub instruction_template: String,
    /// Target toggles start in the desired state instead of its complement.
    pub verify: bool,
    goals: Vec<GoalSpec>,
}

/// A task bound to a seed: concrete instruction, goals and start state.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub task_id: String,
    pub instruction: String,
    pub goals: Vec<Goal>,
    pub initial: WorldState,
}

fn rng_for(seed: u64, task_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(task_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

impl DynTask {
    /// Seeds the world: every toggle random, then each target toggle set to
    /// the desired state (verify tasks) or its complement (all others).
    pub fn instantiate(&self, world: &World, seed: u64) -> TaskInstance {
        let mut rng = rng_for(seed, &self.task_id);
        let mut toggles: BTreeMap<String, bool> = world
            .toggle_keys()
            .into_iter()
            .map(|k| (k.to_string(), rng.random::<bool>()))
            .collect();
        let choices: Vec<&str> = APPS
            .iter()
            .map(|(a, _)| *a)
            .filter(|a| *a != "Settings")
            .collect();
        let app = choices[rng.random_range(0..choices.len())];
        let mut goals = Vec::new();
        for g in &self.goals {
            match *g {
                GoalSpec::Toggle(key, on) => {
                    toggles.insert(key.to_string(), if self.verify { on } else { !on });
                    goals.push(Goal::Toggle {
                        key: key.into(),
                        on,
                    });
                }
                GoalSpec::OpenChosenApp => goals.push(Goal::AppOpened { app: app.into() }),
            }
        }
        TaskInstance {
            task_id: self.task_id.clone(),
            instruction: self.instruction_template.replace("{app_name}", app),
            goals,
            initial: world.initial_state(toggles),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryEntry {
    task_id: String,
    instruction: String,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("task registry: {0}")]
    Parse(String),
    #[error("task registry: no success checks known for `{0}`")]
    NoChecks(String),
    #[error("task registry: `{0}` listed twice")]
    Duplicate(String),
}

#[derive(Debug, Clone)]
pub struct TaskRegistry {
    tasks: Vec<DynTask>,
}

impl Default for TaskRegistry {
    fn default() -> Self {
        Self::from_json(BUILTIN_REGISTRY).expect("builtin registry")
    }
}

impl TaskRegistry {
    pub fn from_json(json: &str) -> Result<Self, RegistryError> {
        let entries: Vec<RegistryEntry> =
            serde_json::from_str(json).map_err(|e| RegistryError::Parse(e.to_string()))?;
        let mut tasks: Vec<DynTask> = Vec::with_capacity(entries.len());
        for e in entries {
            if tasks.iter().any(|t| t.task_id == e.task_id) {
                return Err(RegistryError::Duplicate(e.task_id));
            }
            let (goals, verify) =
                goal_specs(&e.task_id).ok_or_else(|| RegistryError::NoChecks(e.task_id.clone()))?;
            tasks.push(DynTask {
                task_id: e.task_id,
                instruction_template: e.instruction,
                verify,
                goals,
            });
        }
        Ok(Self { tasks })
    }

    pub fn tasks(&self) -> &[DynTask] {
        &self.tasks
    }

    pub fn get(&self, task_id: &str) -> Result<&DynTask, UnknownTask> {
        self.tasks
            .iter()
            .find(|t| t.task_id == task_id)
            .ok_or_else(|| UnknownTask {
                task_id: task_id.to_string(),
                registered: self.tasks.iter().map(|t| t.task_id.clone()).collect(),
            })
    }

    /// The named tasks in the order given; every task when `ids` is empty.
    pub fn select(&self, ids: &[String]) -> Result<Vec<DynTask>, UnknownTask> {
        if ids.is_empty() {
            return Ok(self.tasks.clone());
        }
        ids.iter().map(|id| self.get(id).cloned()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_registry_has_twenty_tasks() {
        let r = TaskRegistry::default();
        assert_eq!(r.tasks().len(), 20);
        assert_eq!(r.tasks().iter().filter(|t| t.verify).count(), 4);
        assert_eq!(
            r.get("TurnOnAlarm9AM").unwrap().instruction_template,
            "Trun on alarm at 9:00 AM."
        );
        let err = r.get("Nope").unwrap_err();
        assert_eq!(err.registered.len(), 20);
        assert!(err.to_string().contains("SystemWifiTurnOn"));
    }

    #[test]
    fn verify_and_complement_initialization() {
        let r = TaskRegistry::default();
        let w = World::new();
        for seed in 0..20 {
            let v = r.get("SystemWifiTurnOnVerify").unwrap().instantiate(&w, seed);
            assert_eq!(v.initial.toggle("wifi"), Some(true));
            let n = r.get("SystemWifiTurnOn").unwrap().instantiate(&w, seed);
            assert_eq!(n.initial.toggle("wifi"), Some(false));
            let both = r
                .get("TurnOffWifiAndTurnOnBluetooth")
                .unwrap()
                .instantiate(&w, seed);
            assert_eq!(both.initial.toggle("wifi"), Some(true));
            assert_eq!(both.initial.toggle("bluetooth"), Some(false));
        }
    }

    #[test]
    fn instantiation_is_seed_deterministic() {
        let r = TaskRegistry::default();
        let w = World::new();
        let t = r.get("TurnOnWifiAndOpenApp").unwrap();
        assert_eq!(t.instantiate(&w, 7), t.instantiate(&w, 7));
        let i = t.instantiate(&w, 7);
        assert!(!i.instruction.contains("{app_name}"));
        let Goal::AppOpened { app } = &i.goals[1] else {
            panic!()
        };
        assert_eq!(i.instruction, format!("Turn on Wifi, then open the {app} app"));
        let apps: std::collections::BTreeSet<String> = (0..50)
            .map(|s| t.instantiate(&w, s).instruction)
            .collect();
        assert!(apps.len() > 1);
    }

    #[test]
    fn registry_validation() {
        assert!(matches!(
            TaskRegistry::from_json(r#"[{"task_id":"Made Up","instruction":"x"}]"#),
            Err(RegistryError::NoChecks(_))
        ));
        assert!(matches!(
            TaskRegistry::from_json(
                r#"[{"task_id":"SystemWifiTurnOn","instruction":"x"},{"task_id":"SystemWifiTurnOn","instruction":"y"}]"#
            ),
            Err(RegistryError::Duplicate(_))
        ));
        assert!(TaskRegistry::from_json(r#"[{"task_id":"TurnOnAlarm9AMVerify","instruction":"x"}]"#).is_err());
    }
}
