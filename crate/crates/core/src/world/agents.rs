//! Agent adapters: the episode protocol, two scripted reference policies,
//! and transports for external agents.
//!
//! Each step the harness sends an [`AgentRequest`] and expects back one raw
//! action string in the episode's dialect. Over stdio that is one JSON
//! request line out and one `{"action": "..."}` line back; over HTTP the
//! same JSON bodies are POSTed and returned.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tasks::{Goal, TaskInstance};
use super::{Observation, World, HOME};
use crate::action::{Action, ActionGrammar, Dialect};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("could not start agent: {0}")]
    Spawn(String),
    #[error("agent transport failed: {0}")]
    Transport(String),
    #[error("agent cannot express {action} in {dialect}: {message}")]
    Unexpressible {
        action: String,
        dialect: Dialect,
        message: String,
    },
}

/// One step's question to the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub task_id: String,
    pub instruction: String,
    /// 0 for the first step of an episode.
    pub step: u32,
    pub dialect: Dialect,
    pub observation: Observation,
    /// Raw action strings of earlier steps, oldest first.
    pub history: Vec<String>,
    /// Set by a configured [`ObservationRenderer`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    /// Set when the previous answer for this step did not parse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub action: String,
}

pub trait AgentAdapter {
    fn name(&self) -> &str;

    /// Called before the first step of every episode.
    fn begin(&mut self, _task: &TaskInstance) -> Result<(), AgentError> {
        Ok(())
    }

    fn act(&mut self, request: &AgentRequest) -> Result<String, AgentError>;
}

/// Produces an image locator for an observation, for vision agents.
pub trait ObservationRenderer {
    fn render(&self, task_id: &str, step: u32, observation: &Observation)
        -> Result<String, String>;
}

/// Navigation and goal bookkeeping shared by the scripted agents.
struct Navigator {
    world: World,
    goals: Vec<Goal>,
    next: usize,
    clicked: bool,
}

impl Navigator {
    fn new() -> Self {
        Self {
            world: World::new(),
            goals: Vec::new(),
            next: 0,
            clicked: false,
        }
    }

    fn reset(&mut self, task: &TaskInstance) {
        self.goals = task.goals.clone();
        self.next = 0;
        self.clicked = false;
    }

    /// One move from `cur` toward `target`: follow a link when `cur` lies on
    /// the path from home, otherwise reopen the owning app.
    fn toward(&self, cur: &str, target: &str) -> Action {
        let path = self.world.path_from_home(target);
        if let Some(i) = path.iter().position(|s| *s == cur) {
            let link = self
                .world
                .link_box(path[i], path[i + 1])
                .expect("consecutive screens are linked");
            return Action::click(link.center());
        }
        let app_root = path.get(1).copied().unwrap_or(HOME);
        let (app, _) = super::APPS
            .iter()
            .find(|(_, s)| *s == app_root)
            .expect("every screen belongs to an app");
        Action::open_app(*app)
    }

    /// `check_state`: read the toggle before clicking (optimal policy) or
    /// click each target toggle exactly once regardless (always-toggle).
    fn decide(&mut self, obs: &Observation, check_state: bool) -> Action {
        while let Some(goal) = self.goals.get(self.next) {
            match goal {
                Goal::Toggle { key, on } => {
                    let (screen, bbox) = self
                        .world
                        .locate_toggle(key)
                        .expect("task toggles exist in the world");
                    if obs.screen_id != screen {
                        return self.toward(&obs.screen_id, screen);
                    }
                    let done = if check_state {
                        obs.widgets
                            .iter()
                            .find(|w| w.bbox == bbox)
                            .and_then(|w| w.state)
                            .is_some_and(|s| s.is_on() == *on)
                    } else {
                        self.clicked
                    };
                    if !done {
                        self.clicked = true;
                        return Action::click(bbox.center());
                    }
                }
                Goal::AppOpened { app } => {
                    if obs.app.as_deref() != Some(app.as_str()) {
                        return Action::open_app(app.clone());
                    }
                }
            }
            self.next += 1;
            self.clicked = false;
        }
        Action::completed()
    }
}

fn express(action: &Action, dialect: Dialect) -> Result<String, AgentError> {
    dialect.format(action).map_err(|e| AgentError::Unexpressible {
        action: action.to_string(),
        dialect,
        message: e.to_string(),
    })
}

/// Oracle policy: knows the task goals and the device layout, reads toggle
/// states from the observation and clicks only when a state is wrong.
pub struct OptimalAgent(Navigator);

impl OptimalAgent {
    pub fn new() -> Self {
        Self(Navigator::new())
    }
}

impl Default for OptimalAgent {
    fn default() -> Self {
        Self::new()
    }
}

impl AgentAdapter for OptimalAgent {
    fn name(&self) -> &str {
        "optimal"
    }

    fn begin(&mut self, task: &TaskInstance) -> Result<(), AgentError> {
        self.0.reset(task);
        Ok(())
    }

    fn act(&mut self, req: &AgentRequest) -> Result<String, AgentError> {
        express(&self.0.decide(&req.observation, true), req.dialect)
    }
}

/// Finds each target toggle and clicks it once without looking at its
/// state: the false-positive behavior verify tasks are meant to catch.
pub struct AlwaysToggleAgent(Navigator);

impl AlwaysToggleAgent {
    pub fn new() -> Self {
        Self(Navigator::new())
    }
}

impl Default for AlwaysToggleAgent {
    fn default() -> Self {
        Self::new()
    }
}

impl AgentAdapter for AlwaysToggleAgent {
    fn name(&self) -> &str {
        "always-toggle"
    }

    fn begin(&mut self, task: &TaskInstance) -> Result<(), AgentError> {
        self.0.reset(task);
        Ok(())
    }

    fn act(&mut self, req: &AgentRequest) -> Result<String, AgentError> {
        express(&self.0.decide(&req.observation, false), req.dialect)
    }
}

/// Talks to a child process over stdin/stdout, one JSON line each way.
pub struct SubprocessAgent {
    command: String,
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl SubprocessAgent {
    /// Runs `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self, AgentError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AgentError::Spawn(format!("{command}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        // a command that cannot run at all exits at once
        std::thread::sleep(Duration::from_millis(50));
        if let Ok(Some(status)) = child.try_wait() {
            return Err(AgentError::Spawn(format!("{command}: exited with {status}")));
        }
        Ok(Self {
            command: command.to_string(),
            child,
            stdin,
            stdout,
        })
    }
}

impl AgentAdapter for SubprocessAgent {
    fn name(&self) -> &str {
        &self.command
    }

    fn act(&mut self, req: &AgentRequest) -> Result<String, AgentError> {
        let line = serde_json::to_string(req).expect("request serializes");
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        let mut reply = String::new();
        let n = self
            .stdout
            .read_line(&mut reply)
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        if n == 0 {
            return Err(AgentError::Transport("agent closed its output".into()));
        }
        // a reply that is not the JSON envelope is passed on as the raw
        // action, so the harness can count it as a protocol violation
        Ok(serde_json::from_str::<AgentResponse>(&reply)
            .map(|r| r.action)
            .unwrap_or_else(|_| reply.trim_end().to_string()))
    }
}

impl Drop for SubprocessAgent {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// POSTs each request to an endpoint.
pub struct HttpAgent {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpAgent {
    pub fn new(url: &str, timeout: Duration) -> Result<Self, AgentError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| AgentError::Spawn(e.to_string()))?;
        Ok(Self {
            url: url.to_string(),
            client,
        })
    }
}

impl AgentAdapter for HttpAgent {
    fn name(&self) -> &str {
        &self.url
    }

    fn act(&mut self, req: &AgentRequest) -> Result<String, AgentError> {
        let resp = self
            .client
            .post(&self.url)
            .json(req)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        let text = resp
            .text()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        Ok(serde_json::from_str::<AgentResponse>(&text)
            .map(|r| r.action)
            .unwrap_or(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::TaskRegistry;

    fn request(obs: Observation) -> AgentRequest {
        AgentRequest {
            task_id: "t".into(),
            instruction: "i".into(),
            step: 0,
            dialect: Dialect::Canonical,
            observation: obs,
            history: Vec::new(),
            image_ref: None,
            retry_reason: None,
        }
    }

    #[test]
    fn subprocess_protocol() {
        let script = r#"while read line; do echo '{"action":"COMPLETED"}'; echo 'garbage'; done"#;
        let mut a = SubprocessAgent::spawn(script).unwrap();
        let world = World::new();
        let inst = TaskRegistry::default()
            .get("SystemWifiTurnOn")
            .unwrap()
            .instantiate(&world, 1);
        let req = request(world.observe(&inst.initial, &inst.instruction));
        assert_eq!(a.act(&req).unwrap(), "COMPLETED");
        assert_eq!(a.act(&req).unwrap(), "garbage");
    }

    #[test]
    fn subprocess_spawn_failure() {
        assert!(matches!(
            SubprocessAgent::spawn("exit 3"),
            Err(AgentError::Spawn(_))
        ));
    }

    #[test]
    fn cpm_dialect_navigation_avoids_press() {
        let nav = Navigator::new();
        let a = nav.toward("settings.network", "settings.connected");
        assert_eq!(a, Action::open_app("Settings"));
        assert!(Dialect::Cpm.format(&a).is_ok());
    }
}
