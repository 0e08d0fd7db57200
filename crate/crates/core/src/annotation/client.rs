//! Annotator transport: the request/response wire format, an HTTP client and
//! a scripted client for tests and dry runs.

use std::collections::HashMap;
use std::env;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::action::BBox;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("annotator `{annotator}` unreachable: {message}")]
    Unreachable { annotator: String, message: String },
    #[error("annotator `{annotator}` returned status {status}")]
    Status { annotator: String, status: u16 },
    #[error("annotator `{annotator}` sent a malformed body: {message}")]
    Body { annotator: String, message: String },
    #[error("annotator configuration: {0}")]
    Config(String),
}

/// Which question a request asks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationTask {
    ToggleIdentification,
    StateFeature,
}

/// Rendering hint: the box the annotator should see highlighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    pub bbox: BBox,
    pub stroke_color: String,
    pub stroke_width: u32,
}

impl Highlight {
    pub fn red(bbox: BBox) -> Self {
        Self {
            bbox,
            stroke_color: "#FF0000".into(),
            stroke_width: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub highlight: Option<Highlight>,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            text: text.into(),
            image_ref: None,
            highlight: None,
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            ..Self::user(text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestMetadata {
    pub task: AnnotationTask,
    pub screen_id: String,
    pub bbox: BBox,
}

/// Chat-completion style request. `temperature` is always 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub metadata: RequestMetadata,
}

pub trait AnnotatorClient: Send + Sync {
    fn id(&self) -> &str;

    fn model(&self) -> &str;

    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// Exponential backoff for transport failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    pub fn call(
        &self,
        client: &dyn AnnotatorClient,
        request: &ChatRequest,
    ) -> Result<String, TransportError> {
        let mut attempt = 0;
        loop {
            match client.complete(request) {
                Ok(text) => return Ok(text),
                Err(TransportError::Config(m)) => return Err(TransportError::Config(m)),
                Err(e) if attempt + 1 >= self.max_attempts.max(1) => return Err(e),
                Err(e) => {
                    tracing::warn!(annotator = client.id(), attempt, error = %e, "retrying");
                    thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

/// Posts [`ChatRequest`] JSON to an endpoint.
///
/// Accepts either an OpenAI-style body (`choices[0].message.content`) or a
/// flat `{"text": ...}` body in reply.
pub struct HttpAnnotator {
    id: String,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpAnnotator {
    pub fn new(
        id: impl Into<String>,
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Config(e.to_string()))?;
        Ok(Self {
            id: id.into(),
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            client,
        })
    }

    /// Reads `{prefix}_URL`, `{prefix}_MODEL` and optionally `{prefix}_API_KEY`.
    pub fn from_env(id: &str, prefix: &str, timeout: Duration) -> Result<Self, TransportError> {
        let var = |name: &str| env::var(format!("{prefix}_{name}")).ok();
        let url = var("URL")
            .ok_or_else(|| TransportError::Config(format!("{prefix}_URL is not set")))?;
        let model = var("MODEL")
            .ok_or_else(|| TransportError::Config(format!("{prefix}_MODEL is not set")))?;
        Self::new(id, url, model, var("API_KEY"), timeout)
    }

    fn extract_text(&self, body: &Value) -> Result<String, TransportError> {
        let text = body
            .pointer("/choices/0/message/content")
            .or_else(|| body.get("text"))
            .and_then(Value::as_str);
        text.map(str::to_string).ok_or_else(|| TransportError::Body {
            annotator: self.id.clone(),
            message: "no `choices[0].message.content` or `text` field".into(),
        })
    }
}

impl AnnotatorClient for HttpAnnotator {
    fn id(&self) -> &str {
        &self.id
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut req = self.client.post(&self.endpoint).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError::Unreachable {
            annotator: self.id.clone(),
            message: e.to_string(),
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TransportError::Status {
                annotator: self.id.clone(),
                status: status.as_u16(),
            });
        }
        let body: Value = resp.json().map_err(|e| TransportError::Body {
            annotator: self.id.clone(),
            message: e.to_string(),
        })?;
        self.extract_text(&body)
    }
}

/// One scripted reply: response text, or a simulated transport failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedReply {
    Text(String),
    Fail { error: String },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    pub screen_id: String,
    /// Applies to every box of the screen when absent.
    #[serde(default)]
    pub bbox: Option<BBox>,
    /// Replies to successive identification requests; the last one repeats.
    #[serde(default)]
    pub identify: Vec<ScriptedReply>,
    #[serde(default)]
    pub state_feature: Vec<ScriptedReply>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorScript {
    pub id: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
}

fn default_model() -> String {
    "scripted".into()
}

/// Deterministic annotator that answers from a rule table. Unknown boxes
/// are answered "no".
pub struct ScriptedAnnotator {
    script: AnnotatorScript,
    calls: Mutex<HashMap<(AnnotationTask, String, BBox), usize>>,
}

impl ScriptedAnnotator {
    pub fn new(id: impl Into<String>) -> Self {
        Self::from_script(AnnotatorScript {
            id: id.into(),
            model: default_model(),
            rules: Vec::new(),
        })
    }

    pub fn from_script(script: AnnotatorScript) -> Self {
        Self {
            script,
            calls: Mutex::new(HashMap::new()),
        }
    }

    fn rule_mut(&mut self, screen_id: &str, bbox: BBox) -> &mut ScriptRule {
        let pos = self
            .script
            .rules
            .iter()
            .position(|r| r.screen_id == screen_id && r.bbox == Some(bbox));
        let idx = pos.unwrap_or_else(|| {
            self.script.rules.push(ScriptRule {
                screen_id: screen_id.into(),
                bbox: Some(bbox),
                ..Default::default()
            });
            self.script.rules.len() - 1
        });
        &mut self.script.rules[idx]
    }

    pub fn identify(mut self, screen_id: &str, bbox: BBox, is_toggle: bool) -> Self {
        let reply = if is_toggle { "yes" } else { "no" };
        self.rule_mut(screen_id, bbox).identify = vec![ScriptedReply::Text(reply.into())];
        self
    }

    pub fn state_feature(mut self, screen_id: &str, bbox: BBox, state: &str, feature: &str) -> Self {
        self.rule_mut(screen_id, bbox).state_feature = vec![ScriptedReply::Text(format!(
            "state: {state}\nfeature: {feature}"
        ))];
        self
    }

    /// Replaces the reply sequence for one task.
    pub fn replies(
        mut self,
        task: AnnotationTask,
        screen_id: &str,
        bbox: BBox,
        replies: Vec<ScriptedReply>,
    ) -> Self {
        let rule = self.rule_mut(screen_id, bbox);
        match task {
            AnnotationTask::ToggleIdentification => rule.identify = replies,
            AnnotationTask::StateFeature => rule.state_feature = replies,
        }
        self
    }

    pub fn script(&self) -> &AnnotatorScript {
        &self.script
    }
}

impl AnnotatorClient for ScriptedAnnotator {
    fn id(&self) -> &str {
        &self.script.id
    }

    fn model(&self) -> &str {
        &self.script.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let meta = &request.metadata;
        // exact-box rules take precedence over screen-wide ones
        let rule = self
            .script
            .rules
            .iter()
            .filter(|r| r.screen_id == meta.screen_id)
            .find(|r| r.bbox == Some(meta.bbox))
            .or_else(|| {
                self.script
                    .rules
                    .iter()
                    .find(|r| r.screen_id == meta.screen_id && r.bbox.is_none())
            });
        let replies = rule.map(|r| match meta.task {
            AnnotationTask::ToggleIdentification => &r.identify,
            AnnotationTask::StateFeature => &r.state_feature,
        });
        let Some(replies) = replies.filter(|r| !r.is_empty()) else {
            return Ok("no".into());
        };
        let n = {
            let mut calls = self.calls.lock().expect("scripted annotator lock");
            let n = calls
                .entry((meta.task, meta.screen_id.clone(), meta.bbox))
                .or_insert(0);
            *n += 1;
            *n - 1
        };
        match &replies[n.min(replies.len() - 1)] {
            ScriptedReply::Text(t) => Ok(t.clone()),
            ScriptedReply::Fail { error } => Err(TransportError::Unreachable {
                annotator: self.script.id.clone(),
                message: error.clone(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn request(task: AnnotationTask) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage {
                image_ref: Some("img.png".into()),
                highlight: Some(Highlight::red(BBox::new(1, 2, 3, 4).unwrap())),
                ..ChatMessage::user("is it a toggle?")
            }],
            temperature: 0.0,
            metadata: RequestMetadata {
                task,
                screen_id: "s1".into(),
                bbox: BBox::new(1, 2, 3, 4).unwrap(),
            },
        }
    }

    #[test]
    fn request_wire_shape() {
        let v = serde_json::to_value(request(AnnotationTask::ToggleIdentification)).unwrap();
        assert_eq!(v["model"], "m");
        assert_eq!(v["temperature"], 0.0);
        assert_eq!(v["messages"][0]["role"], "user");
        assert_eq!(v["messages"][0]["image_ref"], "img.png");
        assert_eq!(v["messages"][0]["highlight"]["bbox"], serde_json::json!([1, 2, 3, 4]));
        assert_eq!(v["metadata"]["task"], "toggle_identification");
    }

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(0), Duration::from_millis(500));
        assert_eq!(p.delay(2), Duration::from_secs(2));
        assert_eq!(p.delay(10), Duration::from_secs(8));
        assert_eq!(p.delay(40), Duration::from_secs(8));
    }

    #[test]
    fn retry_recovers_from_transient_failures() {
        let b = BBox::new(1, 2, 3, 4).unwrap();
        let a = ScriptedAnnotator::new("g").replies(
            AnnotationTask::ToggleIdentification,
            "s1",
            b,
            vec![
                ScriptedReply::Fail {
                    error: "timeout".into(),
                },
                ScriptedReply::Text("yes".into()),
            ],
        );
        let req = request(AnnotationTask::ToggleIdentification);
        assert_eq!(RetryPolicy::immediate(3).call(&a, &req).unwrap(), "yes");

        let dead = ScriptedAnnotator::new("q").replies(
            AnnotationTask::ToggleIdentification,
            "s1",
            b,
            vec![ScriptedReply::Fail {
                error: "down".into(),
            }],
        );
        assert!(matches!(
            RetryPolicy::immediate(3).call(&dead, &req),
            Err(TransportError::Unreachable { .. })
        ));
    }

    #[test]
    fn scripted_defaults_to_no() {
        let a = ScriptedAnnotator::new("g");
        assert_eq!(
            a.complete(&request(AnnotationTask::ToggleIdentification))
                .unwrap(),
            "no"
        );
    }

    #[test]
    fn script_file_shape() {
        let s: AnnotatorScript = serde_json::from_str(
            r#"{"id":"g","rules":[{"screen_id":"s1","identify":["yes"],
                "state_feature":[{"error":"timeout"},"state: on\nfeature: Wi-Fi"]}]}"#,
        )
        .unwrap();
        let a = ScriptedAnnotator::from_script(s);
        let r = request(AnnotationTask::StateFeature);
        assert!(a.complete(&r).is_err());
        assert_eq!(a.complete(&r).unwrap(), "state: on\nfeature: Wi-Fi");
        assert_eq!(a.complete(&r).unwrap(), "state: on\nfeature: Wi-Fi");
    }

    /// Serves canned HTTP responses, recording each request body.
    fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, handle)
    }

    #[test]
    fn http_annotator_round_trip() {
        let (url, server) = serve(vec![
            (
                200,
                r#"{"choices":[{"message":{"role":"assistant","content":"yes"}}]}"#.into(),
            ),
            (200, r#"{"text":"state: off\nfeature: Bluetooth"}"#.into()),
            (503, "{}".into()),
            (200, r#"{"unexpected":true}"#.into()),
        ]);
        let a = HttpAnnotator::new("g", url, "glm", Some("k".into()), Duration::from_secs(5))
            .unwrap();
        let req = request(AnnotationTask::ToggleIdentification);
        assert_eq!(a.complete(&req).unwrap(), "yes");
        assert_eq!(a.complete(&req).unwrap(), "state: off\nfeature: Bluetooth");
        assert!(matches!(
            a.complete(&req),
            Err(TransportError::Status { status: 503, .. })
        ));
        assert!(matches!(a.complete(&req), Err(TransportError::Body { .. })));
        let bodies = server.join().unwrap();
        let sent: ChatRequest = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent, req);
    }

    #[test]
    fn http_annotator_unreachable() {
        let port = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap().port()
        };
        let a = HttpAnnotator::new(
            "g",
            format!("http://127.0.0.1:{port}/"),
            "m",
            None,
            Duration::from_secs(2),
        )
        .unwrap();
        assert!(matches!(
            a.complete(&request(AnnotationTask::StateFeature)),
            Err(TransportError::Unreachable { .. })
        ));
    }
}
