//! Client for an OpenAI-style chat-completions endpoint.
//!
//! One request per step. The user turn is laid out as
//! `[task text, observation image(s), "<OBS>", ASM image, "<MAP>"]`, with
//! images inlined as base64 PNG data URLs. Request bodies are a pure
//! function of the input and config, so responses can be recorded once and
//! replayed byte-for-byte.

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{DecisionContext, Policy, PolicyError, PolicyInput, PolicyOutput};
use crate::actions::{default_ruleset, parse_action, PatternRuleset};
use crate::annotation::RgbImage;

pub const SYSTEM_PROMPT: &str = "You are a navigation agent inside an indoor environment. \
Each turn you receive the task instruction, your current first-person view (and possibly a few \
earlier views) followed by <OBS>, and a top-down annotated semantic map followed by <MAP>. \
In the map, grey cells are obstacles, light cells are explored floor, coloured regions are \
labelled objects, the red line is your trajectory and the blue disk with a yellow tick is you \
and your heading. Reply with exactly one action phrase: \"move forward\", \"turn left\", \
\"turn right\" or \"stop\". Say \"stop\" only when you have reached the destination.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmEndpointConfig {
    /// Base URL up to and including the API version, e.g. `http://host:8000/v1`.
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the bearer token; no auth header if unset.
    pub auth_token_env: Option<String>,
    pub timeout_s: f64,
    /// Additional attempts after a transient failure.
    pub retries: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub max_tokens: u32,
    /// Delay before the first retry; doubles per attempt.
    pub backoff_ms: u64,
    /// Number of earlier observation frames sent with the current one.
    pub history_frames: usize,
}

impl Default for VlmEndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model_name: "mapnav-vlm".into(),
            auth_token_env: Some("MAPNAV_VLM_TOKEN".into()),
            timeout_s: 60.0,
            retries: 2,
            temperature: 0.0,
            seed: Some(0),
            max_tokens: 32,
            backoff_ms: 250,
            history_frames: 2,
        }
    }
}

pub const MAX_HISTORY_FRAMES: usize = 4;

impl VlmEndpointConfig {
    pub fn validate(&self) -> Result<(), VlmError> {
        let bad = |m: &str| Err(VlmError::Config(m.to_string()));
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return bad("timeout_s must be positive");
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad("temperature must be a non-negative number");
        }
        if self.history_frames > MAX_HISTORY_FRAMES {
            return bad("history_frames must be at most 4");
        }
        if self.base_url.is_empty() {
            return bad("base_url is empty");
        }
        Ok(())
    }

    pub fn endpoint_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Error)]
pub enum VlmError {
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("authentication: {0}")]
    Auth(String),
    #[error("endpoint failed after {attempts} attempt(s): {last}")]
    Endpoint { attempts: u32, last: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("replay: {0}")]
    Replay(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Connection, timeout or read failure; retried.
    Network(String),
    /// Replay fixture mismatch or exhaustion; not retried.
    Replay(String),
}

pub trait Transport: Send + Sync {
    fn post(&self, body: &str) -> Result<HttpReply, TransportError>;
}

/// Lets the caller keep a handle, e.g. to read a recording afterwards.
impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn post(&self, body: &str) -> Result<HttpReply, TransportError> {
        (**self).post(body)
    }
}

pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    token: Option<String>,
}

impl HttpTransport {
    /// Reads the bearer token from the configured environment variable.
    pub fn new(cfg: &VlmEndpointConfig) -> Result<Self, VlmError> {
        cfg.validate()?;
        let token = match &cfg.auth_token_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| VlmError::Auth(format!("environment variable {var} is not set")))?)
            }
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            url: cfg.endpoint_url(),
            token,
        })
    }
}

impl Transport for HttpTransport {
    fn post(&self, body: &str) -> Result<HttpReply, TransportError> {
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let resp = req.send(body).map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .into_body()
            .read_to_string()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        Ok(HttpReply { status, body })
    }
}

/// One recorded exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    /// SHA-256 of the request body; checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_sha256: Option<String>,
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayFile {
    pub responses: Vec<ReplayEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Serves recorded replies in order.
pub struct ReplayTransport {
    entries: Vec<ReplayEntry>,
    cursor: Mutex<usize>,
}

impl ReplayTransport {
    pub fn new(entries: Vec<ReplayEntry>) -> Self {
        Self {
            entries,
            cursor: Mutex::new(0),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| VlmError::Replay(format!("{}: {e}", path.display())))?;
        let file: ReplayFile =
            serde_json::from_str(&text).map_err(|e| VlmError::Replay(format!("{}: {e}", path.display())))?;
        Ok(Self::new(file.responses))
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().unwrap()
    }
}

impl Transport for ReplayTransport {
    fn post(&self, body: &str) -> Result<HttpReply, TransportError> {
        let mut cursor = self.cursor.lock().unwrap();
        let entry = self
            .entries
            .get(*cursor)
            .ok_or_else(|| TransportError::Replay(format!("no recorded response #{}", *cursor + 1)))?;
        if let Some(want) = &entry.request_sha256 {
            let got = sha256_hex(body.as_bytes());
            if &got != want {
                return Err(TransportError::Replay(format!(
                    "request #{} differs from the recording ({got} != {want})",
                    *cursor + 1
                )));
            }
        }
        *cursor += 1;
        Ok(HttpReply {
            status: entry.status,
            body: entry.body.clone(),
        })
    }
}

/// Wraps a transport and keeps every exchange for later replay.
pub struct RecordingTransport<T: Transport> {
    inner: T,
    log: Mutex<Vec<ReplayEntry>>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn recording(&self) -> ReplayFile {
        ReplayFile {
            responses: self.log.lock().unwrap().clone(),
        }
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn post(&self, body: &str) -> Result<HttpReply, TransportError> {
        let reply = self.inner.post(body)?;
        self.log.lock().unwrap().push(ReplayEntry {
            request_sha256: Some(sha256_hex(body.as_bytes())),
            status: reply.status,
            body: reply.body.clone(),
        });
        Ok(reply)
    }
}

fn data_url(img: &RgbImage) -> String {
    format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(img.encode_png())
    )
}

fn image_part(img: &RgbImage) -> Value {
    json!({"type": "image_url", "image_url": {"url": data_url(img)}})
}

/// Chat request for one step. Only the newest `cfg.history_frames` history
/// frames are included.
pub fn build_request(input: &PolicyInput, cfg: &VlmEndpointConfig) -> Value {
    let mut content = vec![json!({"type": "text", "text": format!("Task: {}", input.instruction)})];
    let skip = input.history_frames.len().saturating_sub(cfg.history_frames);
    content.extend(input.history_frames[skip..].iter().map(image_part));
    content.push(image_part(&input.observation));
    content.push(json!({"type": "text", "text": "<OBS>"}));
    content.push(image_part(&input.asm));
    content.push(json!({"type": "text", "text": "<MAP>"}));

    let mut req = json!({
        "model": cfg.model_name,
        "messages": [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": content},
        ],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
    });
    if let Some(seed) = cfg.seed {
        req["seed"] = json!(seed);
    }
    req
}

pub fn request_body(input: &PolicyInput, cfg: &VlmEndpointConfig) -> String {
    serde_json::to_string(&build_request(input, cfg)).expect("request serializes")
}

/// Extracts the assistant text from a chat-completions response body.
pub fn response_text(body: &str) -> Result<String, VlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| VlmError::Protocol(format!("invalid JSON: {e}")))?;
    let content = v
        .pointer("/choices/0/message/content")
        .ok_or_else(|| VlmError::Protocol("missing choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => {
            let texts: Vec<&str> = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            if texts.is_empty() {
                Err(VlmError::Protocol("content has no text parts".into()))
            } else {
                Ok(texts.join(""))
            }
        }
        _ => Err(VlmError::Protocol("content is not text".into())),
    }
}

pub struct VlmClient {
    cfg: VlmEndpointConfig,
    transport: Box<dyn Transport>,
    rules: PatternRuleset,
}

impl VlmClient {
    pub fn new(cfg: VlmEndpointConfig, transport: Box<dyn Transport>) -> Result<Self, VlmError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            transport,
            rules: default_ruleset(),
        })
    }

    pub fn with_rules(mut self, rules: PatternRuleset) -> Self {
        self.rules = rules;
        self
    }

    pub fn http(cfg: VlmEndpointConfig) -> Result<Self, VlmError> {
        let t = HttpTransport::new(&cfg)?;
        Self::new(cfg, Box::new(t))
    }

    pub fn config(&self) -> &VlmEndpointConfig {
        &self.cfg
    }

    /// Sends one request, retrying network failures, 429 and 5xx replies.
    /// A reply that matches no action is returned with `parsed: None`.
    pub fn decide(&self, input: &PolicyInput) -> Result<PolicyOutput, VlmError> {
        let body = request_body(input, &self.cfg);
        let started = Instant::now();
        let attempts = self.cfg.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 && self.cfg.backoff_ms > 0 {
                std::thread::sleep(Duration::from_millis(self.cfg.backoff_ms << (attempt - 1).min(6)));
            }
            match self.transport.post(&body) {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    let text = response_text(&reply.body)?;
                    return Ok(PolicyOutput {
                        parsed: parse_action(&text, &self.rules).ok(),
                        text,
                        latency_s: started.elapsed().as_secs_f64(),
                    });
                }
                Ok(reply) if reply.status == 429 || reply.status >= 500 => {
                    last = format!("HTTP {}", reply.status);
                }
                Ok(reply) if reply.status == 401 || reply.status == 403 => {
                    return Err(VlmError::Auth(format!("HTTP {}: {}", reply.status, reply.body)));
                }
                Ok(reply) => {
                    return Err(VlmError::Http {
                        status: reply.status,
                        body: reply.body,
                    })
                }
                Err(TransportError::Network(e)) => last = e,
                Err(TransportError::Replay(e)) => return Err(VlmError::Replay(e)),
            }
        }
        Err(VlmError::Endpoint { attempts, last })
    }
}

impl Policy for VlmClient {
    fn needs_images(&self) -> bool {
        true
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Result<PolicyOutput, PolicyError> {
        let input = ctx.input.ok_or(PolicyError::MissingInput)?;
        Ok(VlmClient::decide(self, input)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::Action;

    fn input(history: usize) -> PolicyInput {
        PolicyInput {
            instruction: "Go to the sofa.".into(),
            asm: RgbImage::new(4, 4, [1, 2, 3]),
            observation: RgbImage::new(3, 2, [9, 9, 9]),
            history_frames: (0..history).map(|i| RgbImage::new(3, 2, [i as u8, 0, 0])).collect(),
            step_index: 0,
        }
    }

    fn reply(status: u16, text: &str) -> ReplayEntry {
        ReplayEntry {
            request_sha256: None,
            status,
            body: json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string(),
        }
    }

    fn cfg() -> VlmEndpointConfig {
        VlmEndpointConfig {
            backoff_ms: 0,
            ..Default::default()
        }
    }

    #[test]
    fn message_layout_follows_task_obs_map_order() {
        let req = build_request(&input(3), &cfg());
        let parts = req["messages"][1]["content"].as_array().unwrap();
        let kinds: Vec<String> = parts
            .iter()
            .map(|p| match p["type"].as_str().unwrap() {
                "text" => p["text"].as_str().unwrap().to_string(),
                _ => "IMG".to_string(),
            })
            .collect();
        assert_eq!(
            kinds,
            ["Task: Go to the sofa.", "IMG", "IMG", "IMG", "<OBS>", "IMG", "<MAP>"]
        );
        assert!(parts[1]["image_url"]["url"]
            .as_str()
            .unwrap()
            .starts_with("data:image/png;base64,"));
        assert_eq!(req["seed"], 0);
        assert_eq!(req["messages"][0]["role"], "system");
    }

    #[test]
    fn request_bodies_are_deterministic() {
        assert_eq!(request_body(&input(2), &cfg()), request_body(&input(2), &cfg()));
        let mut other = cfg();
        other.temperature = 0.5;
        assert_ne!(request_body(&input(2), &cfg()), request_body(&input(2), &other));
    }

    #[test]
    fn retries_then_succeeds() {
        let t = ReplayTransport::new(vec![
            reply(500, ""),
            reply(503, ""),
            reply(200, "let's see... proceed ahead"),
        ]);
        let client = VlmClient::new(cfg(), Box::new(t)).unwrap();
        let out = client.decide(&input(0)).unwrap();
        assert_eq!(out.parsed, Some(Action::Forward));
    }

    #[test]
    fn gives_up_after_retry_budget() {
        let t = ReplayTransport::new(vec![reply(500, ""), reply(500, ""), reply(500, ""), reply(200, "stop")]);
        let client = VlmClient::new(cfg(), Box::new(t)).unwrap();
        assert!(matches!(
            client.decide(&input(0)),
            Err(VlmError::Endpoint { attempts: 3, .. })
        ));
    }

    #[test]
    fn no_match_is_not_an_error() {
        let t = ReplayTransport::new(vec![reply(200, "I am not sure.")]);
        let client = VlmClient::new(cfg(), Box::new(t)).unwrap();
        let out = client.decide(&input(0)).unwrap();
        assert_eq!(out.parsed, None);
        assert_eq!(out.text, "I am not sure.");
    }

    #[test]
    fn malformed_and_client_errors() {
        let bad = ReplayEntry {
            request_sha256: None,
            status: 200,
            body: "{\"choices\": []}".into(),
        };
        let client = VlmClient::new(cfg(), Box::new(ReplayTransport::new(vec![bad]))).unwrap();
        assert!(matches!(client.decide(&input(0)), Err(VlmError::Protocol(_))));
        let client = VlmClient::new(cfg(), Box::new(ReplayTransport::new(vec![reply(401, "")]))).unwrap();
        assert!(matches!(client.decide(&input(0)), Err(VlmError::Auth(_))));
    }

    #[test]
    fn replay_checks_request_hash() {
        let body = request_body(&input(1), &cfg());
        let mut e = reply(200, "turn left");
        e.request_sha256 = Some(sha256_hex(body.as_bytes()));
        let client = VlmClient::new(cfg(), Box::new(ReplayTransport::new(vec![e.clone()]))).unwrap();
        assert_eq!(client.decide(&input(1)).unwrap().parsed, Some(Action::TurnLeft));
        let client = VlmClient::new(cfg(), Box::new(ReplayTransport::new(vec![e]))).unwrap();
        assert!(matches!(client.decide(&input(2)), Err(VlmError::Replay(_))));
    }

    #[test]
    fn content_parts_are_joined() {
        let body = json!({"choices": [{"message": {"content": [{"type": "text", "text": "turn "}, {"type": "text", "text": "right"}]}}]});
        assert_eq!(response_text(&body.to_string()).unwrap(), "turn right");
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        c.timeout_s = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.history_frames = 5;
        assert!(c.validate().is_err());
        assert_eq!(cfg().endpoint_url(), "http://127.0.0.1:8000/v1/chat/completions");
    }
}
