//! Generation backends: an OpenAI-compatible HTTP client and a scripted mock.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::{proposals_in_prompt, PromptKind};
use crate::domain::AgentId;
use crate::error::{Error, Result};

/// One call to a backend.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub agent: AgentId,
    pub round: u32,
    pub kind: PromptKind,
    /// 0 for the first call, incremented on each re-prompt.
    pub attempt: u32,
    pub prompt: &'a str,
}

pub trait GenerationBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String>;

    /// Short description recorded in run headers.
    fn describe(&self) -> String;
}

/// Scripted replies keyed by (agent, round, kind), with wildcards.
///
/// Script format, one rule per line:
///
/// ```text
/// # agent  round  kind         reply
/// *        *      effort       0.5
/// 3        *      effort       0.9
/// *        10     punish       N/A
/// *        *      norm_update  Personal: fish less\nCommunity: cap effort at 0.6
/// *        *      vote         {proposal:1}
/// ```
///
/// `*` matches anything. The most specific rule wins: (agent, round), then
/// (agent, *), then (*, round), then (*, *). In replies `\n` is a newline,
/// `\\` a backslash, and `{proposal:K}` expands to the K-th proposal listed
/// in the prompt. Kinds without any rule fall back to built-in replies.
#[derive(Debug, Default)]
pub struct MockBackend {
    rules: BTreeMap<(Option<AgentId>, Option<u32>, PromptKind), String>,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn from_script(text: &str) -> Result<Self> {
        let mut rules = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| Error::Script {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (agent, rest) = take_token(line);
            let (round, rest) = take_token(rest);
            let (kind, rest) = take_token(rest);
            let reply = rest.trim();
            if kind.is_empty() || reply.is_empty() {
                return Err(err("expected `<agent> <round> <kind> <reply>`"));
            }
            let agent = wildcard(agent).map_err(|_| err("bad agent id"))?;
            let round = wildcard(round).map_err(|_| err("bad round"))?;
            let kind = PromptKind::parse(kind).ok_or_else(|| err("unknown prompt kind"))?;
            rules.insert((agent, round, kind), unescape(reply));
        }
        Ok(Self {
            rules,
            calls: AtomicU64::new(0),
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_script(&std::fs::read_to_string(path)?)
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn lookup(&self, agent: AgentId, round: u32, kind: PromptKind) -> &str {
        [
            (Some(agent), Some(round)),
            (Some(agent), None),
            (None, Some(round)),
            (None, None),
        ]
        .into_iter()
        .find_map(|(a, r)| self.rules.get(&(a, r, kind)))
        .map_or_else(|| builtin_reply(kind), String::as_str)
    }
}

fn take_token(s: &str) -> (&str, &str) {
    let s = s.trim_start();
    let end = s.find(char::is_whitespace).unwrap_or(s.len());
    (&s[..end], &s[end..])
}

fn wildcard<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, T::Err> {
    if s == "*" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

fn builtin_reply(kind: PromptKind) -> &'static str {
    match kind {
        PromptKind::Effort => "0.5",
        PromptKind::Punish => "N/A",
        PromptKind::NormUpdate => "Personal: Fish moderately to maintain the ecosystem\nCommunity: Fish moderately to maintain the ecosystem",
        PromptKind::Vote => "{proposal:1}",
    }
}

fn expand_proposals(reply: &str, prompt: &str) -> String {
    if !reply.contains("{proposal:") {
        return reply.to_string();
    }
    let listed = proposals_in_prompt(prompt);
    let mut out = String::new();
    let mut rest = reply;
    while let Some(start) = rest.find("{proposal:") {
        out.push_str(&rest[..start]);
        let tail = &rest[start + "{proposal:".len()..];
        match tail.find('}').and_then(|end| Some((end, tail[..end].parse::<usize>().ok()?))) {
            Some((end, k)) => {
                out.push_str(k.checked_sub(1).and_then(|i| listed.get(i)).map_or("", String::as_str));
                rest = &tail[end + 1..];
            }
            None => {
                out.push_str("{proposal:");
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}

impl GenerationBackend for MockBackend {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let reply = self.lookup(request.agent, request.round, request.kind);
        Ok(expand_proposals(reply, request.prompt))
    }

    fn describe(&self) -> String {
        format!("mock ({} rules)", self.rules.len())
    }
}

/// Wraps a backend and counts calls per prompt kind.
#[derive(Debug, Default)]
pub struct CountingBackend<B> {
    inner: B,
    counts: [AtomicU64; 4],
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            counts: Default::default(),
        }
    }

    pub fn count(&self, kind: PromptKind) -> u64 {
        self.counts[kind as usize].load(Ordering::Relaxed)
    }

    pub fn total(&self) -> u64 {
        PromptKind::ALL.iter().map(|&k| self.count(k)).sum()
    }
}

impl<B: GenerationBackend> GenerationBackend for CountingBackend<B> {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String> {
        self.counts[request.kind as usize].fetch_add(1, Ordering::Relaxed);
        self.inner.generate(request)
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

/// Connection settings for an OpenAI-compatible chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSettings {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    /// Environment variable holding the bearer credential.
    pub api_key_env: String,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1".into(),
            model: "gpt-4o".into(),
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
            temperature: None,
            max_tokens: None,
            api_key_env: "API_KEY".into(),
        }
    }
}

impl HttpSettings {
    /// Full URL of the completions route; a base URL gets `/chat/completions` appended.
    pub fn completions_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Blocking chat-completion client with bounded retry and exponential backoff.
pub struct HttpBackend {
    settings: HttpSettings,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(settings: HttpSettings) -> Self {
        let api_key = std::env::var(&settings.api_key_env).ok().filter(|k| !k.is_empty());
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(settings.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            settings,
            api_key,
            agent,
        }
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        let mut body = json!({
            "model": self.settings.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        if let Some(t) = self.settings.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(m) = self.settings.max_tokens {
            body["max_tokens"] = json!(m);
        }
        body
    }

    fn attempt(&self, body: &Value) -> std::result::Result<String, (bool, String)> {
        let mut req = self.agent.post(self.settings.completions_url());
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| (true, e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err((true, format!("HTTP {status}: {text}")));
        }
        if status >= 400 {
            return Err((false, format!("HTTP {status}: {text}")));
        }
        extract_content(&text).ok_or_else(|| (false, format!("malformed completion: {text}")))
    }
}

/// `choices[0].message.content` of a chat-completion response body.
pub fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v["choices"][0]["message"]["content"].as_str().map(str::to_string)
}

impl GenerationBackend for HttpBackend {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String> {
        let body = self.request_body(request.prompt);
        let mut delay = Duration::from_millis(self.settings.backoff_ms);
        let mut last = String::new();
        for attempt in 0..=self.settings.max_retries {
            match self.attempt(&body) {
                Ok(content) => return Ok(content),
                Err((retryable, msg)) => {
                    tracing::warn!(agent = request.agent, round = request.round, attempt, "{msg}");
                    last = msg;
                    if !retryable {
                        break;
                    }
                    if attempt < self.settings.max_retries {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(Error::Transport(last))
    }

    fn describe(&self) -> String {
        format!("http {} model={}", self.settings.completions_url(), self.settings.model)
    }
}
