use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::BackendKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("request timed out")]
    Timeout,
    /// No canned or served response for this request.
    #[error("no response for request: {0}")]
    NotFound(String),
    #[error("backend answered with status {code}: {body}")]
    Status { code: u16, body: String },
}

impl TransportError {
    /// Connection failures, timeouts and server-side errors may succeed on
    /// a second attempt; client errors will not.
    pub fn retryable(&self) -> bool {
        match self {
            TransportError::Unreachable(_) | TransportError::Timeout => true,
            TransportError::Status { code, .. } => *code >= 500,
            TransportError::NotFound(_) => false,
        }
    }
}

/// Moves one request document to a backend and returns its response
/// document.
pub trait Transport: Send + Sync {
    fn exchange(&self, kind: BackendKind, request: &Value) -> Result<Value, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn exchange(&self, kind: BackendKind, request: &Value) -> Result<Value, TransportError> {
        (**self).exchange(kind, request)
    }
}

/// JSON over HTTP POST to `{base}/{kind}`.
pub struct HttpTransport {
    base: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base: &str, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self {
            base: base.trim_end_matches('/').to_string(),
            agent,
        }
    }
}

impl Transport for HttpTransport {
    fn exchange(&self, kind: BackendKind, request: &Value) -> Result<Value, TransportError> {
        let url = format!("{}{}", self.base, kind.path());
        match self.agent.post(&url).send_json(request) {
            Ok(resp) => resp
                .into_json::<Value>()
                .map_err(|e| TransportError::Unreachable(format!("reading body from {url}: {e}"))),
            Err(ureq::Error::Status(404, resp)) => Err(TransportError::NotFound(
                resp.into_string().unwrap_or_default(),
            )),
            Err(ureq::Error::Status(code, resp)) => Err(TransportError::Status {
                code,
                body: resp.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") || msg.contains("Timeout") {
                    Err(TransportError::Timeout)
                } else {
                    Err(TransportError::Unreachable(msg))
                }
            }
        }
    }
}

/// One canned exchange. `request` lists the fields a request must carry to
/// match; fields it leaves out match anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub request: Value,
    pub response: Value,
}

/// Canned responses per endpoint, tried in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSet {
    pub asr: Vec<FixtureEntry>,
    pub judge: Vec<FixtureEntry>,
    pub segment: Vec<FixtureEntry>,
    pub refine: Vec<FixtureEntry>,
}

impl FixtureSet {
    pub fn entries(&self, kind: BackendKind) -> &[FixtureEntry] {
        match kind {
            BackendKind::Asr => &self.asr,
            BackendKind::Judge => &self.judge,
            BackendKind::Segment => &self.segment,
            BackendKind::Refine => &self.refine,
        }
    }

    pub fn push(&mut self, kind: BackendKind, request: Value, response: Value) {
        let entry = FixtureEntry { request, response };
        match kind {
            BackendKind::Asr => self.asr.push(entry),
            BackendKind::Judge => self.judge.push(entry),
            BackendKind::Segment => self.segment.push(entry),
            BackendKind::Refine => self.refine.push(entry),
        }
    }

    pub fn extend(&mut self, other: FixtureSet) {
        self.asr.extend(other.asr);
        self.judge.extend(other.judge);
        self.segment.extend(other.segment);
        self.refine.extend(other.refine);
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        crate::json::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// One entry per line inside each endpoint list, so fixture files stay
    /// readable without spreading run arrays over thousands of lines.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n");
        let kinds = BackendKind::ALL;
        for (i, kind) in kinds.iter().enumerate() {
            out.push_str(&format!("  \"{kind}\": ["));
            let entries = self.entries(*kind);
            for (j, e) in entries.iter().enumerate() {
                out.push_str(if j == 0 { "\n    " } else { ",\n    " });
                out.push_str(&serde_json::to_string(e).expect("fixture entries serialize"));
            }
            if !entries.is_empty() {
                out.push_str("\n  ");
            }
            out.push(']');
            out.push_str(if i + 1 < kinds.len() { ",\n" } else { "\n" });
        }
        out.push_str("}\n");
        out
    }
}

/// Trims surrounding whitespace from every string in a document.
pub fn canonicalize(value: &Value) -> Value {
    match value {
        Value::String(s) => Value::String(s.trim().to_string()),
        Value::Array(items) => Value::Array(items.iter().map(canonicalize).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), canonicalize(v)))
                .collect::<Map<_, _>>(),
        ),
        other => other.clone(),
    }
}

/// True when every field in `pattern` is present in `value` with an equal
/// value; nested objects match the same way.
pub fn request_matches(pattern: &Value, value: &Value) -> bool {
    match (pattern, value) {
        (Value::Object(p), Value::Object(v)) => p
            .iter()
            .all(|(k, pv)| v.get(k).is_some_and(|vv| request_matches(pv, vv))),
        (p, v) => p == v,
    }
}

/// Answers requests from a [`FixtureSet`] without any I/O.
#[derive(Debug, Clone)]
pub struct ScriptedTransport {
    fixtures: Arc<FixtureSet>,
}

impl ScriptedTransport {
    pub fn new(fixtures: FixtureSet) -> Self {
        Self {
            fixtures: Arc::new(fixtures),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Ok(Self::new(FixtureSet::load(path)?))
    }

    pub fn fixtures(&self) -> &FixtureSet {
        &self.fixtures
    }

    pub fn lookup(&self, kind: BackendKind, request: &Value) -> Option<&Value> {
        let request = canonicalize(request);
        self.fixtures
            .entries(kind)
            .iter()
            .find(|e| request_matches(&canonicalize(&e.request), &request))
            .map(|e| &e.response)
    }
}

impl Transport for ScriptedTransport {
    fn exchange(&self, kind: BackendKind, request: &Value) -> Result<Value, TransportError> {
        self.lookup(kind, request)
            .cloned()
            .ok_or_else(|| TransportError::NotFound(format!("{kind} {request}")))
    }
}

/// Wraps a transport and counts exchanges per endpoint kind.
pub struct CountingTransport<T> {
    inner: T,
    counts: [AtomicUsize; 4],
}

impl<T: Transport> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            counts: Default::default(),
        }
    }

    pub fn count(&self, kind: BackendKind) -> usize {
        self.counts[kind as usize].load(Ordering::SeqCst)
    }

    pub fn counts(&self) -> BTreeMap<BackendKind, usize> {
        BackendKind::ALL.iter().map(|&k| (k, self.count(k))).collect()
    }
}

impl<T: Transport> Transport for CountingTransport<T> {
    fn exchange(&self, kind: BackendKind, request: &Value) -> Result<Value, TransportError> {
        self.counts[kind as usize].fetch_add(1, Ordering::SeqCst);
        self.inner.exchange(kind, request)
    }
}
