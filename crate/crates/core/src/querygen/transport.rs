//! HTTP plumbing behind the chat-completion client.

use std::sync::Mutex;
use std::time::Duration;

use serde_json::Value;
use url::Url;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unreadable response: {0}")]
    Decode(String),
}

impl TransportError {
    /// Client errors other than rate limiting will not go away on retry.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            TransportError::Decode(_) => false,
            _ => true,
        }
    }
}

/// Sends one JSON POST and returns the decoded JSON reply.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &Url, bearer: Option<&str>, body: &Value, timeout: Duration) -> Result<Value, TransportError>;
}

/// Blocking HTTP transport. Must not be called from inside an async
/// runtime thread; use a blocking task there.
#[derive(Debug, Default, Clone)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(&self, url: &Url, bearer: Option<&str>, body: &Value, timeout: Duration) -> Result<Value, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        let mut req = client.post(url.clone()).json(body);
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(classify)?;
        let status = resp.status();
        let text = resp.text().map_err(classify)?;
        if !status.is_success() {
            let mut body = text;
            body.truncate(500);
            return Err(TransportError::Status {
                status: status.as_u16(),
                body,
            });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Decode(e.to_string()))
    }
}

fn classify(e: reqwest::Error) -> TransportError {
    if e.is_timeout() {
        TransportError::Timeout
    } else {
        TransportError::Connect(e.to_string())
    }
}

/// Wraps another transport and records every URL it is asked to contact.
#[derive(Debug, Default)]
pub struct RecordingTransport<T> {
    inner: T,
    seen: Mutex<Vec<Url>>,
}

impl<T> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        RecordingTransport {
            inner,
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn urls(&self) -> Vec<Url> {
        self.seen.lock().unwrap().clone()
    }

    pub fn hosts(&self) -> Vec<String> {
        self.urls()
            .iter()
            .filter_map(|u| u.host_str().map(str::to_string))
            .collect()
    }

    /// Contacted URLs whose host is not a loopback address.
    pub fn non_local(&self) -> Vec<Url> {
        self.urls().into_iter().filter(|u| !super::is_local_url(u)).collect()
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn post_json(&self, url: &Url, bearer: Option<&str>, body: &Value, timeout: Duration) -> Result<Value, TransportError> {
        self.seen.lock().unwrap().push(url.clone());
        self.inner.post_json(url, bearer, body, timeout)
    }
}
