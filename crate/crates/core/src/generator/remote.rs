//! Chat-style completion service over HTTP.

use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use crate::config::RemoteConfig;
use crate::error::{Error, Result};

use super::templates::PromptBundle;
use super::CompletionBackend;

const SYSTEM_PROMPT: &str =
    "You are an expert machine learning engineer who writes complete, executable prediction pipelines.";

pub struct RemoteBackend {
    cfg: RemoteConfig,
    endpoint: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl RemoteBackend {
    /// Reads the bearer token from the environment variable named in the
    /// config; the config itself never carries the secret.
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| Error::config("remote backend requires an endpoint"))?;
        let token = std::env::var(&cfg.token_env).ok().filter(|t| !t.is_empty());
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(cfg.request_timeout_secs))
            .build();
        Ok(RemoteBackend {
            cfg,
            endpoint,
            token,
            agent,
        })
    }

    pub fn request_body(&self, bundle: &PromptBundle) -> Value {
        json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": bundle.rendered_text},
            ],
            "temperature": self.cfg.temperature,
        })
    }

    fn attempt(&self, body: &Value) -> std::result::Result<String, (Error, bool)> {
        let mut req = self.agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        let backend = |message: String, status: Option<u16>| Error::Backend {
            message,
            status,
            attempts: 0,
        };
        match req.send_string(&body.to_string()) {
            Ok(resp) => {
                let reply: Value = resp
                    .into_string()
                    .map_err(|e| e.to_string())
                    .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
                    .map_err(|e| (backend(format!("reply is not JSON: {e}"), None), false))?;
                let text = extract_path(&reply, &self.cfg.response_path).ok_or_else(|| {
                    (
                        backend(format!("reply lacks `{}`", self.cfg.response_path), None),
                        false,
                    )
                })?;
                if text.trim().is_empty() {
                    return Err((backend("empty completion".into(), None), true));
                }
                Ok(text)
            }
            Err(ureq::Error::Status(code, resp)) => {
                let detail = resp.into_string().unwrap_or_default();
                let retry = code >= 500 || code == 429;
                let snippet: String = detail.chars().take(200).collect();
                Err((backend(format!("HTTP {code}: {snippet}"), Some(code)), retry))
            }
            Err(ureq::Error::Transport(t)) => Err((backend(format!("transport: {t}"), None), true)),
        }
    }
}

impl CompletionBackend for RemoteBackend {
    fn complete(&self, bundle: &PromptBundle) -> Result<String> {
        let body = self.request_body(bundle);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((err, retry)) => {
                    if !retry || attempts > self.cfg.max_retries {
                        return Err(match err {
                            Error::Backend { message, status, .. } => Error::Backend {
                                message,
                                status,
                                attempts,
                            },
                            other => other,
                        });
                    }
                    let wait = self.cfg.backoff_ms.saturating_mul(1 << (attempts - 1).min(16));
                    thread::sleep(Duration::from_millis(wait));
                }
            }
        }
    }
}

/// Follows a dotted path (`choices.0.message.content`) into a JSON value.
pub fn extract_path(value: &Value, path: &str) -> Option<String> {
    let mut cur = value;
    for seg in path.split('.').filter(|s| !s.is_empty()) {
        cur = match cur {
            Value::Object(m) => m.get(seg)?,
            Value::Array(a) => a.get(seg.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    match cur {
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}
