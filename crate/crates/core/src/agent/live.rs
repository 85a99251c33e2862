//! HTTP backend for live model endpoints.
//!
//! Request: `{task_text, role, task_kind, view_fragments[], max_tokens}`.
//! Response: a tagged response body (`{"kind":"verdict",...}`), or any object
//! with a `refusal` field. Free-text replies are scanned for refusal phrases.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::{AgentBackend, AgentSpec, BackendReply, GatewayError, ResponseBody, TaskSpec};
use crate::context::{ContextView, Fragment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_token_env")]
    pub token_env: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_refusal_markers")]
    pub refusal_markers: Vec<String>,
}

fn default_token_env() -> String {
    "GAUNTLET_API_TOKEN".into()
}

fn default_max_tokens() -> u32 {
    4096
}

fn default_refusal_markers() -> Vec<String> {
    ["i can't help with", "i cannot help with", "i won't assist", "i'm unable to assist"]
        .into_iter()
        .map(String::from)
        .collect()
}

#[derive(Serialize)]
struct Request<'a> {
    task_text: &'a str,
    role: &'a str,
    task_kind: &'a str,
    view_fragments: &'a [Fragment],
    max_tokens: u32,
}

pub struct LiveBackend {
    config: LiveConfig,
    agent: ureq::Agent,
    timeout: Duration,
}

impl LiveBackend {
    pub fn new(config: LiveConfig, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            agent,
            timeout,
        }
    }

    fn classify(&self, raw: &str) -> Result<ResponseBody, GatewayError> {
        let value: Value = serde_json::from_str(raw)
            .map_err(|e| GatewayError::MalformedResponse(format!("not JSON: {e}")))?;
        if let Some(reason) = value.get("refusal") {
            let refusal_reason = match reason {
                Value::String(s) => s.clone(),
                Value::Bool(true) => "refused".into(),
                Value::Bool(false) | Value::Null => String::new(),
                other => other.to_string(),
            };
            if !refusal_reason.is_empty() {
                return Ok(ResponseBody::Refusal { refusal_reason });
            }
        }
        if value.get("kind").is_some() {
            return serde_json::from_value(value)
                .map_err(|e| GatewayError::MalformedResponse(e.to_string()));
        }
        if let Some(text) = value.get("text").and_then(Value::as_str) {
            let lower = text.to_lowercase();
            if let Some(m) = self.config.refusal_markers.iter().find(|m| lower.contains(m.as_str())) {
                return Ok(ResponseBody::Refusal {
                    refusal_reason: format!("marker phrase: {m}"),
                });
            }
        }
        Err(GatewayError::MalformedResponse("no structured body".into()))
    }
}

impl AgentBackend for LiveBackend {
    fn invoke(
        &self,
        agent: &AgentSpec,
        task: &TaskSpec,
        view: Option<&ContextView>,
    ) -> Result<BackendReply, GatewayError> {
        let token = std::env::var(&self.config.token_env).map_err(|_| {
            GatewayError::BackendUnavailable(format!("{} is not set", self.config.token_env))
        })?;
        let fragments: &[Fragment] = view.map(|v| v.content.as_slice()).unwrap_or(&[]);
        let request = Request {
            task_text: &task.text,
            role: agent.role.as_str(),
            task_kind: task.kind.as_str(),
            view_fragments: fragments,
            max_tokens: self.config.max_tokens,
        };
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {token}"))
            .header("X-Model-Family", &agent.model_family)
            .send_json(&request)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => GatewayError::Timeout(self.timeout),
                other => GatewayError::BackendUnavailable(other.to_string()),
            })?;
        let status = resp.status().as_u16();
        let raw = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::BackendUnavailable(e.to_string()))?;
        if status >= 400 {
            return Err(GatewayError::BackendUnavailable(format!("HTTP {status}")));
        }
        let body = self.classify(&raw)?;
        let transcript = format!(
            "request: {}\nresponse: {raw}\n",
            serde_json::to_string(&request).unwrap_or_default()
        );
        Ok(BackendReply { body, transcript })
    }
}
