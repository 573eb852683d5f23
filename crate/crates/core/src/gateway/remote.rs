use std::time::Duration;

use rand::Rng;
use serde_json::{json, Value};

use super::{AttemptError, GatewayProfile};
use crate::error::{Error, Result};

/// Client for `POST {base_url}/chat/completions`.
pub struct RemoteClient {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: String,
    temperature: f64,
    top_p: f64,
    backoff_base_ms: u64,
}

/// Request body in the OpenAI chat-completions shape.
pub fn chat_completion_body(model: &str, prompt: &str, temperature: f64, top_p: f64) -> Value {
    json!({
        "model": model,
        "messages": [{ "role": "user", "content": prompt }],
        "temperature": temperature,
        "top_p": top_p,
    })
}

impl RemoteClient {
    pub fn new(profile: &GatewayProfile) -> Result<Self> {
        let env = profile.api_key_env.clone().unwrap_or_default();
        let api_key = std::env::var(&env).map_err(|_| {
            Error::GatewayConfig(format!(
                "profile {}: environment variable {env} is not set",
                profile.profile_name
            ))
        })?;
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(profile.timeout_s.max(1))))
            .http_status_as_error(false)
            .build();
        let base = profile.base_url.clone().unwrap_or_default();
        Ok(RemoteClient {
            agent: config.into(),
            url: format!("{}/chat/completions", base.trim_end_matches('/')),
            model: profile.model_name.clone().unwrap_or_default(),
            api_key,
            temperature: profile.temperature,
            top_p: profile.top_p,
            backoff_base_ms: profile.backoff_base_ms,
        })
    }

    pub(crate) fn complete(&self, prompt: &str) -> Result<String, AttemptError> {
        let body = chat_completion_body(&self.model, prompt, self.temperature, self.top_p);
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| AttemptError {
                message: e.to_string(),
                transient: is_transient(&e),
            })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| AttemptError {
            message: format!("reading response body: {e}"),
            transient: true,
        })?;
        if status != 200 {
            return Err(AttemptError {
                message: format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
                transient: status == 408 || status == 429 || status >= 500,
            });
        }
        extract_content(&text).map_err(|message| AttemptError { message, transient: false })
    }

    /// Delay before retry number `attempt` (1-based): base * 2^(attempt-1)
    /// plus up to 25% jitter.
    pub(crate) fn backoff_delay(&self, attempt: u32) -> Duration {
        let base = self.backoff_base_ms as f64 * 2f64.powi(attempt.saturating_sub(1) as i32);
        let jitter = rand::rng().random_range(0.0..0.25);
        Duration::from_secs_f64(base * (1.0 + jitter) / 1000.0)
    }
}

fn is_transient(e: &ureq::Error) -> bool {
    matches!(
        e,
        ureq::Error::Io(_) | ureq::Error::Timeout(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound
    )
}

fn extract_content(text: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(text).map_err(|e| format!("response is not JSON: {e}"))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| "response lacks choices[0].message.content".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_shape() {
        let b = chat_completion_body("gpt-4", "hi", 0.2, 1.0);
        assert_eq!(b["model"], "gpt-4");
        assert_eq!(b["messages"][0]["content"], "hi");
        assert_eq!(b["temperature"], 0.2);
        assert_eq!(b["top_p"], 1.0);
    }

    #[test]
    fn content_extraction() {
        assert_eq!(
            extract_content(r#"{"choices":[{"message":{"role":"assistant","content":"ok"}}]}"#).unwrap(),
            "ok"
        );
        assert!(extract_content("{}").is_err());
        assert!(extract_content("nope").is_err());
    }
}
