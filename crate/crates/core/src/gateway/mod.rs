//! Chat-completion access behind named profiles.
//!
//! A profile is either `remote` (an OpenAI-compatible HTTP endpoint) or
//! `mock` (a deterministic in-process responder used by tests and the
//! bundled pipeline).

mod mock;
mod remote;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use mock::{MockOptions, MockResponder};
pub use remote::{chat_completion_body, RemoteClient};

use crate::error::{Error, Result};
use crate::io::write_jsonl;

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_TOP_P: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Remote,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayProfile {
    #[serde(default)]
    pub profile_name: String,
    pub kind: ProfileKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Upper bound on concurrent calls through this profile.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// First retry delay; doubled on each further attempt.
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub mock: MockOptions,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_top_p() -> f64 {
    DEFAULT_TOP_P
}
fn default_timeout() -> u64 {
    60
}
fn default_retries() -> u32 {
    3
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff() -> u64 {
    1000
}

impl GatewayProfile {
    pub fn mock(name: &str) -> Self {
        GatewayProfile {
            profile_name: name.to_string(),
            kind: ProfileKind::Mock,
            base_url: None,
            model_name: Some(format!("mock-{name}")),
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            timeout_s: default_timeout(),
            max_retries: default_retries(),
            api_key_env: None,
            concurrency: default_concurrency(),
            backoff_base_ms: default_backoff(),
            mock: MockOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::GatewayConfig(format!("profile {}: {m}", self.profile_name)));
        if self.profile_name.is_empty() {
            return Err(Error::GatewayConfig("profile without a name".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p {} outside (0, 1]", self.top_p));
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        if self.kind == ProfileKind::Remote {
            for (field, v) in [
                ("base_url", &self.base_url),
                ("model_name", &self.model_name),
                ("api_key_env", &self.api_key_env),
            ] {
                if v.as_deref().is_none_or(str::is_empty) {
                    return bad(format!("remote profile requires {field}"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.mock.accuracy) {
            return bad(format!("mock accuracy {} outside [0, 1]", self.mock.accuracy));
        }
        Ok(())
    }
}

/// All profiles of a profiles file, keyed by name. Each top-level table of
/// the file is one profile.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileSet {
    profiles: BTreeMap<String, GatewayProfile>,
}

impl ProfileSet {
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let raw: BTreeMap<String, GatewayProfile> =
            toml::from_str(text).map_err(|e| Error::GatewayConfig(format!("profiles file: {e}")))?;
        let mut profiles = BTreeMap::new();
        for (name, mut p) in raw {
            p.profile_name = name.clone();
            if let (Some(dir), Some(f)) = (base_dir, p.mock.fixtures.as_ref()) {
                if f.is_relative() {
                    p.mock.fixtures = Some(dir.join(f));
                }
            }
            p.validate()?;
            profiles.insert(name, p);
        }
        Ok(ProfileSet { profiles })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent())
    }

    pub fn from_profiles(list: impl IntoIterator<Item = GatewayProfile>) -> Result<Self> {
        let mut profiles = BTreeMap::new();
        for p in list {
            p.validate()?;
            profiles.insert(p.profile_name.clone(), p);
        }
        Ok(ProfileSet { profiles })
    }

    pub fn get(&self, name: &str) -> Result<&GatewayProfile> {
        self.profiles.get(name).ok_or_else(|| {
            Error::GatewayConfig(format!(
                "unknown profile {name:?}; known: {}",
                self.profiles.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.profiles.contains_key(name)
    }
}

/// One request/response round with its audit data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub profile_name: String,
    pub prompt: String,
    pub response: String,
    pub latency_ms: f64,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ChatExchange {
    /// Same exchange with latency zeroed, for comparisons across runs.
    pub fn without_latency(&self) -> Self {
        ChatExchange { latency_ms: 0.0, ..self.clone() }
    }
}

/// Append-only audit log shared by concurrent callers.
#[derive(Debug, Default)]
pub struct ExchangeLog {
    entries: Mutex<Vec<ChatExchange>>,
}

impl ExchangeLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, e: ChatExchange) {
        self.entries.lock().expect("exchange log poisoned").push(e);
    }

    pub fn entries(&self) -> Vec<ChatExchange> {
        self.entries.lock().expect("exchange log poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("exchange log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.entries())
    }
}

/// A ready-to-use client for one profile.
pub struct Gateway {
    profile: GatewayProfile,
    backend: Backend,
}

enum Backend {
    Mock(MockResponder),
    Remote(RemoteClient),
}

/// Failure of a single attempt, and whether retrying may help.
#[derive(Debug, Clone)]
pub(crate) struct AttemptError {
    pub message: String,
    pub transient: bool,
}

impl Gateway {
    /// Validates the profile and prepares its backend. A remote profile whose
    /// key variable is unset fails here, before any request is made.
    pub fn connect(profile: &GatewayProfile) -> Result<Self> {
        profile.validate()?;
        let backend = match profile.kind {
            ProfileKind::Mock => Backend::Mock(MockResponder::new(profile)?),
            ProfileKind::Remote => Backend::Remote(RemoteClient::new(profile)?),
        };
        Ok(Gateway { profile: profile.clone(), backend })
    }

    pub fn profile(&self) -> &GatewayProfile {
        &self.profile
    }

    pub fn chat(&self, prompt: &str, log: Option<&ExchangeLog>) -> Result<ChatExchange> {
        let started = Instant::now();
        let max_attempts = self.profile.max_retries + 1;
        let mut attempts = 0;
        let mut last_error = String::new();
        while attempts < max_attempts {
            attempts += 1;
            let outcome = match &self.backend {
                Backend::Mock(m) => m.respond(prompt),
                Backend::Remote(r) => r.complete(prompt),
            };
            match outcome {
                Ok(response) => {
                    let ex = self.exchange(prompt, response, started, attempts, None);
                    if let Some(log) = log {
                        log.push(ex.clone());
                    }
                    return Ok(ex);
                }
                Err(e) => {
                    log::debug!("{}: attempt {attempts} failed: {}", self.profile.profile_name, e.message);
                    last_error = e.message;
                    if !e.transient {
                        break;
                    }
                    if attempts < max_attempts {
                        if let Backend::Remote(r) = &self.backend {
                            std::thread::sleep(r.backoff_delay(attempts));
                        }
                    }
                }
            }
        }
        if let Some(log) = log {
            log.push(self.exchange(prompt, String::new(), started, attempts, Some(last_error.clone())));
        }
        Err(Error::GatewayExhausted {
            profile: self.profile.profile_name.clone(),
            attempts,
            last_error,
        })
    }

    fn exchange(&self, prompt: &str, response: String, started: Instant, attempts: u32, error: Option<String>) -> ChatExchange {
        ChatExchange {
            profile_name: self.profile.profile_name.clone(),
            prompt: prompt.to_string(),
            response,
            latency_ms: started.elapsed().as_secs_f64() * 1000.0,
            attempts,
            error,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_file_parses_and_validates() {
        let set = ProfileSet::from_toml(
            r#"
            [gpt4]
            kind = "remote"
            base_url = "http://localhost:1"
            model_name = "gpt-4"
            api_key_env = "OPFUNKB_TEST_KEY"

            [m1]
            kind = "mock"
            mock = { accuracy = 0.7 }
            "#,
            None,
        )
        .unwrap();
        let g = set.get("gpt4").unwrap();
        assert_eq!(g.temperature, 0.2);
        assert_eq!(g.top_p, 1.0);
        assert_eq!(set.get("m1").unwrap().mock.accuracy, 0.7);
        assert!(set.get("nope").is_err());
    }

    #[test]
    fn remote_requires_fields() {
        let err = ProfileSet::from_toml("[r]\nkind = \"remote\"\nmodel_name = \"x\"\n", None).unwrap_err();
        assert!(matches!(err, Error::GatewayConfig(m) if m.contains("base_url")));
    }

    #[test]
    fn mock_is_deterministic_and_logged() {
        let g = Gateway::connect(&GatewayProfile::mock("m")).unwrap();
        let log = ExchangeLog::new();
        let a = g.chat("hello", Some(&log)).unwrap();
        let b = g.chat("hello", Some(&log)).unwrap();
        assert_eq!(a.without_latency(), b.without_latency());
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn failure_injection_counts_attempts() {
        let mut p = GatewayProfile::mock("bad");
        p.max_retries = 2;
        p.mock.fail_always = true;
        let g = Gateway::connect(&p).unwrap();
        let log = ExchangeLog::new();
        let err = g.chat("x", Some(&log)).unwrap_err();
        assert!(matches!(err, Error::GatewayExhausted { attempts: 3, .. }));
        assert_eq!(log.entries()[0].attempts, 3);
        assert!(log.entries()[0].error.is_some());
    }
}
