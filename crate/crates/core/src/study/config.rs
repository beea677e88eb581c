use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::StudyError;
use crate::preview::PreviewConfig;
use crate::scrobble::ScrobbleApiConfig;

/// Prefix of environment variables that override file settings.
pub const ENV_PREFIX: &str = "LIVEREC_";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    pub path: PathBuf,
}

/// How sessions are matched to models.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum AssignmentPolicy {
    /// Every session uses the named model.
    Fixed { model: String },
    /// Sessions cycle through the configured models in order.
    RoundRobin,
}

/// Service configuration, read from TOML with `LIVEREC_*` overrides.
///
/// ```toml
/// port = 8080
/// admin_token = "change-me"
/// log_path = "data/responses.ndjson"
/// list_length = 10
/// eligibility_threshold = 1000
///
/// [scrobble]
/// base_url = "http://127.0.0.1:8090"
///
/// [catalog]
/// base_url = "http://127.0.0.1:8091"
///
/// [[models]]
/// name = "mf"
/// path = "models/mf.lrs"
///
/// [assignment]
/// policy = "round-robin"
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub bind: String,
    pub port: u16,
    pub admin_token: String,
    pub scrobble: ScrobbleApiConfig,
    pub catalog: PreviewConfig,
    pub models: Vec<ModelEntry>,
    pub assignment: AssignmentPolicy,
    /// Number of tracks presented to each participant.
    pub list_length: usize,
    /// Ranked candidates handed to preview resolution, leaving room for misses.
    pub candidate_depth: usize,
    pub eligibility_threshold: u64,
    /// Concurrent scoring jobs.
    pub cpu_workers: usize,
    /// Concurrent collection jobs.
    pub io_workers: usize,
    pub questions_path: Option<PathBuf>,
    pub log_path: PathBuf,
    /// Sync the log to disk after every record.
    pub log_fsync: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            admin_token: String::new(),
            scrobble: ScrobbleApiConfig::default(),
            catalog: PreviewConfig::default(),
            models: Vec::new(),
            assignment: AssignmentPolicy::RoundRobin,
            list_length: 10,
            candidate_depth: 100,
            eligibility_threshold: 1000,
            cpu_workers: 2,
            io_workers: 8,
            questions_path: None,
            log_path: PathBuf::from("responses.ndjson"),
            log_fsync: true,
        }
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self, StudyError> {
        toml::from_str(text).map_err(|e| StudyError::Config(e.to_string()))
    }

    /// Reads `path`, then applies overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self, StudyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StudyError::Config(format!("reading {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    /// Applies `LIVEREC_*` overrides looked up through `var`.
    pub fn apply_env<F>(&mut self, var: F) -> Result<(), StudyError>
    where
        F: Fn(&str) -> Option<String>,
    {
        let get = |name: &str| var(&format!("{ENV_PREFIX}{name}"));
        fn parse<T: std::str::FromStr>(name: &str, v: String) -> Result<T, StudyError> {
            v.trim()
                .parse()
                .map_err(|_| StudyError::Config(format!("{ENV_PREFIX}{name}: cannot parse {v:?}")))
        }
        if let Some(v) = get("BIND") {
            self.bind = v;
        }
        if let Some(v) = get("PORT") {
            self.port = parse("PORT", v)?;
        }
        if let Some(v) = get("ADMIN_TOKEN") {
            self.admin_token = v;
        }
        if let Some(v) = get("SCROBBLE_BASE_URL") {
            self.scrobble.base_url = v;
        }
        if let Some(v) = get("SCROBBLE_API_KEY") {
            self.scrobble.api_key = Some(v);
        }
        if let Some(v) = get("CATALOG_BASE_URL") {
            self.catalog.base_url = v;
        }
        if let Some(v) = get("LIST_LENGTH") {
            self.list_length = parse("LIST_LENGTH", v)?;
        }
        if let Some(v) = get("ELIGIBILITY_THRESHOLD") {
            self.eligibility_threshold = parse("ELIGIBILITY_THRESHOLD", v)?;
        }
        if let Some(v) = get("CPU_WORKERS") {
            self.cpu_workers = parse("CPU_WORKERS", v)?;
        }
        if let Some(v) = get("IO_WORKERS") {
            self.io_workers = parse("IO_WORKERS", v)?;
        }
        if let Some(v) = get("QUESTIONS_PATH") {
            self.questions_path = Some(v.into());
        }
        if let Some(v) = get("LOG_PATH") {
            self.log_path = v.into();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        let bad = |m: &str| Err(StudyError::Config(m.into()));
        if self.models.is_empty() {
            return bad("at least one model is required");
        }
        for (i, m) in self.models.iter().enumerate() {
            if self.models[..i].iter().any(|o| o.name == m.name) {
                return Err(StudyError::Config(format!("duplicate model name {:?}", m.name)));
            }
        }
        if let AssignmentPolicy::Fixed { model } = &self.assignment {
            if !self.models.iter().any(|m| &m.name == model) {
                return Err(StudyError::Config(format!("fixed model {model:?} is not configured")));
            }
        }
        if self.list_length == 0 {
            return bad("list_length must be positive");
        }
        if self.candidate_depth < self.list_length {
            return bad("candidate_depth must be at least list_length");
        }
        if self.cpu_workers == 0 || self.io_workers == 0 {
            return bad("worker pools need at least one worker");
        }
        if self.admin_token.is_empty() {
            return bad("admin_token must be set");
        }
        self.scrobble.validate().map_err(|e| StudyError::Config(e.to_string()))
    }
}
