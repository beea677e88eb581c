//! The participant-facing study service.
//!
//! A session moves through consent, username submission, background history
//! collection and recommendation, then per-track and global questions:
//!
//! ```text
//! Created → Consented → Collecting → Recommending → Rating → Completed
//!     └──────────┴───────────┴─────────────┴───────────┴──→ Failed(reason)
//! ```
//!
//! Collection and scoring run on background tasks; request handlers only read
//! progress. Every accepted change is appended to an NDJSON log before it is
//! acknowledged, and sessions can be rebuilt from that log.

mod config;
mod http;
mod log;
mod questions;
mod service;
mod session;

pub use config::{AssignmentPolicy, ModelEntry, StudyConfig, ENV_PREFIX};
pub use http::{router, serve};
pub use log::{
    export_records, read_log, replay, replay_file, write_ndjson, DateRange, EventRecord, ExportRecord, LogEvent,
    LogRecord, ResponseLog,
};
pub use questions::{AnswerValue, Answers, Question, QuestionKind, QuestionSet, MAX_TEXT_CHARS};
pub use service::{ItemView, ItemsView, JobHandle, JobPhase, ModelRegistry, ServedModel, StatusView, StudyService};
pub use session::{FailureReason, GlobalResponse, SessionEvent, SessionState, StudySession, TrackResponse};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StudyError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("illegal transition: {event} in state {state}")]
    IllegalTransition { state: SessionState, event: &'static str },
    #[error("operation not allowed in state {0}")]
    WrongState(SessionState),
    #[error("invalid answer for question {0:?}")]
    InvalidAnswer(String),
    #[error("no presented item at rank {0}")]
    UnknownRank(usize),
    #[error("response already recorded")]
    DuplicateResponse,
    #[error("a job is already attached to this session")]
    JobAlreadyRunning,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unauthorized")]
    Unauthorized,
    #[error("configuration: {0}")]
    Config(String),
    #[error("model: {0}")]
    Model(String),
    #[error("log line {line}: {reason}")]
    Log { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl From<std::io::Error> for StudyError {
    fn from(e: std::io::Error) -> Self {
        StudyError::Io(e.to_string())
    }
}

pub(crate) fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}
