//! Append-only NDJSON response log, replay, and researcher export.
//!
//! Every accepted state change and response is one line, written and flushed
//! before the request that caused it is acknowledged. Sessions can be rebuilt
//! from the log alone. Participants' listening histories never reach it.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::questions::Answers;
use super::session::{FailureReason, GlobalResponse, SessionEvent, StudySession, TrackResponse};
use super::StudyError;
use crate::preview::PresentationList;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Created,
    Consent,
    UsernameAccepted { username: String, model: String },
    CollectionDone,
    RecommendationDone { items: PresentationList },
    LastResponse,
    Failure { reason: FailureReason },
}

impl From<SessionEvent> for LogEvent {
    fn from(e: SessionEvent) -> Self {
        match e {
            SessionEvent::Consent => LogEvent::Consent,
            SessionEvent::UsernameAccepted { username, model } => LogEvent::UsernameAccepted { username, model },
            SessionEvent::CollectionDone => LogEvent::CollectionDone,
            SessionEvent::RecommendationDone { items } => LogEvent::RecommendationDone { items },
            SessionEvent::LastResponse => LogEvent::LastResponse,
            SessionEvent::Failure { reason } => LogEvent::Failure { reason },
        }
    }
}

impl LogEvent {
    /// The state-machine event this record encodes; `None` for creation.
    pub fn into_transition(self) -> Option<SessionEvent> {
        Some(match self {
            LogEvent::Created => return None,
            LogEvent::Consent => SessionEvent::Consent,
            LogEvent::UsernameAccepted { username, model } => SessionEvent::UsernameAccepted { username, model },
            LogEvent::CollectionDone => SessionEvent::CollectionDone,
            LogEvent::RecommendationDone { items } => SessionEvent::RecommendationDone { items },
            LogEvent::LastResponse => SessionEvent::LastResponse,
            LogEvent::Failure { reason } => SessionEvent::Failure { reason },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub session_id: String,
    pub at: u64,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    SessionEvent(EventRecord),
    TrackResponse(TrackResponse),
    GlobalResponse(GlobalResponse),
}

impl LogRecord {
    pub fn event(session_id: &str, at: u64, event: LogEvent) -> Self {
        LogRecord::SessionEvent(EventRecord {
            session_id: session_id.to_string(),
            at,
            event,
        })
    }
}

/// Durable, globally serialized log writer.
#[derive(Debug)]
pub struct ResponseLog {
    path: PathBuf,
    file: Mutex<File>,
    fsync: bool,
}

impl ResponseLog {
    /// Opens `path` for appending, creating it if needed.
    pub fn open(path: &Path, fsync: bool) -> Result<Self, StudyError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
            fsync,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one record as a single line and flushes it.
    pub fn append(&self, record: &LogRecord) -> Result<(), StudyError> {
        let mut line = serde_json::to_vec(record).map_err(|e| StudyError::Internal(e.to_string()))?;
        line.push(b'\n');
        let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        file.write_all(&line)?;
        file.flush()?;
        if self.fsync {
            file.sync_data()?;
        }
        Ok(())
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, StudyError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| StudyError::Log {
            line: i + 1,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Rebuilds every session from its log records, applying the same checks the
/// live service applies.
pub fn replay<I>(records: I) -> Result<BTreeMap<String, StudySession>, StudyError>
where
    I: IntoIterator<Item = LogRecord>,
{
    let mut sessions: BTreeMap<String, StudySession> = BTreeMap::new();
    for (i, record) in records.into_iter().enumerate() {
        let bad = |reason: String| StudyError::Log { line: i + 1, reason };
        match record {
            LogRecord::SessionEvent(EventRecord { session_id, at, event }) => match event.into_transition() {
                None => {
                    if sessions.contains_key(&session_id) {
                        return Err(bad(format!("session {session_id} created twice")));
                    }
                    sessions.insert(session_id.clone(), StudySession::new(session_id, at));
                }
                Some(ev) => sessions
                    .get_mut(&session_id)
                    .ok_or_else(|| bad(format!("unknown session {session_id}")))?
                    .apply(ev, at)
                    .map_err(|e| bad(e.to_string()))?,
            },
            LogRecord::TrackResponse(r) => sessions
                .get_mut(&r.session_id)
                .ok_or_else(|| bad(format!("unknown session {}", r.session_id)))?
                .add_track_response(r)
                .map_err(|e| bad(e.to_string()))?,
            LogRecord::GlobalResponse(r) => sessions
                .get_mut(&r.session_id)
                .ok_or_else(|| bad(format!("unknown session {}", r.session_id)))?
                .add_global_response(r)
                .map_err(|e| bad(e.to_string()))?,
        }
    }
    Ok(sessions)
}

pub fn replay_file(path: &Path) -> Result<BTreeMap<String, StudySession>, StudyError> {
    replay(read_log(path)?)
}

/// One exported response. Field order is fixed; global responses carry null
/// rank, artist and title.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub kind: String,
    pub session_id: String,
    pub username: Option<String>,
    pub model: Option<String>,
    pub session_state: String,
    pub rank: Option<usize>,
    pub artist: Option<String>,
    pub title: Option<String>,
    pub answers: Answers,
    pub answered_at: u64,
}

/// Inclusive-exclusive window on `answered_at`, in unix milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub from: Option<u64>,
    pub to: Option<u64>,
}

impl DateRange {
    pub fn contains(&self, t: u64) -> bool {
        self.from.is_none_or(|f| t >= f) && self.to.is_none_or(|to| t < to)
    }
}

/// Flattens sessions into response records, ordered by session creation time
/// then id, track responses by rank, global response last.
pub fn export_records<'a, I>(sessions: I, range: DateRange) -> Vec<ExportRecord>
where
    I: IntoIterator<Item = &'a StudySession>,
{
    let mut sessions: Vec<&StudySession> = sessions.into_iter().collect();
    sessions.sort_by(|a, b| (a.created_at, &a.session_id).cmp(&(b.created_at, &b.session_id)));
    let mut out = Vec::new();
    for s in sessions {
        let base = |kind: &str, answers: &Answers, answered_at| ExportRecord {
            kind: kind.into(),
            session_id: s.session_id.clone(),
            username: s.username.clone(),
            model: s.model.clone(),
            session_state: s.state.name().into(),
            rank: None,
            artist: None,
            title: None,
            answers: answers.clone(),
            answered_at,
        };
        for r in s.track_responses.values().filter(|r| range.contains(r.answered_at)) {
            out.push(ExportRecord {
                rank: Some(r.rank),
                artist: Some(r.track.artist_name.clone()),
                title: Some(r.track.track_title.clone()),
                ..base("track_response", &r.answers, r.answered_at)
            });
        }
        if let Some(g) = s.global_response.as_ref().filter(|g| range.contains(g.answered_at)) {
            out.push(base("global_response", &g.answers, g.answered_at));
        }
    }
    out
}

pub fn write_ndjson<W: Write, T: Serialize>(mut out: W, records: &[T]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_carry_kind_and_event_tags() {
        let r = LogRecord::event(
            "s1",
            5,
            LogEvent::Failure {
                reason: FailureReason::UserNotFound,
            },
        );
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(
            line,
            r#"{"kind":"session_event","session_id":"s1","at":5,"event":"failure","reason":"user-not-found"}"#
        );
        assert_eq!(serde_json::from_str::<LogRecord>(&line).unwrap(), r);
    }

    #[test]
    fn replay_rejects_orphans_and_illegal_edges() {
        let orphan = vec![LogRecord::event("x", 1, LogEvent::Consent)];
        assert!(matches!(replay(orphan), Err(StudyError::Log { line: 1, .. })));
        let illegal = vec![
            LogRecord::event("x", 1, LogEvent::Created),
            LogRecord::event("x", 2, LogEvent::CollectionDone),
        ];
        assert!(matches!(replay(illegal), Err(StudyError::Log { line: 2, .. })));
    }

    #[test]
    fn log_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/log.ndjson");
        let log = ResponseLog::open(&path, false).unwrap();
        log.append(&LogRecord::event("a", 1, LogEvent::Created)).unwrap();
        log.append(&LogRecord::event("a", 2, LogEvent::Consent)).unwrap();
        drop(log);
        // reopening appends
        let log = ResponseLog::open(&path, true).unwrap();
        log.append(&LogRecord::event("b", 3, LogEvent::Created)).unwrap();
        let sessions = replay_file(&path).unwrap();
        assert_eq!(sessions.len(), 2);
        assert_eq!(sessions["a"].state, crate::study::SessionState::Consented);
        assert_eq!(sessions["a"].updated_at, 2);
    }

    #[test]
    fn date_range_is_half_open() {
        let r = DateRange {
            from: Some(10),
            to: Some(20),
        };
        assert!(!r.contains(9) && r.contains(10) && r.contains(19) && !r.contains(20));
        assert!(DateRange::default().contains(0));
    }
}
