use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::questions::Answers;
use super::StudyError;
use crate::dataset::TrackKey;
use crate::preview::PresentationList;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    Ineligible,
    UserNotFound,
    PrivateAccount,
    CatalogUnavailable,
    Internal,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::Ineligible => "ineligible",
            FailureReason::UserNotFound => "user-not-found",
            FailureReason::PrivateAccount => "private-account",
            FailureReason::CatalogUnavailable => "catalog-unavailable",
            FailureReason::Internal => "internal",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "reason")]
pub enum SessionState {
    Created,
    Consented,
    Collecting,
    Recommending,
    Rating,
    Completed,
    Failed(FailureReason),
}

impl SessionState {
    pub fn name(&self) -> &'static str {
        match self {
            SessionState::Created => "created",
            SessionState::Consented => "consented",
            SessionState::Collecting => "collecting",
            SessionState::Recommending => "recommending",
            SessionState::Rating => "rating",
            SessionState::Completed => "completed",
            SessionState::Failed(_) => "failed",
        }
    }

    pub fn reason(&self) -> Option<FailureReason> {
        match self {
            SessionState::Failed(r) => Some(*r),
            _ => None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, SessionState::Completed | SessionState::Failed(_))
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionState::Failed(r) => write!(f, "failed({r})"),
            s => f.write_str(s.name()),
        }
    }
}

/// Inputs to the session state machine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum SessionEvent {
    Consent,
    UsernameAccepted {
        username: String,
        /// Name of the model assigned to serve this session.
        model: String,
    },
    CollectionDone,
    RecommendationDone {
        items: PresentationList,
    },
    LastResponse,
    Failure {
        reason: FailureReason,
    },
}

impl SessionEvent {
    pub fn name(&self) -> &'static str {
        match self {
            SessionEvent::Consent => "consent",
            SessionEvent::UsernameAccepted { .. } => "username_accepted",
            SessionEvent::CollectionDone => "collection_done",
            SessionEvent::RecommendationDone { .. } => "recommendation_done",
            SessionEvent::LastResponse => "last_response",
            SessionEvent::Failure { .. } => "failure",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackResponse {
    pub session_id: String,
    /// 1-based position in the presented list.
    pub rank: usize,
    pub track: TrackKey,
    pub answers: Answers,
    /// Unix milliseconds.
    pub answered_at: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalResponse {
    pub session_id: String,
    pub answers: Answers,
    pub answered_at: u64,
}

/// One participant's run through the study. Timestamps are unix milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySession {
    pub session_id: String,
    pub state: SessionState,
    pub username: Option<String>,
    pub model: Option<String>,
    pub items: Option<PresentationList>,
    pub track_responses: BTreeMap<usize, TrackResponse>,
    pub global_response: Option<GlobalResponse>,
    pub created_at: u64,
    pub updated_at: u64,
}

impl StudySession {
    pub fn new(session_id: impl Into<String>, at: u64) -> Self {
        Self {
            session_id: session_id.into(),
            state: SessionState::Created,
            username: None,
            model: None,
            items: None,
            track_responses: BTreeMap::new(),
            global_response: None,
            created_at: at,
            updated_at: at,
        }
    }

    pub fn n_items(&self) -> usize {
        self.items.as_ref().map_or(0, |l| l.len())
    }

    /// True once every presented item and the global form have a response.
    pub fn responses_complete(&self) -> bool {
        self.items.is_some()
            && self.global_response.is_some()
            && (1..=self.n_items()).all(|r| self.track_responses.contains_key(&r))
    }

    /// Applies one state-machine event. Rejected events leave the session
    /// untouched.
    pub fn apply(&mut self, event: SessionEvent, at: u64) -> Result<(), StudyError> {
        use SessionState::*;
        let illegal = |state: SessionState, event: &SessionEvent| StudyError::IllegalTransition {
            state,
            event: event.name(),
        };
        let next = match (&self.state, &event) {
            (Created, SessionEvent::Consent) => Consented,
            (Consented, SessionEvent::UsernameAccepted { .. }) => Collecting,
            (Collecting, SessionEvent::CollectionDone) => Recommending,
            (Recommending, SessionEvent::RecommendationDone { .. }) => Rating,
            (Rating, SessionEvent::LastResponse) if self.responses_complete() => Completed,
            (s, SessionEvent::Failure { reason }) if !s.is_terminal() => Failed(*reason),
            (s, e) => return Err(illegal(*s, e)),
        };
        match event {
            SessionEvent::UsernameAccepted { username, model } => {
                self.username = Some(username);
                self.model = Some(model);
            }
            SessionEvent::RecommendationDone { items } => self.items = Some(items),
            _ => {}
        }
        self.state = next;
        self.updated_at = at;
        Ok(())
    }

    fn require_rating(&self) -> Result<(), StudyError> {
        if self.state == SessionState::Rating {
            Ok(())
        } else {
            Err(StudyError::WrongState(self.state))
        }
    }

    /// Checks that a track response for `rank` may be recorded.
    pub fn check_track_slot(&self, rank: usize) -> Result<&TrackKey, StudyError> {
        self.require_rating()?;
        let item = rank
            .checked_sub(1)
            .and_then(|i| self.items.as_ref()?.items.get(i))
            .ok_or(StudyError::UnknownRank(rank))?;
        if self.track_responses.contains_key(&rank) {
            return Err(StudyError::DuplicateResponse);
        }
        Ok(&item.track)
    }

    pub fn check_global_slot(&self) -> Result<(), StudyError> {
        self.require_rating()?;
        if self.global_response.is_some() {
            return Err(StudyError::DuplicateResponse);
        }
        Ok(())
    }

    pub fn add_track_response(&mut self, r: TrackResponse) -> Result<(), StudyError> {
        let track = self.check_track_slot(r.rank)?;
        if *track != r.track {
            return Err(StudyError::UnknownRank(r.rank));
        }
        self.updated_at = r.answered_at;
        self.track_responses.insert(r.rank, r);
        Ok(())
    }

    pub fn add_global_response(&mut self, r: GlobalResponse) -> Result<(), StudyError> {
        self.check_global_slot()?;
        self.updated_at = r.answered_at;
        self.global_response = Some(r);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preview::{PresentationItem, PreviewResult};

    fn list(n: usize) -> PresentationList {
        let items = (0..n)
            .map(|i| PresentationItem {
                source_rank: i,
                track: TrackKey::new("A", &format!("T{i}")),
                preview: PreviewResult {
                    catalog_track_id: format!("c{i}"),
                    preview_url: String::new(),
                    artwork_url: String::new(),
                    preview_duration: 30,
                    embed_markup_ref: String::new(),
                },
            })
            .collect();
        PresentationList {
            items,
            requested_n: n,
            discarded_count: 0,
            discarded: vec![],
            shortfall: false,
        }
    }

    fn rating(n: usize) -> StudySession {
        let mut s = StudySession::new("s", 0);
        s.apply(SessionEvent::Consent, 1).unwrap();
        s.apply(
            SessionEvent::UsernameAccepted {
                username: "u".into(),
                model: "mf".into(),
            },
            2,
        )
        .unwrap();
        s.apply(SessionEvent::CollectionDone, 3).unwrap();
        s.apply(SessionEvent::RecommendationDone { items: list(n) }, 4).unwrap();
        s
    }

    #[test]
    fn happy_path_reaches_completed() {
        let mut s = rating(2);
        assert_eq!(s.state, SessionState::Rating);
        assert!(matches!(
            s.apply(SessionEvent::LastResponse, 5),
            Err(StudyError::IllegalTransition { .. })
        ));
        for rank in 1..=2 {
            let track = s.check_track_slot(rank).unwrap().clone();
            s.add_track_response(TrackResponse {
                session_id: "s".into(),
                rank,
                track,
                answers: Answers::new(),
                answered_at: 5,
            })
            .unwrap();
        }
        assert!(!s.responses_complete());
        s.add_global_response(GlobalResponse {
            session_id: "s".into(),
            answers: Answers::new(),
            answered_at: 6,
        })
        .unwrap();
        s.apply(SessionEvent::LastResponse, 7).unwrap();
        assert_eq!(s.state, SessionState::Completed);
        assert!(matches!(
            s.apply(SessionEvent::Consent, 8),
            Err(StudyError::IllegalTransition { .. })
        ));
        assert!(s
            .apply(
                SessionEvent::Failure {
                    reason: FailureReason::Internal
                },
                8
            )
            .is_err());
    }

    #[test]
    fn only_table_edges_are_legal() {
        let events = [
            SessionEvent::Consent,
            SessionEvent::UsernameAccepted {
                username: "u".into(),
                model: "m".into(),
            },
            SessionEvent::CollectionDone,
            SessionEvent::RecommendationDone { items: list(1) },
            SessionEvent::LastResponse,
        ];
        // walking the chain, only event i is accepted in state i
        let mut s = StudySession::new("s", 0);
        for (i, ev) in events.iter().enumerate().take(4) {
            for (j, other) in events.iter().enumerate() {
                if i != j {
                    let before = s.clone();
                    assert!(
                        s.apply(other.clone(), 9).is_err(),
                        "state {} accepted {}",
                        s.state,
                        other.name()
                    );
                    assert_eq!(s, before);
                }
            }
            s.apply(ev.clone(), i as u64).unwrap();
        }
        for start in 0..5 {
            let mut s = StudySession::new("s", 0);
            for ev in events.iter().take(start) {
                s.apply(ev.clone(), 0).unwrap();
            }
            s.apply(
                SessionEvent::Failure {
                    reason: FailureReason::Ineligible,
                },
                1,
            )
            .unwrap();
            assert_eq!(s.state, SessionState::Failed(FailureReason::Ineligible));
            assert!(s
                .apply(
                    SessionEvent::Failure {
                        reason: FailureReason::Internal
                    },
                    2
                )
                .is_err());
        }
    }

    #[test]
    fn response_slots() {
        let mut s = rating(2);
        assert!(matches!(s.check_track_slot(0), Err(StudyError::UnknownRank(0))));
        assert!(matches!(s.check_track_slot(3), Err(StudyError::UnknownRank(3))));
        let track = s.check_track_slot(1).unwrap().clone();
        let r = TrackResponse {
            session_id: "s".into(),
            rank: 1,
            track,
            answers: Answers::new(),
            answered_at: 5,
        };
        s.add_track_response(r.clone()).unwrap();
        assert!(matches!(s.add_track_response(r), Err(StudyError::DuplicateResponse)));

        let early = StudySession::new("s", 0);
        assert!(matches!(
            early.check_global_slot(),
            Err(StudyError::WrongState(SessionState::Created))
        ));
    }

    #[test]
    fn state_serializes_with_reason() {
        let s = serde_json::to_string(&SessionState::Failed(FailureReason::PrivateAccount)).unwrap();
        assert_eq!(s, r#"{"state":"failed","reason":"private-account"}"#);
        assert_eq!(
            serde_json::to_string(&SessionState::Rating).unwrap(),
            r#"{"state":"rating"}"#
        );
    }
}
