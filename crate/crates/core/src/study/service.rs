use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::Serialize;
use tokio::sync::Semaphore;

use super::config::{AssignmentPolicy, ModelEntry, StudyConfig};
use super::log::{export_records, replay_file, DateRange, ExportRecord, LogEvent, LogRecord, ResponseLog};
use super::questions::{Answers, Question, QuestionSet};
use super::session::{FailureReason, GlobalResponse, SessionEvent, SessionState, StudySession, TrackResponse};
use super::{now_ms, StudyError};
use crate::dataset::TrackKey;
use crate::preview::{PresentationList, PreviewError, PreviewResolver};
use crate::recommend::{read_model_file, recommend_top_n, ModelBundle, Scorer};
use crate::scrobble::{ScrobbleClient, ScrobbleError};

/// A trained model ready to serve, with its track index.
#[derive(Debug)]
pub struct ServedModel {
    pub name: String,
    pub bundle: ModelBundle,
    index: HashMap<TrackKey, usize>,
}

impl ServedModel {
    pub fn new(name: impl Into<String>, bundle: ModelBundle) -> Result<Self, StudyError> {
        let name = name.into();
        let n_items = bundle.model.n_items();
        if bundle.item_keys.len() != n_items {
            return Err(StudyError::Model(format!(
                "model {name:?} has {} item keys for {n_items} items",
                bundle.item_keys.len()
            )));
        }
        let index = bundle
            .item_keys
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect();
        Ok(Self { name, bundle, index })
    }

    /// Aggregates a listening history into `(item, count)` pairs over this
    /// model's catalog. Unknown tracks are dropped.
    pub fn user_vector<I>(&self, tracks: I) -> Vec<(usize, u32)>
    where
        I: IntoIterator,
        I::Item: Borrow<TrackKey>,
    {
        let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
        for t in tracks {
            if let Some(&i) = self.index.get(t.borrow()) {
                *counts.entry(i).or_default() += 1;
            }
        }
        counts.into_iter().collect()
    }
}

/// Models shared read-only by every session, with a count of model files
/// read from disk.
#[derive(Debug, Default)]
pub struct ModelRegistry {
    models: Vec<Arc<ServedModel>>,
    loads: AtomicUsize,
}

impl ModelRegistry {
    pub fn load(entries: &[ModelEntry]) -> Result<Self, StudyError> {
        let registry = Self::default();
        let mut models = Vec::with_capacity(entries.len());
        for e in entries {
            let bundle =
                read_model_file(&e.path).map_err(|err| StudyError::Model(format!("{}: {err}", e.path.display())))?;
            registry.loads.fetch_add(1, Ordering::SeqCst);
            tracing::info!(model = %e.name, path = %e.path.display(), kind = %bundle.model.kind(), "model loaded");
            models.push(Arc::new(ServedModel::new(e.name.clone(), bundle)?));
        }
        Ok(Self { models, ..registry })
    }

    /// Wraps models that are already in memory. No loads are counted.
    pub fn from_models(models: Vec<ServedModel>) -> Self {
        Self {
            models: models.into_iter().map(Arc::new).collect(),
            loads: AtomicUsize::new(0),
        }
    }

    pub fn load_count(&self) -> usize {
        self.loads.load(Ordering::SeqCst)
    }

    pub fn get(&self, name: &str) -> Option<&Arc<ServedModel>> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobPhase {
    Collecting,
    Recommending,
}

/// Progress of a session's background job.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JobHandle {
    pub session_id: String,
    pub phase: JobPhase,
    /// Fraction of the current phase done, in `[0, 1]`.
    pub progress: f64,
    pub error: Option<String>,
}

impl JobHandle {
    fn advance(&mut self, phase: JobPhase, progress: f64) {
        let progress = progress.clamp(0.0, 1.0);
        if phase != self.phase {
            self.phase = phase;
            self.progress = progress;
        } else {
            self.progress = self.progress.max(progress);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatusView {
    pub state: &'static str,
    pub phase: Option<JobPhase>,
    pub progress: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<FailureReason>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ItemView {
    pub rank: usize,
    pub artist: String,
    pub title: String,
    pub preview_url: String,
    pub artwork_url: String,
    pub embed_markup_ref: String,
    pub questions: Vec<Question>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ItemsView {
    pub state: &'static str,
    pub items: Vec<ItemView>,
    pub global_questions: Vec<Question>,
}

#[derive(Debug)]
struct Entry {
    session: StudySession,
    job: Option<JobHandle>,
}

type Slot = Arc<Mutex<Entry>>;

struct Inner {
    cfg: StudyConfig,
    questions: QuestionSet,
    models: ModelRegistry,
    scrobble: ScrobbleClient,
    resolver: PreviewResolver,
    cpu: Semaphore,
    io: Semaphore,
    sessions: RwLock<HashMap<String, Slot>>,
    log: ResponseLog,
    next_model: AtomicUsize,
}

/// Cheaply cloneable handle to the running study.
#[derive(Clone)]
pub struct StudyService {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for StudyService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StudyService")
            .field("models", &self.inner.models.names())
            .field("log", &self.inner.log.path())
            .finish_non_exhaustive()
    }
}

fn lock(slot: &Slot) -> std::sync::MutexGuard<'_, Entry> {
    slot.lock().unwrap_or_else(|p| p.into_inner())
}

impl StudyService {
    /// Builds the service from its configuration: reads the question set,
    /// loads every model once, and restores sessions from an existing log.
    pub fn from_config(cfg: StudyConfig) -> Result<Self, StudyError> {
        cfg.validate()?;
        let questions = match &cfg.questions_path {
            Some(p) => QuestionSet::load(p)?,
            None => QuestionSet::default(),
        };
        let models = ModelRegistry::load(&cfg.models)?;
        Self::new(cfg, questions, models)
    }

    /// Builds the service around already loaded models. `cfg.models` is
    /// ignored in favour of `models`.
    pub fn new(cfg: StudyConfig, questions: QuestionSet, models: ModelRegistry) -> Result<Self, StudyError> {
        questions.validate()?;
        if models.is_empty() {
            return Err(StudyError::Config("no models".into()));
        }
        if let AssignmentPolicy::Fixed { model } = &cfg.assignment {
            if models.get(model).is_none() {
                return Err(StudyError::Config(format!("fixed model {model:?} is not loaded")));
            }
        }
        let scrobble = ScrobbleClient::new(cfg.scrobble.clone()).map_err(|e| StudyError::Config(e.to_string()))?;
        let resolver = PreviewResolver::new(cfg.catalog.clone()).map_err(|e| StudyError::Config(e.to_string()))?;
        let restored = if cfg.log_path.exists() {
            replay_file(&cfg.log_path)?
        } else {
            BTreeMap::new()
        };
        let log = ResponseLog::open(&cfg.log_path, cfg.log_fsync)?;
        let service = Self {
            inner: Arc::new(Inner {
                cpu: Semaphore::new(cfg.cpu_workers.max(1)),
                io: Semaphore::new(cfg.io_workers.max(1)),
                cfg,
                questions,
                models,
                scrobble,
                resolver,
                sessions: RwLock::new(HashMap::new()),
                log,
                next_model: AtomicUsize::new(0),
            }),
        };
        service.restore(restored)?;
        Ok(service)
    }

    /// Reinstates replayed sessions. Jobs do not survive a restart, so
    /// sessions caught mid-job are failed.
    fn restore(&self, sessions: BTreeMap<String, StudySession>) -> Result<(), StudyError> {
        let n = sessions.len();
        for (id, session) in sessions {
            let mut entry = Entry { session, job: None };
            if matches!(
                entry.session.state,
                SessionState::Collecting | SessionState::Recommending
            ) {
                self.transition(
                    &mut entry,
                    SessionEvent::Failure {
                        reason: FailureReason::Internal,
                    },
                )?;
            }
            self.write_sessions().insert(id, Arc::new(Mutex::new(entry)));
        }
        if n > 0 {
            tracing::info!(sessions = n, "restored sessions from log");
        }
        Ok(())
    }

    pub fn config(&self) -> &StudyConfig {
        &self.inner.cfg
    }

    pub fn questions(&self) -> &QuestionSet {
        &self.inner.questions
    }

    pub fn models(&self) -> &ModelRegistry {
        &self.inner.models
    }

    /// Model files read since startup.
    pub fn model_load_count(&self) -> usize {
        self.inner.models.load_count()
    }

    fn read_sessions(&self) -> std::sync::RwLockReadGuard<'_, HashMap<String, Slot>> {
        self.inner.sessions.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write_sessions(&self) -> std::sync::RwLockWriteGuard<'_, HashMap<String, Slot>> {
        self.inner.sessions.write().unwrap_or_else(|p| p.into_inner())
    }

    fn slot(&self, id: &str) -> Result<Slot, StudyError> {
        self.read_sessions()
            .get(id)
            .cloned()
            .ok_or_else(|| StudyError::UnknownSession(id.to_string()))
    }

    /// Validates, persists, then applies one transition.
    fn transition(&self, entry: &mut Entry, event: SessionEvent) -> Result<(), StudyError> {
        let at = now_ms().max(entry.session.updated_at);
        let mut next = entry.session.clone();
        next.apply(event.clone(), at)?;
        self.inner
            .log
            .append(&LogRecord::event(&next.session_id, at, event.into()))?;
        tracing::debug!(session = %next.session_id, state = %next.state, "transition");
        entry.session = next;
        Ok(())
    }

    pub fn create_session(&self) -> Result<String, StudyError> {
        let id = format!("{:032x}", rand::random::<u128>());
        let at = now_ms();
        self.inner.log.append(&LogRecord::event(&id, at, LogEvent::Created))?;
        let entry = Entry {
            session: StudySession::new(id.clone(), at),
            job: None,
        };
        self.write_sessions().insert(id.clone(), Arc::new(Mutex::new(entry)));
        Ok(id)
    }

    pub fn consent(&self, id: &str) -> Result<SessionState, StudyError> {
        let slot = self.slot(id)?;
        let mut entry = lock(&slot);
        self.transition(&mut entry, SessionEvent::Consent)?;
        Ok(entry.session.state)
    }

    fn assign_model(&self) -> Arc<ServedModel> {
        let models = &self.inner.models;
        match &self.inner.cfg.assignment {
            AssignmentPolicy::Fixed { model } => models.get(model).expect("checked at startup").clone(),
            AssignmentPolicy::RoundRobin => {
                let i = self.inner.next_model.fetch_add(1, Ordering::SeqCst);
                models.models[i % models.len()].clone()
            }
        }
    }

    /// Accepts a username and starts the background pipeline. Returns as soon
    /// as the job is attached. `market` defaults to the catalog's default.
    pub fn submit_username(&self, id: &str, username: &str, market: Option<&str>) -> Result<JobHandle, StudyError> {
        let username = username.trim();
        if username.is_empty() {
            return Err(StudyError::InvalidRequest("username is empty".into()));
        }
        let slot = self.slot(id)?;
        let mut entry = lock(&slot);
        if entry.job.is_some() {
            return Err(StudyError::JobAlreadyRunning);
        }
        if entry.session.state != SessionState::Consented {
            return Err(StudyError::IllegalTransition {
                state: entry.session.state,
                event: "username_accepted",
            });
        }
        let model = self.assign_model();
        self.transition(
            &mut entry,
            SessionEvent::UsernameAccepted {
                username: username.to_string(),
                model: model.name.clone(),
            },
        )?;
        let job = JobHandle {
            session_id: id.to_string(),
            phase: JobPhase::Collecting,
            progress: 0.0,
            error: None,
        };
        entry.job = Some(job.clone());
        drop(entry);

        let market = market
            .map(str::to_string)
            .unwrap_or_else(|| self.inner.cfg.catalog.default_market.clone());
        let service = self.clone();
        let (id, username) = (id.to_string(), username.to_string());
        tokio::spawn(async move {
            let work = tokio::spawn({
                let service = service.clone();
                let id = id.clone();
                async move { service.pipeline(&id, &username, model, &market).await }
            });
            let failure = match work.await {
                Ok(Ok(())) => None,
                Ok(Err((reason, message))) => Some((reason, message)),
                Err(e) => Some((FailureReason::Internal, format!("job aborted: {e}"))),
            };
            if let Some((reason, message)) = failure {
                service.fail(&id, reason, message);
            }
        });
        Ok(job)
    }

    fn fail(&self, id: &str, reason: FailureReason, message: String) {
        tracing::warn!(session = id, %reason, message, "session failed");
        let Ok(slot) = self.slot(id) else { return };
        let mut entry = lock(&slot);
        if let Some(job) = entry.job.as_mut() {
            job.error = Some(message);
        }
        if let Err(e) = self.transition(&mut entry, SessionEvent::Failure { reason }) {
            tracing::error!(session = id, error = %e, "could not record failure");
        }
    }

    fn update_job(&self, id: &str, phase: JobPhase, progress: f64) {
        if let Ok(slot) = self.slot(id) {
            if let Some(job) = lock(&slot).job.as_mut() {
                job.advance(phase, progress);
            }
        }
    }

    fn step(&self, id: &str, event: SessionEvent) -> Result<(), (FailureReason, String)> {
        let internal = |e: StudyError| (FailureReason::Internal, e.to_string());
        let slot = self.slot(id).map_err(internal)?;
        let mut entry = lock(&slot);
        self.transition(&mut entry, event).map_err(internal)
    }

    async fn pipeline(
        &self,
        id: &str,
        username: &str,
        model: Arc<ServedModel>,
        market: &str,
    ) -> Result<(), (FailureReason, String)> {
        let inner = &self.inner;
        let scrobble_failure = |e: ScrobbleError| {
            let reason = match &e {
                ScrobbleError::UserNotFound(_) => FailureReason::UserNotFound,
                ScrobbleError::PrivateAccount(_) => FailureReason::PrivateAccount,
                _ => FailureReason::Internal,
            };
            (reason, e.to_string())
        };
        let closed = |_| (FailureReason::Internal, "worker pool closed".to_string());

        let history = {
            let _permit = inner.io.acquire().await.map_err(closed)?;
            let probe = inner
                .scrobble
                .check_eligibility(username, inner.cfg.eligibility_threshold)
                .await
                .map_err(scrobble_failure)?;
            if !probe.eligible {
                let reason = if probe.private {
                    FailureReason::PrivateAccount
                } else {
                    FailureReason::Ineligible
                };
                return Err((
                    reason,
                    format!("{} events, {} required", probe.event_count, probe.threshold),
                ));
            }
            inner
                .scrobble
                .fetch_user_history_with_progress(username, None, |done, total| {
                    self.update_job(id, JobPhase::Collecting, done as f64 / total as f64)
                })
                .await
                .map_err(scrobble_failure)?
        };
        // only the aggregated vector outlives this point
        let input = model.user_vector(history.iter().map(|e| e.track_key()));
        drop(history);
        tracing::info!(session = id, known_items = input.len(), "history collected");
        self.step(id, SessionEvent::CollectionDone)?;
        self.update_job(id, JobPhase::Recommending, 0.0);

        let scores = {
            let _permit = inner.cpu.acquire().await.map_err(closed)?;
            let model_ref = model.clone();
            let input = input.clone();
            tokio::task::spawn_blocking(move || model_ref.bundle.model.score(&input))
                .await
                .map_err(|e| (FailureReason::Internal, format!("scoring failed: {e}")))?
        };
        let history: HashSet<usize> = input.iter().map(|&(i, _)| i).collect();
        let ranked = recommend_top_n(&scores, &history, inner.cfg.candidate_depth);
        let keys: Vec<TrackKey> = ranked
            .items
            .iter()
            .map(|&(i, _)| model.bundle.item_keys[i].clone())
            .collect();
        self.update_job(id, JobPhase::Recommending, 0.5);

        let items: PresentationList = inner
            .resolver
            .resolve_ranked_list(&keys, market, inner.cfg.list_length)
            .await
            .map_err(|e| match e {
                PreviewError::CatalogUnavailable(m) => (FailureReason::CatalogUnavailable, m),
                PreviewError::InvalidQuery(m) => (FailureReason::Internal, m),
            })?;
        if items.is_empty() {
            return Err((
                FailureReason::CatalogUnavailable,
                "no candidate had a playable preview".into(),
            ));
        }
        if items.shortfall {
            tracing::warn!(
                session = id,
                got = items.len(),
                wanted = items.requested_n,
                "short presentation list"
            );
        }
        self.step(id, SessionEvent::RecommendationDone { items })?;
        self.update_job(id, JobPhase::Recommending, 1.0);
        Ok(())
    }

    pub fn status(&self, id: &str) -> Result<StatusView, StudyError> {
        let slot = self.slot(id)?;
        let entry = lock(&slot);
        Ok(StatusView {
            state: entry.session.state.name(),
            phase: entry.job.as_ref().map(|j| j.phase),
            progress: entry.job.as_ref().map(|j| j.progress),
            reason: entry.session.state.reason(),
        })
    }

    pub fn job(&self, id: &str) -> Result<Option<JobHandle>, StudyError> {
        Ok(lock(&self.slot(id)?).job.clone())
    }

    pub fn session(&self, id: &str) -> Result<StudySession, StudyError> {
        Ok(lock(&self.slot(id)?).session.clone())
    }

    /// Snapshot of every session, keyed by id.
    pub fn sessions(&self) -> BTreeMap<String, StudySession> {
        let slots: Vec<Slot> = self.read_sessions().values().cloned().collect();
        slots
            .iter()
            .map(|s| {
                let s = lock(s).session.clone();
                (s.session_id.clone(), s)
            })
            .collect()
    }

    pub fn items(&self, id: &str) -> Result<ItemsView, StudyError> {
        let session = self.session(id)?;
        let list = match (&session.state, &session.items) {
            (SessionState::Rating | SessionState::Completed, Some(list)) => list,
            (state, _) => return Err(StudyError::WrongState(*state)),
        };
        let questions = &self.inner.questions;
        Ok(ItemsView {
            state: session.state.name(),
            items: list
                .items
                .iter()
                .enumerate()
                .map(|(i, item)| ItemView {
                    rank: i + 1,
                    artist: item.track.artist_name.clone(),
                    title: item.track.track_title.clone(),
                    preview_url: item.preview.preview_url.clone(),
                    artwork_url: item.preview.artwork_url.clone(),
                    embed_markup_ref: item.preview.embed_markup_ref.clone(),
                    questions: questions.per_track.clone(),
                })
                .collect(),
            global_questions: questions.global.clone(),
        })
    }

    fn complete_if_done(&self, entry: &mut Entry) -> Result<(), StudyError> {
        if entry.session.responses_complete() {
            self.transition(entry, SessionEvent::LastResponse)?;
        }
        Ok(())
    }

    /// Validates and persists the answers for the item at 1-based `rank`.
    pub fn record_track_response(&self, id: &str, rank: usize, answers: Answers) -> Result<SessionState, StudyError> {
        let slot = self.slot(id)?;
        let mut entry = lock(&slot);
        let track = entry.session.check_track_slot(rank)?.clone();
        self.inner.questions.check_track_answers(&answers)?;
        let response = TrackResponse {
            session_id: id.to_string(),
            rank,
            track,
            answers,
            answered_at: now_ms().max(entry.session.updated_at),
        };
        let mut next = entry.session.clone();
        next.add_track_response(response.clone())?;
        self.inner.log.append(&LogRecord::TrackResponse(response))?;
        entry.session = next;
        self.complete_if_done(&mut entry)?;
        Ok(entry.session.state)
    }

    pub fn record_global_response(&self, id: &str, answers: Answers) -> Result<SessionState, StudyError> {
        let slot = self.slot(id)?;
        let mut entry = lock(&slot);
        entry.session.check_global_slot()?;
        self.inner.questions.check_global_answers(&answers)?;
        let response = GlobalResponse {
            session_id: id.to_string(),
            answers,
            answered_at: now_ms().max(entry.session.updated_at),
        };
        let mut next = entry.session.clone();
        next.add_global_response(response.clone())?;
        self.inner.log.append(&LogRecord::GlobalResponse(response))?;
        entry.session = next;
        self.complete_if_done(&mut entry)?;
        Ok(entry.session.state)
    }

    /// Checks a bearer token against the configured admin token.
    pub fn authorize(&self, token: Option<&str>) -> Result<(), StudyError> {
        let want = self.inner.cfg.admin_token.as_bytes();
        let got = token.unwrap_or("").as_bytes();
        let same = !want.is_empty()
            && want.len() == got.len()
            && want.iter().zip(got).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0;
        if same {
            Ok(())
        } else {
            Err(StudyError::Unauthorized)
        }
    }

    pub fn export(&self, token: Option<&str>, range: DateRange) -> Result<Vec<ExportRecord>, StudyError> {
        self.authorize(token)?;
        let sessions = self.sessions();
        Ok(export_records(sessions.values(), range))
    }
}
