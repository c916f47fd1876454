//! Durable sessions, profiles and turn records, plus latency metrics.
//!
//! The file backend keeps three JSON-lines files in one directory:
//! `sessions.jsonl` and `profiles.jsonl` hold full snapshots (the last line
//! per id wins) and `turns.jsonl` holds one [`TurnRecord`] per line. Every
//! append is a single `write` followed by `fsync`; a torn final line left
//! by a crash is discarded on open. Readers are served from an in-memory
//! index rebuilt at open.

mod files;
mod metrics;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::guardrails::{Profile, ProfileValidationError};
use crate::pipeline::TurnRecord;

use files::JsonlFile;
pub use metrics::{compute_metrics, MetricsSummary, MetricsWindow, StrategyMetrics};

pub const DAY_MS: u64 = 86_400_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Ended,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub profile_id: String,
    pub created_at_ms: u64,
    pub device_label: String,
    pub status: SessionStatus,
    /// Turn ids below this are taken, even if their records were purged.
    #[serde(default)]
    pub next_turn_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredProfile {
    pub profile: Profile,
    pub version: u64,
    pub updated_at_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("session `{0}` not found")]
    UnknownSession(String),
    #[error("profile `{0}` not found")]
    UnknownProfile(String),
    #[error("session `{0}` has ended")]
    SessionEnded(String),
    #[error("turn {turn_id} already recorded for session `{session_id}`")]
    DuplicateTurn { session_id: String, turn_id: u64 },
    #[error(transparent)]
    Validation(#[from] ProfileValidationError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// Filters for [`Store::query_log`]; all optional and composable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogQuery {
    /// Inclusive lower bound on `started_at_ms`.
    pub from_ms: Option<u64>,
    /// Exclusive upper bound on `started_at_ms`.
    pub to_ms: Option<u64>,
    /// Cursor: only turns with a larger `turn_id`.
    pub after_turn: Option<u64>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogPage {
    pub records: Vec<TurnRecord>,
    /// Pass as `after_turn` to fetch the next page; absent on the last page.
    pub next_cursor: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurgeReport {
    pub removed: usize,
    pub retained: usize,
}

struct Files {
    sessions: JsonlFile,
    profiles: JsonlFile,
    turns: JsonlFile,
}

#[derive(Default)]
struct Inner {
    sessions: BTreeMap<String, SessionMeta>,
    turns: HashMap<String, Vec<TurnRecord>>,
    profiles: BTreeMap<String, StoredProfile>,
    files: Option<Files>,
}

pub struct Store {
    inner: Mutex<Inner>,
    dir: Option<PathBuf>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("dir", &self.dir)
            .finish_non_exhaustive()
    }
}

fn session_number(id: &str) -> u64 {
    id.strip_prefix('s')
        .and_then(|n| n.parse().ok())
        .unwrap_or(0)
}

impl Store {
    /// A store that forgets everything when dropped.
    pub fn in_memory() -> Self {
        Store {
            inner: Mutex::new(Inner::default()),
            dir: None,
        }
    }

    /// Open (creating if needed) a file-backed store in `dir`.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(|source| StoreError::Io {
            path: dir.into(),
            source,
        })?;
        let mut inner = Inner::default();
        let (sessions, rows) = JsonlFile::open::<SessionMeta>(&dir.join("sessions.jsonl"))?;
        for s in rows {
            inner.sessions.insert(s.session_id.clone(), s);
        }
        let (profiles, rows) = JsonlFile::open::<StoredProfile>(&dir.join("profiles.jsonl"))?;
        for p in rows {
            inner.profiles.insert(p.profile.profile_id.clone(), p);
        }
        let (turns, rows) = JsonlFile::open::<TurnRecord>(&dir.join("turns.jsonl"))?;
        for (i, r) in rows.into_iter().enumerate() {
            let log = inner.turns.entry(r.session_id.clone()).or_default();
            if log.last().is_some_and(|l| l.turn_id >= r.turn_id) {
                return Err(StoreError::Corrupt {
                    path: turns.path().into(),
                    line: i + 1,
                    reason: format!("turn {} of `{}` out of order", r.turn_id, r.session_id),
                });
            }
            log.push(r);
        }
        inner.files = Some(Files {
            sessions,
            profiles,
            turns,
        });
        Ok(Store {
            inner: Mutex::new(inner),
            dir: Some(dir.into()),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn put_profile(&self, profile: Profile, now_ms: u64) -> Result<StoredProfile, StoreError> {
        profile.validate()?;
        let mut inner = self.inner.lock();
        let version = inner
            .profiles
            .get(&profile.profile_id)
            .map_or(1, |p| p.version + 1);
        let stored = StoredProfile {
            profile,
            version,
            updated_at_ms: now_ms,
        };
        if let Some(f) = inner.files.as_mut() {
            f.profiles.append(&stored)?;
        }
        inner
            .profiles
            .insert(stored.profile.profile_id.clone(), stored.clone());
        Ok(stored)
    }

    pub fn get_profile(&self, profile_id: &str) -> Option<StoredProfile> {
        self.inner.lock().profiles.get(profile_id).cloned()
    }

    /// Write `profile` only if no profile with its id exists yet.
    pub fn ensure_profile(
        &self,
        profile: Profile,
        now_ms: u64,
    ) -> Result<StoredProfile, StoreError> {
        if let Some(existing) = self.get_profile(&profile.profile_id) {
            return Ok(existing);
        }
        self.put_profile(profile, now_ms)
    }

    pub fn create_session(
        &self,
        profile_id: &str,
        device_label: &str,
        now_ms: u64,
    ) -> Result<SessionMeta, StoreError> {
        let mut inner = self.inner.lock();
        if !inner.profiles.contains_key(profile_id) {
            return Err(StoreError::UnknownProfile(profile_id.into()));
        }
        let n = inner
            .sessions
            .keys()
            .map(|k| session_number(k))
            .max()
            .unwrap_or(0)
            + 1;
        let meta = SessionMeta {
            session_id: format!("s{n}"),
            profile_id: profile_id.into(),
            created_at_ms: now_ms,
            device_label: device_label.into(),
            status: SessionStatus::Active,
            next_turn_id: 0,
        };
        if let Some(f) = inner.files.as_mut() {
            f.sessions.append(&meta)?;
        }
        inner.sessions.insert(meta.session_id.clone(), meta.clone());
        Ok(meta)
    }

    pub fn end_session(&self, session_id: &str) -> Result<SessionMeta, StoreError> {
        let mut inner = self.inner.lock();
        let mut meta = inner
            .sessions
            .get(session_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSession(session_id.into()))?;
        meta.status = SessionStatus::Ended;
        if let Some(f) = inner.files.as_mut() {
            f.sessions.append(&meta)?;
        }
        inner.sessions.insert(session_id.into(), meta.clone());
        Ok(meta)
    }

    pub fn session(&self, session_id: &str) -> Option<SessionMeta> {
        self.inner.lock().sessions.get(session_id).cloned()
    }

    pub fn sessions(&self) -> Vec<SessionMeta> {
        let mut all: Vec<_> = self.inner.lock().sessions.values().cloned().collect();
        all.sort_by_key(|s| session_number(&s.session_id));
        all
    }

    /// The id the next turn of `session_id` must use.
    pub fn next_turn_id(&self, session_id: &str) -> Result<u64, StoreError> {
        let inner = self.inner.lock();
        let meta = inner
            .sessions
            .get(session_id)
            .ok_or_else(|| StoreError::UnknownSession(session_id.into()))?;
        let after_last = inner
            .turns
            .get(session_id)
            .and_then(|t| t.last())
            .map_or(0, |r| r.turn_id + 1);
        Ok(meta.next_turn_id.max(after_last))
    }

    /// Durably append one record. Nothing becomes visible unless the line
    /// reached disk in full.
    pub fn append_turn(&self, record: &TurnRecord) -> Result<(), StoreError> {
        let mut inner = self.inner.lock();
        let meta = inner
            .sessions
            .get(&record.session_id)
            .ok_or_else(|| StoreError::UnknownSession(record.session_id.clone()))?;
        if meta.status == SessionStatus::Ended {
            return Err(StoreError::SessionEnded(record.session_id.clone()));
        }
        let floor = meta.next_turn_id;
        let log = inner.turns.get(&record.session_id);
        let taken = record.turn_id < floor
            || log.is_some_and(|l| l.last().is_some_and(|last| last.turn_id >= record.turn_id));
        if taken {
            return Err(StoreError::DuplicateTurn {
                session_id: record.session_id.clone(),
                turn_id: record.turn_id,
            });
        }
        if let Some(f) = inner.files.as_mut() {
            f.turns.append(record)?;
        }
        inner
            .turns
            .entry(record.session_id.clone())
            .or_default()
            .push(record.clone());
        Ok(())
    }

    pub fn query_log(&self, session_id: &str, query: &LogQuery) -> Result<LogPage, StoreError> {
        let inner = self.inner.lock();
        if !inner.sessions.contains_key(session_id) {
            return Err(StoreError::UnknownSession(session_id.into()));
        }
        let matching = inner
            .turns
            .get(session_id)
            .into_iter()
            .flatten()
            .filter(|r| {
                query.from_ms.is_none_or(|f| r.started_at_ms >= f)
                    && query.to_ms.is_none_or(|t| r.started_at_ms < t)
                    && query.after_turn.is_none_or(|c| r.turn_id > c)
            });
        let limit = query.limit.unwrap_or(usize::MAX);
        let mut records = Vec::new();
        let mut more = false;
        for r in matching {
            if records.len() == limit {
                more = true;
                break;
            }
            records.push(r.clone());
        }
        let next_cursor = if more {
            records.last().map(|r| r.turn_id)
        } else {
            None
        };
        Ok(LogPage {
            records,
            next_cursor,
        })
    }

    /// Every record whose start falls in `window`, across sessions, in
    /// (session, turn) order.
    pub fn records_in(&self, window: &MetricsWindow) -> Vec<TurnRecord> {
        let inner = self.inner.lock();
        let mut ids: Vec<&String> = inner.turns.keys().collect();
        ids.sort_by_key(|id| (session_number(id), (*id).clone()));
        ids.into_iter()
            .flat_map(|id| inner.turns[id].iter())
            .filter(|r| window.contains(r.started_at_ms))
            .cloned()
            .collect()
    }

    pub fn metrics(&self, window: &MetricsWindow) -> MetricsSummary {
        compute_metrics(*window, &self.records_in(window))
    }

    /// Write a session's full log as JSON lines.
    pub fn export_session(
        &self,
        session_id: &str,
        out: &mut dyn Write,
    ) -> Result<usize, StoreError> {
        let page = self.query_log(session_id, &LogQuery::default())?;
        let io = |source| StoreError::Io {
            path: PathBuf::from("<export>"),
            source,
        };
        for r in &page.records {
            let line = serde_json::to_string(r).expect("records serialize");
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)?;
        Ok(page.records.len())
    }

    /// Delete turns older than their profile's retention period. This is
    /// the only operation that removes records.
    pub fn purge(&self, now_ms: u64) -> Result<PurgeReport, StoreError> {
        let mut inner = self.inner.lock();
        let retention = |inner: &Inner, profile_id: &str| {
            inner
                .profiles
                .get(profile_id)
                .map_or(90, |p| p.profile.retention_days as u64)
                * DAY_MS
        };
        let mut kept_all: HashMap<String, Vec<TurnRecord>> = HashMap::new();
        let mut report = PurgeReport::default();
        let mut bumped = Vec::new();
        for (sid, log) in &inner.turns {
            let (keep, drop): (Vec<_>, Vec<_>) = log
                .iter()
                .cloned()
                .partition(|r| r.started_at_ms + retention(&inner, &r.profile_id) > now_ms);
            report.removed += drop.len();
            report.retained += keep.len();
            if let (Some(last), Some(meta)) = (log.last(), inner.sessions.get(sid)) {
                if !drop.is_empty() && meta.next_turn_id <= last.turn_id {
                    bumped.push(SessionMeta {
                        next_turn_id: last.turn_id + 1,
                        ..meta.clone()
                    });
                }
            }
            kept_all.insert(sid.clone(), keep);
        }
        if report.removed == 0 {
            return Ok(report);
        }
        if let Some(f) = inner.files.as_mut() {
            for meta in &bumped {
                f.sessions.append(meta)?;
            }
            let mut ids: Vec<&String> = kept_all.keys().collect();
            ids.sort_by_key(|id| (session_number(id), (*id).clone()));
            let rows: Vec<&TurnRecord> =
                ids.into_iter().flat_map(|id| kept_all[id].iter()).collect();
            f.turns.rewrite(&rows)?;
        }
        for meta in bumped {
            inner.sessions.insert(meta.session_id.clone(), meta);
        }
        kept_all.retain(|_, v| !v.is_empty());
        inner.turns = kept_all;
        Ok(report)
    }
}
