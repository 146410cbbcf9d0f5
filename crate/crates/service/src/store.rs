//! Session persistence: an in-memory index backed by one append-only JSON-lines
//! log per session.
//!
//! Layout under the data directory:
//!
//! ```text
//! sessions/<id>/events.jsonl
//! sessions/<id>/audio.wav
//! ```

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::Utc;
use serde::Serialize;
use thiserror::Error;
use tokio::sync::broadcast;
use uuid::Uuid;

use crate::session::{Lifecycle, LogLine, ProgressEvent, SessionEvent, SessionRecord, Stage};

pub const INTERRUPTED: &str = "interrupted";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("session {0} not found")]
    NotFound(Uuid),
    #[error("session {id} already exists")]
    Exists { id: Uuid },
    #[error("session log {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What pollers and event-stream subscribers see.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatusView {
    pub session_id: Uuid,
    pub lifecycle: Lifecycle,
    pub stage: Option<Stage>,
    pub progress: f64,
    pub message: Option<String>,
}

impl StatusView {
    pub fn of(r: &SessionRecord) -> Self {
        Self {
            session_id: r.id,
            lifecycle: r.lifecycle.clone(),
            stage: r.last_event.as_ref().map(|e| e.stage),
            progress: r.progress(),
            message: r.last_event.as_ref().map(|e| e.message.clone()),
        }
    }
}

struct Entry {
    record: Mutex<SessionRecord>,
    log: Mutex<File>,
    updates: broadcast::Sender<StatusView>,
}

pub struct SessionStore {
    root: PathBuf,
    sessions: RwLock<HashMap<Uuid, Arc<Entry>>>,
}

/// Sessions that changed state while the store was being opened.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Recovery {
    pub loaded: usize,
    pub interrupted: Vec<Uuid>,
    pub revisions_abandoned: Vec<Uuid>,
}

impl SessionStore {
    /// Opens the store and replays every session log. Sessions caught mid-processing
    /// are marked failed; an unfinished revision returns to review with the old plan.
    pub fn open(root: impl Into<PathBuf>) -> Result<(Self, Recovery), StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("sessions"))?;
        let store = Self { root, sessions: RwLock::new(HashMap::new()) };
        let mut recovery = Recovery::default();

        let mut dirs: Vec<_> = fs::read_dir(store.root.join("sessions"))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("events.jsonl").is_file())
            .collect();
        dirs.sort_by_key(|e| e.file_name());
        for dir in dirs {
            let Some(record) = replay(&dir.path().join("events.jsonl"))? else { continue };
            let id = record.id;
            let entry = store.insert(record)?;
            recovery.loaded += 1;
            let current = entry.record.lock().unwrap().clone();
            match current.lifecycle {
                Lifecycle::Queued | Lifecycle::Processing { .. } => {
                    store.write(&entry, vec![SessionEvent::Lifecycle {
                        lifecycle: Lifecycle::Failed { reason: INTERRUPTED.into() },
                    }])?;
                    recovery.interrupted.push(id);
                }
                Lifecycle::Revising => {
                    let mut review = current.review.clone();
                    if review.fail_revision().is_ok() {
                        store.write(&entry, vec![SessionEvent::Reviewed { review }])?;
                    }
                    recovery.revisions_abandoned.push(id);
                }
                _ => {}
            }
        }
        Ok((store, recovery))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, id: Uuid) -> PathBuf {
        self.root.join("sessions").join(id.to_string())
    }

    pub fn audio_path(&self, id: Uuid) -> PathBuf {
        self.session_dir(id).join("audio.wav")
    }

    fn insert(&self, record: SessionRecord) -> Result<Arc<Entry>, StoreError> {
        let id = record.id;
        let log = OpenOptions::new().create(true).append(true).open(self.session_dir(id).join("events.jsonl"))?;
        let (updates, _) = broadcast::channel(64);
        let entry = Arc::new(Entry { record: Mutex::new(record), log: Mutex::new(log), updates });
        let mut map = self.sessions.write().unwrap();
        if map.contains_key(&id) {
            return Err(StoreError::Exists { id });
        }
        map.insert(id, entry.clone());
        Ok(entry)
    }

    /// Persists a new session together with its audio.
    pub fn create(&self, record: SessionRecord, wav: &[u8]) -> Result<(), StoreError> {
        let id = record.id;
        if self.sessions.read().unwrap().contains_key(&id) {
            return Err(StoreError::Exists { id });
        }
        fs::create_dir_all(self.session_dir(id))?;
        fs::write(self.audio_path(id), wav)?;
        let created = SessionEvent::Created { record: Box::new(record.clone()) };
        let entry = self.insert(record)?;
        let mut log = entry.log.lock().unwrap();
        append(&mut log, &[created])?;
        Ok(())
    }

    fn entry(&self, id: Uuid) -> Result<Arc<Entry>, StoreError> {
        self.sessions.read().unwrap().get(&id).cloned().ok_or(StoreError::NotFound(id))
    }

    pub fn get(&self, id: Uuid) -> Result<SessionRecord, StoreError> {
        Ok(self.entry(id)?.record.lock().unwrap().clone())
    }

    pub fn ids(&self) -> Vec<Uuid> {
        let mut ids: Vec<Uuid> = self.sessions.read().unwrap().keys().copied().collect();
        ids.sort();
        ids
    }

    pub fn subscribe(&self, id: Uuid) -> Result<(StatusView, broadcast::Receiver<StatusView>), StoreError> {
        let entry = self.entry(id)?;
        let record = entry.record.lock().unwrap();
        Ok((StatusView::of(&record), entry.updates.subscribe()))
    }

    /// Atomic compare-and-set: `decide` sees the current record and returns the
    /// events to append, or an error that leaves the session untouched.
    pub fn update<E, F>(&self, id: Uuid, decide: F) -> Result<SessionRecord, E>
    where
        E: From<StoreError>,
        F: FnOnce(&SessionRecord) -> Result<Vec<SessionEvent>, E>,
    {
        let entry = self.entry(id)?;
        let mut record = entry.record.lock().unwrap();
        let events = decide(&record)?;
        if !events.is_empty() {
            append(&mut entry.log.lock().unwrap(), &events).map_err(StoreError::from)?;
            for e in &events {
                record.apply(e);
            }
            // no subscribers is fine
            let _ = entry.updates.send(StatusView::of(&record));
        }
        Ok(record.clone())
    }

    /// Unconditional append.
    pub fn record(&self, id: Uuid, events: Vec<SessionEvent>) -> Result<SessionRecord, StoreError> {
        self.update(id, |_| Ok::<_, StoreError>(events))
    }

    fn write(&self, entry: &Entry, events: Vec<SessionEvent>) -> Result<(), StoreError> {
        let mut record = entry.record.lock().unwrap();
        append(&mut entry.log.lock().unwrap(), &events)?;
        for e in &events {
            record.apply(e);
        }
        Ok(())
    }

    /// Records a progress event, ignoring values that would move progress backwards.
    pub fn progress(&self, id: Uuid, stage: Stage, progress: f64, message: impl Into<String>) -> Result<(), StoreError> {
        let message = message.into();
        self.update(id, |r| {
            let current = match &r.lifecycle {
                Lifecycle::Processing { progress, .. } => *progress,
                _ => 0.0,
            };
            let update = ProgressEvent { stage, progress: progress.clamp(current, 1.0), message };
            Ok::<_, StoreError>(vec![SessionEvent::Progress { update }])
        })?;
        Ok(())
    }
}

fn append(log: &mut File, events: &[SessionEvent]) -> std::io::Result<()> {
    let at = Utc::now();
    let mut buf = Vec::new();
    for event in events {
        serde_json::to_writer(&mut buf, &LogLine { at, event: event.clone() })?;
        buf.push(b'\n');
    }
    log.write_all(&buf)?;
    log.flush()
}

/// Cuts an unterminated final line so later appends start on a fresh line.
fn repair_tail(path: &Path) -> std::io::Result<()> {
    let bytes = fs::read(path)?;
    if bytes.last().is_none_or(|b| *b == b'\n') {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    OpenOptions::new().write(true).open(path)?.set_len(keep as u64)
}

/// Rebuilds a record from its log. A torn final line (crash during a write)
/// is dropped; damage anywhere else is an error.
fn replay(path: &Path) -> Result<Option<SessionRecord>, StoreError> {
    repair_tail(path)?;
    let lines: Vec<String> = BufReader::new(File::open(path)?).lines().collect::<Result<_, _>>()?;
    let mut record: Option<SessionRecord> = None;
    let last = lines.len().saturating_sub(1);
    for (n, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = match serde_json::from_str(line) {
            Ok(l) => l,
            Err(_) if n == last => break,
            Err(e) => {
                return Err(StoreError::Corrupt { path: path.to_owned(), detail: format!("line {}: {e}", n + 1) })
            }
        };
        match (&mut record, &parsed.event) {
            (None, SessionEvent::Created { record: r }) => record = Some((**r).clone()),
            (None, _) => {
                return Err(StoreError::Corrupt { path: path.to_owned(), detail: "log does not start with created".into() })
            }
            (Some(r), e) => r.apply(e),
        }
    }
    Ok(record)
}
