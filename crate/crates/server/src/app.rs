//! Shared server state, the analysis worker pool and the listener loop.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use inker_core::gateway::{build_provider, Gateway, LlmProvider};
use inker_core::pipeline::Pipeline;
use inker_core::socratic::SocraticEngine;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{watch, OwnedMutexGuard, Semaphore};

use crate::config::ServerConfig;
use crate::records::{highlights, AnalysisRecord, JobError, JobStatus, Mode};
use crate::store::{FileStore, MemoryStore, RecordKind, Store, StoreError};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("cannot open store: {0}")]
    Store(#[from] StoreError),
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("stored {kind} {id} does not parse: {source}")]
    Corrupt {
        kind: RecordKind,
        id: String,
        source: serde_json::Error,
    },
}

pub struct Engines {
    pub pipeline: Pipeline,
    pub socratic: SocraticEngine,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct JobKey {
    essay_id: String,
    mode: Mode,
    fingerprint: String,
}

pub struct AppState {
    pub config: ServerConfig,
    store: Arc<dyn Store>,
    /// Why no provider is available, when it is not.
    engines: Result<Arc<Engines>, String>,
    pending: Mutex<HashMap<JobKey, String>>,
    workers: Arc<Semaphore>,
    in_flight: watch::Sender<usize>,
    session_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    /// Builds the provider named by `config`. A misconfigured provider does
    /// not stop the server; analysis requests report it instead.
    pub fn from_config(config: ServerConfig) -> Result<Arc<Self>, ServeError> {
        let store: Arc<dyn Store> = match &config.store_dir {
            Some(dir) => Arc::new(FileStore::open(dir)?),
            None => Arc::new(MemoryStore::new()),
        };
        let provider = build_provider(&config.model, config.mock_dir.as_deref()).map_err(|e| e.to_string());
        if let Err(e) = &provider {
            log::warn!("no model provider: {e}");
        }
        Ok(Self::assemble(config, store, provider))
    }

    pub fn with_provider(config: ServerConfig, store: Arc<dyn Store>, provider: Arc<dyn LlmProvider>) -> Arc<Self> {
        Self::assemble(config, store, Ok(provider))
    }

    fn assemble(
        config: ServerConfig,
        store: Arc<dyn Store>,
        provider: Result<Arc<dyn LlmProvider>, String>,
    ) -> Arc<Self> {
        let engines = provider.map(|p| {
            let gateway = Arc::new(Gateway::new(p, config.model.clone()));
            Arc::new(Engines {
                pipeline: Pipeline::new(gateway.clone(), config.pipeline),
                socratic: SocraticEngine::new(gateway).with_threshold(config.pipeline.anchor_threshold),
            })
        });
        Arc::new(AppState {
            workers: Arc::new(Semaphore::new(config.workers.max(1))),
            config,
            store,
            engines,
            pending: Mutex::new(HashMap::new()),
            in_flight: watch::Sender::new(0),
            session_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn store(&self) -> &dyn Store {
        self.store.as_ref()
    }

    pub fn engines(&self) -> Result<Arc<Engines>, String> {
        self.engines.clone()
    }

    pub fn load<T: DeserializeOwned>(&self, kind: RecordKind, id: &str) -> Result<Option<T>, LoadError> {
        let Some(record) = self.store.get(kind, id)? else {
            return Ok(None);
        };
        serde_json::from_value(record.payload)
            .map(Some)
            .map_err(|source| LoadError::Corrupt {
                kind,
                id: id.to_string(),
                source,
            })
    }

    pub fn save<T: Serialize>(&self, kind: RecordKind, id: &str, value: &T) -> Result<(), StoreError> {
        let payload = serde_json::to_value(value).expect("records serialize");
        self.store.put(kind, id, payload).map(|_| ())
    }

    /// Lock guarding one session's mutations; `None` when another request holds it.
    pub fn try_lock_session(&self, session_id: &str) -> Option<OwnedMutexGuard<()>> {
        let lock = self
            .session_locks
            .lock()
            .expect("lock table poisoned")
            .entry(session_id.to_string())
            .or_default()
            .clone();
        lock.try_lock_owned().ok()
    }

    /// Returns the id of a queued or running job for the same essay, mode and
    /// configuration, or queues a new one. The flag is true for a new job.
    pub fn start_analysis(
        self: &Arc<Self>,
        engines: Arc<Engines>,
        essay_id: &str,
        mode: Mode,
    ) -> Result<(AnalysisRecord, bool), LoadError> {
        let key = JobKey {
            essay_id: essay_id.to_string(),
            mode,
            fingerprint: self.config.fingerprint(),
        };
        let mut pending = self.pending.lock().expect("job table poisoned");
        if let Some(id) = pending.get(&key) {
            if let Some(record) = self.load::<AnalysisRecord>(RecordKind::Analysis, id)? {
                if record.status.is_pending() {
                    return Ok((record, false));
                }
            }
        }
        let record = AnalysisRecord::queued(
            uuid::Uuid::new_v4().to_string(),
            essay_id.to_string(),
            mode,
            key.fingerprint.clone(),
        );
        self.save(RecordKind::Analysis, &record.analysis_id, &record)?;
        pending.insert(key.clone(), record.analysis_id.clone());
        drop(pending);

        self.in_flight.send_modify(|n| *n += 1);
        let state = self.clone();
        let job = record.clone();
        tokio::spawn(async move {
            state.run_job(engines, job).await;
            state.pending.lock().expect("job table poisoned").remove(&key);
            state.in_flight.send_modify(|n| *n -= 1);
        });
        Ok((record, true))
    }

    async fn run_job(&self, engines: Arc<Engines>, mut record: AnalysisRecord) {
        let _permit = self.workers.clone().acquire_owned().await.expect("worker pool closed");
        let essay = match self.load::<crate::records::EssayRecord>(RecordKind::Essay, &record.essay_id) {
            Ok(Some(e)) => e,
            other => {
                log::error!("analysis {}: essay unavailable ({:?})", record.analysis_id, other.err());
                return;
            }
        };
        record.set_status(JobStatus::Running);
        self.persist_job(&record);
        match engines.pipeline.run(&essay.text).await {
            Ok(result) => {
                record.highlights = highlights(&result);
                record.result = Some(result);
                record.set_status(JobStatus::Done);
            }
            Err(e) => {
                log::warn!("analysis {} failed: {e}", record.analysis_id);
                record.error = Some(JobError {
                    stage: e.stage(),
                    reason: e.to_string(),
                });
                record.set_status(JobStatus::Failed);
            }
        }
        self.persist_job(&record);
    }

    fn persist_job(&self, record: &AnalysisRecord) {
        if let Err(e) = self.save(RecordKind::Analysis, &record.analysis_id, record) {
            log::error!("cannot store analysis {}: {e}", record.analysis_id);
        }
    }

    /// Analysis jobs queued or running.
    pub fn jobs_in_flight(&self) -> usize {
        *self.in_flight.borrow()
    }

    /// Waits for running jobs to settle; false if `grace` ran out first.
    pub async fn drain(&self, grace: Duration) -> bool {
        let mut rx = self.in_flight.subscribe();
        let settled = tokio::time::timeout(grace, rx.wait_for(|n| *n == 0)).await.is_ok();
        settled
    }
}

pub async fn bind(port: u16) -> Result<TcpListener, ServeError> {
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })
}

/// Serves until `shutdown` resolves, then lets analysis jobs finish within
/// the configured grace period.
pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let router = crate::api::router(state.clone());
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router).with_graceful_shutdown(shutdown).await?;
    let pending = state.jobs_in_flight();
    if pending > 0 {
        log::info!("waiting for {pending} analysis job(s)");
        if !state.drain(state.config.shutdown_grace).await {
            log::warn!("{} analysis job(s) abandoned at shutdown", state.jobs_in_flight());
        }
    }
    Ok(())
}
