//! In-process HTTP doubles for offline testing of the publishing pipeline.
//!
//! [`MockHub`] implements the dataset hub surface used by the upload client
//! (repo create, preupload, LFS batch + storage, NDJSON commit) plus
//! `GET /_state` for inspection. [`fixtures`] holds smaller servers standing
//! in for S3, OMERO and BioStudies.

pub mod fault;
pub mod fixtures;
mod routes;
mod server;
pub mod state;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use thiserror::Error;

pub use fault::{Fault, FaultPlan, RequestKind};
pub use server::ServerHandle;
pub use state::{CommitRecord, CommittedFile, HubState, RepoRecord, StoredObject};

#[derive(Debug, Error)]
pub enum MockHubError {
    #[error("port {port} unavailable: {source}")]
    PortUnavailable {
        port: u16,
        #[source]
        source: std::io::Error,
    },
    #[error("could not start server runtime: {0}")]
    Runtime(#[source] std::io::Error),
}

#[derive(Clone, Debug, Default)]
pub struct MockHubConfig {
    /// 0 picks an ephemeral port.
    pub port: u16,
    /// When set, every non-GET route requires `Authorization: Bearer {token}`.
    pub auth_token: Option<String>,
    pub fault_plan: FaultPlan,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoggedRequest {
    pub kind: RequestKind,
    pub method: String,
    pub path: String,
    pub status: u16,
    /// Request body length as declared by Content-Length (0 when absent).
    pub body_bytes: u64,
}

#[derive(Default)]
pub(crate) struct Shared {
    pub state: Mutex<HubState>,
    pub log: Mutex<Vec<LoggedRequest>>,
    pub faults: Mutex<FaultPlan>,
    pub counters: Mutex<HashMap<RequestKind, usize>>,
    pub auth_token: Option<String>,
    pub base_url: String,
}

pub struct MockHub {
    shared: Arc<Shared>,
    server: ServerHandle,
}

impl MockHub {
    pub fn serve(config: MockHubConfig) -> Result<Self, MockHubError> {
        let listener = server::bind(config.port)?;
        let addr = listener.local_addr().map_err(MockHubError::Runtime)?;
        let shared = Arc::new(Shared {
            faults: Mutex::new(config.fault_plan),
            auth_token: config.auth_token,
            base_url: format!("http://{addr}"),
            ..Default::default()
        });
        let router = routes::router(shared.clone());
        let server = server::spawn(listener, router)?;
        Ok(MockHub { shared, server })
    }

    /// Open hub on an ephemeral port.
    pub fn start() -> Self {
        Self::serve(MockHubConfig::default()).expect("start mock hub")
    }

    pub fn url(&self) -> String {
        self.server.url()
    }

    pub fn state(&self) -> HubState {
        self.shared.state.lock().unwrap().clone()
    }

    /// Drop all repos, commits and objects. The request log is kept.
    pub fn reset(&self) {
        *self.shared.state.lock().unwrap() = HubState::default();
    }

    /// Replace the fault plan and restart per-kind request counting.
    pub fn set_fault_plan(&self, plan: FaultPlan) {
        *self.shared.faults.lock().unwrap() = plan;
        self.shared.counters.lock().unwrap().clear();
    }

    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.shared.log.lock().unwrap().clone()
    }

    pub fn clear_requests(&self) {
        self.shared.log.lock().unwrap().clear();
    }

    pub fn count(&self, kind: RequestKind) -> usize {
        self.shared.log.lock().unwrap().iter().filter(|r| r.kind == kind).count()
    }
}
