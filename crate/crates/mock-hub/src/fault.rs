//! Scripted failures: make the Nth request of a kind answer with a status.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    CreateRepo,
    Preupload,
    LfsBatch,
    LfsPut,
    Commit,
    State,
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fault {
    pub kind: RequestKind,
    /// 1-based index of the first failing request of `kind`.
    pub first: usize,
    /// Number of consecutive requests that fail.
    pub times: usize,
    pub status: u16,
}

impl Fault {
    fn covers(&self, nth: usize) -> bool {
        nth >= self.first && nth - self.first < self.times
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FaultPlan {
    faults: Vec<Fault>,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    /// Fail only the `nth` request of `kind`.
    pub fn fail_nth(mut self, kind: RequestKind, nth: usize, status: u16) -> Self {
        self.faults.push(Fault { kind, first: nth, times: 1, status });
        self
    }

    /// Fail every request of `kind` from the `first`-th on.
    pub fn fail_from(mut self, kind: RequestKind, first: usize, status: u16) -> Self {
        self.faults.push(Fault { kind, first, times: usize::MAX, status });
        self
    }

    pub fn push(mut self, fault: Fault) -> Self {
        self.faults.push(fault);
        self
    }

    pub(crate) fn status_for(&self, kind: RequestKind, nth: usize) -> Option<u16> {
        self.faults.iter().find(|f| f.kind == kind && f.covers(nth)).map(|f| f.status)
    }
}
