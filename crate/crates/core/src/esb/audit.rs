use std::collections::VecDeque;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::session::now_ms;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Step {
    Received,
    Validated,
    Resolved,
    Translated,
    Routed,
    Executed,
    ResponseTranslated,
    Delivered,
    Faulted,
}

impl Step {
    /// Canonical pipeline order.
    pub const ORDER: [Step; 9] = [
        Step::Received,
        Step::Validated,
        Step::Resolved,
        Step::Translated,
        Step::Routed,
        Step::Executed,
        Step::ResponseTranslated,
        Step::Delivered,
        Step::Faulted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Step::Received => "RECEIVED",
            Step::Validated => "VALIDATED",
            Step::Resolved => "RESOLVED",
            Step::Translated => "TRANSLATED",
            Step::Routed => "ROUTED",
            Step::Executed => "EXECUTED",
            Step::ResponseTranslated => "RESPONSE_TRANSLATED",
            Step::Delivered => "DELIVERED",
            Step::Faulted => "FAULTED",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Step::Delivered | Step::Faulted)
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub message_id: String,
    pub step: Step,
    pub detail: String,
    /// Milliseconds since the Unix epoch.
    pub at: u64,
}

/// True iff `steps` follow the canonical order, never repeat, and end at a
/// terminal step.
pub fn is_well_ordered(steps: &[Step]) -> bool {
    steps.windows(2).all(|w| w[0] < w[1]) && steps.last().is_some_and(|s| s.is_terminal())
}

struct Inner {
    next_seq: u64,
    ring: VecDeque<AuditRecord>,
    sink: Option<File>,
}

/// Append-only ring of the most recent records, optionally mirrored to a
/// JSON-lines file.
pub struct AuditLog {
    capacity: usize,
    inner: Mutex<Inner>,
}

impl AuditLog {
    pub fn new(capacity: usize) -> Self {
        AuditLog {
            capacity: capacity.max(1),
            inner: Mutex::new(Inner {
                next_seq: 1,
                ring: VecDeque::new(),
                sink: None,
            }),
        }
    }

    pub fn with_file(capacity: usize, path: &Path) -> std::io::Result<Self> {
        let log = Self::new(capacity);
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        log.inner.lock().expect("audit lock").sink = Some(file);
        Ok(log)
    }

    pub fn append(&self, message_id: &str, step: Step, detail: impl Into<String>) -> AuditRecord {
        let mut inner = self.inner.lock().expect("audit lock");
        let record = AuditRecord {
            seq: inner.next_seq,
            message_id: message_id.to_owned(),
            step,
            detail: detail.into(),
            at: now_ms(),
        };
        inner.next_seq += 1;
        if inner.ring.len() == self.capacity {
            inner.ring.pop_front();
        }
        inner.ring.push_back(record.clone());
        if let Some(sink) = inner.sink.as_mut() {
            let line = serde_json::to_string(&record).expect("audit record serializes");
            if let Err(e) = writeln!(sink, "{line}") {
                tracing::warn!("audit file write failed: {e}");
            }
        }
        record
    }

    /// Records with `seq > after`, oldest first.
    pub fn since(&self, after: u64) -> Vec<AuditRecord> {
        let inner = self.inner.lock().expect("audit lock");
        inner.ring.iter().filter(|r| r.seq > after).cloned().collect()
    }

    pub fn for_message(&self, message_id: &str) -> Vec<AuditRecord> {
        let inner = self.inner.lock().expect("audit lock");
        inner.ring.iter().filter(|r| r.message_id == message_id).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("audit lock").ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
