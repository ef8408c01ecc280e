//! Message accounting for protocol runs: every directed application-level
//! frame is recorded with its virtual send time, endpoints, phase, and size.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Party {
    Signer(u16),
    Aggregator,
    Coordinator,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Signer(i) => write!(f, "signer:{i}"),
            Party::Aggregator => write!(f, "aggregator"),
            Party::Coordinator => write!(f, "coordinator"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    CommitRequest,
    CommitResponse,
    FallbackCommitRequest,
    FallbackCommitResponse,
    ShareSubmit,
    BaselineCommitment,
    BaselineShare,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::CommitRequest => "commit-request",
            Phase::CommitResponse => "commit-response",
            Phase::FallbackCommitRequest => "fallback-commit-request",
            Phase::FallbackCommitResponse => "fallback-commit-response",
            Phase::ShareSubmit => "share-submit",
            Phase::BaselineCommitment => "baseline-commitment",
            Phase::BaselineShare => "baseline-share",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageRecord {
    pub time_ms: u64,
    pub sender: Party,
    pub receiver: Party,
    pub phase: Phase,
    pub bytes: usize,
}

/// Ordered record of every message in a run, with per-phase counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    records: Vec<MessageRecord>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, record: MessageRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[MessageRecord] {
        &self.records
    }

    pub fn total_messages(&self) -> usize {
        self.records.len()
    }

    pub fn total_bytes(&self) -> usize {
        self.records.iter().map(|r| r.bytes).sum()
    }

    pub fn count_phase(&self, phase: Phase) -> usize {
        self.records.iter().filter(|r| r.phase == phase).count()
    }

    pub fn per_phase_counts(&self) -> BTreeMap<Phase, usize> {
        let mut counts = BTreeMap::new();
        for record in &self.records {
            *counts.entry(record.phase).or_insert(0) += 1;
        }
        counts
    }

    /// Canonical text form, used for byte-for-byte determinism checks.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!(
                "{} {} -> {} [{}] {}B\n",
                r.time_ms,
                r.sender,
                r.receiver,
                r.phase.tag(),
                r.bytes
            ));
        }
        out
    }
}
