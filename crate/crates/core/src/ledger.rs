//! Append-only event log shared by the search phases, and the bundle of
//! services a phase needs to run.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SearchConfig;
use crate::executor::{Executor, RepairOutcome};
use crate::generator::Generator;
use crate::types::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    RootInit,
    Selection,
    Expansion,
    Repair,
    Seeding,
    Generation,
    Migration,
    Phase,
    Failure,
}

/// One log record. `step` is a logical clock (the record's index), which
/// keeps ledgers byte-identical across runs; `rng_words` is the RNG word
/// position after the event, so draws can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    pub detail: String,
    pub rng_words: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, kind: EventKind, node: Option<NodeId>, detail: impl Into<String>, rng: &ChaCha8Rng) {
        let step = self.events.len() as u64;
        self.events.push(Event {
            step,
            kind,
            node,
            detail: detail.into(),
            rng_words: rng.get_word_pos() as u64,
        });
    }

    /// Records one event per repair attempt of an outcome.
    pub fn push_repairs(&mut self, node: NodeId, outcome: &RepairOutcome, rng: &ChaCha8Rng) {
        for (k, status) in outcome.history.iter().enumerate().skip(1) {
            self.push(
                EventKind::Repair,
                Some(node),
                format!("attempt {k}: {} -> {}", outcome.history[k - 1].name(), status.name()),
                rng,
            );
        }
        if let Some(e) = &outcome.generator_error {
            self.push(EventKind::Failure, Some(node), format!("repair aborted: {e}"), rng);
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Everything a phase step borrows: settings, agents, sandbox, and the
/// run-wide RNG and log.
pub struct Services<'a> {
    pub cfg: &'a SearchConfig,
    pub generator: &'a Generator,
    pub executor: &'a Executor,
    pub rng: &'a mut ChaCha8Rng,
    pub log: &'a mut EventLog,
}
