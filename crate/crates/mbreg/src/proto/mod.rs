//! Server-side protocol machinery shared by both awareness models: the
//! bounded value set, distinct-sender vote counting, quorum thresholds, and
//! the effect buffer handlers write into.

pub mod cam;
pub mod cum;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::ceil_div;
use crate::msg::{ClientId, Message, ServerId, ValueEntry};
use crate::sim::Dur;

/// Servers keep the freshest `d = 3` pairs.
pub const VSET_CAPACITY: usize = 3;

/// Ordered set of at most [`VSET_CAPACITY`] pairs, ascending by sequence
/// number. Inserting beyond capacity evicts the lowest sequence number;
/// sequence numbers are unique.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VSet {
    entries: Vec<ValueEntry>,
}

impl VSet {
    pub fn new() -> Self {
        VSet::default()
    }

    pub fn with_initial(entry: ValueEntry) -> Self {
        VSet {
            entries: vec![entry],
        }
    }

    pub fn insert(&mut self, entry: ValueEntry) {
        if self.entries.iter().any(|e| e.sn == entry.sn) {
            return;
        }
        let pos = self.entries.partition_point(|e| *e < entry);
        self.entries.insert(pos, entry);
        if self.entries.len() > VSET_CAPACITY {
            self.entries.remove(0);
        }
    }

    pub fn insert_all<I: IntoIterator<Item = ValueEntry>>(&mut self, entries: I) {
        for e in entries {
            self.insert(e);
        }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, entry: &ValueEntry) -> bool {
        self.entries.contains(entry)
    }

    pub fn entries(&self) -> &[ValueEntry] {
        &self.entries
    }

    pub fn to_vec(&self) -> Vec<ValueEntry> {
        self.entries.clone()
    }

    /// Replace the contents with raw entries; used when an adversary rewrites
    /// a captured server's state. Keeps order and capacity invariants.
    pub fn overwrite<I: IntoIterator<Item = ValueEntry>>(&mut self, entries: I) {
        self.entries.clear();
        self.insert_all(entries);
    }
}

/// Occurrences of each pair keyed by the distinct senders that voted for it.
pub type Votes = BTreeMap<ValueEntry, BTreeSet<ServerId>>;

pub fn record_vote(votes: &mut Votes, sender: ServerId, entry: ValueEntry) {
    votes.entry(entry).or_default().insert(sender);
}

/// Pairs backed by at least `quorum` distinct senders, ascending.
pub fn pairs_with_quorum(votes: &Votes, quorum: usize) -> Vec<ValueEntry> {
    votes
        .iter()
        .filter(|(_, senders)| senders.len() >= quorum)
        .map(|(entry, _)| *entry)
        .collect()
}

/// Drop every vote cast by the given senders.
pub fn remove_votes_from(votes: &mut Votes, senders: &BTreeSet<ServerId>) {
    for voter_set in votes.values_mut() {
        for s in senders {
            voter_set.remove(s);
        }
    }
    votes.retain(|_, voter_set| !voter_set.is_empty());
}

/// The movement factor `k = ceil(2*delta / dwell)`, 1 for slow agents and 2
/// for fast ones within the supported regime `delta <= dwell < 3*delta`.
pub fn movement_factor(delta: Dur, big_delta: Dur) -> Result<u64, RegimeError> {
    if big_delta < delta || big_delta >= 3 * delta {
        return Err(RegimeError::OutsideRegime { delta, big_delta });
    }
    Ok(ceil_div(2 * delta as i64, big_delta) as u64)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegimeError {
    #[error("dwell {big_delta} outside the supported regime [{delta}, {})", 3 * delta)]
    OutsideRegime { delta: Dur, big_delta: Dur },
    #[error("at least one agent is required")]
    ZeroAgents,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CamThresholds {
    pub k: u64,
    pub n_min: usize,
    pub reply_q: usize,
    pub echo_q: usize,
}

/// Replica count and quorum sizes for the cured-aware protocol.
pub fn thresholds_cam(delta: Dur, big_delta: Dur, f: usize) -> Result<CamThresholds, RegimeError> {
    if f == 0 {
        return Err(RegimeError::ZeroAgents);
    }
    let k = movement_factor(delta, big_delta)? as usize;
    Ok(CamThresholds {
        k: k as u64,
        n_min: 2 * (k + 1) * f + 1,
        reply_q: (k + 1) * f + 1,
        echo_q: (k + 1) * f,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CumThresholds {
    pub k: u64,
    pub n_min: usize,
    pub reply_q: usize,
    pub echo_q: usize,
}

/// Replica count and quorum sizes for the cured-unaware protocol.
pub fn thresholds_cum(delta: Dur, big_delta: Dur, f: usize) -> Result<CumThresholds, RegimeError> {
    if f == 0 {
        return Err(RegimeError::ZeroAgents);
    }
    let k = movement_factor(delta, big_delta)? as usize;
    let echo_q = match k {
        1 => 4 * f + 1,
        _ => 6 * f + 1,
    };
    Ok(CumThresholds {
        k: k as u64,
        n_min: (5 * k + 2) * f + 1,
        reply_q: (3 * k + 1) * f + 1,
        echo_q,
    })
}

/// Where an outgoing message goes. Broadcasts fan out to every server,
/// excluding the sender when the sender is itself a server.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recipient {
    AllServers,
    Server(ServerId),
    Client(ClientId),
}

/// Timers a handler can request, delivered back by the driving loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimerKind {
    /// Second default-value echo of the aware maintenance, at `+delta`.
    CamMaintMid { epoch: u64 },
    /// Aware maintenance completion, at `+2*delta`.
    CamMaintEnd { epoch: u64 },
    /// Expiry sweep over the unaware model's write staging set.
    CumPurgeW,
}

/// Effects produced by one handler invocation.
#[derive(Debug, Default)]
pub struct Outbox {
    pub sends: Vec<(Recipient, Message)>,
    pub timers: Vec<(Dur, TimerKind)>,
}

impl Outbox {
    pub fn new() -> Self {
        Outbox::default()
    }

    pub fn send(&mut self, to: Recipient, msg: Message) {
        self.sends.push((to, msg));
    }

    pub fn broadcast(&mut self, msg: Message) {
        self.sends.push((Recipient::AllServers, msg));
    }

    pub fn timer(&mut self, after: Dur, kind: TimerKind) {
        self.timers.push((after, kind));
    }
}
