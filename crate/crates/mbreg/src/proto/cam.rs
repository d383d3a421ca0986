//! Server protocol for the cured-aware model: on-demand maintenance driven by
//! the cured-state oracle, default-value flooding to disqualify stale echoes,
//! and the read/write message handlers.

use std::collections::BTreeSet;

use crate::msg::{ClientId, EchoBody, Message, ServerId, ValueEntry};
use crate::proto::{
    pairs_with_quorum, record_vote, Outbox, Recipient, TimerKind, VSet, Votes,
};
use crate::sim::Dur;

/// State of one cured-aware server.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CamState {
    pub id: ServerId,
    pub v: VSet,
    pub pending_read: BTreeSet<ClientId>,
    /// True while the rebuild started by the oracle notification is running.
    pub curing_state: bool,
    pub echo_vals: Votes,
    /// Senders whose default-value echo arrived during the current rebuild.
    pub bottom_from: BTreeSet<ServerId>,
    /// Servers known to be rebuilding; they get echoes on writes and at our
    /// own maintenance end. Never drained, matching the protocol.
    pub curing: BTreeSet<ServerId>,
    /// Bumped on every capture and maintenance start so stale timers die.
    pub epoch: u64,
}

impl CamState {
    pub fn new(id: ServerId, initial: ValueEntry) -> Self {
        CamState {
            id,
            v: VSet::with_initial(initial),
            pending_read: BTreeSet::new(),
            curing_state: false,
            echo_vals: Votes::new(),
            bottom_from: BTreeSet::new(),
            curing: BTreeSet::new(),
            epoch: 0,
        }
    }

    /// Invalidate any in-flight maintenance timers; called when an agent
    /// seizes the host.
    pub fn note_captured(&mut self) {
        self.epoch += 1;
        self.curing_state = false;
    }

    /// Start the on-demand rebuild the moment the oracle reports the cured
    /// state: clear everything, ask for echoes, and flood the default value
    /// now and once more after `delta` so peers drop our stale traffic.
    /// The whole operation lasts exactly `2 * delta`.
    pub fn start_maintenance(&mut self, delta: Dur, out: &mut Outbox) {
        self.epoch += 1;
        self.curing_state = true;
        self.v.clear();
        self.echo_vals.clear();
        self.bottom_from.clear();
        self.pending_read.clear();
        self.curing.clear();
        out.broadcast(Message::EchoReq {
            server: self.id,
            nonce: None,
        });
        out.broadcast(Message::Echo {
            server: self.id,
            body: EchoBody::Bottom,
            pending: Vec::new(),
            nonce: None,
        });
        out.timer(delta, TimerKind::CamMaintMid { epoch: self.epoch });
        out.timer(2 * delta, TimerKind::CamMaintEnd { epoch: self.epoch });
    }

    /// Second default-value broadcast, half way through the rebuild.
    pub fn on_maint_mid(&mut self, epoch: u64, out: &mut Outbox) {
        if !self.curing_state || epoch != self.epoch {
            return;
        }
        out.broadcast(Message::Echo {
            server: self.id,
            body: EchoBody::Bottom,
            pending: Vec::new(),
            nonce: None,
        });
    }

    /// Rebuild completion: drop echoes from senders that turned out to be
    /// cured themselves, adopt the quorum-backed pairs, and answer every
    /// server that asked us for echoes meanwhile. Returns true when the
    /// server is correct again.
    pub fn on_maint_end(&mut self, epoch: u64, echo_q: usize, out: &mut Outbox) -> bool {
        if !self.curing_state || epoch != self.epoch {
            return false;
        }
        delete_cured_values(&mut self.echo_vals, &self.bottom_from);
        let selected = select_d_pairs_max_sn(&self.echo_vals, echo_q);
        self.v.insert_all(selected);
        for server in self.curing.clone() {
            out.send(
                Recipient::Server(server),
                Message::Echo {
                    server: self.id,
                    body: EchoBody::Values(self.v.to_vec()),
                    pending: Vec::new(),
                    nonce: None,
                },
            );
        }
        self.curing_state = false;
        self.echo_vals.clear();
        self.bottom_from.clear();
        true
    }

    pub fn on_message(&mut self, msg: Message, out: &mut Outbox) {
        match msg {
            Message::Write { value, csn } => {
                let entry = ValueEntry::new(value, csn);
                self.v.insert(entry);
                for client in self.pending_read.clone() {
                    out.send(
                        Recipient::Client(client),
                        Message::Reply {
                            server: self.id,
                            entries: vec![entry],
                        },
                    );
                }
                for server in self.curing.clone() {
                    out.send(
                        Recipient::Server(server),
                        Message::Echo {
                            server: self.id,
                            body: EchoBody::Values(self.v.to_vec()),
                            pending: Vec::new(),
                            nonce: None,
                        },
                    );
                }
            }
            Message::Read { client } => {
                self.pending_read.insert(client);
                // a rebuilding server has nothing trustworthy to offer and
                // stays silent
                if !self.v.is_empty() {
                    out.send(
                        Recipient::Client(client),
                        Message::Reply {
                            server: self.id,
                            entries: self.v.to_vec(),
                        },
                    );
                }
            }
            Message::ReadAck { client } => {
                self.pending_read.remove(&client);
            }
            Message::Echo { server, body, .. } => match body {
                EchoBody::Bottom => {
                    self.bottom_from.insert(server);
                }
                EchoBody::Values(entries) => {
                    for entry in entries {
                        record_vote(&mut self.echo_vals, server, entry);
                    }
                }
            },
            Message::EchoReq { server, .. } => {
                self.curing.insert(server);
                if !self.v.is_empty() {
                    out.send(
                        Recipient::Server(server),
                        Message::Echo {
                            server: self.id,
                            body: EchoBody::Values(self.v.to_vec()),
                            pending: Vec::new(),
                            nonce: None,
                        },
                    );
                }
            }
            // not part of this model
            Message::ReadFw { .. } | Message::Reply { .. } => {}
        }
    }
}

/// Quorum-backed pairs, highest three sequence numbers, ascending. Empty when
/// nothing reaches the quorum.
pub fn select_d_pairs_max_sn(echo_vals: &Votes, echo_q: usize) -> Vec<ValueEntry> {
    let mut qualifying = pairs_with_quorum(echo_vals, echo_q);
    if qualifying.len() > 3 {
        qualifying.split_off(qualifying.len() - 3)
    } else {
        qualifying
    }
}

/// Drop every echo cast by a sender that also sent the default value.
pub fn delete_cured_values(echo_vals: &mut Votes, bottom_from: &BTreeSet<ServerId>) {
    crate::proto::remove_votes_from(echo_vals, bottom_from);
}
