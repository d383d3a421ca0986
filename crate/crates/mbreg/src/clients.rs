//! Client state machines: the single writer and the readers. Identical in
//! both awareness models except for the reply quorum handed to
//! [`select_value`].

use thiserror::Error;

use crate::msg::{ClientId, Message, ServerId, ValueEntry};
use crate::proto::{pairs_with_quorum, record_vote, Votes};
use crate::sim::{Dur, Tick};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("client {client} invoked a write at {at} while one is in flight since {since}")]
pub struct SwmrViolation {
    pub client: ClientId,
    pub at: Tick,
    pub since: Tick,
}

/// The single writer. Writes are strictly sequential and stamp values with a
/// counter that grows by exactly one per write.
#[derive(Clone, Debug)]
pub struct WriterState {
    pub client: ClientId,
    pub csn: u64,
    in_flight: Option<(ValueEntry, Tick)>,
}

impl WriterState {
    pub fn new(client: ClientId) -> Self {
        WriterState {
            client,
            csn: 0,
            in_flight: None,
        }
    }

    /// Start a write: bump the sequence number and produce the broadcast.
    /// Confirmation is due exactly `delta` later, no matter what servers do.
    pub fn begin_write(
        &mut self,
        value: u64,
        now: Tick,
    ) -> Result<(ValueEntry, Message), SwmrViolation> {
        if let Some((_, since)) = self.in_flight {
            return Err(SwmrViolation {
                client: self.client,
                at: now,
                since,
            });
        }
        self.csn += 1;
        let entry = ValueEntry::new(value, self.csn);
        self.in_flight = Some((entry, now));
        Ok((
            entry,
            Message::Write {
                value,
                csn: self.csn,
            },
        ))
    }

    /// The `+delta` confirmation; returns the completed write.
    pub fn confirm_write(&mut self) -> (ValueEntry, Tick) {
        let (entry, since) = self
            .in_flight
            .take()
            .expect("write confirmation without a write in flight");
        (entry, since)
    }

    pub fn writing(&self) -> bool {
        self.in_flight.is_some()
    }
}

/// Occurrence statistics of one completed read, for reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReadStats {
    pub distinct_repliers: usize,
    pub chosen_occurrences: usize,
}

#[derive(Clone, Debug)]
struct ReadInFlight {
    invoked: Tick,
    replies: Votes,
}

/// One reader client. A read broadcasts a request, collects replies for
/// exactly `2 * delta`, then picks the quorum value and acknowledges.
#[derive(Clone, Debug)]
pub struct ReaderState {
    pub client: ClientId,
    active: Option<ReadInFlight>,
}

impl ReaderState {
    pub fn new(client: ClientId) -> Self {
        ReaderState {
            client,
            active: None,
        }
    }

    pub fn begin_read(&mut self, now: Tick) -> Message {
        self.active = Some(ReadInFlight {
            invoked: now,
            replies: Votes::new(),
        });
        Message::Read {
            client: self.client,
        }
    }

    /// Replies are keyed by `(sender, pair)`: a server re-sending the same
    /// pair within one read still counts once toward the quorum.
    pub fn on_reply(&mut self, server: ServerId, entries: &[ValueEntry]) {
        if let Some(read) = self.active.as_mut() {
            for entry in entries {
                record_vote(&mut read.replies, server, *entry);
            }
        }
    }

    /// The `+2*delta` deadline: select, acknowledge, report.
    pub fn finish_read(&mut self, reply_q: usize) -> (Option<ValueEntry>, ReadStats, Tick, Message) {
        let read = self.active.take().expect("read deadline without a read");
        let selected = select_value(&read.replies, reply_q);
        let mut repliers = std::collections::BTreeSet::new();
        for senders in read.replies.values() {
            repliers.extend(senders.iter().copied());
        }
        let stats = ReadStats {
            distinct_repliers: repliers.len(),
            chosen_occurrences: selected
                .and_then(|entry| read.replies.get(&entry).map(|s| s.len()))
                .unwrap_or(0),
        };
        (
            selected,
            stats,
            read.invoked,
            Message::ReadAck {
                client: self.client,
            },
        )
    }

    pub fn reading(&self) -> bool {
        self.active.is_some()
    }

    pub fn deadline(&self, delta: Dur) -> Option<Tick> {
        self.active.as_ref().map(|r| r.invoked + 2 * delta)
    }
}

/// The pair occurring at least `reply_q` times from distinct servers, highest
/// sequence number winning ties. `None` when no pair reaches the quorum.
pub fn select_value(replies: &Votes, reply_q: usize) -> Option<ValueEntry> {
    pairs_with_quorum(replies, reply_q).pop()
}
