//! Server protocol for the cured-unaware model: a maintenance cycle every
//! `2 * delta` guarded by a fresh nonce, a write staging set with bounded
//! timers, safe-set promotion, and merged replies to readers.

use std::collections::BTreeSet;

use crate::msg::{ClientId, EchoBody, Message, ServerId, ValueEntry};
use crate::proto::{
    pairs_with_quorum, record_vote, Outbox, Recipient, TimerKind, VSet, Votes,
};
use crate::sim::{Dur, Tick};

/// A staged write with its expiry. Entries live exactly `4 * delta`; anything
/// with a longer remaining lifetime was planted and is purged on sight.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimedEntry {
    pub entry: ValueEntry,
    pub expires_at: Tick,
}

/// State of one cured-unaware server.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CumState {
    pub id: ServerId,
    pub v: VSet,
    /// Pairs confirmed by an echo quorum during the current cycle; promoted
    /// into `v` when the next cycle starts.
    pub v_safe: VSet,
    /// Values straight from the writer, each with a `4 * delta` timer.
    pub w: Vec<TimedEntry>,
    pub pending_read: BTreeSet<ClientId>,
    pub echo_read: BTreeSet<ClientId>,
    pub echo_vals: Votes,
    /// Nonce of the current maintenance instance; echoes carrying anything
    /// else are ignored.
    pub rand: u64,
    /// Last quorum selection that already fired this cycle, to avoid
    /// re-sending identical replies on every further echo.
    last_select: Option<Vec<ValueEntry>>,
    /// Timer cap, `4 * delta`.
    max_timer: Dur,
}

impl CumState {
    pub fn new(id: ServerId, initial: ValueEntry, delta: Dur) -> Self {
        CumState {
            id,
            v: VSet::with_initial(initial),
            v_safe: VSet::with_initial(initial),
            w: Vec::new(),
            pending_read: BTreeSet::new(),
            echo_read: BTreeSet::new(),
            echo_vals: Votes::new(),
            rand: 0,
            last_select: None,
            max_timer: 4 * delta,
        }
    }

    pub fn max_timer(&self) -> Dur {
        self.max_timer
    }

    /// Begin the next maintenance instance: promote the safe set, reset the
    /// echo state, pick a fresh nonce and ask everyone for echoes.
    pub fn cycle_start(&mut self, nonce: u64, out: &mut Outbox) {
        self.echo_vals.clear();
        self.v = std::mem::take(&mut self.v_safe);
        self.rand = nonce;
        self.last_select = None;
        out.broadcast(Message::EchoReq {
            server: self.id,
            nonce: Some(nonce),
        });
    }

    /// Drop staged writes whose timer expired or whose timer could not have
    /// been set by the protocol.
    pub fn timer_check(&mut self, now: Tick) {
        let cap = self.max_timer;
        self.w
            .retain(|t| t.expires_at > now && t.expires_at - now <= cap);
    }

    pub fn on_message(&mut self, now: Tick, msg: Message, echo_q: usize, out: &mut Outbox) {
        match msg {
            Message::Write { value, csn } => {
                self.timer_check(now);
                let entry = ValueEntry::new(value, csn);
                if !self.w.iter().any(|t| t.entry == entry) {
                    self.w.push(TimedEntry {
                        entry,
                        expires_at: now + self.max_timer,
                    });
                    out.timer(self.max_timer, TimerKind::CumPurgeW);
                }
                for client in self.pending_read.union(&self.echo_read).copied().collect::<Vec<_>>() {
                    out.send(
                        Recipient::Client(client),
                        Message::Reply {
                            server: self.id,
                            entries: vec![entry],
                        },
                    );
                }
                out.broadcast(Message::Echo {
                    server: self.id,
                    body: EchoBody::Values(vec![entry]),
                    pending: Vec::new(),
                    nonce: None,
                });
            }
            Message::Read { client } => {
                self.timer_check(now);
                self.pending_read.insert(client);
                out.send(
                    Recipient::Client(client),
                    Message::Reply {
                        server: self.id,
                        entries: con_cut(&self.v, &self.v_safe, &self.w),
                    },
                );
                out.broadcast(Message::ReadFw { client });
            }
            Message::ReadFw { client } => {
                self.pending_read.insert(client);
            }
            Message::ReadAck { client } => {
                self.pending_read.remove(&client);
                self.echo_read.remove(&client);
            }
            Message::Echo {
                server,
                body,
                pending,
                nonce,
            } => {
                if nonce != Some(self.rand) {
                    return;
                }
                if let EchoBody::Values(entries) = body {
                    for entry in entries {
                        record_vote(&mut self.echo_vals, server, entry);
                    }
                }
                self.echo_read.extend(pending);
                self.try_select(echo_q, out);
            }
            Message::EchoReq { server, nonce } => {
                self.timer_check(now);
                let mut entries = self.v.to_vec();
                for staged in &self.w {
                    if !entries.contains(&staged.entry) {
                        entries.push(staged.entry);
                    }
                }
                out.send(
                    Recipient::Server(server),
                    Message::Echo {
                        server: self.id,
                        body: EchoBody::Values(entries),
                        pending: self.pending_read.iter().copied().collect(),
                        nonce,
                    },
                );
            }
            Message::Reply { .. } => {}
        }
    }

    /// Fires whenever the accumulated echoes change: once a selection
    /// qualifies, store it in the safe set and update every known reader.
    fn try_select(&mut self, echo_q: usize, out: &mut Outbox) {
        let Some(selected) = select_three_pairs_max_sn(&self.echo_vals, echo_q) else {
            return;
        };
        if self.last_select.as_ref() == Some(&selected) {
            return;
        }
        self.v_safe.insert_all(selected.iter().copied());
        self.last_select = Some(selected);
        for client in self.pending_read.union(&self.echo_read).copied().collect::<Vec<_>>() {
            out.send(
                Recipient::Client(client),
                Message::Reply {
                    server: self.id,
                    entries: self.v_safe.to_vec(),
                },
            );
        }
    }

    /// True when a quorum selection has filled the safe set this cycle; the
    /// driving loop uses it to decide that a rebuild cycle succeeded.
    pub fn safe_filled(&self) -> bool {
        self.last_select.is_some()
    }
}

/// Merge the safe set, the working set and the staged writes, dropping
/// duplicates and keeping the three newest pairs, ascending.
pub fn con_cut(v: &VSet, v_safe: &VSet, w: &[TimedEntry]) -> Vec<ValueEntry> {
    let mut merged: Vec<ValueEntry> = Vec::new();
    for entry in v_safe
        .entries()
        .iter()
        .chain(v.entries())
        .chain(w.iter().map(|t| &t.entry))
    {
        if !merged.contains(entry) {
            merged.push(*entry);
        }
    }
    merged.sort();
    if merged.len() > 3 {
        merged.split_off(merged.len() - 3)
    } else {
        merged
    }
}

/// Quorum-backed pairs with the CUM threshold: `None` while nothing
/// qualifies, so a cycle keeps waiting rather than adopting an empty result.
pub fn select_three_pairs_max_sn(echo_vals: &Votes, echo_q: usize) -> Option<Vec<ValueEntry>> {
    let mut qualifying = pairs_with_quorum(echo_vals, echo_q);
    if qualifying.is_empty() {
        return None;
    }
    if qualifying.len() > 3 {
        qualifying = qualifying.split_off(qualifying.len() - 3);
    }
    Some(qualifying)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msg::Value;

    fn e(value: Value, sn: u64) -> ValueEntry {
        ValueEntry::new(value, sn)
    }

    fn state() -> CumState {
        CumState::new(ServerId(0), e(0, 0), 10)
    }

    #[test]
    fn con_cut_reproduces_the_worked_example() {
        let mut v = VSet::new();
        v.insert_all([e(2, 2), e(3, 3), e(4, 4)]);
        let mut v_safe = VSet::new();
        v_safe.insert_all([e(2, 2), e(4, 4), e(5, 5)]);
        assert_eq!(con_cut(&v, &v_safe, &[]), vec![e(3, 3), e(4, 4), e(5, 5)]);
    }

    #[test]
    fn con_cut_of_empty_sets_is_empty() {
        assert_eq!(con_cut(&VSet::new(), &VSet::new(), &[]), Vec::<ValueEntry>::new());
    }

    #[test]
    fn con_cut_includes_the_newest_staged_write() {
        let mut v = VSet::new();
        v.insert_all([e(1, 1), e(2, 2), e(3, 3)]);
        let w = [TimedEntry {
            entry: e(9, 9),
            expires_at: Tick(40),
        }];
        assert_eq!(con_cut(&v, &VSet::new(), &w), vec![e(2, 2), e(3, 3), e(9, 9)]);
    }

    #[test]
    fn timer_check_purges_expired_and_planted_entries() {
        let mut s = state();
        s.w.push(TimedEntry { entry: e(1, 1), expires_at: Tick(140) });
        s.w.push(TimedEntry { entry: e(2, 2), expires_at: Tick(190) }); // 9*delta ahead
        s.timer_check(Tick(100));
        assert_eq!(s.w.len(), 1);
        s.timer_check(Tick(140));
        assert!(s.w.is_empty());
        s.timer_check(Tick(150)); // no-op on empty
        assert!(s.w.is_empty());
    }

    #[test]
    fn write_stages_replies_and_echoes() {
        let mut s = state();
        s.pending_read.insert(ClientId(1));
        s.echo_read.insert(ClientId(2));
        let mut out = Outbox::new();
        s.on_message(Tick(100), Message::Write { value: 7, csn: 4 }, 5, &mut out);
        assert_eq!(s.w.len(), 1);
        assert_eq!(s.w[0].expires_at, Tick(140));
        let replies = out
            .sends
            .iter()
            .filter(|(to, _)| matches!(to, Recipient::Client(_)))
            .count();
        assert_eq!(replies, 2);
        assert!(out
            .sends
            .iter()
            .any(|(to, m)| *to == Recipient::AllServers && matches!(m, Message::Echo { .. })));
        assert_eq!(out.timers, vec![(40, TimerKind::CumPurgeW)]);

        // a second write with the same pair dedupes
        s.on_message(Tick(101), Message::Write { value: 7, csn: 4 }, 5, &mut Outbox::new());
        assert_eq!(s.w.len(), 1);
    }

    #[test]
    fn echo_with_stale_nonce_is_ignored() {
        let mut s = state();
        s.cycle_start(42, &mut Outbox::new());
        s.on_message(
            Tick(1),
            Message::Echo {
                server: ServerId(1),
                body: EchoBody::Values(vec![e(3, 3)]),
                pending: vec![],
                nonce: Some(41),
            },
            1,
            &mut Outbox::new(),
        );
        assert!(s.echo_vals.is_empty());
        // the write-path echo carries no nonce and is equally ignored
        s.on_message(
            Tick(1),
            Message::Echo {
                server: ServerId(1),
                body: EchoBody::Values(vec![e(3, 3)]),
                pending: vec![],
                nonce: None,
            },
            1,
            &mut Outbox::new(),
        );
        assert!(s.echo_vals.is_empty());
    }

    #[test]
    fn quorum_echoes_fill_the_safe_set_and_notify_readers() {
        let mut s = state();
        s.cycle_start(42, &mut Outbox::new());
        s.pending_read.insert(ClientId(3));
        let mut out = Outbox::new();
        for peer in 1..=4 {
            s.on_message(
                Tick(5),
                Message::Echo {
                    server: ServerId(peer),
                    body: EchoBody::Values(vec![e(8, 4)]),
                    pending: vec![],
                    nonce: Some(42),
                },
                4,
                &mut out,
            );
        }
        assert!(s.v_safe.contains(&e(8, 4)));
        assert!(s.safe_filled());
        let replies: Vec<_> = out
            .sends
            .iter()
            .filter(|(to, _)| *to == Recipient::Client(ClientId(3)))
            .collect();
        assert_eq!(replies.len(), 1, "reply fires once per changed selection");
    }

    #[test]
    fn byzantine_minority_cannot_outvote_the_quorum() {
        let mut s = state();
        s.cycle_start(7, &mut Outbox::new());
        for peer in 1..=4 {
            s.on_message(
                Tick(5),
                Message::Echo {
                    server: ServerId(peer),
                    body: EchoBody::Values(vec![e(5, 9)]),
                    pending: vec![],
                    nonce: Some(7),
                },
                4,
                &mut Outbox::new(),
            );
        }
        for peer in 5..=7 {
            s.on_message(
                Tick(5),
                Message::Echo {
                    server: ServerId(peer),
                    body: EchoBody::Values(vec![e(99, 99)]),
                    pending: vec![],
                    nonce: Some(7),
                },
                4,
                &mut Outbox::new(),
            );
        }
        assert!(s.v_safe.contains(&e(5, 9)));
        assert!(!s.v_safe.contains(&e(99, 99)));
    }

    #[test]
    fn cycle_start_promotes_safe_into_working_set() {
        let mut s = state();
        s.v_safe.insert(e(6, 6));
        s.cycle_start(1, &mut Outbox::new());
        assert!(s.v.contains(&e(6, 6)));
        assert!(s.v_safe.is_empty());
        assert!(!s.safe_filled());
    }

    #[test]
    fn read_replies_with_the_merged_cut_and_forwards() {
        let mut s = state();
        let mut out = Outbox::new();
        s.on_message(Tick(3), Message::Read { client: ClientId(5) }, 5, &mut out);
        assert!(s.pending_read.contains(&ClientId(5)));
        let reply = out
            .sends
            .iter()
            .find_map(|(to, m)| match (to, m) {
                (Recipient::Client(c), Message::Reply { entries, .. }) if *c == ClientId(5) => {
                    Some(entries.clone())
                }
                _ => None,
            })
            .unwrap();
        assert!(reply.len() <= 3);
        assert!(out
            .sends
            .contains(&(Recipient::AllServers, Message::ReadFw { client: ClientId(5) })));
    }

    #[test]
    fn read_fw_registers_a_missed_reader() {
        let mut s = state();
        s.on_message(Tick(3), Message::ReadFw { client: ClientId(8) }, 5, &mut Outbox::new());
        assert!(s.pending_read.contains(&ClientId(8)));
        // ack for an unknown client is a no-op
        s.on_message(Tick(4), Message::ReadAck { client: ClientId(9) }, 5, &mut Outbox::new());
    }

    #[test]
    fn echo_req_answers_with_working_set_plus_staged_writes() {
        let mut s = state();
        s.w.push(TimedEntry { entry: e(4, 4), expires_at: Tick(45) });
        s.pending_read.insert(ClientId(2));
        let mut out = Outbox::new();
        s.on_message(
            Tick(10),
            Message::EchoReq {
                server: ServerId(6),
                nonce: Some(77),
            },
            5,
            &mut out,
        );
        let (to, msg) = &out.sends[0];
        assert_eq!(*to, Recipient::Server(ServerId(6)));
        match msg {
            Message::Echo {
                body: EchoBody::Values(entries),
                pending,
                nonce,
                ..
            } => {
                assert!(entries.contains(&e(0, 0)));
                assert!(entries.contains(&e(4, 4)));
                assert_eq!(pending, &vec![ClientId(2)]);
                assert_eq!(*nonce, Some(77));
            }
            other => panic!("unexpected message {other:?}"),
        }
    }

    #[test]
    fn select_three_distinguishes_none_from_empty() {
        assert_eq!(select_three_pairs_max_sn(&Votes::new(), 1), None);
        let mut votes = Votes::new();
        for peer in 0..4 {
            record_vote(&mut votes, ServerId(peer), e(9, 9));
        }
        for peer in 4..7 {
            record_vote(&mut votes, ServerId(peer), e(99, 99));
        }
        assert_eq!(select_three_pairs_max_sn(&votes, 4), Some(vec![e(9, 9)]));
    }
}
