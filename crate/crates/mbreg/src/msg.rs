//! Process identifiers and the protocol wire messages.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Register values carried by the protocols.
pub type Value = u64;

#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ServerId(pub usize);

#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ClientId(pub usize);

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessId {
    Server(ServerId),
    Client(ClientId),
}

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessId::Server(s) => s.fmt(f),
            ProcessId::Client(c) => c.fmt(f),
        }
    }
}

/// A ⟨value, sequence number⟩ pair.
///
/// `sn` is declared first so the derived ordering compares sequence numbers
/// before values; "highest" everywhere means highest by `(sn, value)`.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default, Serialize, Deserialize,
)]
pub struct ValueEntry {
    pub sn: u64,
    pub value: Value,
}

impl ValueEntry {
    pub fn new(value: Value, sn: u64) -> Self {
        ValueEntry { sn, value }
    }
}

impl fmt::Display for ValueEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>", self.value, self.sn)
    }
}

/// Payload of an echo: either the default marker a cured-aware server floods
/// to disqualify its own earlier traffic, or a list of pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EchoBody {
    Bottom,
    Values(Vec<ValueEntry>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Write {
        value: Value,
        csn: u64,
    },
    Read {
        client: ClientId,
    },
    ReadAck {
        client: ClientId,
    },
    /// Server-to-server forwarding of a read request (cured-unaware model).
    ReadFw {
        client: ClientId,
    },
    Reply {
        server: ServerId,
        entries: Vec<ValueEntry>,
    },
    Echo {
        server: ServerId,
        body: EchoBody,
        /// Readers the sender currently knows about; carried only on echoes
        /// answering an explicit request.
        pending: Vec<ClientId>,
        /// Maintenance-instance nonce this echo answers, when any.
        nonce: Option<u64>,
    },
    EchoReq {
        server: ServerId,
        nonce: Option<u64>,
    },
}

impl Message {
    /// The process identity a message claims to come from. Channels are
    /// authenticated: the claimed sender must match the envelope sender.
    pub fn claimed_sender(&self) -> Option<ProcessId> {
        match self {
            Message::Write { .. } => None,
            Message::Read { client } | Message::ReadAck { client } => {
                Some(ProcessId::Client(*client))
            }
            Message::ReadFw { .. } => None,
            Message::Reply { server, .. }
            | Message::Echo { server, .. }
            | Message::EchoReq { server, .. } => Some(ProcessId::Server(*server)),
        }
    }
}
