//! History recording and verification: regular-register validity, exact
//! termination timing, and measured curing spans.

use serde::{Deserialize, Serialize};

use crate::mobility::{CuredEnd, CuredSpan};
use crate::msg::{ClientId, ValueEntry};
use crate::sim::{Dur, Tick};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadOutcome {
    Returned(ValueEntry),
    /// No pair reached the reply quorum; signals a misconfigured threshold.
    NoQuorum,
}

/// One completed client operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OpRecord {
    Write {
        client: ClientId,
        t_b: Tick,
        t_e: Tick,
        entry: ValueEntry,
    },
    Read {
        client: ClientId,
        t_b: Tick,
        t_e: Tick,
        outcome: ReadOutcome,
    },
}

impl OpRecord {
    pub fn t_b(&self) -> Tick {
        match self {
            OpRecord::Write { t_b, .. } | OpRecord::Read { t_b, .. } => *t_b,
        }
    }

    pub fn t_e(&self) -> Tick {
        match self {
            OpRecord::Write { t_e, .. } | OpRecord::Read { t_e, .. } => *t_e,
        }
    }
}

/// Recorded operations plus the pre-loaded initial value, which counts as a
/// write completed before every operation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    pub initial: ValueEntry,
    pub ops: Vec<OpRecord>,
}

impl History {
    pub fn new(initial: ValueEntry) -> Self {
        History {
            initial,
            ops: Vec::new(),
        }
    }

    pub fn writes(&self) -> impl Iterator<Item = (Tick, Tick, ValueEntry)> + '_ {
        self.ops.iter().filter_map(|op| match op {
            OpRecord::Write { t_b, t_e, entry, .. } => Some((*t_b, *t_e, *entry)),
            _ => None,
        })
    }

    pub fn reads(&self) -> impl Iterator<Item = (ClientId, Tick, Tick, ReadOutcome)> + '_ {
        self.ops.iter().filter_map(|op| match op {
            OpRecord::Read {
                client,
                t_b,
                t_e,
                outcome,
            } => Some((*client, *t_b, *t_e, *outcome)),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// A read returned a value that is neither the last completed write
    /// before it nor one of the writes concurrent with it.
    StaleRead {
        client: ClientId,
        t_b: Tick,
        returned: ValueEntry,
        last_written: ValueEntry,
    },
    NoQuorumRead {
        client: ClientId,
        t_b: Tick,
    },
    OverlappingWrites {
        first_end: Tick,
        second_begin: Tick,
    },
    BadWriteDuration {
        t_b: Tick,
        took: Dur,
        expected: Dur,
    },
    BadReadDuration {
        t_b: Tick,
        took: Dur,
        expected: Dur,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::StaleRead {
                client,
                t_b,
                returned,
                last_written,
            } => write!(
                f,
                "read by {client} at {t_b} returned {returned}, but the last completed write was {last_written}"
            ),
            Violation::NoQuorumRead { client, t_b } => {
                write!(f, "read by {client} at {t_b} found no quorum")
            }
            Violation::OverlappingWrites {
                first_end,
                second_begin,
            } => write!(
                f,
                "write beginning at {second_begin} overlaps one ending at {first_end}"
            ),
            Violation::BadWriteDuration { t_b, took, expected } => {
                write!(f, "write at {t_b} took {took} ticks, expected exactly {expected}")
            }
            Violation::BadReadDuration { t_b, took, expected } => {
                write!(f, "read at {t_b} took {took} ticks, expected exactly {expected}")
            }
        }
    }
}

/// A read must return the value of the latest write completed before its
/// invocation, or of some write concurrent with it. The initial value plays
/// the role of a write completed at tick zero.
pub fn check_validity(history: &History) -> Vec<Violation> {
    let mut violations = Vec::new();

    let mut writes: Vec<(Tick, Tick, ValueEntry)> = vec![(Tick::ZERO, Tick::ZERO, history.initial)];
    writes.extend(history.writes());
    writes.sort_by_key(|&(t_b, _, _)| t_b);

    for pair in writes.windows(2) {
        if pair[1].0 < pair[0].1 {
            violations.push(Violation::OverlappingWrites {
                first_end: pair[0].1,
                second_begin: pair[1].0,
            });
        }
    }

    for (client, t_b, t_e, outcome) in history.reads() {
        let returned = match outcome {
            ReadOutcome::Returned(entry) => entry,
            ReadOutcome::NoQuorum => {
                violations.push(Violation::NoQuorumRead { client, t_b });
                continue;
            }
        };
        let last_completed = writes
            .iter()
            .filter(|&&(_, w_e, _)| w_e < t_b || w_e == Tick::ZERO)
            .max_by_key(|&&(_, _, entry)| entry)
            .map(|&(_, _, entry)| entry)
            .expect("the initial value always precedes");
        // neither the write precedes the read nor the read the write
        let concurrent = |w_b: Tick, w_e: Tick| !(w_e < t_b) && !(t_e < w_b);
        let legal = returned == last_completed
            || writes
                .iter()
                .any(|&(w_b, w_e, entry)| entry == returned && concurrent(w_b, w_e));
        if !legal {
            violations.push(Violation::StaleRead {
                client,
                t_b,
                returned,
                last_written: last_completed,
            });
        }
    }
    violations
}

/// Termination is unconditional and exact: writes take `delta`, reads
/// `2 * delta`. When `require_quorum` is set (replica count at or above the
/// protocol minimum), no-quorum outcomes are violations too.
pub fn check_termination(history: &History, delta: Dur, require_quorum: bool) -> Vec<Violation> {
    let mut violations = Vec::new();
    for op in &history.ops {
        let took = op.t_e() - op.t_b();
        match op {
            OpRecord::Write { t_b, .. } => {
                if took != delta {
                    violations.push(Violation::BadWriteDuration {
                        t_b: *t_b,
                        took,
                        expected: delta,
                    });
                }
            }
            OpRecord::Read {
                client,
                t_b,
                outcome,
                ..
            } => {
                if took != 2 * delta {
                    violations.push(Violation::BadReadDuration {
                        t_b: *t_b,
                        took,
                        expected: 2 * delta,
                    });
                }
                if require_quorum && *outcome == ReadOutcome::NoQuorum {
                    violations.push(Violation::NoQuorumRead {
                        client: *client,
                        t_b: *t_b,
                    });
                }
            }
        }
    }
    violations
}

/// Measured curing behaviour of one run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GammaMeasure {
    pub departures: usize,
    /// Longest departure-to-recovery span observed; zero when no agent moved.
    pub max_recovered: Dur,
    /// Departures still unrecovered at the horizon, with their open span so
    /// far. Spans longer than the model bound mean the rebuild failed.
    pub pending: Vec<(Tick, Dur)>,
    /// Departures cut short by a re-infection; excluded from the measurement.
    pub reinfected: usize,
}

impl GammaMeasure {
    /// True iff every measurable span fits under `bound`, counting a pending
    /// span as failed once it already exceeds the bound.
    pub fn within(&self, bound: Dur) -> bool {
        self.max_recovered <= bound && self.pending.iter().all(|&(_, open)| open <= bound)
    }
}

/// Maximum time any server spent in the cured state, from the finalized
/// timeline spans.
pub fn measure_gamma(spans: &[CuredSpan], horizon: Tick) -> GammaMeasure {
    let mut measure = GammaMeasure::default();
    for span in spans {
        measure.departures += 1;
        match span.end {
            CuredEnd::Recovered(t) => {
                measure.max_recovered = measure.max_recovered.max(t - span.start);
            }
            CuredEnd::Reinfected(_) => measure.reinfected += 1,
            CuredEnd::Pending => measure.pending.push((span.start, horizon - span.start)),
        }
    }
    measure
}
