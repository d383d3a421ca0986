//! Discrete-event engine: a global tick clock, a deterministic event queue,
//! and the authenticated message layer with adversary-bounded delays.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::msg::{Message, ProcessId};

/// A duration in simulated time units.
pub type Dur = u64;

/// A simulated time instant. The clock never moves backwards.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Tick(pub u64);

impl Tick {
    pub const ZERO: Tick = Tick(0);

    pub fn saturating_sub(self, d: Dur) -> Tick {
        Tick(self.0.saturating_sub(d))
    }
}

impl Add<Dur> for Tick {
    type Output = Tick;
    fn add(self, rhs: Dur) -> Tick {
        Tick(self.0 + rhs)
    }
}

impl AddAssign<Dur> for Tick {
    fn add_assign(&mut self, rhs: Dur) {
        self.0 += rhs;
    }
}

impl Sub<Tick> for Tick {
    type Output = Dur;
    fn sub(self, rhs: Tick) -> Dur {
        self.0 - rhs.0
    }
}

impl fmt::Display for Tick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordering of same-tick events. Mobility transitions happen first so that a
/// message delivered at an arrival tick already finds the host captured and
/// one delivered at a departure tick finds the correct code restored.
/// Deliveries precede timers so that a wait expiring at `t` observes every
/// message delivered "by time t".
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum EventClass {
    Depart = 0,
    Arrive = 1,
    Deliver = 2,
    Timer = 3,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot schedule event at tick {at} in the past (now = {now})")]
pub struct SchedulePastError {
    pub at: Tick,
    pub now: Tick,
}

struct Slot<E> {
    at: Tick,
    class: EventClass,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Slot<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.class, self.seq) == (other.at, other.class, other.seq)
    }
}
impl<E> Eq for Slot<E> {}
impl<E> PartialOrd for Slot<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Slot<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.class, self.seq).cmp(&(other.at, other.class, other.seq))
    }
}

/// Deterministic event queue over a global tick clock.
///
/// Events fire ordered by `(tick, class, insertion order)`; identical inputs
/// always replay the identical event sequence.
pub struct Sim<E> {
    now: Tick,
    seq: u64,
    heap: BinaryHeap<Reverse<Slot<E>>>,
}

impl<E> Default for Sim<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Sim<E> {
    pub fn new() -> Self {
        Sim {
            now: Tick::ZERO,
            seq: 0,
            heap: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedule a plain (timer-class) event. Same-tick timers fire after any
    /// already-queued events of that tick, in insertion order.
    pub fn schedule(&mut self, at: Tick, event: E) -> Result<(), SchedulePastError> {
        self.schedule_class(at, EventClass::Timer, event)
    }

    pub fn schedule_class(
        &mut self,
        at: Tick,
        class: EventClass,
        event: E,
    ) -> Result<(), SchedulePastError> {
        if at < self.now {
            return Err(SchedulePastError { at, now: self.now });
        }
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Reverse(Slot {
            at,
            class,
            seq,
            event,
        }));
        Ok(())
    }

    fn pop_due(&mut self, until: Tick) -> Option<(Tick, E)> {
        match self.heap.peek() {
            Some(Reverse(slot)) if slot.at <= until => {
                let slot = self.heap.pop().unwrap().0;
                self.now = slot.at;
                Some((slot.at, slot.event))
            }
            _ => None,
        }
    }

    /// Execute every event with time <= `t` in deterministic order, then set
    /// the clock to `t`.
    pub fn run_until(&mut self, t: Tick, mut handler: impl FnMut(&mut Self, Tick, E)) {
        assert!(t >= self.now, "run_until target is in the past");
        while let Some((at, ev)) = self.pop_due(t) {
            handler(self, at, ev);
        }
        self.now = t;
    }

    /// Run until the queue drains. Returns the tick of the last event.
    pub fn drain(&mut self, mut handler: impl FnMut(&mut Self, Tick, E)) -> Tick {
        while let Some((at, ev)) = self.pop_due(Tick(u64::MAX)) {
            handler(self, at, ev);
        }
        self.now
    }
}

/// A timestamped in-flight message. Broadcasts fan out to one envelope per
/// recipient at send time; every envelope is delivered exactly once.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub sender: ProcessId,
    pub recipient: ProcessId,
    pub payload: Message,
    pub sent_at: Tick,
    pub deliver_at: Tick,
}

/// How per-envelope delays are chosen. Every delay lies in `[1, delta]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayPolicy {
    /// Every message takes exactly `delta`.
    FixedMax,
    /// Uniform in `[1, delta]` from the seeded generator.
    SeededUniform,
    /// One tick to or from a currently Byzantine server, `delta` otherwise.
    Adversarial,
}

impl DelayPolicy {
    pub fn delay(
        self,
        delta: Dur,
        rng: &mut impl Rng,
        sender_byz: bool,
        recipient_byz: bool,
    ) -> Dur {
        debug_assert!(delta >= 1);
        match self {
            DelayPolicy::FixedMax => delta,
            DelayPolicy::SeededUniform => rng.gen_range(1..=delta),
            DelayPolicy::Adversarial => {
                if sender_byz || recipient_byz {
                    1
                } else {
                    delta
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fires_exactly_at_scheduled_tick() {
        let mut sim: Sim<u32> = Sim::new();
        sim.run_until(Tick(3), |_, _, _| {});
        sim.schedule(Tick(5), 1).unwrap();
        let mut fired = Vec::new();
        sim.run_until(Tick(10), |_, at, ev| fired.push((at, ev)));
        assert_eq!(fired, vec![(Tick(5), 1)]);
        assert_eq!(sim.now(), Tick(10));
    }

    #[test]
    fn same_tick_events_follow_insertion_order() {
        let mut sim: Sim<&str> = Sim::new();
        sim.schedule(Tick(7), "a").unwrap();
        sim.schedule(Tick(7), "b").unwrap();
        let mut fired = Vec::new();
        sim.run_until(Tick(7), |_, _, ev| fired.push(ev));
        assert_eq!(fired, vec!["a", "b"]);
    }

    #[test]
    fn scheduling_now_runs_after_queued_events_of_same_tick() {
        let mut sim: Sim<&str> = Sim::new();
        sim.schedule(Tick(3), "queued").unwrap();
        let mut fired = Vec::new();
        sim.run_until(Tick(3), |sim, at, ev| {
            fired.push(ev);
            if ev == "queued" {
                // now == 3; scheduling at the current tick is allowed
                sim.schedule(at, "late").unwrap();
            }
        });
        assert_eq!(fired, vec!["queued", "late"]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut sim: Sim<u32> = Sim::new();
        sim.run_until(Tick(4), |_, _, _| {});
        assert_eq!(
            sim.schedule(Tick(3), 0),
            Err(SchedulePastError {
                at: Tick(3),
                now: Tick(4)
            })
        );
    }

    #[test]
    fn classes_order_within_a_tick() {
        let mut sim: Sim<&str> = Sim::new();
        sim.schedule_class(Tick(2), EventClass::Timer, "timer").unwrap();
        sim.schedule_class(Tick(2), EventClass::Deliver, "deliver").unwrap();
        sim.schedule_class(Tick(2), EventClass::Arrive, "arrive").unwrap();
        sim.schedule_class(Tick(2), EventClass::Depart, "depart").unwrap();
        let mut fired = Vec::new();
        sim.drain(|_, _, ev| fired.push(ev));
        assert_eq!(fired, vec!["depart", "arrive", "deliver", "timer"]);
    }

    #[test]
    fn uniform_delays_stay_in_bounds_and_reproduce() {
        let delta = 10;
        let draw = |seed: u64| -> Vec<Dur> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10_000)
                .map(|_| DelayPolicy::SeededUniform.delay(delta, &mut rng, false, false))
                .collect()
        };
        let a = draw(42);
        let b = draw(42);
        assert_eq!(a, b);
        assert!(a.iter().all(|&d| (1..=delta).contains(&d)));
    }

    #[test]
    fn adversarial_delay_is_one_tick_for_byzantine_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(DelayPolicy::Adversarial.delay(10, &mut rng, false, true), 1);
        assert_eq!(DelayPolicy::Adversarial.delay(10, &mut rng, true, false), 1);
        assert_eq!(DelayPolicy::Adversarial.delay(10, &mut rng, false, false), 10);
    }
}
