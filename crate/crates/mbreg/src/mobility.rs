//! Mobile Byzantine agents: movement schedules, their validation, derived
//! per-server failure timelines, worst-case scenario generation, and the
//! cured-state oracle available under the aware model.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::Model;
use crate::msg::{ServerId, Value};
use crate::sim::{Dur, Tick};

/// What a Byzantine agent does with a captured host: its outgoing messages
/// are produced solely by the strategy, which may read and rewrite the
/// host's state before leaving.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ByzStrategy {
    /// Absorb everything, send nothing, leave the (stale) state untouched.
    Silent,
    /// Answer every read and echo request with one fixed pair, and plant it
    /// in the host's state on departure.
    EchoFixedValue { value: Value, sn: u64 },
    /// Reply with seeded garbage and leave garbage behind, including staged
    /// entries with out-of-protocol timers.
    RandomGarbage { seed: u64 },
    /// The indistinguishability construction: echo the opposite execution's
    /// register pair. Behaviourally identical to `EchoFixedValue`.
    Mirror { value: Value, sn: u64 },
}

/// One agent's movement plan: ordered `(server, arrival)` visits with a
/// per-agent minimum dwell time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSchedule {
    pub agent: usize,
    pub dwell_min: Dur,
    pub visits: Vec<(ServerId, Tick)>,
}

/// First offending step of an invalid schedule.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum MovementViolation {
    #[error("agent {agent}: visit {index} arrives at {at} but {prev} + dwell {dwell} = {} is required", prev.0 + dwell)]
    GapTooShort {
        agent: usize,
        index: usize,
        prev: Tick,
        at: Tick,
        dwell: Dur,
    },
    #[error("agent {agent}: visits are not strictly increasing at index {index}")]
    NotIncreasing { agent: usize, index: usize },
    #[error("agent {agent}: dwell {dwell} is below the global minimum {global}")]
    DwellBelowGlobal { agent: usize, dwell: Dur, global: Dur },
    #[error("agent {agent} has no visits")]
    Empty { agent: usize },
}

/// Check the movement constraints: strictly increasing arrivals, consecutive
/// gaps of at least the agent's dwell, and the dwell at least the global
/// minimum.
pub fn validate(schedule: &AgentSchedule, dwell_global: Dur) -> Result<(), MovementViolation> {
    if schedule.visits.is_empty() {
        return Err(MovementViolation::Empty {
            agent: schedule.agent,
        });
    }
    if schedule.dwell_min < dwell_global {
        return Err(MovementViolation::DwellBelowGlobal {
            agent: schedule.agent,
            dwell: schedule.dwell_min,
            global: dwell_global,
        });
    }
    for (i, pair) in schedule.visits.windows(2).enumerate() {
        let (_, prev) = pair[0];
        let (_, at) = pair[1];
        if at <= prev {
            return Err(MovementViolation::NotIncreasing {
                agent: schedule.agent,
                index: i + 1,
            });
        }
        if at - prev < schedule.dwell_min {
            return Err(MovementViolation::GapTooShort {
                agent: schedule.agent,
                index: i + 1,
                prev,
                at,
                dwell: schedule.dwell_min,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error(transparent)]
    Movement(#[from] MovementViolation),
    #[error("agents {a} and {b} occupy {server} simultaneously around tick {at}")]
    Stacked {
        a: usize,
        b: usize,
        server: ServerId,
        at: Tick,
    },
    #[error("visit names {server} but only {n} servers exist")]
    ServerOutOfRange { server: ServerId, n: usize },
    #[error("no free server for agent {agent} at tick {at}")]
    NoFreeServer { agent: usize, at: Tick },
}

/// Occupancy of one server by one agent: Byzantine over `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByzSpan {
    pub start: Tick,
    pub end: Tick,
}

/// How a cured interval closed, if it has.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CuredEnd {
    /// Maintenance completed at this tick; the server is correct from here.
    Recovered(Tick),
    /// An agent returned before the state was rebuilt.
    Reinfected(Tick),
    /// Still open: the transition is determined by the protocol run.
    Pending,
}

/// A cured interval, opened at an agent departure. `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CuredSpan {
    pub server: ServerId,
    pub start: Tick,
    pub end: CuredEnd,
}

impl CuredSpan {
    pub fn contains(&self, t: Tick, horizon: Tick) -> bool {
        if t < self.start {
            return false;
        }
        match self.end {
            CuredEnd::Recovered(e) | CuredEnd::Reinfected(e) => t < e,
            CuredEnd::Pending => t < horizon,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Correct,
    Cured,
    Byzantine,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Correct => write!(f, "correct"),
            Label::Cured => write!(f, "cured"),
            Label::Byzantine => write!(f, "byzantine"),
        }
    }
}

/// Per-server failure intervals over a bounded horizon. Byzantine spans come
/// straight from the schedules; cured spans open at departures and close
/// either by protocol instrumentation or uniformly via
/// [`FailureTimeline::with_uniform_curing`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureTimeline {
    pub n: usize,
    pub horizon: Tick,
    byz: Vec<Vec<ByzSpan>>,
    cured: Vec<Vec<CuredSpan>>,
}

/// Point and interval failure sets over a window `[t1, t2]` (ticks,
/// inclusive).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FailureSets {
    pub co: BTreeSet<ServerId>,
    pub cu: BTreeSet<ServerId>,
    pub b: BTreeSet<ServerId>,
    pub b_tilde: BTreeSet<ServerId>,
    pub co_tilde: BTreeSet<ServerId>,
    pub sil: BTreeSet<ServerId>,
}

/// Derive the failure timeline for `n` servers from validated schedules.
///
/// Two agents may never occupy one server simultaneously. A departure that
/// coincides with another agent's arrival on the same server merges into one
/// continuous Byzantine span: the host is never released, so no cured
/// interval opens there.
pub fn derive_timeline(
    schedules: &[AgentSchedule],
    n: usize,
    horizon: Tick,
) -> Result<FailureTimeline, ScheduleError> {
    let global = schedules.iter().map(|s| s.dwell_min).min().unwrap_or(1);
    for s in schedules {
        validate(s, global)?;
    }

    // (start, end, agent) occupancies per server
    let mut raw: Vec<Vec<(Tick, Tick, usize)>> = vec![Vec::new(); n];
    for s in schedules {
        for (i, &(server, start)) in s.visits.iter().enumerate() {
            if server.0 >= n {
                return Err(ScheduleError::ServerOutOfRange { server, n });
            }
            if start >= horizon {
                continue;
            }
            let end = s
                .visits
                .get(i + 1)
                .map(|&(_, t)| t)
                .unwrap_or(horizon)
                .min(horizon);
            raw[server.0].push((start, end, s.agent));
        }
    }

    let mut byz = vec![Vec::new(); n];
    let mut cured = vec![Vec::new(); n];
    for (sid, spans) in raw.iter_mut().enumerate() {
        spans.sort();
        let mut merged: Vec<ByzSpan> = Vec::new();
        for &(start, end, agent) in spans.iter() {
            if let Some(last) = merged.last_mut() {
                if start < last.end {
                    let prev_agent = spans
                        .iter()
                        .find(|&&(s, e, a)| s < start && e > start && a != agent)
                        .map(|&(_, _, a)| a)
                        .unwrap_or(agent);
                    return Err(ScheduleError::Stacked {
                        a: prev_agent,
                        b: agent,
                        server: ServerId(sid),
                        at: start,
                    });
                }
                if start == last.end {
                    last.end = end;
                    continue;
                }
            }
            merged.push(ByzSpan { start, end });
        }
        for span in &merged {
            if span.end < horizon {
                cured[sid].push(CuredSpan {
                    server: ServerId(sid),
                    start: span.end,
                    end: CuredEnd::Pending,
                });
            }
        }
        byz[sid] = merged;
    }

    Ok(FailureTimeline {
        n,
        horizon,
        byz,
        cured,
    })
}

impl FailureTimeline {
    pub fn byz_at(&self, server: ServerId, t: Tick) -> bool {
        self.byz[server.0]
            .iter()
            .any(|s| s.start <= t && t < s.end)
    }

    pub fn byz_spans(&self, server: ServerId) -> &[ByzSpan] {
        &self.byz[server.0]
    }

    pub fn cured_spans(&self) -> impl Iterator<Item = &CuredSpan> {
        self.cured.iter().flatten()
    }

    pub fn label_at(&self, server: ServerId, t: Tick) -> Label {
        if self.byz_at(server, t) {
            Label::Byzantine
        } else if self.cured[server.0]
            .iter()
            .any(|c| c.contains(t, self.horizon))
        {
            Label::Cured
        } else {
            Label::Correct
        }
    }

    /// Close the earliest still-pending cured span of `server`.
    pub fn close_cured(&mut self, server: ServerId, end: CuredEnd) {
        if let Some(span) = self.cured[server.0]
            .iter_mut()
            .find(|c| c.end == CuredEnd::Pending)
        {
            span.end = end;
        }
    }

    /// Resolve every pending cured interval to `gamma` ticks (capped by the
    /// next infection), the uniform assumption the lower-bound analysis uses.
    pub fn with_uniform_curing(&self, gamma: Dur) -> FailureTimeline {
        let mut out = self.clone();
        for (sid, spans) in out.cured.iter_mut().enumerate() {
            for span in spans.iter_mut() {
                if span.end != CuredEnd::Pending {
                    continue;
                }
                let natural = span.start + gamma;
                let reinfected = self.byz[sid]
                    .iter()
                    .map(|b| b.start)
                    .find(|&s| s >= span.start && s < natural);
                span.end = match reinfected {
                    Some(t) => CuredEnd::Reinfected(t),
                    None => CuredEnd::Recovered(natural),
                };
            }
        }
        out
    }

    /// Servers Byzantine for at least one tick during `[t1, t2]`.
    pub fn b_tilde(&self, t1: Tick, t2: Tick) -> BTreeSet<ServerId> {
        (0..self.n)
            .map(ServerId)
            .filter(|s| {
                self.byz[s.0]
                    .iter()
                    .any(|span| span.start <= t2 && span.end > t1)
            })
            .collect()
    }

    /// Number of distinct occupancy periods intersecting `[t1, t2]`.
    pub fn byz_periods(&self, t1: Tick, t2: Tick) -> usize {
        self.byz
            .iter()
            .flatten()
            .filter(|span| span.start <= t2 && span.end > t1)
            .count()
    }

    /// Point sets at `t1` plus the interval sets over `[t1, t2]`.
    pub fn failure_sets(&self, t1: Tick, t2: Tick, delta: Dur) -> FailureSets {
        let all: Vec<ServerId> = (0..self.n).map(ServerId).collect();
        let mut sets = FailureSets {
            co: BTreeSet::new(),
            cu: BTreeSet::new(),
            b: BTreeSet::new(),
            b_tilde: self.b_tilde(t1, t2),
            co_tilde: BTreeSet::new(),
            sil: BTreeSet::new(),
        };
        for &s in &all {
            match self.label_at(s, t1) {
                Label::Correct => {
                    sets.co.insert(s);
                }
                Label::Cured => {
                    sets.cu.insert(s);
                }
                Label::Byzantine => {
                    sets.b.insert(s);
                }
            }
        }
        let sil_end = t2.saturating_sub(delta);
        for &s in &all {
            let mut correct_once = false;
            let mut cured_throughout = true;
            let mut t = t1;
            loop {
                match self.label_at(s, t) {
                    Label::Correct => correct_once = true,
                    _ => {}
                }
                if t <= sil_end && self.label_at(s, t) != Label::Cured {
                    cured_throughout = false;
                }
                if t == t2 {
                    break;
                }
                t = t + 1;
            }
            if correct_once {
                sets.co_tilde.insert(s);
            }
            if cured_throughout && t1 <= sil_end {
                sets.sil.insert(s);
            }
        }
        sets
    }
}

/// The cured-state oracle: only the aware model exposes it.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("the cured-state oracle is unavailable under the cured-unaware model")]
pub struct CuredOracleUnavailable;

pub fn cured_oracle(
    timeline: &FailureTimeline,
    model: Model,
    server: ServerId,
    t: Tick,
) -> Result<bool, CuredOracleUnavailable> {
    match model {
        Model::Cum => Err(CuredOracleUnavailable),
        Model::Cam => Ok(timeline.label_at(server, t) == Label::Cured),
    }
}

/// The worst-case scenario: `f` agents sweep server groups in lockstep every
/// `dwell` ticks, never returning to a server before all others are hit.
pub fn generate_sstar(n: usize, f: usize, dwell: Dur, horizon: Tick) -> Vec<AgentSchedule> {
    assert!(n >= f && f >= 1, "need n >= f >= 1");
    assert!(dwell >= 1);
    let moves = (horizon.0 + dwell - 1) / dwell;
    (0..f)
        .map(|agent| AgentSchedule {
            agent,
            dwell_min: dwell,
            visits: (0..moves)
                .map(|i| {
                    let server = ServerId(((i as usize) * f + agent) % n);
                    (server, Tick(i * dwell))
                })
                .collect(),
        })
        .collect()
}

/// Seeded random ITB schedules: each agent dwells its minimum plus a
/// geometric tail, then moves to a uniformly chosen server that is free for
/// the whole stay. Agents are laid out one after another, so occupancies
/// never overlap.
pub fn generate_random_itb(
    n: usize,
    dwells: &[Dur],
    horizon: Tick,
    rng: &mut impl Rng,
) -> Result<Vec<AgentSchedule>, ScheduleError> {
    let mut taken: Vec<(ServerId, Tick, Tick)> = Vec::new();
    let mut out = Vec::new();
    for (agent, &dwell_min) in dwells.iter().enumerate() {
        let mut visits = Vec::new();
        let mut t = Tick::ZERO;
        let mut current: Option<ServerId> = None;
        while t < horizon {
            let mut dwell = dwell_min;
            let step = (dwell_min / 2).max(1);
            while rng.gen_ratio(1, 2) {
                dwell += step;
            }
            let end = (t + dwell).min(horizon);
            let candidates: Vec<ServerId> = (0..n)
                .map(ServerId)
                .filter(|&s| Some(s) != current)
                .filter(|&s| {
                    !taken
                        .iter()
                        .any(|&(ts, a, b)| ts == s && a < end && b > t)
                })
                .collect();
            if candidates.is_empty() {
                return Err(ScheduleError::NoFreeServer { agent, at: t });
            }
            let server = candidates[rng.gen_range(0..candidates.len())];
            taken.push((server, t, end));
            visits.push((server, t));
            current = Some(server);
            t = end;
        }
        out.push(AgentSchedule {
            agent,
            dwell_min,
            visits,
        });
    }
    Ok(out)
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {reason}")]
pub struct ScheduleParseError {
    pub line: usize,
    pub reason: String,
}

/// Render schedules in the replayable line format:
/// `agent <id> dwell <min> : (<server>,<tick>) ...`
pub fn schedules_to_text(schedules: &[AgentSchedule]) -> String {
    let mut out = String::new();
    for s in schedules {
        out.push_str(&format!("agent {} dwell {} :", s.agent, s.dwell_min));
        for (server, t) in &s.visits {
            out.push_str(&format!(" ({},{})", server.0, t.0));
        }
        out.push('\n');
    }
    out
}

pub fn schedules_from_text(text: &str) -> Result<Vec<AgentSchedule>, ScheduleParseError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: &str| ScheduleParseError {
            line: idx + 1,
            reason: reason.to_string(),
        };
        let (head, visits) = line
            .split_once(':')
            .ok_or_else(|| err("missing `:` separator"))?;
        let mut words = head.split_whitespace();
        if words.next() != Some("agent") {
            return Err(err("expected `agent <id> dwell <min> :`"));
        }
        let agent = words
            .next()
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| err("bad agent id"))?;
        if words.next() != Some("dwell") {
            return Err(err("expected `dwell` keyword"));
        }
        let dwell_min = words
            .next()
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| err("bad dwell"))?;
        let mut parsed = Vec::new();
        for tok in visits.split_whitespace() {
            let inner = tok
                .strip_prefix('(')
                .and_then(|t| t.strip_suffix(')'))
                .ok_or_else(|| err("visit must look like (server,tick)"))?;
            let (s, t) = inner
                .split_once(',')
                .ok_or_else(|| err("visit must look like (server,tick)"))?;
            let server = s.parse().map_err(|_| err("bad server id"))?;
            let tick = t.parse().map_err(|_| err("bad tick"))?;
            parsed.push((ServerId(server), Tick(tick)));
        }
        out.push(AgentSchedule {
            agent,
            dwell_min,
            visits: parsed,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sched(agent: usize, dwell: Dur, visits: &[(usize, u64)]) -> AgentSchedule {
        AgentSchedule {
            agent,
            dwell_min: dwell,
            visits: visits
                .iter()
                .map(|&(s, t)| (ServerId(s), Tick(t)))
                .collect(),
        }
    }

    #[test]
    fn validate_accepts_gap_equal_to_dwell() {
        assert_eq!(validate(&sched(0, 20, &[(0, 0), (1, 20)]), 20), Ok(()));
    }

    #[test]
    fn validate_rejects_gap_below_dwell() {
        let err = validate(&sched(0, 20, &[(0, 0), (1, 19)]), 20).unwrap_err();
        assert!(matches!(err, MovementViolation::GapTooShort { index: 1, .. }));
    }

    #[test]
    fn derive_maps_visits_to_spans_and_opens_cured_intervals() {
        let tl = derive_timeline(&[sched(0, 30, &[(0, 0), (1, 30)])], 2, Tick(60)).unwrap();
        assert_eq!(tl.byz_spans(ServerId(0)), &[ByzSpan { start: Tick(0), end: Tick(30) }]);
        assert_eq!(tl.byz_spans(ServerId(1)), &[ByzSpan { start: Tick(30), end: Tick(60) }]);
        let cured: Vec<_> = tl.cured_spans().collect();
        assert_eq!(cured.len(), 1);
        assert_eq!(cured[0].server, ServerId(0));
        assert_eq!(cured[0].start, Tick(30));
        assert_eq!(cured[0].end, CuredEnd::Pending);
    }

    #[test]
    fn sstar_f1_n4_cycles_all_servers() {
        let schedules = generate_sstar(4, 1, 10, Tick(60));
        let tl = derive_timeline(&schedules, 4, Tick(60)).unwrap();
        assert_eq!(tl.byz_spans(ServerId(0)), &[
            ByzSpan { start: Tick(0), end: Tick(10) },
            ByzSpan { start: Tick(40), end: Tick(50) },
        ]);
        assert_eq!(tl.byz_spans(ServerId(1)), &[
            ByzSpan { start: Tick(10), end: Tick(20) },
            ByzSpan { start: Tick(50), end: Tick(60) },
        ]);
        assert_eq!(tl.byz_spans(ServerId(2)), &[ByzSpan { start: Tick(20), end: Tick(30) }]);
        assert_eq!(tl.byz_spans(ServerId(3)), &[ByzSpan { start: Tick(30), end: Tick(40) }]);
    }

    #[test]
    fn sstar_f2_moves_in_disjoint_groups() {
        let schedules = generate_sstar(8, 2, 10, Tick(50));
        assert_eq!(
            schedules[0].visits[..4],
            [(ServerId(0), Tick(0)), (ServerId(2), Tick(10)), (ServerId(4), Tick(20)), (ServerId(6), Tick(30))]
        );
        assert_eq!(
            schedules[1].visits[..4],
            [(ServerId(1), Tick(0)), (ServerId(3), Tick(10)), (ServerId(5), Tick(20)), (ServerId(7), Tick(30))]
        );
        // fifth group wraps to the first pair
        assert_eq!(schedules[0].visits[4], (ServerId(0), Tick(40)));
        for s in &schedules {
            assert_eq!(validate(s, 10), Ok(()));
        }
    }

    #[test]
    fn stacked_agents_are_rejected() {
        let schedules = vec![
            sched(0, 20, &[(0, 0), (1, 20)]),
            sched(1, 20, &[(0, 10), (2, 30)]),
        ];
        let err = derive_timeline(&schedules, 3, Tick(40)).unwrap_err();
        assert!(matches!(err, ScheduleError::Stacked { server: ServerId(0), .. }));
    }

    #[test]
    fn at_most_f_byzantine_servers_at_every_tick() {
        for f in [1usize, 2] {
            let n = 4 * f + 1;
            let schedules = generate_sstar(n, f, 10, Tick(200));
            let tl = derive_timeline(&schedules, n, Tick(200)).unwrap();
            for t in 0..200 {
                let count = (0..n)
                    .filter(|&s| tl.byz_at(ServerId(s), Tick(t)))
                    .count();
                assert!(count <= f, "tick {t}: {count} > f = {f}");
            }
        }
    }

    #[test]
    fn failure_sets_window_example() {
        let schedules = generate_sstar(4, 1, 10, Tick(60));
        let tl = derive_timeline(&schedules, 4, Tick(60)).unwrap();
        let sets = tl.failure_sets(Tick(9), Tick(19), 5);
        assert_eq!(
            sets.b_tilde,
            [ServerId(0), ServerId(1)].into_iter().collect()
        );
        assert_eq!(sets.b_tilde.len() as u64, bounds::max_b(10, 10, 1));
        assert!(sets.co.is_disjoint(&sets.b));
        assert!(sets.co.intersection(&sets.b_tilde).all(|s| !tl.byz_at(*s, Tick(9))));
    }

    #[test]
    fn window_inside_one_dwell_sees_f_byzantine() {
        let schedules = generate_sstar(9, 2, 30, Tick(300));
        let tl = derive_timeline(&schedules, 9, Tick(300)).unwrap();
        let sets = tl.failure_sets(Tick(31), Tick(40), 2);
        assert_eq!(sets.b_tilde.len(), 2);
    }

    #[test]
    fn sstar_reaches_the_byzantine_envelope_at_some_offset() {
        let (dwell, t_r) = (10u64, 20u64);
        let schedules = generate_sstar(5, 1, dwell, Tick(300));
        let tl = derive_timeline(&schedules, 5, Tick(300)).unwrap();
        let target = bounds::max_b(t_r, dwell, 1) as usize;
        let hit = (50..200).any(|t| tl.b_tilde(Tick(t), Tick(t + t_r)).len() == target);
        assert!(hit);
    }

    #[test]
    fn uniform_curing_caps_at_reinfection() {
        let schedules = generate_sstar(2, 1, 10, Tick(60));
        let tl = derive_timeline(&schedules, 2, Tick(60)).unwrap();
        let resolved = tl.with_uniform_curing(25);
        // server 0 departs at 10 and is reoccupied at 20, before 10 + 25
        let span = resolved
            .cured_spans()
            .find(|c| c.server == ServerId(0) && c.start == Tick(10))
            .unwrap();
        assert_eq!(span.end, CuredEnd::Reinfected(Tick(20)));
    }

    #[test]
    fn cured_oracle_follows_the_timeline_and_rejects_cum() {
        let schedules = generate_sstar(4, 1, 10, Tick(60));
        let mut tl = derive_timeline(&schedules, 4, Tick(60)).unwrap();
        // as if maintenance ended 20 ticks after the departure at tick 10
        tl.close_cured(ServerId(0), CuredEnd::Recovered(Tick(30)));
        assert_eq!(cured_oracle(&tl, Model::Cam, ServerId(0), Tick(10)), Ok(true));
        assert_eq!(cured_oracle(&tl, Model::Cam, ServerId(0), Tick(29)), Ok(true));
        assert_eq!(cured_oracle(&tl, Model::Cam, ServerId(0), Tick(30)), Ok(false));
        // while Byzantine the oracle reports false
        assert_eq!(cured_oracle(&tl, Model::Cam, ServerId(0), Tick(5)), Ok(false));
        // a never-infected server is never cured
        assert_eq!(cured_oracle(&tl, Model::Cam, ServerId(3), Tick(5)), Ok(false));
        assert_eq!(
            cured_oracle(&tl, Model::Cum, ServerId(0), Tick(10)),
            Err(CuredOracleUnavailable)
        );
    }

    #[test]
    fn random_itb_schedules_validate_and_derive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let schedules = generate_random_itb(7, &[10, 12], Tick(500), &mut rng).unwrap();
            for s in &schedules {
                assert_eq!(validate(s, 10), Ok(()));
            }
            derive_timeline(&schedules, 7, Tick(500)).unwrap();
        }
    }

    #[test]
    fn text_format_round_trips() {
        let schedules = generate_sstar(5, 2, 12, Tick(100));
        let text = schedules_to_text(&schedules);
        assert!(text.starts_with("agent 0 dwell 12 : (0,0)"));
        assert_eq!(schedules_from_text(&text).unwrap(), schedules);
    }

    proptest! {
        /// Over random valid schedules and windows, the number of servers
        /// Byzantine during a read never exceeds the closed-form envelope.
        #[test]
        fn b_tilde_never_exceeds_the_envelope(seed in 0u64..500, t in 0u64..400, t_r in 4u64..40) {
            let dwell = 10u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = 1 + (seed % 2) as usize;
            let dwells = vec![dwell + seed % 5; f];
            let schedules = generate_random_itb(9, &dwells, Tick(500), &mut rng).unwrap();
            let tl = derive_timeline(&schedules, 9, Tick(500)).unwrap();
            let observed = tl.b_tilde(Tick(t), Tick(t + t_r)).len() as u64;
            prop_assert!(observed <= bounds::max_b(t_r, dwell, f as u64));
        }
    }
}
