//! Independent brute-force verification of the closed-form bounds, plus the
//! construction and simulation of the indistinguishability attack at the
//! replica lower bound.
//!
//! Nothing here reuses the formula implementations: counts are taken by
//! scanning concrete failure timelines tick by tick, so agreement with
//! [`crate::bounds`] is a genuine cross-check.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{self, BoundsInput, Model, ReplyCounts};
use crate::clients::ReaderState;
use crate::mobility::{self, AgentSchedule, FailureTimeline, Label};
use crate::msg::{ClientId, ServerId, ValueEntry};
use crate::sim::{EventClass, Sim, Tick};

/// A small discretized scenario space: one agent (or none), a handful of
/// servers, unit time step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumGrid {
    pub n: usize,
    /// 0 or 1; larger agent counts rely on the per-agent scaling.
    pub f: usize,
    pub delta: u64,
    pub big_delta: u64,
    pub gamma: u64,
    pub t_r: u64,
    pub horizon: Tick,
}

impl EnumGrid {
    /// Standard desk-scale instantiation: eight servers, one agent, horizon
    /// wide enough for a fully warmed periodic pattern.
    pub fn standard(delta: u64, big_delta: u64, gamma: u64, t_r: u64) -> Self {
        let n = 8;
        let horizon = gamma + 4 * (n as u64) * big_delta + 2 * t_r + 4 * delta;
        EnumGrid {
            n,
            f: 1,
            delta,
            big_delta,
            gamma,
            t_r,
            horizon: Tick(horizon),
        }
    }

    fn work_estimate(&self) -> u64 {
        self.horizon.0 * self.n as u64 * (self.t_r + 1) * 64
    }

    fn bounds_input(&self, model: Model) -> BoundsInput {
        BoundsInput {
            model,
            delta: self.delta,
            big_delta: self.big_delta,
            gamma: self.gamma,
            t_r: self.t_r,
            f: self.f.max(1) as u64,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnumError {
    #[error("enumeration would take roughly {estimate} steps, over the 10^7 guard")]
    TooLarge { estimate: u64 },
    #[error("grid supports at most one agent, got {f}")]
    TooManyAgents { f: usize },
    #[error("schedule generation failed: {0}")]
    Schedule(#[from] mobility::ScheduleError),
}

const WORK_GUARD: u64 = 10_000_000;

/// Exhaustive maximum of the Byzantine-for-a-tick server count over a read
/// window: all window offsets, across minimum-dwell schedules and a family of
/// dwell jitters (which can only lose occupancies, and the scan shows it).
pub fn enumerate_max_b(grid: &EnumGrid) -> Result<u64, EnumError> {
    if grid.f == 0 {
        return Ok(0);
    }
    if grid.f > 1 {
        return Err(EnumError::TooManyAgents { f: grid.f });
    }
    if grid.work_estimate() > WORK_GUARD {
        return Err(EnumError::TooLarge {
            estimate: grid.work_estimate(),
        });
    }
    let jitter_moves = 6usize;
    let mut best = 0u64;
    for mask in 0u32..(1 << jitter_moves) {
        let schedule = jittered_schedule(grid, mask, jitter_moves);
        let tl = mobility::derive_timeline(&[schedule], grid.n, grid.horizon)?;
        let last_start = grid.horizon.0.saturating_sub(grid.t_r);
        for t in 0..=last_start {
            let count = tl.b_tilde(Tick(t), Tick(t + grid.t_r)).len() as u64;
            best = best.max(count);
        }
    }
    Ok(best)
}

fn jittered_schedule(grid: &EnumGrid, mask: u32, jitter_moves: usize) -> AgentSchedule {
    let mut visits = Vec::new();
    let mut at = Tick::ZERO;
    let mut i = 0usize;
    while at < grid.horizon {
        visits.push((ServerId(i % grid.n), at));
        let mut dwell = grid.big_delta;
        if i < jitter_moves && mask & (1 << i) != 0 {
            dwell += 1;
        }
        at = at + dwell;
        i += 1;
    }
    AgentSchedule {
        agent: 0,
        dwell_min: grid.big_delta,
        visits,
    }
}

/// One scripted reply delivery within a read window, derived from a server's
/// failure trajectory under the worst-case message timing: replies from
/// non-correct servers travel one tick, correct traffic takes `delta` each
/// way, and a cured-aware server stays silent while cured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedReply {
    pub server: ServerId,
    pub deliver_at: Tick,
    pub correct: bool,
}

struct WindowPlan {
    incorrect: Vec<PlannedReply>,
    correct: Vec<PlannedReply>,
}

/// Classify every server over `[t, t + t_r]` into reply messages the reader
/// actually receives in time. A server contributes one incorrect message per
/// occupancy period (plus one for a cured start under the unaware model), a
/// correct message when it is correct at request arrival, and a further
/// correct message for every rebuild completed early enough to answer.
fn classify_window(tl: &FailureTimeline, t: Tick, grid: &EnumGrid, model: Model) -> WindowPlan {
    let end = t + grid.t_r;
    let mut plan = WindowPlan {
        incorrect: Vec::new(),
        correct: Vec::new(),
    };
    let request_at = t + grid.delta;
    let reply_by = end.saturating_sub(grid.delta);
    for s in (0..tl.n).map(ServerId) {
        // one incorrect reply per occupancy period, delivered instantly
        for span in tl.byz_spans(s) {
            if span.start <= end && span.end > t {
                let deliver_at = span.start.max(t) + 1;
                if deliver_at <= end {
                    plan.incorrect.push(PlannedReply {
                        server: s,
                        deliver_at,
                        correct: false,
                    });
                }
            }
        }
        // a cured-unaware server answers the request with whatever the
        // adversary left behind
        if model == Model::Cum && tl.label_at(s, t) == Label::Cured {
            plan.incorrect.push(PlannedReply {
                server: s,
                deliver_at: t + 2,
                correct: false,
            });
        }
        if tl.label_at(s, request_at) == Label::Correct {
            plan.correct.push(PlannedReply {
                server: s,
                deliver_at: request_at + grid.delta,
                correct: true,
            });
        }
    }
    // one more correct reply per rebuild completing while the read can still
    // use it
    for span in tl.cured_spans() {
        if let mobility::CuredEnd::Recovered(done) = span.end {
            if done > request_at && done <= reply_by {
                plan.correct.push(PlannedReply {
                    server: span.server,
                    deliver_at: done + grid.delta,
                    correct: true,
                });
            }
        }
    }
    plan
}

fn sstar_timeline(grid: &EnumGrid) -> Result<FailureTimeline, EnumError> {
    let schedules = mobility::generate_sstar(grid.n, grid.f, grid.big_delta, grid.horizon);
    let tl = mobility::derive_timeline(&schedules, grid.n, grid.horizon)?;
    Ok(tl.with_uniform_curing(grid.gamma))
}

/// The same grid on the half-tick lattice, where the one-sided epsilon limits
/// of the closed forms become exact: every scheduled instant is even, and the
/// odd instants next to it play the role of `t ± eps`.
fn doubled(grid: &EnumGrid) -> EnumGrid {
    EnumGrid {
        n: grid.n,
        f: grid.f,
        delta: 2 * grid.delta,
        big_delta: 2 * grid.big_delta,
        gamma: 2 * grid.gamma,
        t_r: 2 * grid.t_r,
        horizon: Tick(2 * grid.horizon.0),
    }
}

/// Count delivered messages within one canonical worst-case window on the
/// half-tick timeline: incorrect per occupancy period and per cured start
/// (unaware model), correct at request arrival plus one per rebuild finishing
/// in time.
fn count_canonical(tl: &FailureTimeline, t: Tick, grid2: &EnumGrid, model: Model) -> (u64, i64) {
    let end = t + grid2.t_r;
    let request_at = t + grid2.delta;
    let reply_by = end.saturating_sub(grid2.delta);
    let mut incorrect = tl.byz_periods(t, end) as u64;
    let mut correct = 0i64;
    for s in (0..tl.n).map(ServerId) {
        if model == Model::Cum && tl.label_at(s, t) == Label::Cured {
            incorrect += 1;
        }
        if tl.label_at(s, request_at) == Label::Correct {
            correct += 1;
        }
    }
    for span in tl.cured_spans() {
        if let mobility::CuredEnd::Recovered(done) = span.end {
            if done > request_at && done <= reply_by {
                correct += 1;
            }
        }
    }
    (incorrect, correct)
}

/// Worst-case incorrect and correct reply counts under the constructed
/// cyclic scenario, counted directly on the half-tick timeline at the
/// scenario's own window alignments: a read starting just before a departure
/// (aware model) or ending just after an arrival (unaware model).
pub fn enumerate_reply_sets(grid: &EnumGrid, model: Model) -> Result<ReplyCounts, EnumError> {
    if grid.f == 0 {
        return Ok(ReplyCounts {
            max_incorrect: 0,
            min_correct: grid.n as i64,
        });
    }
    if grid.f > 1 {
        return Err(EnumError::TooManyAgents { f: grid.f });
    }
    if grid.work_estimate() > WORK_GUARD {
        return Err(EnumError::TooLarge {
            estimate: grid.work_estimate(),
        });
    }
    let grid2 = doubled(grid);
    let tl = sstar_timeline(&grid2)?;
    let warm_lo = grid2.gamma + 2 * grid2.n as u64 * grid2.big_delta;
    let warm_hi = warm_lo + grid2.n as u64 * grid2.big_delta;
    let mut max_incorrect = 0u64;
    let mut min_correct = i64::MAX;
    let mut windows = 0usize;
    for s in (0..grid2.n).map(ServerId) {
        for span in tl.byz_spans(s) {
            let anchors = match model {
                // window opens one half-tick before the departure
                Model::Cam => span.end.0.checked_sub(1),
                // window closes one half-tick after the arrival
                Model::Cum => (span.start.0 + 1).checked_sub(grid2.t_r),
            };
            let Some(t) = anchors else { continue };
            if t < warm_lo || t > warm_hi {
                continue;
            }
            let (incorrect, correct) = count_canonical(&tl, Tick(t), &grid2, model);
            max_incorrect = max_incorrect.max(incorrect);
            min_correct = min_correct.min(correct);
            windows += 1;
        }
    }
    debug_assert!(windows > 0, "warm region contained no canonical window");
    Ok(ReplyCounts {
        max_incorrect,
        min_correct,
    })
}

/// A constructed pair of executions delivering identical reply multisets to
/// one reader while the register holds different values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackPlan {
    pub model: Model,
    pub n: usize,
    pub input: BoundsInput,
    pub schedules: Vec<AgentSchedule>,
    pub window_start: Tick,
    pub window_end: Tick,
    /// Register content per execution; the other execution's pair is what
    /// Byzantine and contaminated servers answer with.
    pub register_e0: ValueEntry,
    pub register_e1: ValueEntry,
    /// Scripted reply deliveries; `correct` picks the register pair, the
    /// rest carry the opposite execution's pair.
    pub replies: Vec<PlannedReply>,
    /// Replies per side after equalization.
    pub replies_per_side: usize,
}

/// Outcome of replaying both executions of a plan through the event engine.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub multiset_e0: BTreeMap<ValueEntry, usize>,
    pub multiset_e1: BTreeMap<ValueEntry, usize>,
    pub identical: bool,
    pub registers_differ: bool,
}

/// Why no attack exists at this replica count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackInfeasible {
    pub n: usize,
    /// Correct replies strictly exceed incorrect ones at every window offset
    /// by at least this margin.
    pub margin: i64,
}

pub fn build_attack(
    n: usize,
    input: &BoundsInput,
) -> Result<Result<AttackPlan, AttackInfeasible>, EnumError> {
    let f = input.f as usize;
    let horizon =
        Tick(input.gamma + 4 * n as u64 * input.big_delta + 2 * input.t_r + 4 * input.delta);
    let grid = EnumGrid {
        n,
        f,
        delta: input.delta,
        big_delta: input.big_delta,
        gamma: input.gamma,
        t_r: input.t_r,
        horizon,
    };
    if grid.work_estimate() > WORK_GUARD {
        return Err(EnumError::TooLarge {
            estimate: grid.work_estimate(),
        });
    }
    let tl = sstar_timeline(&grid)?;
    let lo = grid.gamma + 2 * grid.n as u64 * grid.big_delta;
    let hi = lo + grid.n as u64 * grid.big_delta;

    // the offset where incorrect replies cover correct ones best
    let mut best: Option<(i64, Tick, WindowPlan)> = None;
    for t in lo..=hi {
        let plan = classify_window(&tl, Tick(t), &grid, input.model);
        let diff = plan.incorrect.len() as i64 - plan.correct.len() as i64;
        if best.as_ref().map_or(true, |(d, _, _)| diff > *d) {
            best = Some((diff, Tick(t), plan));
        }
    }
    let (diff, start, mut plan) = best.expect("scan region is never empty");
    if diff < 0 {
        return Ok(Err(AttackInfeasible { n, margin: -diff }));
    }

    // silence excess Byzantine replies so both value counts coincide
    plan.incorrect.sort_by_key(|r| (r.deliver_at, r.server));
    plan.incorrect.truncate(plan.correct.len());
    let mut replies = plan.correct.clone();
    replies.extend(plan.incorrect.iter().copied());
    replies.sort_by_key(|r| (r.deliver_at, r.server, r.correct));

    Ok(Ok(AttackPlan {
        model: input.model,
        n,
        input: *input,
        schedules: mobility::generate_sstar(n, f, input.big_delta, horizon),
        window_start: start,
        window_end: start + input.t_r,
        register_e0: ValueEntry::new(0, 1),
        register_e1: ValueEntry::new(1, 1),
        replies_per_side: plan.correct.len(),
        replies,
    }))
}

enum AttackEvent {
    Deliver { server: ServerId, entry: ValueEntry },
    Deadline,
}

/// Replay one execution of the plan through the event engine and collect the
/// reader's multiset of pairs, each distinct `(sender, pair)` once.
fn run_execution(
    plan: &AttackPlan,
    register: ValueEntry,
    wrong: ValueEntry,
) -> BTreeMap<ValueEntry, usize> {
    let mut sim: Sim<AttackEvent> = Sim::new();
    let mut reader = ReaderState::new(ClientId(0));
    let mut votes = crate::proto::Votes::new();
    sim.run_until(plan.window_start, |_, _, _| {});
    reader.begin_read(plan.window_start);
    for r in &plan.replies {
        let entry = if r.correct { register } else { wrong };
        sim.schedule_class(
            r.deliver_at,
            EventClass::Deliver,
            AttackEvent::Deliver {
                server: r.server,
                entry,
            },
        )
        .unwrap();
    }
    sim.schedule(plan.window_end, AttackEvent::Deadline).unwrap();
    let mut collected = BTreeMap::new();
    sim.drain(|_, _, ev| match ev {
        AttackEvent::Deliver { server, entry } => {
            reader.on_reply(server, &[entry]);
            crate::proto::record_vote(&mut votes, server, entry);
        }
        AttackEvent::Deadline => {
            for (entry, senders) in &votes {
                collected.insert(*entry, senders.len());
            }
        }
    });
    collected
}

pub fn simulate_attack(plan: &AttackPlan) -> AttackOutcome {
    let multiset_e0 = run_execution(plan, plan.register_e0, plan.register_e1);
    let multiset_e1 = run_execution(plan, plan.register_e1, plan.register_e0);
    AttackOutcome {
        identical: multiset_e0 == multiset_e1,
        registers_differ: plan.register_e0 != plan.register_e1,
        multiset_e0,
        multiset_e1,
    }
}

/// Occurrence profile of `x` messages delivered round-robin from `n` senders,
/// most frequent first.
pub fn composition_profile(n: usize, x: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n];
    for i in 0..x {
        counts[i % n] += 1;
    }
    counts.sort_unstable_by(|a, b| b.cmp(a));
    counts
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub points: usize,
    pub mismatches: Vec<(usize, usize)>,
}

/// Check that for every `(n, x)` the round-robin profile has exactly
/// `x mod n` senders with `floor(x/n) + 1` occurrences and the rest with
/// `floor(x/n)`.
pub fn sweep_composition_identity(max_n: usize, max_x: usize) -> CompositionReport {
    let mut report = CompositionReport::default();
    for n in 1..=max_n {
        for x in 1..=max_x {
            report.points += 1;
            let profile = composition_profile(n, x);
            let q = x / n;
            let r = x % n;
            let ok = profile.iter().take(r).all(|&c| c == q + 1)
                && profile.iter().skip(r).all(|&c| c == q);
            if !ok {
                report.mismatches.push((n, x));
            }
        }
    }
    report
}

/// One point of the formula/enumeration agreement sweep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub model: Model,
    pub input: BoundsInput,
    pub n: usize,
    pub formula_max_b: u64,
    pub enumerated_max_b: u64,
    pub formula_replies: ReplyCounts,
    pub enumerated_replies: ReplyCounts,
    pub ok: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridReport {
    pub points: Vec<GridPoint>,
    /// Parameter points where the strict-majority margin at `n_lb + 1`
    /// failed for some read duration in `[2*delta, 6*delta]`.
    pub strict_margin_failures: Vec<BoundsInput>,
}

impl GridReport {
    pub fn all_ok(&self) -> bool {
        self.points.iter().all(|p| p.ok) && self.strict_margin_failures.is_empty()
    }

    pub fn mismatches(&self) -> impl Iterator<Item = &GridPoint> {
        self.points.iter().filter(|p| !p.ok)
    }
}

/// The published default grid: small delays, every dwell from the message
/// delay up, read durations from the protocol minimum, both curing bounds.
pub fn default_grid() -> Vec<(Model, EnumGrid)> {
    let mut grid = Vec::new();
    for model in [Model::Cam, Model::Cum] {
        for delta in [2u64, 3] {
            for big_delta in delta..=8 {
                for t_r in (2 * delta)..=12 {
                    for gamma in [2 * delta, 4 * delta] {
                        grid.push((model, EnumGrid::standard(delta, big_delta, gamma, t_r)));
                    }
                }
            }
        }
    }
    grid
}

/// Run the full formula/oracle agreement sweep over the default grid.
pub fn grid_agreement_report() -> Result<GridReport, EnumError> {
    let mut report = GridReport::default();
    for (model, grid) in default_grid() {
        let input = grid.bounds_input(model);
        let formula_max_b = bounds::max_b(input.t_r, input.big_delta, input.f);
        let enumerated_max_b = enumerate_max_b(&grid)?;
        let formula_replies = bounds::reply_counts(&input, grid.n as u64);
        let enumerated_replies = enumerate_reply_sets(&grid, model)?;
        let ok = formula_max_b == enumerated_max_b && formula_replies == enumerated_replies;
        report.points.push(GridPoint {
            model,
            input,
            n: grid.n,
            formula_max_b,
            enumerated_max_b,
            formula_replies,
            enumerated_replies,
            ok,
        });
    }
    for model in [Model::Cam, Model::Cum] {
        for delta in [2u64, 3] {
            let gamma = match model {
                Model::Cam => 2 * delta,
                Model::Cum => 4 * delta,
            };
            for big_delta in delta..3 * delta {
                for t_r in (2 * delta)..=(6 * delta) {
                    let input = BoundsInput {
                        model,
                        delta,
                        big_delta,
                        gamma,
                        t_r,
                        f: 1,
                    };
                    let rc = bounds::reply_counts(&input, bounds::n_lb(&input) + 1);
                    if rc.min_correct <= rc.max_incorrect as i64 {
                        report.strict_margin_failures.push(input);
                    }
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerated_max_b_matches_the_formula_on_spot_points() {
        let grid = EnumGrid {
            n: 5,
            ..EnumGrid::standard(5, 10, 10, 20)
        };
        assert_eq!(enumerate_max_b(&grid).unwrap(), 3);
        assert_eq!(enumerate_max_b(&EnumGrid::standard(5, 20, 10, 20)).unwrap(), 2);
    }

    #[test]
    fn agent_that_never_moves_counts_once() {
        let grid = EnumGrid {
            n: 5,
            f: 1,
            delta: 2,
            big_delta: 1000,
            gamma: 4,
            t_r: 6,
            horizon: Tick(200),
        };
        assert_eq!(enumerate_max_b(&grid).unwrap(), 1);
    }

    #[test]
    fn no_agents_means_no_incorrect_replies() {
        let mut grid = EnumGrid::standard(2, 4, 4, 6);
        grid.f = 0;
        assert_eq!(
            enumerate_reply_sets(&grid, Model::Cam).unwrap(),
            ReplyCounts {
                max_incorrect: 0,
                min_correct: 8
            }
        );
    }

    #[test]
    fn reply_sets_match_formulas_on_the_four_regime_cells() {
        for (model, delta, big_delta, gamma) in [
            (Model::Cam, 2u64, 4u64, 4u64),
            (Model::Cam, 2, 2, 4),
            (Model::Cum, 2, 2, 8),
            (Model::Cum, 2, 4, 8),
        ] {
            let grid = EnumGrid::standard(delta, big_delta, gamma, 2 * delta);
            let input = grid.bounds_input(model);
            let formula = bounds::reply_counts(&input, grid.n as u64);
            let enumerated = enumerate_reply_sets(&grid, model).unwrap();
            assert_eq!(formula, enumerated, "{model:?} d={delta} D={big_delta} g={gamma}");
        }
    }

    #[test]
    fn attack_is_feasible_at_the_bound_and_not_above() {
        let input = BoundsInput {
            model: Model::Cam,
            delta: 10,
            big_delta: 20,
            gamma: 20,
            t_r: 20,
            f: 1,
        };
        let at_bound = build_attack(4, &input).unwrap().unwrap();
        let outcome = simulate_attack(&at_bound);
        assert!(outcome.identical);
        assert!(outcome.registers_differ);
        assert_eq!(at_bound.replies_per_side, 2);

        let above = build_attack(5, &input).unwrap();
        assert!(matches!(above, Err(AttackInfeasible { margin, .. }) if margin >= 1));
    }

    #[test]
    fn composition_examples() {
        assert_eq!(composition_profile(5, 11), vec![3, 2, 2, 2, 2]);
        assert_eq!(composition_profile(5, 5), vec![1, 1, 1, 1, 1]);
        assert_eq!(composition_profile(5, 11).iter().filter(|&&c| c == 3).count(), 1);
        let report = sweep_composition_identity(8, 40);
        assert!(report.mismatches.is_empty());
        assert_eq!(report.points, 8 * 40);
    }
}
