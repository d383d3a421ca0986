//! Run configuration: a flat `key = value` file format plus programmatic
//! construction, shared by the CLI and the test suites.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::Model;
use crate::mobility::{AgentSchedule, ByzStrategy};
use crate::msg::{ClientId, Value};
use crate::sim::{DelayPolicy, Dur, Tick};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleSource {
    /// The cyclic worst-case scenario.
    SStar,
    /// Seeded random movement respecting the dwell minimums.
    RandomItb,
    /// Explicit schedules, e.g. parsed from a replay file.
    Inline(Vec<AgentSchedule>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Write(Value),
    Read,
}

/// One scripted client operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpSpec {
    pub at: Tick,
    pub client: ClientId,
    pub op: OpKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpsSource {
    Script(Vec<OpSpec>),
    Random { reads: usize, writes: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: Model,
    pub n: usize,
    pub f: usize,
    pub delta: Dur,
    pub big_delta: Dur,
    /// Per-agent dwell minimums; empty means `big_delta` for every agent.
    pub dwell: Vec<Dur>,
    pub schedule: ScheduleSource,
    pub strategy: ByzStrategy,
    pub delay: DelayPolicy,
    pub ops: OpsSource,
    /// Number of reader clients; the writer is client 0.
    pub readers: usize,
    pub horizon: Tick,
    pub seed: u64,
    /// Shift applied to every server's maintenance phase (unaware model).
    pub phase_offset: Dur,
    pub record_trace: bool,
}

impl RunConfig {
    pub fn new(model: Model, n: usize, f: usize, delta: Dur, big_delta: Dur) -> Self {
        RunConfig {
            model,
            n,
            f,
            delta,
            big_delta,
            dwell: Vec::new(),
            schedule: ScheduleSource::SStar,
            strategy: ByzStrategy::Silent,
            delay: DelayPolicy::FixedMax,
            ops: OpsSource::Random {
                reads: 50,
                writes: 20,
            },
            readers: 3,
            horizon: Tick(400 * delta),
            seed: 0,
            phase_offset: 0,
            record_trace: false,
        }
    }

    pub fn dwells(&self) -> Vec<Dur> {
        if self.dwell.is_empty() {
            vec![self.big_delta; self.f]
        } else {
            self.dwell.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 || self.f == 0 {
            return Err(ConfigError::Invalid("n and f must be at least 1".into()));
        }
        if self.delta == 0 || self.big_delta == 0 {
            return Err(ConfigError::Invalid("delta and big_delta must be at least 1".into()));
        }
        if self.readers == 0 {
            return Err(ConfigError::Invalid("at least one reader is required".into()));
        }
        let dwells = self.dwells();
        if dwells.len() != self.f {
            return Err(ConfigError::Invalid(format!(
                "{} dwell entries for {} agents",
                dwells.len(),
                self.f
            )));
        }
        if dwells.iter().any(|&d| d < self.big_delta) {
            return Err(ConfigError::Invalid(
                "per-agent dwell below the global minimum".into(),
            ));
        }
        if let OpsSource::Script(script) = &self.ops {
            validate_script(script, self)?;
        }
        Ok(())
    }
}

fn validate_script(script: &[OpSpec], cfg: &RunConfig) -> Result<(), ConfigError> {
    let mut last_write_end: Option<Tick> = None;
    let mut per_client_busy_until = std::collections::BTreeMap::new();
    let mut sorted = script.to_vec();
    sorted.sort_by_key(|s| s.at);
    for op in &sorted {
        let duration = match op.op {
            OpKind::Write(_) => {
                if op.client != ClientId(0) {
                    return Err(ConfigError::Invalid(format!(
                        "write at {} from {}: only client 0 writes",
                        op.at, op.client
                    )));
                }
                if let Some(end) = last_write_end {
                    if op.at < end {
                        return Err(ConfigError::Invalid(format!(
                            "write at {} overlaps the write ending at {}",
                            op.at, end
                        )));
                    }
                }
                last_write_end = Some(op.at + cfg.delta);
                cfg.delta
            }
            OpKind::Read => {
                if op.client == ClientId(0) || op.client.0 > cfg.readers {
                    return Err(ConfigError::Invalid(format!(
                        "read at {} from {}: readers are clients 1..={}",
                        op.at, op.client, cfg.readers
                    )));
                }
                2 * cfg.delta
            }
        };
        if let Some(&busy) = per_client_busy_until.get(&op.client) {
            if op.at < busy {
                return Err(ConfigError::Invalid(format!(
                    "{} invokes at {} while busy until {}",
                    op.client, op.at, busy
                )));
            }
        }
        per_client_busy_until.insert(op.client, op.at + duration);
        if op.at + duration > cfg.horizon {
            return Err(ConfigError::Invalid(format!(
                "operation at {} does not complete by the horizon {}",
                op.at, cfg.horizon
            )));
        }
        if op.at == Tick::ZERO {
            return Err(ConfigError::Invalid("operations must invoke after tick 0".into()));
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
}

/// Parse the flat config format: one `key = value` per line, `#` comments.
/// Repeated `op` keys build an explicit script.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::new(Model::Cam, 5, 1, 10, 20);
    let mut script: Vec<OpSpec> = Vec::new();
    let mut random_ops: Option<(usize, usize)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| ConfigError::Parse {
            line: idx + 1,
            reason,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected key = value".into()))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "op" => script.push(parse_op(value).map_err(err)?),
            "reads" => {
                let reads = value.parse().map_err(|_| err("bad reads count".into()))?;
                let writes = random_ops.map(|(_, w)| w).unwrap_or(20);
                random_ops = Some((reads, writes));
            }
            "writes" => {
                let writes = value.parse().map_err(|_| err("bad writes count".into()))?;
                let reads = random_ops.map(|(r, _)| r).unwrap_or(50);
                random_ops = Some((reads, writes));
            }
            _ => apply_kv(&mut cfg, key, value).map_err(err)?,
        }
    }
    if !script.is_empty() {
        cfg.ops = OpsSource::Script(script);
    } else if let Some((reads, writes)) = random_ops {
        cfg.ops = OpsSource::Random { reads, writes };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_op(value: &str) -> Result<OpSpec, String> {
    // "<tick> c<id> read" or "<tick> c<id> write <value>"
    let words: Vec<&str> = value.split_whitespace().collect();
    if words.len() < 3 {
        return Err("op must be `<tick> c<id> read|write [value]`".into());
    }
    let at = Tick(words[0].parse().map_err(|_| "bad tick".to_string())?);
    let client = words[1]
        .strip_prefix('c')
        .and_then(|s| s.parse().ok())
        .map(ClientId)
        .ok_or_else(|| "client must look like c0".to_string())?;
    let op = match words[2] {
        "read" => OpKind::Read,
        "write" => {
            let v = words
                .get(3)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| "write needs a value".to_string())?;
            OpKind::Write(v)
        }
        other => return Err(format!("unknown op `{other}`")),
    };
    Ok(OpSpec { at, client, op })
}

/// Apply one `key = value` setting; flag overrides reuse this.
pub fn apply_kv(cfg: &mut RunConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "model" => cfg.model = value.parse()?,
        "n" => cfg.n = value.parse().map_err(|_| "bad n".to_string())?,
        "f" => cfg.f = value.parse().map_err(|_| "bad f".to_string())?,
        "delta" => cfg.delta = value.parse().map_err(|_| "bad delta".to_string())?,
        "big_delta" => cfg.big_delta = value.parse().map_err(|_| "bad big_delta".to_string())?,
        "dwell" => {
            cfg.dwell = value
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| "bad dwell".to_string()))
                .collect::<Result<_, _>>()?;
        }
        "schedule" => {
            cfg.schedule = match value {
                "sstar" => ScheduleSource::SStar,
                "random" => ScheduleSource::RandomItb,
                other => return Err(format!("unknown schedule `{other}` (file schedules are inlined by the CLI)")),
            }
        }
        "strategy" => cfg.strategy = parse_strategy(value)?,
        "delay" => {
            cfg.delay = match value {
                "fixed_max" => DelayPolicy::FixedMax,
                "uniform" => DelayPolicy::SeededUniform,
                "adversarial" => DelayPolicy::Adversarial,
                other => return Err(format!("unknown delay policy `{other}`")),
            }
        }
        "readers" => cfg.readers = value.parse().map_err(|_| "bad readers".to_string())?,
        "horizon" => cfg.horizon = Tick(value.parse().map_err(|_| "bad horizon".to_string())?),
        "seed" => cfg.seed = value.parse().map_err(|_| "bad seed".to_string())?,
        "phase_offset" => {
            cfg.phase_offset = value.parse().map_err(|_| "bad phase_offset".to_string())?
        }
        "trace" => cfg.record_trace = value.parse().map_err(|_| "bad trace flag".to_string())?,
        other => return Err(format!("unknown key `{other}`")),
    }
    Ok(())
}

pub fn parse_strategy(value: &str) -> Result<ByzStrategy, String> {
    if value == "silent" {
        return Ok(ByzStrategy::Silent);
    }
    if value == "garbage" {
        return Ok(ByzStrategy::RandomGarbage { seed: 0 });
    }
    if let Some(rest) = value.strip_prefix("garbage:") {
        let seed = rest.parse().map_err(|_| "bad garbage seed".to_string())?;
        return Ok(ByzStrategy::RandomGarbage { seed });
    }
    for (name, mirror) in [("echo_fixed:", false), ("mirror:", true)] {
        if let Some(rest) = value.strip_prefix(name) {
            let (v, sn) = rest
                .split_once(',')
                .ok_or_else(|| format!("{name}value,sn expected"))?;
            let value = v.trim().parse().map_err(|_| "bad value".to_string())?;
            let sn = sn.trim().parse().map_err(|_| "bad sn".to_string())?;
            return Ok(if mirror {
                ByzStrategy::Mirror { value, sn }
            } else {
                ByzStrategy::EchoFixedValue { value, sn }
            });
        }
    }
    Err(format!("unknown strategy `{value}`"))
}
