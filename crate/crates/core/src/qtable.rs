//! Empirical single-step Q-table.
//!
//! Each `(state, action)` entry holds a staleness-discounted running estimate
//! of the frame-rate ratio observed when that action was applied to that
//! state. Decay is applied lazily: an entry is only discounted by
//! `omega^dt` at the moment it receives a new observation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, CheckinClock, Reward, ShaderState, StateKey, NUM_COUNTS};
use crate::num::Scalar;

pub const FORMAT_MAGIC: &str = "wavetune-qtable";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QTableParams {
    /// Learning rate in `(0, 1]`.
    pub alpha: f64,
    /// Per-check-in staleness discount in `(0, 1]`.
    pub omega: f64,
}

impl Default for QTableParams {
    fn default() -> Self {
        QTableParams { alpha: 0.3, omega: 0.999 }
    }
}

impl QTableParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} not in (0, 1]", self.alpha)));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::InvalidConfig(format!("omega {} not in (0, 1]", self.omega)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QEntry {
    pub q: f64,
    pub last_update_t: u64,
    pub update_count: u64,
}

/// Boltzmann distribution over the two actions' values at temperature `rho`,
/// computed with max-subtraction.
pub fn boltzmann<T: Scalar>(q: [T; 2], rho: T) -> [T; 2] {
    let m = q[0].max(q[1]);
    let e0 = ((q[0] - m) / rho).exp();
    let e1 = ((q[1] - m) / rho).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

/// Distillation target for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalPolicy {
    /// Indexed by [`Action::index`].
    pub probs: [f64; 2],
    pub temperature: f64,
}

impl EmpiricalPolicy {
    pub fn prob(&self, a: Action) -> f64 {
        self.probs[a.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillSample {
    pub key: StateKey,
    pub state: ShaderState,
    pub target: EmpiricalPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    params: QTableParams,
    entries: BTreeMap<StateKey, [Option<QEntry>; 2]>,
    /// `(check-in, distinct states)` recorded by the tuner after each batch.
    size_history: Vec<(u64, usize)>,
}

impl QTable {
    pub fn new(params: QTableParams) -> Result<Self> {
        params.validate()?;
        Ok(QTable { params, entries: BTreeMap::new(), size_history: Vec::new() })
    }

    pub fn params(&self) -> QTableParams {
        self.params
    }

    /// Number of distinct states.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of stored `(state, action)` entries.
    pub fn entry_count(&self) -> usize {
        self.entries.values().map(|e| e.iter().flatten().count()).sum()
    }

    pub fn entry(&self, key: &StateKey, a: Action) -> Option<&QEntry> {
        self.entries.get(key).and_then(|e| e[a.index()].as_ref())
    }

    pub fn contains(&self, key: &StateKey) -> bool {
        self.entries.contains_key(key)
    }

    /// States in key order.
    pub fn keys(&self) -> impl Iterator<Item = &StateKey> {
        self.entries.keys()
    }

    pub fn is_two_sided(&self, key: &StateKey) -> bool {
        self.entries.get(key).is_some_and(|e| e.iter().all(Option::is_some))
    }

    pub fn latest_checkin(&self) -> u64 {
        self.entries
            .values()
            .flat_map(|e| e.iter().flatten())
            .map(|e| e.last_update_t)
            .max()
            .unwrap_or(0)
    }

    pub fn size_history(&self) -> &[(u64, usize)] {
        &self.size_history
    }

    pub fn record_size(&mut self, now: CheckinClock) {
        self.size_history.push((now.0, self.len()));
    }

    /// Fold one observation into the table.
    pub fn q_update(&mut self, key: StateKey, a: Action, r: Reward, now: CheckinClock) -> Result<()> {
        let QTableParams { alpha, omega } = self.params;
        let slot = &mut self.entries.entry(key).or_insert([None, None])[a.index()];
        match slot {
            None => {
                *slot = Some(QEntry { q: r.0, last_update_t: now.0, update_count: 1 });
            }
            Some(e) => {
                if now.0 < e.last_update_t {
                    return Err(Error::ClockRegression { now: now.0, last: e.last_update_t });
                }
                let dt = now.0 - e.last_update_t;
                let decay = omega.powf(dt as f64);
                e.q = (1.0 - alpha) * decay * e.q + alpha * r.0;
                e.last_update_t = now.0;
                e.update_count += 1;
            }
        }
        Ok(())
    }

    /// Action with the highest recorded value. Ties, and single-action states
    /// whose recorded action is the default, resolve to [`Action::DEFAULT`].
    pub fn greedy_action(&self, key: &StateKey) -> Result<Action> {
        let e = self.entries.get(key).ok_or(Error::UnknownState)?;
        let best = match (e[0], e[1]) {
            (Some(w32), Some(w64)) => {
                if w32.q > w64.q {
                    Action::Wave32
                } else {
                    Action::Wave64
                }
            }
            (Some(_), None) => Action::Wave32,
            (None, Some(_)) => Action::Wave64,
            (None, None) => return Err(Error::UnknownState),
        };
        Ok(best)
    }

    pub fn derive_policy(&self, key: &StateKey, rho: f64) -> Result<EmpiricalPolicy> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidTemperature(rho));
        }
        let e = self.entries.get(key).ok_or(Error::UnknownState)?;
        match (e[0], e[1]) {
            (Some(w32), Some(w64)) => Ok(EmpiricalPolicy {
                probs: boltzmann([w32.q, w64.q], rho),
                temperature: rho,
            }),
            _ => Err(Error::OneSidedState),
        }
    }

    /// Distillation dataset: one sample per state with both actions observed,
    /// in key order.
    pub fn snapshot_policy_dataset(&self, rho: f64) -> Result<Vec<DistillSample>> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidTemperature(rho));
        }
        Ok(self
            .entries
            .keys()
            .filter(|k| self.is_two_sided(k))
            .map(|k| DistillSample {
                key: *k,
                state: k.encode(),
                target: self.derive_policy(k, rho).expect("two-sided state"),
            })
            .collect())
    }

    /// Line-delimited text form: a header, then one record per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let history = self
            .size_history
            .iter()
            .map(|(t, n)| format!("{t}:{n}"))
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            out,
            "{FORMAT_MAGIC} v{FORMAT_VERSION} alpha={:?} omega={:?} history={history}",
            self.params.alpha, self.params.omega
        );
        for (key, slots) in &self.entries {
            for (i, e) in slots.iter().enumerate() {
                let Some(e) = e else { continue };
                let raw = key.raw();
                let _ = write!(out, "{}", raw.stage);
                for c in raw.counts() {
                    let _ = write!(out, " {c}");
                }
                let _ = writeln!(out, " {i} {:?} {} {}", e.q, e.last_update_t, e.update_count);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty q-table file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(FORMAT_MAGIC) {
            return Err(Error::Format("not a q-table file".into()));
        }
        match fields.next() {
            Some(v) if v == format!("v{FORMAT_VERSION}") => {}
            other => {
                return Err(Error::Incompatible(format!(
                    "unsupported q-table version {other:?}"
                )))
            }
        }
        let mut alpha = None;
        let mut omega = None;
        let mut history = Vec::new();
        for f in fields {
            let (name, value) = f
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header field {f:?}")))?;
            match name {
                "alpha" => alpha = Some(parse_num::<f64>(value, "alpha")?),
                "omega" => omega = Some(parse_num::<f64>(value, "omega")?),
                "history" => {
                    for pair in value.split(',').filter(|s| !s.is_empty()) {
                        let (t, n) = pair
                            .split_once(':')
                            .ok_or_else(|| Error::Format(format!("bad history entry {pair:?}")))?;
                        history.push((parse_num(t, "history t")?, parse_num(n, "history size")?));
                    }
                }
                _ => return Err(Error::Format(format!("unknown header field {name:?}"))),
            }
        }
        let params = QTableParams {
            alpha: alpha.ok_or_else(|| Error::Format("missing alpha".into()))?,
            omega: omega.ok_or_else(|| Error::Format("missing omega".into()))?,
        };
        let mut table = QTable::new(params)?;
        table.size_history = history;
        for (lineno, line) in lines.enumerate() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let expected = 1 + NUM_COUNTS + 4;
            if toks.len() != expected {
                return Err(Error::Format(format!(
                    "record {}: {} fields, expected {expected}",
                    lineno + 1,
                    toks.len()
                )));
            }
            let stage: u8 = parse_num(toks[0], "stage")?;
            let mut counts = [0u32; NUM_COUNTS];
            for (c, t) in counts.iter_mut().zip(&toks[1..=NUM_COUNTS]) {
                *c = parse_num(t, "counter")?;
            }
            let mut raw = crate::model::RawCounters::zeroed(stage);
            raw.set_counts(&counts);
            let key = crate::model::state_key(&raw)?;
            let action = Action::from_index(parse_num(toks[NUM_COUNTS + 1], "action")?)
                .ok_or_else(|| Error::Format("action index out of range".into()))?;
            let entry = QEntry {
                q: parse_num(toks[NUM_COUNTS + 2], "q")?,
                last_update_t: parse_num(toks[NUM_COUNTS + 3], "last_update_t")?,
                update_count: parse_num(toks[NUM_COUNTS + 4], "update_count")?,
            };
            if entry.update_count == 0 {
                return Err(Error::Format("stored entry with zero updates".into()));
            }
            let slots = table.entries.entry(key).or_insert([None, None]);
            if slots[action.index()].replace(entry).is_some() {
                return Err(Error::Format(format!("duplicate record at line {}", lineno + 2)));
            }
        }
        Ok(table)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format(format!("bad {what} value {s:?}")))
}
