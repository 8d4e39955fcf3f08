//! Shared domain types: actions, raw IR counters, the encoded shader state,
//! table keys, rewards and the check-in clock.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of shader hardware stages (one-hot slots 0..8).
pub const NUM_STAGES: usize = 8;
/// Number of primary (non-derived) counters.
pub const NUM_COUNTS: usize = 29;
/// Number of derived totals appended after the primary counters.
pub const NUM_TOTALS: usize = 7;
/// Length of the encoded feature vector.
pub const STATE_DIM: usize = NUM_STAGES + NUM_COUNTS + NUM_TOTALS;
/// Serialized size of a [`ShaderState`].
pub const STATE_BYTES: usize = STATE_DIM * 4;

/// Wavefront size chosen for a shader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Wave32 = 0,
    Wave64 = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Wave32, Action::Wave64];
    /// What the stock compiler does.
    pub const DEFAULT: Action = Action::Wave64;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        match i {
            0 => Some(Action::Wave32),
            1 => Some(Action::Wave64),
            _ => None,
        }
    }

    pub fn flipped(self) -> Action {
        match self {
            Action::Wave32 => Action::Wave64,
            Action::Wave64 => Action::Wave32,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Wave32 => "wave32",
            Action::Wave64 => "wave64",
        })
    }
}

/// Static counters read off a shader's IR before any machine-dependent pass.
///
/// Category totals are not stored; they are derived on demand, so they always
/// equal the sum of their sub-counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RawCounters {
    /// Hardware stage index in `0..NUM_STAGES`.
    pub stage: u8,
    pub basic_blocks: u32,
    /// alu, mul-add, transcendental, conversion, other
    pub vector: [u32; 5],
    /// alu, branch-setup, constant, other
    pub scalar: [u32; 4],
    /// vector-load, vector-store, scalar-load, atomic, image-sample, buffer
    pub memory: [u32; 6],
    /// fp32, fp16/packed, integer, bit-manip
    pub compute: [u32; 4],
    /// branch, loop back-edge, call, barrier
    pub control_flow: [u32; 4],
    /// vector registers, scalar registers
    pub registers: [u32; 2],
    /// x, y, z
    pub work_groups: [u32; 3],
}

impl RawCounters {
    pub fn zeroed(stage: u8) -> Self {
        RawCounters {
            stage,
            basic_blocks: 0,
            vector: [0; 5],
            scalar: [0; 4],
            memory: [0; 6],
            compute: [0; 4],
            control_flow: [0; 4],
            registers: [0; 2],
            work_groups: [0; 3],
        }
    }

    /// Build counters from untyped values, e.g. an external IR dump.
    ///
    /// `stage_one_hot` must contain exactly one `1` and otherwise zeros; every
    /// count must be a non-negative integer that fits in 32 bits.
    pub fn from_values(stage_one_hot: &[i64], counts: &[i64]) -> Result<Self> {
        if stage_one_hot.len() != NUM_STAGES {
            return Err(Error::InvalidCounters(format!(
                "stage encoding has {} slots, expected {NUM_STAGES}",
                stage_one_hot.len()
            )));
        }
        if stage_one_hot.iter().any(|&v| v != 0 && v != 1) {
            return Err(Error::InvalidCounters("stage encoding is not 0/1".into()));
        }
        let hot: Vec<usize> = (0..NUM_STAGES).filter(|&i| stage_one_hot[i] == 1).collect();
        if hot.len() != 1 {
            return Err(Error::InvalidCounters(format!(
                "stage encoding has {} active slots",
                hot.len()
            )));
        }
        if counts.len() != NUM_COUNTS {
            return Err(Error::InvalidCounters(format!(
                "got {} counts, expected {NUM_COUNTS}",
                counts.len()
            )));
        }
        let mut vals = [0u32; NUM_COUNTS];
        for (i, (&c, slot)) in counts.iter().zip(vals.iter_mut()).enumerate() {
            *slot = u32::try_from(c).map_err(|_| {
                Error::InvalidCounters(format!("count {i} = {c} is negative or too large"))
            })?;
        }
        let mut raw = RawCounters::zeroed(hot[0] as u8);
        raw.set_counts(&vals);
        Ok(raw)
    }

    pub fn validate(&self) -> Result<()> {
        if usize::from(self.stage) >= NUM_STAGES {
            return Err(Error::InvalidCounters(format!(
                "stage index {} out of range",
                self.stage
            )));
        }
        Ok(())
    }

    /// Primary counters in feature-slot order (slots 8..37).
    pub fn counts(&self) -> [u32; NUM_COUNTS] {
        let mut out = [0u32; NUM_COUNTS];
        let parts: [&[u32]; 8] = [
            std::slice::from_ref(&self.basic_blocks),
            &self.vector,
            &self.scalar,
            &self.memory,
            &self.compute,
            &self.control_flow,
            &self.registers,
            &self.work_groups,
        ];
        let mut k = 0;
        for part in parts {
            for &v in part {
                out[k] = v;
                k += 1;
            }
        }
        out
    }

    /// Inverse of [`RawCounters::counts`].
    pub fn set_counts(&mut self, c: &[u32; NUM_COUNTS]) {
        self.basic_blocks = c[0];
        self.vector.copy_from_slice(&c[1..6]);
        self.scalar.copy_from_slice(&c[6..10]);
        self.memory.copy_from_slice(&c[10..16]);
        self.compute.copy_from_slice(&c[16..20]);
        self.control_flow.copy_from_slice(&c[20..24]);
        self.registers.copy_from_slice(&c[24..26]);
        self.work_groups.copy_from_slice(&c[26..29]);
    }

    /// Derived totals: total instructions, then the vector, scalar, memory,
    /// compute, control-flow and register category totals.
    pub fn totals(&self) -> [u64; NUM_TOTALS] {
        fn sum(v: &[u32]) -> u64 {
            v.iter().map(|&x| u64::from(x)).sum()
        }
        let vector = sum(&self.vector);
        let scalar = sum(&self.scalar);
        let memory = sum(&self.memory);
        let compute = sum(&self.compute);
        let control = sum(&self.control_flow);
        let regs = sum(&self.registers);
        [
            vector + scalar + memory + compute + control,
            vector,
            scalar,
            memory,
            compute,
            control,
            regs,
        ]
    }
}

/// Fixed-length encoded state fed to the decision network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShaderState {
    pub features: [f32; STATE_DIM],
}

impl ShaderState {
    pub fn to_bytes(&self) -> [u8; STATE_BYTES] {
        let mut out = [0u8; STATE_BYTES];
        for (chunk, v) in out.chunks_exact_mut(4).zip(self.features.iter()) {
            chunk.copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != STATE_BYTES {
            return Err(Error::Format(format!(
                "shader state is {} bytes, expected {STATE_BYTES}",
                bytes.len()
            )));
        }
        let mut features = [0f32; STATE_DIM];
        for (v, chunk) in features.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        }
        Ok(ShaderState { features })
    }

    pub fn validate(&self) -> Result<()> {
        match self.features.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFiniteInput(i)),
            None => Ok(()),
        }
    }
}

/// Encode raw counters: one-hot stage, then `ln(1 + count)` for every
/// primary counter and derived total.
pub fn encode_state(raw: &RawCounters) -> Result<ShaderState> {
    raw.validate()?;
    let mut features = [0f32; STATE_DIM];
    features[usize::from(raw.stage)] = 1.0;
    let counts = raw.counts();
    for (slot, &c) in features[NUM_STAGES..NUM_STAGES + NUM_COUNTS]
        .iter_mut()
        .zip(counts.iter())
    {
        *slot = f64::from(c).ln_1p() as f32;
    }
    let totals = raw.totals();
    for (slot, &t) in features[NUM_STAGES + NUM_COUNTS..].iter_mut().zip(totals.iter()) {
        *slot = (t as f64).ln_1p() as f32;
    }
    Ok(ShaderState { features })
}

/// Exact-match table key: the raw counters themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateKey(RawCounters);

impl StateKey {
    pub fn raw(&self) -> &RawCounters {
        &self.0
    }

    pub fn encode(&self) -> ShaderState {
        encode_state(&self.0).expect("keys hold validated counters")
    }
}

pub fn state_key(raw: &RawCounters) -> Result<StateKey> {
    raw.validate()?;
    Ok(StateKey(*raw))
}

/// Frame rate relative to the all-default baseline.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Reward(pub f64);

pub fn reward_from_framerate(observed_fps: f64, baseline_fps: f64) -> Result<Reward> {
    if !(baseline_fps > 0.0) || !baseline_fps.is_finite() {
        return Err(Error::InvalidBaseline(baseline_fps));
    }
    if !(observed_fps >= 0.0) || !observed_fps.is_finite() {
        return Err(Error::Domain(format!("observed frame rate {observed_fps}")));
    }
    Ok(Reward(observed_fps / baseline_fps))
}

/// Time measured in compiler check-ins.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct CheckinClock(pub u64);
