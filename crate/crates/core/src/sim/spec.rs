use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`.
pub type Range = [f64; 2];

/// Distributions of the hidden per-shader performance attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentSpec {
    pub divergence: Range,
    pub bandwidth: Range,
    pub parallelism: Range,
    /// Shaders whose isolated wave64 speedup `s` has `|ln s|` below this are
    /// redrawn, so that no shader is indifferent to its wavefront size.
    pub min_speedup_margin: f64,
}

impl Default for LatentSpec {
    fn default() -> Self {
        LatentSpec {
            divergence: [0.0, 0.75],
            bandwidth: [0.0, 1.0],
            parallelism: [0.0, 0.6],
            min_speedup_margin: 0.05,
        }
    }
}

/// Perturbation that turns a suite into the same shaders on different
/// hardware: IR (and thus every state) is unchanged, latent performance is not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareVariant {
    pub seed: u64,
    /// Largest latent shift, as a fraction of each latent's range.
    pub strength: f64,
}

/// Recipe for a synthetic benchmark suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSpec {
    pub benchmarks: usize,
    /// Inclusive range of unique shaders per benchmark.
    pub shaders_per_benchmark: [usize; 2],
    /// Probability that a benchmark slot is filled from the cross-benchmark pool.
    pub shared_fraction: f64,
    /// Target number of shaders per pipeline.
    pub shaders_per_pipeline: usize,
    pub latents: LatentSpec,
    /// Instruction-count range, sampled log-uniformly.
    pub instructions: Range,
    pub baseline_fps: Range,
    /// Share of a pipeline's time covered by its shaders.
    pub pipeline_coverage: Range,
    /// Bandwidth capacity as a fraction of the all-wave64 load; `None` disables
    /// contention.
    pub bandwidth: Option<Range>,
    /// Shaders with per-wave bandwidth demand above this are memory bound.
    pub memory_bound_threshold: f64,
    /// Relative frame-rate measurement noise.
    pub noise: f64,
    /// Largest relative per-check-in counter step.
    pub drift_rate: f64,
    /// Largest cumulative relative counter change.
    pub drift_cap: f64,
    pub checkins_per_year: u64,
    pub variant: Option<HardwareVariant>,
    pub seed: u64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            benchmarks: 150,
            shaders_per_benchmark: [130, 330],
            shared_fraction: 0.15,
            shaders_per_pipeline: 8,
            latents: LatentSpec::default(),
            instructions: [150.0, 4000.0],
            baseline_fps: [30.0, 240.0],
            pipeline_coverage: [0.6, 0.95],
            bandwidth: Some([0.7, 0.95]),
            memory_bound_threshold: 0.5,
            noise: 0.005,
            drift_rate: 0.008,
            drift_cap: 0.5,
            checkins_per_year: 2500,
            variant: None,
            seed: 0,
        }
    }
}

impl SuiteSpec {
    /// Small contention-free, noise-free suite used to check convergence
    /// against the exhaustive oracle.
    pub fn reference() -> Self {
        SuiteSpec {
            benchmarks: 8,
            shaders_per_benchmark: [2, 5],
            latents: LatentSpec { min_speedup_margin: 0.2, ..LatentSpec::default() },
            bandwidth: None,
            noise: 0.0,
            seed: 42,
            ..SuiteSpec::default()
        }
    }

    /// The reference suite on perturbed hardware.
    pub fn reference_variant() -> Self {
        SuiteSpec {
            variant: Some(HardwareVariant { seed: 7, strength: 0.75 }),
            ..SuiteSpec::reference()
        }
    }

    /// Small suite with active bandwidth contention.
    pub fn contention() -> Self {
        SuiteSpec {
            benchmarks: 6,
            shaders_per_benchmark: [6, 12],
            bandwidth: Some([0.6, 0.85]),
            memory_bound_threshold: 0.4,
            seed: 1234,
            ..SuiteSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let range_ok = |r: &Range| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if self.benchmarks == 0 {
            return bad("benchmark count must be >= 1".into());
        }
        let [lo, hi] = self.shaders_per_benchmark;
        if lo == 0 || lo > hi {
            return bad(format!("shaders per benchmark [{lo}, {hi}] must satisfy 1 <= lo <= hi"));
        }
        if self.shaders_per_pipeline == 0 {
            return bad("shaders per pipeline must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.shared_fraction) {
            return bad(format!("shared fraction {} not in [0, 1]", self.shared_fraction));
        }
        let l = &self.latents;
        let unit = |r: &Range| range_ok(r) && r[0] >= 0.0 && r[1] <= 1.0;
        if !unit(&l.divergence) || !unit(&l.bandwidth) || !(range_ok(&l.parallelism) && l.parallelism[0] >= 0.0 && l.parallelism[1] <= 0.6) {
            return bad("latent ranges must lie in divergence [0,1], bandwidth [0,1], parallelism [0,0.6]".into());
        }
        if !(l.min_speedup_margin >= 0.0 && l.min_speedup_margin < 0.3) {
            return bad(format!("speedup margin {} not in [0, 0.3)", l.min_speedup_margin));
        }
        if !range_ok(&self.instructions) || self.instructions[0] < 1.0 {
            return bad("instruction range must be >= 1".into());
        }
        if !range_ok(&self.baseline_fps) || self.baseline_fps[0] <= 0.0 {
            return bad("baseline fps must be > 0".into());
        }
        if !range_ok(&self.pipeline_coverage) || self.pipeline_coverage[0] <= 0.0 || self.pipeline_coverage[1] > 1.0 {
            return bad("pipeline coverage must lie in (0, 1]".into());
        }
        if let Some(b) = &self.bandwidth {
            if !range_ok(b) || b[0] <= 0.0 {
                return bad("bandwidth ratio must be > 0".into());
            }
        }
        if !(self.noise >= 0.0 && self.noise < 0.5) {
            return bad(format!("noise {} not in [0, 0.5)", self.noise));
        }
        if !(self.drift_rate >= 0.0 && self.drift_rate < 1.0) {
            return bad(format!("drift rate {} not in [0, 1)", self.drift_rate));
        }
        if !(self.drift_cap >= 0.0 && self.drift_cap < 1.0) {
            return bad(format!("drift cap {} not in [0, 1)", self.drift_cap));
        }
        if let Some(v) = &self.variant {
            if !(v.strength >= 0.0 && v.strength <= 1.0) {
                return bad(format!("variant strength {} not in [0, 1]", v.strength));
            }
        }
        Ok(())
    }
}
