//! Deterministic stand-in for the GPU, the production compiler and the
//! benchmark farm.
//!
//! Every shader carries hidden performance attributes (divergence, per-wave
//! bandwidth demand, parallelism benefit) and IR counters generated from
//! them. A benchmark is a set of pipelines; its frame time is the weighted
//! sum of per-pipeline times, each an Amdahl composition of its shaders'
//! speedups. Memory-bound shaders share a bandwidth budget, so one shader's
//! wavefront size can slow down another. Compiler updates are modelled as a
//! bounded random walk on the IR counters; the hardware never changes.

mod drift;
mod gen;
mod oracle;
mod perf;
mod spec;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{encode_state, state_key, Action, RawCounters, ShaderState, StateKey, NUM_COUNTS};

pub use drift::{DRIFT_GROUP_WEIGHTS, GROUP_OF_COUNT};
pub use gen::{expected_counts, synthesize_counters, JITTER};
pub use oracle::{optimal_actions_by_state, BRUTE_FORCE_LIMIT};
pub use perf::amdahl_compose;
pub use spec::{HardwareVariant, LatentSpec, Range, SuiteSpec};

pub type ShaderId = u32;
pub type BenchmarkId = u32;

/// Full shader-to-action map for one benchmark.
pub type Assignment = BTreeMap<ShaderId, Action>;

pub const SUITE_FORMAT: &str = "wavetune-suite";
pub const SUITE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latents {
    pub divergence: f64,
    pub bandwidth: f64,
    pub parallelism: f64,
}

impl Latents {
    /// Isolated wave64 speedup over wave32.
    pub fn wave64_speedup(&self) -> f64 {
        (1.0 + self.parallelism) * (1.0 - 0.5 * self.divergence)
    }

    /// Speedup relative to wave32.
    pub fn speedup(&self, a: Action) -> f64 {
        match a {
            Action::Wave32 => 1.0,
            Action::Wave64 => self.wave64_speedup(),
        }
    }

    pub fn bandwidth_demand(&self, a: Action) -> f64 {
        match a {
            Action::Wave32 => self.bandwidth,
            Action::Wave64 => 2.0 * self.bandwidth,
        }
    }

    /// Best action ignoring any interaction with other shaders.
    pub fn isolated_optimum(&self) -> Action {
        if self.wave64_speedup() >= 1.0 {
            Action::Wave64
        } else {
            Action::Wave32
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimShader {
    pub id: ShaderId,
    pub latents: Latents,
    /// Counters at check-in zero.
    pub base: RawCounters,
    /// Cumulative multiplicative drift per primary counter.
    pub drift: [f64; NUM_COUNTS],
}

impl SimShader {
    /// Counters as the compiler at the suite's current check-in emits them.
    pub fn counters(&self) -> RawCounters {
        let mut c = self.base.counts();
        for (v, f) in c.iter_mut().zip(self.drift.iter()) {
            *v = (f64::from(*v) * f).round() as u32;
        }
        let mut raw = self.base;
        raw.set_counts(&c);
        raw
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineShader {
    pub shader: ShaderId,
    /// Fraction of the pipeline's wave32 time spent in this shader.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPipeline {
    pub weight: f64,
    pub shaders: Vec<PipelineShader>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimBenchmark {
    pub id: BenchmarkId,
    pub pipelines: Vec<SimPipeline>,
    /// Frame rate under the all-default assignment.
    pub baseline_fps: f64,
    /// Bandwidth budget; `None` means unlimited.
    pub bandwidth_capacity: Option<f64>,
    /// Relative measurement noise.
    pub noise: f64,
    /// Budget as a fraction of the all-default load.
    pub capacity_ratio: Option<f64>,
    /// Frame-time units of the all-default assignment; fixes the scale that
    /// maps frame time to frame rate.
    pub reference_frame_time: f64,
}

impl SimBenchmark {
    /// Shader ids in pipeline order; the order every per-benchmark action
    /// slice follows.
    pub fn shader_ids(&self) -> Vec<ShaderId> {
        self.pipelines.iter().flat_map(|p| p.shaders.iter().map(|s| s.shader)).collect()
    }

    pub fn shader_count(&self) -> usize {
        self.pipelines.iter().map(|p| p.shaders.len()).sum()
    }
}

/// Per-shader state and action observed during one benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordPair {
    pub shader: ShaderId,
    pub key: StateKey,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub benchmark: BenchmarkId,
    pub checkin: u64,
    pub pairs: Vec<RecordPair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub samples: Vec<f64>,
    pub true_fps: f64,
    pub record: RunRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSuite {
    pub spec: SuiteSpec,
    pub clock: u64,
    pub shaders: Vec<SimShader>,
    pub benchmarks: Vec<SimBenchmark>,
}

#[derive(Serialize, Deserialize)]
struct SuiteFile {
    format: String,
    version: u32,
    suite: SimSuite,
}

impl SimSuite {
    pub fn generate(spec: &SuiteSpec) -> Result<Self> {
        gen::generate(spec)
    }

    pub fn shader(&self, id: ShaderId) -> Result<&SimShader> {
        self.shaders.get(id as usize).ok_or(Error::UnknownShader(id))
    }

    pub fn benchmark(&self, id: BenchmarkId) -> Result<&SimBenchmark> {
        self.benchmarks.get(id as usize).ok_or(Error::UnknownBenchmark(id))
    }

    /// Number of benchmarks each shader appears in.
    pub fn shader_usage(&self) -> Vec<usize> {
        let mut usage = vec![0; self.shaders.len()];
        for b in &self.benchmarks {
            for id in b.shader_ids() {
                usage[id as usize] += 1;
            }
        }
        usage
    }

    /// State the current compiler derives for a shader. The action does not
    /// influence it: the state is read before the wavefront decision.
    pub fn compile(&self, id: ShaderId, _action: Action) -> Result<(ShaderState, StateKey)> {
        let raw = self.shader(id)?.counters();
        Ok((encode_state(&raw)?, state_key(&raw)?))
    }

    /// Noise-free frame rate of `actions` (in [`SimBenchmark::shader_ids`] order).
    pub fn true_fps(&self, bench: &SimBenchmark, actions: &[Action]) -> f64 {
        self.true_fps_with_capacity(bench, actions, bench.bandwidth_capacity)
    }

    pub fn assignment_actions(&self, bench: &SimBenchmark, assignment: &Assignment) -> Result<Vec<Action>> {
        bench
            .shader_ids()
            .into_iter()
            .map(|id| assignment.get(&id).copied().ok_or(Error::IncompleteAssignment(id)))
            .collect()
    }

    /// Execute a benchmark `n_samples` times under `assignment`.
    ///
    /// Measurement noise depends only on `(seed, benchmark)`, so two runs with
    /// the same seed see the same noise whatever the assignment.
    pub fn run_benchmark(&self, bench_id: BenchmarkId, assignment: &Assignment, n_samples: usize, seed: u64) -> Result<BenchmarkRun> {
        let bench = self.benchmark(bench_id)?;
        let actions = self.assignment_actions(bench, assignment)?;
        self.run_actions(bench, &actions, n_samples, seed)
    }

    pub fn run_actions(&self, bench: &SimBenchmark, actions: &[Action], n_samples: usize, seed: u64) -> Result<BenchmarkRun> {
        let ids = bench.shader_ids();
        if actions.len() != ids.len() {
            let missing = ids.get(actions.len()).copied().unwrap_or(u32::MAX);
            return Err(Error::IncompleteAssignment(missing));
        }
        let true_fps = self.true_fps(bench, actions);
        let samples = perf::noisy_samples(true_fps, bench, n_samples, seed);
        let pairs = ids
            .iter()
            .zip(actions)
            .map(|(&shader, &action)| {
                let (_, key) = self.compile(shader, action)?;
                Ok(RecordPair { shader, key, action })
            })
            .collect::<Result<_>>()?;
        Ok(BenchmarkRun { samples, true_fps, record: RunRecord { benchmark: bench.id, checkin: self.clock, pairs } })
    }

    /// Advance the compiler by `dt` check-ins, drifting every shader's IR.
    pub fn advance_checkins(&mut self, dt: u64) {
        drift::advance(self, dt);
    }

    /// Exhaustive search over all joint assignments of one benchmark.
    ///
    /// Ties resolve to the lexicographically smallest assignment in shader
    /// order, with wave64 ordered before wave32.
    pub fn brute_force_optimal(&self, bench_id: BenchmarkId) -> Result<(Assignment, f64)> {
        oracle::brute_force(self, self.benchmark(bench_id)?)
    }

    /// Recompute each benchmark's bandwidth budget and reference frame time
    /// from its shaders' latents.
    pub(crate) fn refresh_capacities(&mut self) {
        for i in 0..self.benchmarks.len() {
            let bench = &self.benchmarks[i];
            let defaults = vec![Action::DEFAULT; bench.shader_count()];
            let cap = bench.capacity_ratio.map(|r| r * perf::bandwidth_load(self, bench, &defaults));
            let reference = perf::frame_time(self, bench, &defaults, cap);
            self.benchmarks[i].bandwidth_capacity = cap;
            self.benchmarks[i].reference_frame_time = reference;
        }
    }

    /// Noise-free frame rate of `actions` under an explicit bandwidth budget.
    pub fn true_fps_with_capacity(&self, bench: &SimBenchmark, actions: &[Action], capacity: Option<f64>) -> f64 {
        bench.baseline_fps * (bench.reference_frame_time / perf::frame_time(self, bench, actions, capacity))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SuiteFile { format: SUITE_FORMAT.into(), version: SUITE_FORMAT_VERSION, suite: self.clone() };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SuiteFile = serde_json::from_str(text).map_err(|e| Error::Format(format!("suite file: {e}")))?;
        if file.format != SUITE_FORMAT {
            return Err(Error::Format("not a suite file".into()));
        }
        if file.version != SUITE_FORMAT_VERSION {
            return Err(Error::Incompatible(format!("unsupported suite version {}", file.version)));
        }
        file.suite.spec.validate()?;
        Ok(file.suite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SimSuite {
        SimSuite::generate(&SuiteSpec { benchmarks: 1, shaders_per_benchmark: [1, 1], seed: 7, ..SuiteSpec::reference() }).unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(tiny(), tiny());
        let a = SimSuite::generate(&SuiteSpec::reference()).unwrap();
        let b = SimSuite::generate(&SuiteSpec::reference()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn default_suite_matches_paper_scale() {
        let suite = SimSuite::generate(&SuiteSpec::default()).unwrap();
        let mean = suite.benchmarks.iter().map(|b| b.shader_count()).sum::<usize>() as f64 / suite.benchmarks.len() as f64;
        assert!((mean - 230.0).abs() <= 0.2 * 230.0, "mean shaders {mean}");
        let usage = suite.shader_usage();
        let shared = usage.iter().filter(|&&u| u > 1).count() as f64 / usage.len() as f64;
        assert!((0.1..=0.2).contains(&shared), "shared fraction {shared}");
        let wave32 = suite.shaders.iter().filter(|s| s.latents.isolated_optimum() == Action::Wave32).count() as f64
            / suite.shaders.len() as f64;
        assert!((0.25..=0.5).contains(&wave32), "wave32-optimal fraction {wave32}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for spec in [
            SuiteSpec { benchmarks: 0, ..SuiteSpec::reference() },
            SuiteSpec { shaders_per_benchmark: [0, 3], ..SuiteSpec::reference() },
            SuiteSpec { noise: -1.0, ..SuiteSpec::reference() },
        ] {
            assert!(matches!(SimSuite::generate(&spec), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn persistence_is_bit_exact() {
        let mut suite = SimSuite::generate(&SuiteSpec::contention()).unwrap();
        suite.advance_checkins(37);
        let text = suite.to_json().unwrap();
        let back = SimSuite::from_json(&text).unwrap();
        assert_eq!(back, suite);
        assert_eq!(back.to_json().unwrap(), text);
        assert!(SimSuite::from_json("{}").is_err());
    }

    #[test]
    fn compile_ignores_action_and_is_stable() {
        let suite = SimSuite::generate(&SuiteSpec::reference()).unwrap();
        let a = suite.compile(3, Action::Wave32).unwrap();
        let b = suite.compile(3, Action::Wave64).unwrap();
        assert_eq!(a, b);
        let mut same = suite.clone();
        same.advance_checkins(0);
        assert_eq!(same.compile(3, Action::Wave32).unwrap(), a);
        assert!(matches!(suite.compile(10_000, Action::Wave32), Err(Error::UnknownShader(10_000))));
    }

    #[test]
    fn incomplete_assignment_is_rejected() {
        let suite = SimSuite::generate(&SuiteSpec::reference()).unwrap();
        let mut asg: Assignment = suite.benchmarks[0].shader_ids().into_iter().map(|id| (id, Action::Wave64)).collect();
        let first = *asg.keys().next().unwrap();
        asg.remove(&first);
        assert!(matches!(suite.run_benchmark(0, &asg, 3, 1), Err(Error::IncompleteAssignment(id)) if id == first));
    }

    #[test]
    fn run_record_captures_states() {
        let suite = SimSuite::generate(&SuiteSpec::reference()).unwrap();
        let bench = &suite.benchmarks[1];
        let asg: Assignment = bench.shader_ids().into_iter().map(|id| (id, Action::Wave32)).collect();
        let run = suite.run_benchmark(1, &asg, 4, 9).unwrap();
        assert_eq!(run.samples.len(), 4);
        assert_eq!(run.record.pairs.len(), bench.shader_count());
        assert_eq!(run.record.checkin, suite.clock);
        for p in &run.record.pairs {
            assert_eq!(p.key, suite.compile(p.shader, p.action).unwrap().1);
            assert_eq!(p.action, Action::Wave32);
        }
    }
}
