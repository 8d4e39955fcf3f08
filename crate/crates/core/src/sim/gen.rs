//! Synthetic suite generation.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{RawCounters, NUM_COUNTS, NUM_STAGES};
use crate::rng::{self, tag};
use crate::sim::{Latents, PipelineShader, SimBenchmark, SimPipeline, SimShader, SimSuite, SuiteSpec};

/// Upper bound (inclusive) of the additive integer jitter on every count.
pub const JITTER: u32 = 3;

// Per-category sub-count shares.
const VECTOR_SHARE: [f64; 5] = [0.45, 0.2, 0.05, 0.1, 0.2];
const SCALAR_SHARE: [f64; 4] = [0.4, 0.2, 0.25, 0.15];
const MEMORY_SHARE: [f64; 6] = [0.35, 0.15, 0.15, 0.05, 0.2, 0.1];
const COMPUTE_SHARE: [f64; 4] = [0.4, 0.25, 0.25, 0.1];
const CONTROL_SHARE: [f64; 4] = [0.5, 0.2, 0.1, 0.2];

const WORK_GROUP_SHAPES: [[u32; 3]; 5] = [[64, 1, 1], [8, 8, 1], [16, 16, 1], [32, 1, 1], [4, 4, 4]];
const COMPUTE_STAGE: u8 = 5;

/// Jitter-free counter expectations for a shader of `size` instructions.
///
/// Memory counts grow with bandwidth demand, control flow (and basic blocks)
/// with divergence, compute counts and vector registers with parallelism.
pub fn expected_counts(size: f64, l: &Latents) -> [f64; NUM_COUNTS] {
    let mut out = [0.0; NUM_COUNTS];
    out[0] = size * (0.004 + 0.03 * l.divergence);
    let mut k = 1;
    let mut put = |total: f64, shares: &[f64]| {
        for s in shares {
            out[k] = total * s;
            k += 1;
        }
    };
    put(size * 0.30, &VECTOR_SHARE);
    put(size * 0.12, &SCALAR_SHARE);
    put(size * (0.03 + 0.25 * l.bandwidth), &MEMORY_SHARE);
    put(size * (0.04 + 0.35 * l.parallelism), &COMPUTE_SHARE);
    put(size * (0.01 + 0.12 * l.divergence), &CONTROL_SHARE);
    out[24] = 8.0 + size.sqrt() * 2.0 * (1.0 + l.parallelism);
    out[25] = 16.0 + size.powf(0.4);
    out
}

/// Counters for one shader: rounded expectations plus seeded integer jitter.
/// Work-group dimensions are taken from `work_groups` untouched.
pub fn synthesize_counters(stage: u8, size: f64, l: &Latents, work_groups: [u32; 3], rng: &mut ChaCha8Rng) -> RawCounters {
    let expected = expected_counts(size, l);
    let mut counts = [0u32; NUM_COUNTS];
    for (c, e) in counts.iter_mut().zip(expected.iter()).take(26) {
        *c = e.round() as u32 + rng.gen_range(0..=JITTER);
    }
    counts[26..].copy_from_slice(&work_groups);
    let mut raw = RawCounters::zeroed(stage);
    raw.set_counts(&counts);
    raw
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..=r[1])
    }
}

fn draw_latents(rng: &mut ChaCha8Rng, spec: &SuiteSpec) -> Latents {
    let ls = &spec.latents;
    let mut last = None;
    for _ in 0..1000 {
        let l = Latents {
            divergence: uniform(rng, ls.divergence),
            bandwidth: uniform(rng, ls.bandwidth),
            parallelism: uniform(rng, ls.parallelism),
        };
        if l.wave64_speedup().ln().abs() >= ls.min_speedup_margin {
            return l;
        }
        last = Some(l);
    }
    last.expect("at least one draw")
}

fn new_shader(rng: &mut ChaCha8Rng, spec: &SuiteSpec, id: u32) -> SimShader {
    let stage = rng.gen_range(0..NUM_STAGES as u8);
    let latents = draw_latents(rng, spec);
    let [lo, hi] = spec.instructions;
    let size = if lo == hi { lo } else { (rng.gen_range(lo.ln()..=hi.ln())).exp() };
    let wg = if stage == COMPUTE_STAGE {
        *WORK_GROUP_SHAPES.choose(rng).expect("non-empty")
    } else {
        [1, 1, 1]
    };
    let base = synthesize_counters(stage, size, &latents, wg, rng);
    SimShader { id, latents, base, drift: [1.0; NUM_COUNTS] }
}

pub(crate) fn generate(spec: &SuiteSpec) -> Result<SimSuite> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, &[tag::SUITE]);
    let mut shaders: Vec<SimShader> = Vec::new();
    // Shaders created for sharing wait in `pending` until another benchmark
    // picks them up. Half of the shared-path slots create, half reuse, so
    // this slot probability yields the configured fraction of unique shaders.
    let f = spec.shared_fraction;
    let slot_p = 2.0 * f / (1.0 + f);
    let mut pending: Vec<u32> = Vec::new();
    let mut benchmarks = Vec::with_capacity(spec.benchmarks);

    for b in 0..spec.benchmarks {
        let [lo, hi] = spec.shaders_per_benchmark;
        let n = rng.gen_range(lo..=hi);
        let mut members: Vec<u32> = Vec::with_capacity(n);
        while members.len() < n {
            let shared = spec.benchmarks > 1 && rng.gen::<f64>() < slot_p;
            if shared {
                if let Some(pos) = pending.iter().position(|id| !members.contains(id)) {
                    let id = pending[pos];
                    if rng.gen::<f64>() >= 0.25 {
                        pending.remove(pos);
                    }
                    members.push(id);
                    continue;
                }
            }
            let id = shaders.len() as u32;
            shaders.push(new_shader(&mut rng, spec, id));
            if shared {
                pending.push(id);
            }
            members.push(id);
        }

        let k = n.div_ceil(spec.shaders_per_pipeline);
        let mut pipelines: Vec<SimPipeline> = Vec::with_capacity(k);
        for j in 0..k {
            let ids: Vec<u32> = members.iter().skip(j).step_by(k).copied().collect();
            let weight = rng.gen_range(0.5..=2.0);
            let coverage = uniform(&mut rng, spec.pipeline_coverage);
            let raw: Vec<f64> = ids.iter().map(|_| rng.gen_range(0.5..=1.5)).collect();
            let total: f64 = raw.iter().sum();
            let shaders = ids
                .iter()
                .zip(&raw)
                .map(|(&shader, &w)| PipelineShader { shader, fraction: coverage * w / total })
                .collect();
            pipelines.push(SimPipeline { weight, shaders });
        }
        let baseline_fps = uniform(&mut rng, spec.baseline_fps);
        let ratio = spec.bandwidth.map(|r| uniform(&mut rng, r));
        benchmarks.push(SimBenchmark {
            id: b as u32,
            pipelines,
            baseline_fps,
            bandwidth_capacity: None,
            noise: spec.noise,
            capacity_ratio: ratio,
            reference_frame_time: 1.0,
        });
    }

    let mut suite = SimSuite { spec: spec.clone(), clock: 0, shaders, benchmarks };
    if let Some(v) = &spec.variant {
        perturb_hardware(&mut suite, v.seed, v.strength);
    }
    suite.refresh_capacities();
    Ok(suite)
}

/// Perturb latents (not IR) as if the same shaders ran on another GPU. Each
/// latent moves by up to `strength` times the width of its range.
fn perturb_hardware(suite: &mut SimSuite, seed: u64, strength: f64) {
    let ls = suite.spec.latents.clone();
    let shift = |rng: &mut ChaCha8Rng, v: f64, r: [f64; 2]| (v + strength * (r[1] - r[0]) * rng.gen_range(-1.0..=1.0)).clamp(r[0], r[1]);
    for s in &mut suite.shaders {
        let mut rng = rng::stream(seed, &[tag::VARIANT, u64::from(s.id)]);
        let orig = s.latents;
        for _ in 0..1000 {
            let l = Latents {
                divergence: shift(&mut rng, orig.divergence, ls.divergence),
                bandwidth: shift(&mut rng, orig.bandwidth, ls.bandwidth),
                parallelism: shift(&mut rng, orig.parallelism, ls.parallelism),
            };
            s.latents = l;
            if l.wave64_speedup().ln().abs() >= ls.min_speedup_margin {
                break;
            }
        }
    }
    let mut rng = rng::stream(seed, &[tag::VARIANT]);
    for b in &mut suite.benchmarks {
        b.baseline_fps *= rng.gen_range(0.7..=0.9);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_latents_leave_only_the_jitter_baseline() {
        let zero = Latents { divergence: 0.0, bandwidth: 0.0, parallelism: 0.3 };
        let size = 1000.0;
        let mut a = rng::stream(1, &[]);
        let raw = synthesize_counters(2, size, &zero, [1, 1, 1], &mut a);
        for (k, &c) in raw.control_flow.iter().enumerate() {
            let base = (size * 0.01 * CONTROL_SHARE[k]).round() as u32;
            assert!((base..=base + JITTER).contains(&c));
        }
        for (k, &c) in raw.memory.iter().enumerate() {
            let base = (size * 0.03 * MEMORY_SHARE[k]).round() as u32;
            assert!((base..=base + JITTER).contains(&c));
        }
        // same stream, divergent shader: control flow grows
        let mut b = rng::stream(1, &[]);
        let div = Latents { divergence: 1.0, ..zero };
        let raw_div = synthesize_counters(2, size, &div, [1, 1, 1], &mut b);
        assert!(raw_div.control_flow[0] > raw.control_flow[0] + 20);
        assert_eq!(raw_div.memory, raw.memory);
    }

    #[test]
    fn latent_margin_is_respected() {
        let spec = SuiteSpec::reference();
        let suite = generate(&spec).unwrap();
        for s in &suite.shaders {
            assert!(s.latents.wave64_speedup().ln().abs() >= spec.latents.min_speedup_margin);
        }
    }
}
