//! Frame-time model.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Action;
use crate::num::Scalar;
use crate::rng::{self, tag};
use crate::sim::{SimBenchmark, SimSuite};

/// Global speedup from a local speedup `s` on a fraction `p` of execution
/// time: `1 / (1 - p + p / s)`.
pub fn amdahl_compose<T: Scalar>(p: T, s: T) -> Result<T> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::Domain(format!("fraction {p} not in [0, 1]")));
    }
    if !(s > T::zero()) || !s.is_finite() {
        return Err(Error::Domain(format!("speedup {s} must be > 0")));
    }
    Ok(T::one() / (T::one() - p + p / s))
}

/// Bandwidth load: each shader's action-dependent demand weighted by its
/// share of frame time.
pub(crate) fn bandwidth_load(suite: &SimSuite, bench: &SimBenchmark, actions: &[Action]) -> f64 {
    let total_weight: f64 = bench.pipelines.iter().map(|p| p.weight).sum();
    let mut it = actions.iter();
    let mut load = 0.0;
    for pipe in &bench.pipelines {
        let share = pipe.weight / total_weight;
        for ps in &pipe.shaders {
            let a = *it.next().expect("one action per shader");
            load += share * ps.fraction * suite.shaders[ps.shader as usize].latents.bandwidth_demand(a);
        }
    }
    load
}

/// Frame time in units where every pipeline's all-wave32 time is its weight.
pub(crate) fn frame_time(suite: &SimSuite, bench: &SimBenchmark, actions: &[Action], capacity: Option<f64>) -> f64 {
    let contention = match capacity {
        Some(b) => {
            let load = bandwidth_load(suite, bench, actions);
            if load > 0.0 {
                (b / load).min(1.0)
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    let threshold = suite.spec.memory_bound_threshold;
    let mut it = actions.iter();
    let mut total = 0.0;
    for pipe in &bench.pipelines {
        let mut t = 1.0;
        for ps in &pipe.shaders {
            let a = *it.next().expect("one action per shader");
            let l = &suite.shaders[ps.shader as usize].latents;
            let mut s = l.speedup(a);
            if l.bandwidth > threshold {
                s *= contention;
            }
            t += ps.fraction / s - ps.fraction;
        }
        total += pipe.weight * t;
    }
    total
}

pub(crate) fn noisy_samples(true_fps: f64, bench: &SimBenchmark, n: usize, seed: u64) -> Vec<f64> {
    if bench.noise == 0.0 {
        return vec![true_fps; n];
    }
    let half = bench.noise * 3f64.sqrt();
    let mut rng = rng::stream(seed, &[tag::NOISE, u64::from(bench.id)]);
    (0..n).map(|_| true_fps * (1.0 + rng.gen_range(-half..=half))).collect()
}
