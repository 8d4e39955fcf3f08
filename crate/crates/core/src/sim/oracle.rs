//! Exhaustive and per-shader optimal assignments.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{Action, StateKey};
use crate::sim::{Assignment, SimBenchmark, SimSuite};

/// Largest benchmark the exhaustive search accepts.
pub const BRUTE_FORCE_LIMIT: usize = 20;

pub(crate) fn brute_force(suite: &SimSuite, bench: &SimBenchmark) -> Result<(Assignment, f64)> {
    let ids = bench.shader_ids();
    let n = ids.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyShaders(n));
    }
    // Mask bit (n - 1 - i) set means shader i runs wave32, so counting up
    // visits assignments in lexicographic order with wave64 first.
    let decode = |mask: u32| -> Vec<Action> {
        (0..n)
            .map(|i| if mask >> (n - 1 - i) & 1 == 1 { Action::Wave32 } else { Action::Wave64 })
            .collect()
    };
    let mut best_mask = 0u32;
    let mut best_fps = f64::NEG_INFINITY;
    for mask in 0..(1u32 << n) {
        let fps = suite.true_fps(bench, &decode(mask));
        if fps > best_fps {
            best_fps = fps;
            best_mask = mask;
        }
    }
    let assignment = ids.into_iter().zip(decode(best_mask)).collect();
    Ok((assignment, best_fps))
}

/// Best action per current state when every shader is judged in isolation,
/// which is exact for contention-free benchmarks.
pub fn optimal_actions_by_state(suite: &SimSuite) -> Result<BTreeMap<StateKey, Action>> {
    let mut out = BTreeMap::new();
    for s in &suite.shaders {
        let (_, key) = suite.compile(s.id, Action::DEFAULT)?;
        out.insert(key, s.latents.isolated_optimum());
    }
    Ok(out)
}
