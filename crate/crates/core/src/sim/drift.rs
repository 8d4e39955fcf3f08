//! Compiler drift: a bounded multiplicative random walk on IR counters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::model::NUM_COUNTS;
use crate::rng::{self, tag};
use crate::sim::SimSuite;

/// Counter groups: basic blocks, vector, scalar, memory, compute, control
/// flow, registers, work groups.
pub const GROUP_OF_COUNT: [usize; NUM_COUNTS] = [
    0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 6, 6, 7, 7, 7,
];

/// Relative drift speed per group. Work-group shapes are source-level
/// properties and never drift.
pub const DRIFT_GROUP_WEIGHTS: [f64; 8] = [0.6, 1.0, 0.8, 0.7, 0.9, 0.5, 0.3, 0.0];

// Random words reserved per shader per check-in.
const WORDS_PER_CHECKIN: u128 = 64;

pub(crate) fn advance(suite: &mut SimSuite, dt: u64) {
    if dt == 0 {
        return;
    }
    let from = suite.clock;
    let rate = suite.spec.drift_rate;
    let cap = suite.spec.drift_cap;
    let seed = suite.spec.seed;
    suite.shaders.par_iter_mut().for_each(|s| {
        let mut rng = ChaCha8Rng::seed_from_u64(rng::derive(seed, &[tag::DRIFT, u64::from(s.id)]));
        for t in from + 1..=from + dt {
            rng.set_word_pos(u128::from(t) * WORDS_PER_CHECKIN);
            for (k, f) in s.drift.iter_mut().enumerate() {
                let u: f64 = rng.gen_range(-1.0..=1.0);
                let w = DRIFT_GROUP_WEIGHTS[GROUP_OF_COUNT[k]];
                if w > 0.0 {
                    *f = (*f * (1.0 + rate * w * u)).clamp(1.0 - cap, 1.0 + cap);
                }
            }
        }
    });
    suite.clock = from + dt;
}

#[cfg(test)]
mod tests {
    use crate::sim::{SimSuite, SuiteSpec};

    #[test]
    fn split_advances_match_single_advance() {
        let base = SimSuite::generate(&SuiteSpec::reference()).unwrap();
        let mut a = base.clone();
        a.advance_checkins(30);
        a.advance_checkins(70);
        let mut b = base;
        b.advance_checkins(100);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_step_is_identity() {
        let base = SimSuite::generate(&SuiteSpec::reference()).unwrap();
        let mut a = base.clone();
        a.advance_checkins(0);
        assert_eq!(a, base);
    }
}
