use std::collections::BTreeMap;

use proptest::prelude::*;
use wavetune::model::{Action, RawCounters, NUM_COUNTS, STATE_DIM};
use wavetune::sim::{
    amdahl_compose, Latents, PipelineShader, SimBenchmark, SimPipeline, SimShader, SimSuite, SuiteSpec, GROUP_OF_COUNT,
};

fn reference() -> SimSuite {
    SimSuite::generate(&SuiteSpec::reference()).unwrap()
}

fn flat(_: &SimSuite, b: &SimBenchmark, mask: u64) -> Vec<Action> {
    (0..b.shader_count()).map(|i| if mask >> i & 1 == 1 { Action::Wave32 } else { Action::Wave64 }).collect()
}

#[test]
fn default_assignment_reproduces_baseline() {
    for spec in [SuiteSpec::reference(), SuiteSpec::contention(), SuiteSpec::reference_variant()] {
        let suite = SimSuite::generate(&SuiteSpec { noise: 0.0, ..spec }).unwrap();
        for b in &suite.benchmarks {
            let run = suite.run_actions(b, &vec![Action::DEFAULT; b.shader_count()], 6, 1).unwrap();
            assert!(run.samples.iter().all(|&x| x == b.baseline_fps));
        }
    }
}

#[test]
fn noise_is_bounded_and_zero_mean_ish() {
    let suite = SimSuite::generate(&SuiteSpec::contention()).unwrap();
    let b = &suite.benchmarks[0];
    let run = suite.run_actions(b, &vec![Action::DEFAULT; b.shader_count()], 4000, 3).unwrap();
    let half = suite.spec.noise * 3f64.sqrt();
    let rel: Vec<f64> = run.samples.iter().map(|x| x / b.baseline_fps - 1.0).collect();
    assert!(rel.iter().all(|e| e.abs() <= half + 1e-15));
    let m = rel.iter().sum::<f64>() / rel.len() as f64;
    assert!(m.abs() < 3e-4);
    let sd = (rel.iter().map(|e| (e - m).powi(2)).sum::<f64>() / rel.len() as f64).sqrt();
    assert!((sd / suite.spec.noise - 1.0).abs() < 0.05);
}

#[test]
fn single_shader_wave32_follows_amdahl() {
    let shader = SimShader {
        id: 0,
        latents: Latents { divergence: 0.0, bandwidth: 0.0, parallelism: 0.25 },
        base: RawCounters::zeroed(0),
        drift: [1.0; NUM_COUNTS],
    };
    let bench = SimBenchmark {
        id: 0,
        pipelines: vec![SimPipeline { weight: 1.0, shaders: vec![PipelineShader { shader: 0, fraction: 1.0 }] }],
        baseline_fps: 100.0,
        bandwidth_capacity: None,
        noise: 0.0,
        capacity_ratio: None,
        reference_frame_time: 0.8,
    };
    let suite = SimSuite { spec: SuiteSpec::reference(), clock: 0, shaders: vec![shader], benchmarks: vec![bench] };
    let b = &suite.benchmarks[0];
    assert!((suite.true_fps(b, &[Action::Wave64]) - 100.0).abs() < 1e-12);
    let ratio = suite.true_fps(b, &[Action::Wave32]) / 100.0;
    assert!((ratio - amdahl_compose(1.0, 1.0 / 1.25).unwrap()).abs() < 1e-12);
    assert!((ratio - 0.8).abs() < 1e-12);
    let (best, _) = suite.brute_force_optimal(0).unwrap();
    assert_eq!(best[&0], Action::Wave64);
}

/// Two memory-bound shaders in one pipeline. Either alone at wave64 fits the
/// bandwidth budget; both together do not.
///
/// Demands: p = 0.4 each, b = 0.6, so the load is 0.48 (both wave32), 0.72
/// (one wave64) or 0.96 (both wave64) against a budget of 0.75. Frame times,
/// with `t = 1 + sum p (1/s - 1)`:
///   both wave32          1
///   A wave64 (s = 1.5)   1 - 0.4/3          = 0.866667
///   B wave64 (s = 1.2)   1 - 0.4/6          = 0.933333
///   both, c = 0.78125    1 + 0.4 (1/1.171875 - 1) + 0.4 (1/0.9375 - 1) = 0.968
#[test]
fn contention_optimum_by_hand() {
    let mk = |id, parallelism| SimShader {
        id,
        latents: Latents { divergence: 0.0, bandwidth: 0.6, parallelism },
        base: RawCounters::zeroed(0),
        drift: [1.0; NUM_COUNTS],
    };
    let bench = SimBenchmark {
        id: 0,
        pipelines: vec![SimPipeline {
            weight: 1.0,
            shaders: vec![PipelineShader { shader: 0, fraction: 0.4 }, PipelineShader { shader: 1, fraction: 0.4 }],
        }],
        baseline_fps: 60.0,
        bandwidth_capacity: Some(0.75),
        noise: 0.0,
        capacity_ratio: None,
        reference_frame_time: 0.968,
    };
    let spec = SuiteSpec { memory_bound_threshold: 0.5, ..SuiteSpec::contention() };
    let suite = SimSuite { spec, clock: 0, shaders: vec![mk(0, 0.5), mk(1, 0.2)], benchmarks: vec![bench] };
    let b = &suite.benchmarks[0];
    use Action::{Wave32 as W32, Wave64 as W64};
    let expect = [
        ([W64, W64], 0.968),
        ([W64, W32], 1.0 - 0.4 / 3.0),
        ([W32, W64], 1.0 - 0.4 / 6.0),
        ([W32, W32], 1.0),
    ];
    for (actions, t) in expect {
        assert!((suite.true_fps(b, &actions) - 60.0 * 0.968 / t).abs() < 1e-9, "{actions:?}");
    }
    let (best, fps) = suite.brute_force_optimal(0).unwrap();
    assert_eq!(best, BTreeMap::from([(0, W64), (1, W32)]));
    assert!((fps - 60.0 * 0.968 / (1.0 - 0.4 / 3.0)).abs() < 1e-9);
    // without the budget both shaders want wave64
    let mut free = suite.clone();
    free.benchmarks[0].bandwidth_capacity = None;
    assert_eq!(free.brute_force_optimal(0).unwrap().0, BTreeMap::from([(0, W64), (1, W64)]));
}

#[test]
fn contention_free_joint_optimum_is_separable() {
    let suite = reference();
    for b in &suite.benchmarks {
        let (best, _) = suite.brute_force_optimal(b.id).unwrap();
        for (id, a) in best {
            assert_eq!(a, suite.shader(id).unwrap().latents.isolated_optimum());
        }
    }
}

#[test]
fn oversized_benchmarks_are_refused() {
    let suite = SimSuite::generate(&SuiteSpec { benchmarks: 1, shaders_per_benchmark: [21, 21], ..SuiteSpec::reference() }).unwrap();
    assert!(matches!(suite.brute_force_optimal(0), Err(wavetune::Error::TooManyShaders(21))));
}

#[test]
fn a_year_of_drift_stays_within_bounds() {
    let mut suite = SimSuite::generate(&SuiteSpec { benchmarks: 20, shaders_per_benchmark: [10, 20], ..SuiteSpec::default() }).unwrap();
    let base: Vec<_> = suite.shaders.iter().map(|s| s.counters().counts()).collect();
    suite.advance_checkins(suite.spec.checkins_per_year);
    let mut group_sum = [0.0; 8];
    let mut group_n = [0usize; 8];
    let (mut total, mut n) = (0.0, 0usize);
    for (s, b0) in suite.shaders.iter().zip(&base) {
        let now = s.counters().counts();
        for k in 0..NUM_COUNTS {
            if b0[k] < 20 {
                continue;
            }
            let change = (f64::from(now[k]) / f64::from(b0[k]) - 1.0).abs();
            assert!(change <= 0.5 + 0.5 / f64::from(b0[k]) + 1e-12, "counter {k} moved {change}");
            total += change;
            n += 1;
            group_sum[GROUP_OF_COUNT[k]] += change;
            group_n[GROUP_OF_COUNT[k]] += 1;
        }
    }
    assert!(total / n as f64 <= 0.5);
    let most = (0..8).filter(|&g| group_n[g] > 0).map(|g| group_sum[g] / group_n[g] as f64).fold(0.0, f64::max);
    assert!(most >= 0.10, "most drift-prone group moved {most}");
}

#[test]
fn drift_produces_new_states() {
    let mut suite = reference();
    let before: Vec<_> = suite.shaders.iter().map(|s| suite.compile(s.id, Action::DEFAULT).unwrap().1).collect();
    suite.advance_checkins(50);
    let changed = suite.shaders.iter().zip(&before).filter(|(s, k)| suite.compile(s.id, Action::DEFAULT).unwrap().1 != **k).count();
    assert!(changed * 2 > suite.shaders.len());
}

#[test]
fn latents_never_drift() {
    let base = reference();
    let mut later = base.clone();
    later.advance_checkins(700);
    for (a, b) in base.shaders.iter().zip(&later.shaders) {
        assert_eq!(a.latents, b.latents);
    }
    for b in &base.benchmarks {
        let acts = flat(&base, b, 0b1011);
        assert_eq!(base.true_fps(b, &acts), later.true_fps(b, &acts));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flipping_one_shader_scales_fps_by_amdahl(bench in 0usize..8, mask in any::<u64>(), pick in any::<usize>()) {
        let suite = reference();
        let b = &suite.benchmarks[bench];
        let actions = flat(&suite, b, mask);
        let i = pick % actions.len();
        let mut flipped = actions.clone();
        flipped[i] = flipped[i].flipped();
        // locate shader i and its pipeline
        let (mut pipe, mut slot, mut k) = (0, 0, 0);
        'outer: for (j, p) in b.pipelines.iter().enumerate() {
            for (m, _) in p.shaders.iter().enumerate() {
                if k == i { pipe = j; slot = m; break 'outer; }
                k += 1;
            }
        }
        let p = &b.pipelines[pipe];
        let lat = suite.shader(p.shaders[slot].shader).unwrap().latents;
        // frame time of the pipeline and of the whole frame, wave32 units
        let mut acts = actions.iter();
        let mut frame = 0.0;
        let mut pipe_time = 0.0;
        for (j, q) in b.pipelines.iter().enumerate() {
            let mut t = 1.0;
            for ps in &q.shaders {
                let a = *acts.next().unwrap();
                let s = suite.shader(ps.shader).unwrap().latents.speedup(a);
                t += ps.fraction / s - ps.fraction;
            }
            if j == pipe { pipe_time = t; }
            frame += q.weight * t;
        }
        let cur = lat.speedup(actions[i]);
        let share = p.weight * p.shaders[slot].fraction / cur / frame;
        let predicted = amdahl_compose(share, lat.speedup(flipped[i]) / cur).unwrap();
        let observed = suite.true_fps(b, &flipped) / suite.true_fps(b, &actions);
        prop_assert!((observed - predicted).abs() < 1e-9, "{} vs {}", observed, predicted);
        prop_assert!(pipe_time > 0.0);
    }

    #[test]
    fn more_bandwidth_never_hurts(bench in 0usize..6, mask in any::<u64>(), lo in 0.05f64..2.0, extra in 0.0f64..2.0) {
        let suite = SimSuite::generate(&SuiteSpec::contention()).unwrap();
        let b = &suite.benchmarks[bench];
        let actions = flat(&suite, b, mask);
        let slow = suite.true_fps_with_capacity(b, &actions, Some(lo));
        let fast = suite.true_fps_with_capacity(b, &actions, Some(lo + extra));
        let free = suite.true_fps_with_capacity(b, &actions, None);
        prop_assert!(fast >= slow);
        prop_assert!(free >= fast);
    }

    #[test]
    fn drift_keeps_states_well_formed(dt in 0u64..5000) {
        let mut suite = reference();
        suite.advance_checkins(dt);
        for s in &suite.shaders {
            let (state, _) = suite.compile(s.id, Action::DEFAULT).unwrap();
            prop_assert_eq!(state.features.len(), STATE_DIM);
            prop_assert!(state.features.iter().all(|v| v.is_finite() && *v >= 0.0));
            prop_assert!(s.drift.iter().all(|f| (0.5..=1.5).contains(f)));
        }
    }

    #[test]
    fn noise_free_runs_are_pure(bench in 0usize..8, mask in any::<u64>(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let suite = reference();
        let b = &suite.benchmarks[bench];
        let actions = flat(&suite, b, mask);
        let r1 = suite.run_actions(b, &actions, 3, s1).unwrap();
        let r2 = suite.run_actions(b, &actions, 3, s2).unwrap();
        prop_assert_eq!(r1.samples, r2.samples);
    }
}
