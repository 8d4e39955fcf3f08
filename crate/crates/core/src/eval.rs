//! Deploying a heuristic on a suite and measuring frame-rate uplift.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Action, ShaderState, StateKey};
use crate::policy::{greedy, BehaviorPolicy};
use crate::qtable::QTable;
use crate::sim::{BenchmarkId, ShaderId, SimSuite};
use crate::stats::mean;

/// A per-shader wavefront decision function, as the compiler sees it.
pub trait Heuristic: Sync {
    fn choose(&self, shader: ShaderId, state: &ShaderState, key: &StateKey) -> Result<Action>;
}

/// The stock compiler: wave64 everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultHeuristic;

impl Heuristic for DefaultHeuristic {
    fn choose(&self, _: ShaderId, _: &ShaderState, _: &StateKey) -> Result<Action> {
        Ok(Action::DEFAULT)
    }
}

/// Greedy action of the deployed network.
impl Heuristic for BehaviorPolicy {
    fn choose(&self, _: ShaderId, state: &ShaderState, _: &StateKey) -> Result<Action> {
        Ok(greedy(self.distribution(state)?))
    }
}

/// Exact table lookup; states the table has never seen get the default.
#[derive(Debug, Clone, Copy)]
pub struct TableHeuristic<'a>(pub &'a QTable);

impl Heuristic for TableHeuristic<'_> {
    fn choose(&self, _: ShaderId, _: &ShaderState, key: &StateKey) -> Result<Action> {
        match self.0.greedy_action(key) {
            Err(Error::UnknownState) => Ok(Action::DEFAULT),
            other => other,
        }
    }
}

/// A fixed shader-to-action map, e.g. an oracle assignment.
#[derive(Debug, Clone, Default)]
pub struct FixedHeuristic(pub BTreeMap<ShaderId, Action>);

impl Heuristic for FixedHeuristic {
    fn choose(&self, shader: ShaderId, _: &ShaderState, _: &StateKey) -> Result<Action> {
        self.0.get(&shader).copied().ok_or(Error::IncompleteAssignment(shader))
    }
}

/// Actions a heuristic picks for every shader of a benchmark, in shader order.
pub fn benchmark_actions(suite: &SimSuite, bench: BenchmarkId, h: &dyn Heuristic) -> Result<Vec<Action>> {
    suite
        .benchmark(bench)?
        .shader_ids()
        .into_iter()
        .map(|id| {
            let (state, key) = suite.compile(id, Action::DEFAULT)?;
            h.choose(id, &state, &key)
        })
        .collect()
}

/// Frame-rate samples of every benchmark under a heuristic, in benchmark order.
pub fn measure(suite: &SimSuite, h: &dyn Heuristic, n_samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    suite
        .benchmarks
        .par_iter()
        .map(|b| {
            let actions = benchmark_actions(suite, b.id, h)?;
            Ok(suite.run_actions(b, &actions, n_samples, seed)?.samples)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub benchmark: BenchmarkId,
    pub baseline_fps: f64,
    pub tuned_fps: f64,
    pub uplift_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lower_pct: f64,
    pub upper_pct: f64,
    pub count: usize,
}

/// Greedy deployment of `h` on every benchmark, compared with each
/// benchmark's baseline frame rate.
pub fn evaluate(suite: &SimSuite, h: &dyn Heuristic, n_samples: usize, seed: u64) -> Result<EvalReport> {
    if n_samples == 0 {
        return Err(Error::EmptySamples);
    }
    let samples = measure(suite, h, n_samples, seed)?;
    let rows = suite
        .benchmarks
        .iter()
        .zip(samples)
        .map(|(b, s)| {
            let tuned = mean(&s);
            EvalRow { benchmark: b.id, baseline_fps: b.baseline_fps, tuned_fps: tuned, uplift_pct: 100.0 * (tuned / b.baseline_fps - 1.0) }
        })
        .collect();
    Ok(EvalReport { rows })
}

impl EvalReport {
    pub fn mean_uplift_pct(&self) -> f64 {
        mean(&self.rows.iter().map(|r| r.uplift_pct).collect::<Vec<_>>())
    }

    pub fn max_uplift_pct(&self) -> f64 {
        self.rows.iter().map(|r| r.uplift_pct).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Share of benchmarks whose uplift is at least `-tolerance_pct`.
    pub fn match_or_surpass_fraction(&self, tolerance_pct: f64) -> f64 {
        let ok = self.rows.iter().filter(|r| r.uplift_pct >= -tolerance_pct).count();
        ok as f64 / self.rows.len().max(1) as f64
    }

    /// Uplift histogram with bins of `width_pct` aligned to multiples of the
    /// width; every row falls in exactly one bin.
    pub fn histogram(&self, width_pct: f64) -> Vec<HistogramBin> {
        assert!(width_pct > 0.0, "bin width must be positive");
        if self.rows.is_empty() {
            return Vec::new();
        }
        let index = |u: f64| (u / width_pct).floor() as i64;
        let lo = self.rows.iter().map(|r| index(r.uplift_pct)).min().expect("non-empty");
        let hi = self.rows.iter().map(|r| index(r.uplift_pct)).max().expect("non-empty");
        let mut bins: Vec<HistogramBin> = (lo..=hi)
            .map(|k| HistogramBin { lower_pct: k as f64 * width_pct, upper_pct: (k + 1) as f64 * width_pct, count: 0 })
            .collect();
        for r in &self.rows {
            bins[(index(r.uplift_pct) - lo) as usize].count += 1;
        }
        bins
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("benchmark,baseline_fps,tuned_fps,uplift_pct\n");
        for r in &self.rows {
            writeln!(out, "{},{:?},{:?},{:?}", r.benchmark, r.baseline_fps, r.tuned_fps, r.uplift_pct).unwrap();
        }
        out
    }
}

pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("bin_lower_pct,bin_upper_pct,count\n");
    for b in bins {
        writeln!(out, "{:?},{:?},{}", b.lower_pct, b.upper_pct, b.count).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SuiteSpec;

    #[test]
    fn default_heuristic_has_zero_uplift() {
        let suite = SimSuite::generate(&SuiteSpec::contention()).unwrap();
        let suite = SimSuite { benchmarks: suite.benchmarks.into_iter().map(|b| crate::sim::SimBenchmark { noise: 0.0, ..b }).collect(), ..suite };
        let report = evaluate(&suite, &DefaultHeuristic, 10, 3).unwrap();
        assert_eq!(report.rows.len(), suite.benchmarks.len());
        for r in &report.rows {
            assert_eq!(r.uplift_pct, 0.0);
            assert_eq!(r.tuned_fps, r.baseline_fps);
        }
    }

    #[test]
    fn oracle_assignments_reproduce_oracle_uplift() {
        let suite = SimSuite::generate(&SuiteSpec::reference()).unwrap();
        let mut all = BTreeMap::new();
        let mut expected = Vec::new();
        for b in &suite.benchmarks {
            let (asg, fps) = suite.brute_force_optimal(b.id).unwrap();
            expected.push(100.0 * (fps / b.baseline_fps - 1.0));
            all.extend(asg);
        }
        let report = evaluate(&suite, &FixedHeuristic(all), 5, 1).unwrap();
        for (r, e) in report.rows.iter().zip(expected) {
            assert_eq!(r.uplift_pct, e);
        }
        assert!(report.mean_uplift_pct() > 0.0);
    }

    #[test]
    fn histogram_conserves_rows() {
        let rows = [-1.2, -0.1, 0.0, 0.3, 2.7, 2.71]
            .iter()
            .enumerate()
            .map(|(i, &u)| EvalRow { benchmark: i as u32, baseline_fps: 60.0, tuned_fps: 60.0, uplift_pct: u })
            .collect();
        let report = EvalReport { rows };
        let bins = report.histogram(0.5);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 6);
        assert_eq!(bins[0].lower_pct, -1.5);
        assert_eq!(bins.last().unwrap().count, 2);
        assert_eq!(histogram_csv(&bins).lines().count(), bins.len() + 1);
        assert_eq!(report.match_or_surpass_fraction(0.5), 5.0 / 6.0);
    }
}
