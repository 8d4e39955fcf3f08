//! Regression detection and network stability over simulated compiler updates.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::eval::{measure, DefaultHeuristic, Heuristic, TableHeuristic};
use crate::policy::BehaviorPolicy;
use crate::qtable::QTable;
use crate::rng::{self, tag};
use crate::sim::{BenchmarkId, SimSuite};
use crate::stats::{mean, t_test_one_tailed};

/// One-tailed significance level.
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTest {
    pub baseline: Vec<f64>,
    pub candidate: Vec<f64>,
    pub p_value: f64,
    pub significant: bool,
}

impl RegressionTest {
    /// Test whether `candidate` is slower than `baseline`.
    ///
    /// When both sample sets have zero variance the t-test is undefined; the
    /// outcome is then decided by the means alone: a lower candidate mean is a
    /// certain regression (p = 0), equal means give p = 0.5 and a higher
    /// candidate mean p = 1.
    pub fn run(baseline: Vec<f64>, candidate: Vec<f64>) -> Result<Self> {
        let p_value = match t_test_one_tailed(&baseline, &candidate) {
            Ok(w) => w.p_value,
            Err(Error::DegenerateSamples) => {
                let (b, c) = (mean(&baseline), mean(&candidate));
                if c < b {
                    0.0
                } else if c == b {
                    0.5
                } else {
                    1.0
                }
            }
            Err(e) => return Err(e),
        };
        Ok(RegressionTest { baseline, candidate, p_value, significant: p_value < SIGNIFICANCE })
    }
}

/// Percentage of tests without a significant regression.
pub fn stability_metric(tests: &[RegressionTest]) -> Result<f64> {
    if tests.is_empty() {
        return Err(Error::Domain("stability of an empty test set".into()));
    }
    let bad = tests.iter().filter(|t| t.significant).count();
    Ok(100.0 * (1.0 - bad as f64 / tests.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicStability {
    /// Indexed like the suite's benchmarks.
    pub tests: Vec<RegressionTest>,
    pub stability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub checkin: u64,
    pub benchmarks: Vec<BenchmarkId>,
    pub dnn: HeuristicStability,
    /// Exact table lookup with default fallback, when a table was supplied.
    pub table: Option<HeuristicStability>,
}

fn compare(suite: &SimSuite, h: &dyn Heuristic, baseline: &[Vec<f64>], n: usize, seed: u64) -> Result<HeuristicStability> {
    let tests = measure(suite, h, n, seed)?
        .into_iter()
        .zip(baseline)
        .map(|(c, b)| RegressionTest::run(b.clone(), c))
        .collect::<Result<Vec<_>>>()?;
    let stability = stability_metric(&tests)?;
    Ok(HeuristicStability { tests, stability })
}

/// Stability of a frozen policy at `horizon / stride + 1` checkpoints spaced
/// `stride` check-ins apart, starting at the suite's current check-in.
///
/// At each checkpoint the baseline and every heuristic are measured with the
/// same noise seed, so they differ only through their actions.
pub fn drift_sweep(
    suite: &SimSuite,
    frozen: &BehaviorPolicy,
    table: Option<&QTable>,
    horizon: u64,
    stride: u64,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<StabilityReport>> {
    if n_samples < 2 {
        return Err(Error::InvalidConfig("a regression test needs at least 2 samples per side".into()));
    }
    if horizon > 0 && (stride == 0 || horizon % stride != 0) {
        return Err(Error::InvalidConfig(format!("stride {stride} must divide horizon {horizon}")));
    }
    frozen.net().check_schema()?;
    let steps = if horizon == 0 { 0 } else { horizon / stride };
    let mut suite = suite.clone();
    let mut reports = Vec::with_capacity(steps as usize + 1);
    for k in 0..=steps {
        if k > 0 {
            suite.advance_checkins(stride);
        }
        let s = rng::derive(seed, &[tag::SWEEP, k]);
        let baseline = measure(&suite, &DefaultHeuristic, n_samples, s)?;
        let dnn = compare(&suite, frozen, &baseline, n_samples, s)?;
        let table = table.map(|t| compare(&suite, &TableHeuristic(t), &baseline, n_samples, s)).transpose()?;
        reports.push(StabilityReport {
            checkin: suite.clock,
            benchmarks: suite.benchmarks.iter().map(|b| b.id).collect(),
            dnn,
            table,
        });
    }
    Ok(reports)
}

/// One row per checkpoint and benchmark.
pub fn sweep_csv(reports: &[StabilityReport]) -> String {
    let with_table = reports.iter().any(|r| r.table.is_some());
    let mut out = String::from("t,benchmark,baseline_mean,candidate_mean,p_value,significant,stability_pct_at_t");
    if with_table {
        out.push_str(",table_mean,table_p_value,table_significant,table_stability_pct_at_t");
    }
    out.push('\n');
    for r in reports {
        for (i, b) in r.benchmarks.iter().enumerate() {
            let d = &r.dnn.tests[i];
            write!(
                out,
                "{},{},{:?},{:?},{:?},{},{:?}",
                r.checkin,
                b,
                mean(&d.baseline),
                mean(&d.candidate),
                d.p_value,
                d.significant,
                r.dnn.stability
            )
            .unwrap();
            if let Some(t) = &r.table {
                let x = &t.tests[i];
                write!(out, ",{:?},{:?},{},{:?}", mean(&x.candidate), x.p_value, x.significant, t.stability).unwrap();
            }
            out.push('\n');
        }
    }
    out
}
