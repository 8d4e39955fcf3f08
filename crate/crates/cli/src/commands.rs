use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use wavetune::eval::{evaluate, histogram_csv};
use wavetune::policy::{decode_policy, encode_policy, BehaviorPolicy};
use wavetune::qtable::FORMAT_MAGIC as QTABLE_MAGIC;
use wavetune::sim::{optimal_actions_by_state, SUITE_FORMAT};
use wavetune::stability::{drift_sweep, sweep_csv};
use wavetune::tuner::{convergence_iteration, logs_csv, oracle_check, OracleCheck, Tuner, WarmStart};
use wavetune::{Error, QTable, SimSuite};

use crate::{EvalRequest, GenSuiteRequest, Seeds, StabilityRequest, TrainRequest};

/// Share of oracle states on which the network must follow the table for a
/// run to count as converged.
pub const CONVERGENCE_AGREEMENT: f64 = 0.95;

pub const POLICY_FILE: &str = "policy.gbxp";
pub const QTABLE_FILE: &str = "qtable.txt";
pub const LOGS_FILE: &str = "logs.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const UPLIFT_FILE: &str = "uplift.csv";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const STABILITY_FILE: &str = "stability.csv";

// Progress output; a closed stdout is not an error.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

type Outcome = anyhow::Result<(Vec<PathBuf>, Seeds)>;

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<PathBuf> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

fn out_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn utf8(bytes: Vec<u8>, path: &Path) -> anyhow::Result<String> {
    String::from_utf8(bytes).map_err(|_| Error::Format(format!("{} is not text", path.display())).into())
}

pub fn load_suite(path: &Path) -> anyhow::Result<SimSuite> {
    let text = utf8(read(path)?, path)?;
    SimSuite::from_json(&text).with_context(|| format!("loading suite {}", path.display()))
}

pub fn load_table(path: &Path) -> anyhow::Result<QTable> {
    let text = utf8(read(path)?, path)?;
    QTable::from_text(&text).with_context(|| format!("loading q-table {}", path.display()))
}

/// Load a policy and check that it fits the state schema.
pub fn load_policy(path: &Path) -> anyhow::Result<BehaviorPolicy> {
    let p = decode_policy(&read(path)?).with_context(|| format!("loading policy {}", path.display()))?;
    p.net().check_schema().with_context(|| format!("policy {}", path.display()))?;
    Ok(p)
}

pub(crate) fn gen_suite(r: &GenSuiteRequest) -> Outcome {
    let suite = SimSuite::generate(&r.spec)?;
    if let Some(dir) = r.out.parent() {
        out_dir(dir)?;
    }
    let out = write(&r.out, suite.to_json()?)?;
    Ok((vec![out], Seeds { suite: r.spec.seed, run: None }))
}

fn convergence_csv(rows: &[(usize, u64, OracleCheck)]) -> String {
    let mut out = String::from("iteration,t,two_sided_states,oracle_states,table_match_rate,agreement_rate,converged\n");
    for (i, t, c) in rows {
        writeln!(
            out,
            "{i},{t},{},{},{:?},{:?},{}",
            c.two_sided,
            c.states,
            c.table_match_rate(),
            c.agreement_rate(),
            c.converged(CONVERGENCE_AGREEMENT)
        )
        .unwrap();
    }
    out
}

pub(crate) fn train(r: &TrainRequest) -> Outcome {
    let suite = load_suite(&r.suite)?;
    let warm = match &r.warm_start {
        Some(w) => Some(WarmStart { table: load_table(&w.qtable)?, policy: load_policy(&w.policy)? }),
        None => None,
    };
    if r.config.iterations == 0 && warm.is_none() {
        anyhow::bail!(Error::InvalidConfig("iterations must be >= 1 without a warm start".into()));
    }
    // Per-state optima are only well defined without contention.
    let oracle_available = suite.benchmarks.iter().all(|b| b.bandwidth_capacity.is_none());
    let mut tuner = Tuner::new(suite, r.config, warm)?;
    let mut checks = Vec::new();
    for _ in 0..r.config.iterations {
        tuner.step()?;
        if oracle_available {
            let oracle = optimal_actions_by_state(tuner.suite())?;
            let log = tuner.logs().last().expect("logged");
            checks.push((log.iteration, log.checkin, oracle_check(tuner.table(), tuner.decision(), &oracle)?));
        }
    }
    let outcome = tuner.finish();

    out_dir(&r.out_dir)?;
    let mut outputs = vec![
        write(&r.out_dir.join(POLICY_FILE), encode_policy(&outcome.behavior))?,
        write(&r.out_dir.join(QTABLE_FILE), outcome.table.to_text())?,
        write(&r.out_dir.join(LOGS_FILE), logs_csv(&outcome.logs))?,
    ];
    if oracle_available {
        outputs.push(write(&r.out_dir.join(CONVERGENCE_FILE), convergence_csv(&checks))?);
        let flags: Vec<bool> = checks.iter().map(|c| c.2.converged(CONVERGENCE_AGREEMENT)).collect();
        match convergence_iteration(&flags) {
            Some(i) => say!("converged after {} iterations", i + 1),
            None => say!("not converged after {} iterations", flags.len()),
        }
    }
    say!("q-table: {} states, {} entries", outcome.table.len(), outcome.table.entry_count());
    Ok((outputs, Seeds { suite: outcome.suite.spec.seed, run: Some(r.config.seed) }))
}

pub(crate) fn eval(r: &EvalRequest) -> Outcome {
    if !(r.bin_width > 0.0 && r.bin_width.is_finite()) {
        anyhow::bail!(Error::InvalidConfig(format!("bin width {} must be > 0", r.bin_width)));
    }
    let suite = load_suite(&r.suite)?;
    let policy = load_policy(&r.policy)?;
    let report = evaluate(&suite, &policy, r.samples, r.seed)?;
    out_dir(&r.out_dir)?;
    let outputs = vec![
        write(&r.out_dir.join(UPLIFT_FILE), report.to_csv())?,
        write(&r.out_dir.join(HISTOGRAM_FILE), histogram_csv(&report.histogram(r.bin_width)))?,
    ];
    say!(
        "mean uplift {:.3}%, max {:.3}%, {:.1}% of benchmarks at or above baseline",
        report.mean_uplift_pct(),
        report.max_uplift_pct(),
        100.0 * report.match_or_surpass_fraction(0.0)
    );
    Ok((outputs, Seeds { suite: suite.spec.seed, run: Some(r.seed) }))
}

pub(crate) fn stability(r: &StabilityRequest) -> Outcome {
    let mut suite = load_suite(&r.suite)?;
    if let Some(noise) = r.noise {
        if !(noise >= 0.0 && noise.is_finite()) {
            anyhow::bail!(Error::InvalidConfig(format!("noise {noise} must be >= 0")));
        }
        for b in &mut suite.benchmarks {
            b.noise = noise;
        }
    }
    let policy = load_policy(&r.policy)?;
    let table = r.qtable.as_deref().map(load_table).transpose()?;
    let reports = drift_sweep(&suite, &policy, table.as_ref(), r.horizon, r.stride, r.samples, r.seed)?;
    out_dir(&r.out_dir)?;
    let outputs = vec![write(&r.out_dir.join(STABILITY_FILE), sweep_csv(&reports))?];
    for rep in &reports {
        match &rep.table {
            Some(t) => say!("t={:>6}  dnn {:6.2}%  table {:6.2}%", rep.checkin, rep.dnn.stability, t.stability),
            None => say!("t={:>6}  dnn {:6.2}%", rep.checkin, rep.dnn.stability),
        }
    }
    Ok((outputs, Seeds { suite: suite.spec.seed, run: Some(r.seed) }))
}

/// Human-readable summary of a suite, policy or Q-table file.
pub fn inspect(path: &Path) -> anyhow::Result<String> {
    let bytes = read(path)?;
    let mut out = String::new();
    if bytes.starts_with(wavetune::policy::POLICY_MAGIC) {
        let p = decode_policy(&bytes).with_context(|| format!("policy {}", path.display()))?;
        let net = p.net();
        let dims: Vec<String> = std::iter::once(net.input_dim().to_string())
            .chain(net.layers().iter().map(|l| l.outputs.to_string()))
            .collect();
        writeln!(out, "type: policy")?;
        writeln!(out, "format version: {}", wavetune::policy::POLICY_FORMAT_VERSION)?;
        writeln!(out, "layers: {}", dims.join(" -> "))?;
        writeln!(out, "parameters: {}", net.param_count())?;
        writeln!(out, "weight bytes: {}", net.weight_bytes())?;
        writeln!(out, "policy version: {}", p.version)?;
        writeln!(out, "source check-in: {}", p.source_checkin)?;
        writeln!(out, "file bytes: {}", bytes.len())?;
        return Ok(out);
    }
    let text = utf8(bytes, path)?;
    if text.starts_with(QTABLE_MAGIC) {
        let t = QTable::from_text(&text).with_context(|| format!("q-table {}", path.display()))?;
        let two_sided = t.keys().filter(|k| t.is_two_sided(k)).count();
        let history: Vec<String> = t.size_history().iter().map(|(c, n)| format!("{c}:{n}")).collect();
        writeln!(out, "type: q-table")?;
        writeln!(out, "format version: {}", wavetune::qtable::FORMAT_VERSION)?;
        writeln!(out, "alpha: {}, omega: {}", t.params().alpha, t.params().omega)?;
        writeln!(out, "states: {}", t.len())?;
        writeln!(out, "entries: {}", t.entry_count())?;
        writeln!(out, "two-sided states: {two_sided}")?;
        writeln!(out, "size history: {}", history.join(","))?;
        return Ok(out);
    }
    if text.trim_start().starts_with('{') && text.contains(SUITE_FORMAT) {
        let s = SimSuite::from_json(&text).with_context(|| format!("suite {}", path.display()))?;
        let counts: Vec<usize> = s.benchmarks.iter().map(|b| b.shader_count()).collect();
        let shared = s.shader_usage().iter().filter(|&&u| u > 1).count();
        writeln!(out, "type: suite")?;
        writeln!(out, "seed: {}", s.spec.seed)?;
        writeln!(out, "check-in: {}", s.clock)?;
        writeln!(out, "benchmarks: {}", s.benchmarks.len())?;
        writeln!(out, "unique shaders: {}", s.shaders.len())?;
        writeln!(out, "shared shaders: {shared}")?;
        writeln!(
            out,
            "shaders per benchmark: min {}, mean {:.1}, max {}",
            counts.iter().min().unwrap_or(&0),
            counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64,
            counts.iter().max().unwrap_or(&0)
        )?;
        writeln!(out, "bandwidth contention: {}", if s.spec.bandwidth.is_some() { "on" } else { "off" })?;
        writeln!(out, "noise: {}", s.spec.noise)?;
        return Ok(out);
    }
    anyhow::bail!(Error::Format(format!("{} is not a suite, policy or q-table file", path.display())))
}
