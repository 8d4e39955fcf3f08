//! The tuning loop: deploy the behavior policy, collect benchmark rewards,
//! update the Q-table, distill the decision network and refresh the
//! behavior policy from it.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{reward_from_framerate, Action, CheckinClock, Reward, StateKey};
use crate::policy::{fit, greedy, sample, BehaviorPolicy, PolicyNet, TrainConfig};
use crate::qtable::{QTable, QTableParams};
use crate::rng::{self, tag};
use crate::sim::{RunRecord, SimSuite};
use crate::stats::mean;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerConfig {
    pub iterations: usize,
    /// Compiler check-ins landing between two iterations.
    pub checkins_per_iteration: u64,
    /// Initial probability of a uniformly random action.
    pub epsilon0: f64,
    /// Iterations over which exploration anneals linearly to zero; `None`
    /// means half of `iterations`.
    pub anneal_horizon: Option<usize>,
    /// The behavior policy is refreshed every this many iterations.
    pub refresh_period: usize,
    /// Frame-rate samples per benchmark run.
    pub samples: usize,
    pub qtable: QTableParams,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            iterations: 45,
            checkins_per_iteration: 50,
            epsilon0: 0.2,
            anneal_horizon: None,
            refresh_period: 1,
            samples: 10,
            qtable: QTableParams::default(),
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.samples == 0 {
            return bad("samples per benchmark must be >= 1");
        }
        if self.refresh_period == 0 {
            return bad("refresh period must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.epsilon0) {
            return bad("epsilon0 must be in [0, 1]");
        }
        self.qtable.validate()?;
        self.train.validate()
    }

    /// Exploration probability at iteration `i`.
    pub fn epsilon_at(&self, i: usize) -> f64 {
        let h = self.anneal_horizon.unwrap_or(self.iterations / 2).max(1);
        self.epsilon0 * (1.0 - i as f64 / h as f64).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub checkin: u64,
    /// Indexed like the suite's benchmarks.
    pub mean_rewards: Vec<f64>,
    pub table_size: usize,
    /// `None` while no state has both actions recorded.
    pub distill_loss: Option<f64>,
    /// Share of two-sided table states where the decision network's greedy
    /// action equals the table's.
    pub agreement: f64,
}

impl IterationLog {
    pub fn mean_reward(&self) -> f64 {
        mean(&self.mean_rewards)
    }
}

pub fn logs_csv(logs: &[IterationLog]) -> String {
    let mut out = String::from("iteration,t,mean_reward,table_size,distill_loss,agreement_rate\n");
    for l in logs {
        let loss = l.distill_loss.map(|v| format!("{v:?}")).unwrap_or_default();
        writeln!(out, "{},{},{:?},{},{},{:?}", l.iteration, l.checkin, l.mean_reward(), l.table_size, loss, l.agreement).unwrap();
    }
    out
}

/// Broadcast one benchmark reward to every state-action pair of the run.
pub fn attribute_rewards(record: &RunRecord, samples: &[f64], baseline_fps: f64) -> Result<Vec<(StateKey, Action, Reward)>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let r = reward_from_framerate(mean(samples), baseline_fps)?;
    Ok(record.pairs.iter().map(|p| (p.key, p.action, r)).collect())
}

/// Share of two-sided states on which the network's greedy action matches
/// the table's. Vacuously 1 for a table without two-sided states.
pub fn policy_agreement(table: &QTable, net: &PolicyNet<f32>) -> Result<f64> {
    let mut total = 0usize;
    let mut agree = 0usize;
    for key in table.keys().filter(|k| table.is_two_sided(k)) {
        total += 1;
        if greedy(net.forward(&key.encode())?) == table.greedy_action(key)? {
            agree += 1;
        }
    }
    Ok(if total == 0 { 1.0 } else { agree as f64 / total as f64 })
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub behavior: BehaviorPolicy,
    pub decision: PolicyNet<f32>,
    pub table: QTable,
    pub logs: Vec<IterationLog>,
    /// The environment as it stands after the last iteration.
    pub suite: SimSuite,
}

/// Prior knowledge to start from: a table and the behavior policy trained
/// with it, typically on another suite or hardware.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub table: QTable,
    pub policy: BehaviorPolicy,
}

/// A training run in progress, advanced one iteration at a time.
#[derive(Debug, Clone)]
pub struct Tuner {
    suite: SimSuite,
    table: QTable,
    decision: PolicyNet<f32>,
    behavior: BehaviorPolicy,
    cfg: TunerConfig,
    logs: Vec<IterationLog>,
    // Keeps table time monotone when a warm-start table comes from a run
    // whose clock is ahead of this suite's.
    clock_offset: u64,
    // Iterations the warm-start table has already been through. The target
    // temperature resumes from there; exploration restarts.
    schedule_offset: usize,
}

impl Tuner {
    pub fn new(suite: SimSuite, cfg: TunerConfig, warm: Option<WarmStart>) -> Result<Self> {
        cfg.validate()?;
        let (table, decision, behavior) = match warm {
            Some(w) => {
                w.policy.net().check_schema()?;
                (w.table, w.policy.net().clone(), w.policy)
            }
            None => {
                let net = PolicyNet::init(rng::derive(cfg.seed, &[tag::INIT]));
                let behavior = BehaviorPolicy::freeze(&net, 0, suite.clock);
                (QTable::new(cfg.qtable)?, net, behavior)
            }
        };
        let clock_offset = table.latest_checkin().saturating_sub(suite.clock);
        let schedule_offset = table.size_history().len();
        Ok(Tuner { suite, table, decision, behavior, cfg, logs: Vec::new(), clock_offset, schedule_offset })
    }

    pub fn suite(&self) -> &SimSuite {
        &self.suite
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn decision(&self) -> &PolicyNet<f32> {
        &self.decision
    }

    pub fn behavior(&self) -> &BehaviorPolicy {
        &self.behavior
    }

    pub fn logs(&self) -> &[IterationLog] {
        &self.logs
    }

    pub fn config(&self) -> &TunerConfig {
        &self.cfg
    }

    /// Check-in on the table's clock.
    pub fn now(&self) -> u64 {
        self.suite.clock + self.clock_offset
    }

    /// Run the next iteration. On error nothing is modified.
    pub fn step(&mut self) -> Result<&IterationLog> {
        let i = self.logs.len();
        self.run_iteration(i).map_err(|e| Error::Iteration { iteration: i, source: Box::new(e) })?;
        Ok(self.logs.last().expect("just pushed"))
    }

    fn run_iteration(&mut self, i: usize) -> Result<()> {
        let cfg = &self.cfg;
        // 1. the latest compiler
        let mut suite = self.suite.clone();
        suite.advance_checkins(cfg.checkins_per_iteration);
        let now = suite.clock + self.clock_offset;

        // 2. deploy the behavior policy on every benchmark
        let eps = cfg.epsilon_at(i);
        let behavior = &self.behavior;
        let run_seed = rng::derive(cfg.seed, &[tag::NOISE, i as u64]);
        let runs = suite
            .benchmarks
            .par_iter()
            .map(|b| {
                let actions = b
                    .shader_ids()
                    .into_iter()
                    .map(|id| {
                        let (state, _) = suite.compile(id, Action::DEFAULT)?;
                        let mut r = rng::stream(cfg.seed, &[tag::EXPLORE, i as u64, u64::from(b.id), u64::from(id)]);
                        let explore = r.gen::<f64>() < eps;
                        let u: f64 = r.gen();
                        Ok(if explore {
                            if u < 0.5 {
                                Action::Wave32
                            } else {
                                Action::Wave64
                            }
                        } else {
                            sample(behavior.distribution(&state)?, u)
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let run = suite.run_actions(b, &actions, cfg.samples, run_seed)?;
                let rewards = attribute_rewards(&run.record, &run.samples, b.baseline_fps)?;
                Ok((mean(&run.samples) / b.baseline_fps, rewards))
            })
            .collect::<Result<Vec<_>>>()?;

        // 3. fold rewards in benchmark, then shader, order
        let mut table = self.table.clone();
        for (_, rewards) in &runs {
            for &(key, a, r) in rewards {
                table.q_update(key, a, r, CheckinClock(now))?;
            }
        }
        table.record_size(CheckinClock(now));

        // 4. distill
        let rho = cfg.train.rho_at(self.schedule_offset + i);
        let dataset = table.snapshot_policy_dataset(rho)?;
        let (decision, distill_loss) = if dataset.is_empty() {
            (self.decision.clone(), None)
        } else {
            let train = TrainConfig { seed: rng::derive(cfg.train.seed, &[tag::TRAIN, i as u64]), ..cfg.train };
            let out = fit(&self.decision, &dataset, &train)?;
            (out.net, Some(f64::from(out.final_loss)))
        };
        let agreement = policy_agreement(&table, &decision)?;

        // 5. refresh the behavior policy
        let behavior = if i % cfg.refresh_period == 0 {
            BehaviorPolicy::freeze(&decision, self.behavior.version + 1, now)
        } else {
            self.behavior.clone()
        };

        let log = IterationLog {
            iteration: i,
            checkin: now,
            mean_rewards: runs.iter().map(|(r, _)| *r).collect(),
            table_size: table.len(),
            distill_loss,
            agreement,
        };
        self.suite = suite;
        self.table = table;
        self.decision = decision;
        self.behavior = behavior;
        self.logs.push(log);
        Ok(())
    }

    pub fn finish(self) -> TrainingOutcome {
        TrainingOutcome { behavior: self.behavior, decision: self.decision, table: self.table, logs: self.logs, suite: self.suite }
    }
}

/// Run `cfg.iterations` iterations from scratch or from a warm start.
pub fn run_training(suite: &SimSuite, cfg: &TunerConfig, warm: Option<WarmStart>) -> Result<TrainingOutcome> {
    if cfg.iterations == 0 && warm.is_none() {
        return Err(Error::InvalidConfig("iterations must be >= 1 without a warm start".into()));
    }
    let mut tuner = Tuner::new(suite.clone(), *cfg, warm)?;
    for _ in 0..cfg.iterations {
        tuner.step()?;
    }
    Ok(tuner.finish())
}

/// How well a table and network match a reference action per state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCheck {
    /// Reference states with both actions recorded in the table.
    pub two_sided: usize,
    /// Reference states in total.
    pub states: usize,
    /// Two-sided states whose greedy table action is the reference action.
    pub table_matches: usize,
    /// Two-sided states whose greedy network action is the greedy table action.
    pub policy_agrees: usize,
}

impl OracleCheck {
    pub fn table_match_rate(&self) -> f64 {
        self.table_matches as f64 / self.two_sided.max(1) as f64
    }

    pub fn agreement_rate(&self) -> f64 {
        self.policy_agrees as f64 / self.two_sided.max(1) as f64
    }

    /// Every reference state is two-sided, the table is right on all of them
    /// and the network agrees with the table on at least `min_agreement`.
    pub fn converged(&self, min_agreement: f64) -> bool {
        self.states > 0 && self.two_sided == self.states && self.table_matches == self.two_sided && self.agreement_rate() >= min_agreement
    }
}

pub fn oracle_check(table: &QTable, net: &PolicyNet<f32>, oracle: &BTreeMap<StateKey, Action>) -> Result<OracleCheck> {
    let mut c = OracleCheck { two_sided: 0, states: oracle.len(), table_matches: 0, policy_agrees: 0 };
    for (key, &best) in oracle {
        if !table.is_two_sided(key) {
            continue;
        }
        c.two_sided += 1;
        let t = table.greedy_action(key)?;
        if t == best {
            c.table_matches += 1;
        }
        if greedy(net.forward(&key.encode())?) == t {
            c.policy_agrees += 1;
        }
    }
    Ok(c)
}

/// First iteration from which `converged` holds for every later iteration,
/// given one flag per iteration.
pub fn convergence_iteration(converged: &[bool]) -> Option<usize> {
    let last_bad = converged.iter().rposition(|&c| !c);
    match last_bad {
        None if converged.is_empty() => None,
        None => Some(0),
        Some(j) if j + 1 < converged.len() => Some(j + 1),
        Some(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::state_key;
    use crate::sim::{RecordPair, SuiteSpec};

    fn record(n: u32) -> RunRecord {
        let suite = SimSuite::generate(&SuiteSpec::reference()).unwrap();
        let pairs = (0..n)
            .map(|id| RecordPair { shader: id, key: state_key(&suite.shaders[id as usize].counters()).unwrap(), action: Action::Wave32 })
            .collect();
        RunRecord { benchmark: 0, checkin: 0, pairs }
    }

    #[test]
    fn reward_is_broadcast() {
        let rec = record(3);
        let out = attribute_rewards(&rec, &[61.2, 61.2], 60.0).unwrap();
        assert_eq!(out.len(), 3);
        for (_, a, r) in &out {
            assert_eq!(*a, Action::Wave32);
            assert!((r.0 - 1.02).abs() < 1e-12);
        }
        let parity = attribute_rewards(&rec, &[60.0; 10], 60.0).unwrap();
        assert!(parity.iter().all(|(_, _, r)| r.0 == 1.0));
        assert!(matches!(attribute_rewards(&rec, &[], 60.0), Err(Error::EmptySamples)));
    }

    #[test]
    fn exploration_schedule() {
        let cfg = TunerConfig::default();
        assert_eq!(cfg.epsilon_at(0), 0.2);
        assert!((cfg.epsilon_at(11) - 0.1).abs() < 1e-12);
        assert_eq!(cfg.epsilon_at(22), 0.0);
        assert_eq!(cfg.epsilon_at(44), 0.0);
    }

    #[test]
    fn convergence_index() {
        assert_eq!(convergence_iteration(&[]), None);
        assert_eq!(convergence_iteration(&[true, true]), Some(0));
        assert_eq!(convergence_iteration(&[false, true, false, true, true]), Some(3));
        assert_eq!(convergence_iteration(&[true, false]), None);
    }

    #[test]
    fn pure_exploration_observes_both_actions() {
        let suite = SimSuite::generate(&SuiteSpec::reference()).unwrap();
        let cfg = TunerConfig { iterations: 6, checkins_per_iteration: 0, epsilon0: 1.0, anneal_horizon: Some(1000), ..TunerConfig::default() };
        let out = run_training(&suite, &cfg, None).unwrap();
        let keys: Vec<_> = out.table.keys().copied().collect();
        let two = keys.iter().filter(|k| out.table.is_two_sided(k)).count();
        assert!(two as f64 >= 0.9 * keys.len() as f64, "{two} of {}", keys.len());
    }

    #[test]
    fn zero_iterations_need_a_warm_start() {
        let suite = SimSuite::generate(&SuiteSpec::reference()).unwrap();
        let cfg = TunerConfig { iterations: 0, ..TunerConfig::default() };
        assert!(matches!(run_training(&suite, &cfg, None), Err(Error::InvalidConfig(_))));
        let policy = BehaviorPolicy::freeze(&PolicyNet::init(3), 7, 99);
        let warm = WarmStart { table: QTable::new(QTableParams::default()).unwrap(), policy: policy.clone() };
        let out = run_training(&suite, &cfg, Some(warm)).unwrap();
        assert_eq!(out.behavior, policy);
        assert!(out.logs.is_empty());
    }
}
