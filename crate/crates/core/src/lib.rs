//! Reinforcement-learning autotuner for GPU wavefront-size selection.
//!
//! A Q-table over exact IR states collects benchmark rewards, a small
//! feed-forward network is distilled from it and deployed as the compiler
//! heuristic, and a simulated compiler and GPU stand in for the production
//! environment.

pub mod error;
pub mod eval;
pub mod model;
pub mod num;
pub mod policy;
pub mod qtable;
pub mod rng;
pub mod sim;
pub mod stability;
pub mod stats;
pub mod tuner;

pub use error::{Error, Result};
pub use model::{encode_state, reward_from_framerate, state_key, Action, CheckinClock, RawCounters, Reward, ShaderState, StateKey};
pub use num::Scalar;
pub use policy::{BehaviorPolicy, PolicyNet, TrainConfig};
pub use qtable::{QTable, QTableParams};
pub use sim::{SimSuite, SuiteSpec};
pub use tuner::{run_training, TunerConfig};

/// Deployable single-precision network.
pub type Policy = PolicyNet<f32>;
/// Double-precision network, used for gradient checks and offline analysis.
pub type PolicyF64 = PolicyNet<f64>;
