//! The decision network: a small rectifier MLP mapping an encoded shader
//! state to a distribution over wavefront sizes, distilled from the Q-table
//! by minimizing `KL(net || target)`.

mod format;

pub use format::{decode_policy, encode_policy, POLICY_FORMAT_VERSION, POLICY_MAGIC};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, ShaderState, STATE_DIM};
use crate::num::Scalar;
use crate::qtable::DistillSample;
use crate::rng::{self, tag};

/// `(inputs, outputs)` of each layer of the deployed network.
pub const LAYER_DIMS: [(usize, usize); 3] = [(STATE_DIM, 64), (64, 32), (32, 2)];
/// Probability clamp applied before taking logarithms in the loss.
pub const KL_EPS: f64 = 1e-7;

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { inputs, outputs, weights: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    fn affine(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(self.bias.iter().copied());
        for (o, acc) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            for (w, xi) in row.iter().zip(x) {
                *acc += *w * *xi;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<T> {
    layers: Vec<Dense<T>>,
}

fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    let s = e.iter().copied().fold(T::zero(), |a, b| a + b);
    e.into_iter().map(|v| v / s).collect()
}

/// `KL(predicted || target)` with both distributions clamped to
/// `[KL_EPS, 1 - KL_EPS]`.
pub fn kl_loss<T: Scalar>(predicted: [T; 2], target: [T; 2]) -> T {
    let (lo, hi) = (T::lit(KL_EPS), T::lit(1.0 - KL_EPS));
    predicted
        .iter()
        .zip(target.iter())
        .map(|(&p, &q)| {
            let (p, q) = (p.max(lo).min(hi), q.max(lo).min(hi));
            p * (p / q).ln()
        })
        .fold(T::zero(), |a, b| a + b)
}

/// Gradient of [`kl_loss`] with respect to the output logits.
fn kl_logit_grad<T: Scalar>(p: &[T], target: [T; 2]) -> Vec<T> {
    let (lo, hi) = (T::lit(KL_EPS), T::lit(1.0 - KL_EPS));
    let g: Vec<T> = p
        .iter()
        .zip(target.iter())
        .map(|(&pa, &qa)| {
            if pa < lo || pa > hi {
                T::zero()
            } else {
                let q = qa.max(lo).min(hi);
                (pa / q).ln() + T::one()
            }
        })
        .collect();
    let mean = p.iter().zip(&g).fold(T::zero(), |acc, (&pa, &ga)| acc + pa * ga);
    p.iter().zip(&g).map(|(&pa, &ga)| pa * (ga - mean)).collect()
}

impl<T: Scalar> PolicyNet<T> {
    /// Uniform `+-sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn init(seed: u64) -> Self {
        let mut rng = rng::stream(seed, &[tag::INIT]);
        let layers = LAYER_DIMS
            .iter()
            .map(|&(i, o)| {
                let bound = (6.0 / (i + o) as f64).sqrt();
                let mut d = Dense::zeros(i, o);
                for w in &mut d.weights {
                    *w = T::lit(rng.gen_range(-bound..bound));
                }
                d
            })
            .collect();
        PolicyNet { layers }
    }

    /// All-zero network; its output is uniform for every input.
    pub fn zeros() -> Self {
        PolicyNet { layers: LAYER_DIMS.iter().map(|&(i, o)| Dense::zeros(i, o)).collect() }
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Format("network has no layers".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Format(format!("layer {k} has inconsistent shapes")));
            }
            if k > 0 && layers[k - 1].outputs != l.inputs {
                return Err(Error::Format(format!("layer {k} input width does not chain")));
            }
        }
        Ok(PolicyNet { layers })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Rejects networks that do not map a shader state to two actions.
    pub fn check_schema(&self) -> Result<()> {
        if self.input_dim() != STATE_DIM || self.output_dim() != Action::ALL.len() {
            return Err(Error::Incompatible(format!(
                "policy maps {} features to {} outputs, expected {STATE_DIM} -> 2",
                self.input_dim(),
                self.output_dim()
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Size of the parameters when stored as 32-bit floats.
    pub fn weight_bytes(&self) -> usize {
        self.param_count() * 4
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn cast<U: Scalar>(&self) -> PolicyNet<U> {
        let c = |v: &Vec<T>| v.iter().map(|&x| U::lit(x.to_f64_lossy())).collect();
        PolicyNet {
            layers: self
                .layers
                .iter()
                .map(|l| Dense { inputs: l.inputs, outputs: l.outputs, weights: c(&l.weights), bias: c(&l.bias) })
                .collect(),
        }
    }

    /// Pre-activations of every layer; the last entry holds the logits.
    fn activations(&self, x: &[T]) -> Vec<Vec<T>> {
        let mut zs: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        let mut input: Vec<T> = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(&input, &mut z);
            if k + 1 < self.layers.len() {
                input = z.iter().map(|&v| v.max(T::zero())).collect();
            }
            zs.push(z);
        }
        zs
    }

    pub fn forward_features(&self, x: &[T]) -> [T; 2] {
        let zs = self.activations(x);
        let p = softmax(zs.last().expect("non-empty"));
        [p[0], p[1]]
    }

    pub fn forward(&self, s: &ShaderState) -> Result<[T; 2]> {
        s.validate()?;
        let x: Vec<T> = s.features.iter().map(|&v| T::lit(f64::from(v))).collect();
        Ok(self.forward_features(&x))
    }

    /// Mean loss over `batch` and its gradient, laid out like the network.
    pub fn loss_and_grad(&self, batch: &[(Vec<T>, [T; 2])]) -> (T, PolicyNet<T>) {
        let mut grad = PolicyNet {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        };
        let mut total = T::zero();
        let n = self.layers.len();
        for (x, target) in batch {
            let zs = self.activations(x);
            let p = softmax(&zs[n - 1]);
            total += kl_loss([p[0], p[1]], *target);
            let mut delta = kl_logit_grad(&p, *target);
            for k in (0..n).rev() {
                let layer = &self.layers[k];
                let input: Vec<T> = if k == 0 {
                    x.clone()
                } else {
                    zs[k - 1].iter().map(|&v| v.max(T::zero())).collect()
                };
                let g = &mut grad.layers[k];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    g.bias[o] += d;
                    if d != T::zero() {
                        let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (gw, &xi) in row.iter_mut().zip(&input) {
                            *gw += d * xi;
                        }
                    }
                }
                if k > 0 {
                    let mut next = vec![T::zero(); layer.inputs];
                    for o in 0..layer.outputs {
                        let d = delta[o];
                        if d == T::zero() {
                            continue;
                        }
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (nx, &w) in next.iter_mut().zip(row) {
                            *nx += d * w;
                        }
                    }
                    for (nx, &z) in next.iter_mut().zip(&zs[k - 1]) {
                        if z <= T::zero() {
                            *nx = T::zero();
                        }
                    }
                    delta = next;
                }
            }
        }
        let scale = T::one() / T::lit(batch.len().max(1) as f64);
        for v in grad.params_mut() {
            *v *= scale;
        }
        (total * scale, grad)
    }

    pub fn mean_loss(&self, data: &[(Vec<T>, [T; 2])]) -> T {
        let total = data
            .iter()
            .map(|(x, t)| kl_loss(self.forward_features(x), *t))
            .fold(T::zero(), |a, b| a + b);
        total / T::lit(data.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Initial distillation temperature.
    pub rho0: f64,
    /// Per-iteration multiplicative temperature decay.
    pub rho_decay: f64,
    pub rho_min: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            rho0: 0.1,
            rho_decay: 0.95,
            rho_min: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be > 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if !(self.rho_min > 0.0 && self.rho0 >= self.rho_min) {
            return bad("temperatures must satisfy rho0 >= rho_min > 0");
        }
        if !(self.rho_decay > 0.0 && self.rho_decay <= 1.0) {
            return bad("rho decay must be in (0, 1]");
        }
        Ok(())
    }

    /// Distillation temperature used at tuner iteration `i`.
    pub fn rho_at(&self, i: usize) -> f64 {
        (self.rho0 * self.rho_decay.powi(i as i32)).max(self.rho_min)
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome<T> {
    pub net: PolicyNet<T>,
    /// Mean loss over the dataset before training, then after each epoch.
    pub losses: Vec<T>,
    /// Loss of the returned network.
    pub final_loss: T,
}

fn to_batch<T: Scalar>(dataset: &[DistillSample]) -> Vec<(Vec<T>, [T; 2])> {
    dataset
        .iter()
        .map(|s| {
            let x = s.state.features.iter().map(|&v| T::lit(f64::from(v))).collect();
            (x, [T::lit(s.target.probs[0]), T::lit(s.target.probs[1])])
        })
        .collect()
}

/// Mini-batch gradient descent on the mean divergence. The returned network is
/// the lowest-loss one seen, so its loss never exceeds the initial loss.
pub fn fit<T: Scalar>(net: &PolicyNet<T>, dataset: &[DistillSample], cfg: &TrainConfig) -> Result<FitOutcome<T>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let data = to_batch::<T>(dataset);
    let lr = T::lit(cfg.learning_rate);
    let mut rng = rng::stream(cfg.seed, &[tag::TRAIN]);
    let mut order: Vec<usize> = (0..data.len()).collect();

    let mut current = net.clone();
    let initial = current.mean_loss(&data);
    if !initial.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0 });
    }
    let mut losses = vec![initial];
    let mut best = (initial, current.clone());
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (_, grad) = current.loss_and_grad(&batch);
            for (p, g) in current.params_mut().zip(grad.params()) {
                *p -= lr * *g;
            }
        }
        let loss = current.mean_loss(&data);
        if !loss.is_finite() || current.params().any(|p| !p.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        losses.push(loss);
        if loss < best.0 {
            best = (loss, current.clone());
        }
    }
    Ok(FitOutcome { net: best.1, losses, final_loss: best.0 })
}

/// How [`BehaviorPolicy::select_action`] turns a distribution into an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    Greedy,
    /// Draw from the distribution using a stream seeded with this value.
    Sample(u64),
}

/// Frozen network deployed in the compiler.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorPolicy {
    net: PolicyNet<f32>,
    pub version: u32,
    pub source_checkin: u64,
}

impl BehaviorPolicy {
    pub fn freeze(net: &PolicyNet<f32>, version: u32, source_checkin: u64) -> Self {
        BehaviorPolicy { net: net.clone(), version, source_checkin }
    }

    pub fn net(&self) -> &PolicyNet<f32> {
        &self.net
    }

    pub fn distribution(&self, s: &ShaderState) -> Result<[f32; 2]> {
        self.net.forward(s)
    }

    pub fn select_action(&self, s: &ShaderState, mode: SelectMode) -> Result<Action> {
        let p = self.distribution(s)?;
        Ok(match mode {
            SelectMode::Greedy => greedy(p),
            SelectMode::Sample(seed) => {
                let u: f64 = rng::stream(seed, &[]).gen();
                sample(p, u)
            }
        })
    }
}

/// Argmax over the two actions; ties go to the default.
pub fn greedy<T: Scalar>(p: [T; 2]) -> Action {
    if p[0] > p[1] {
        Action::Wave32
    } else {
        Action::Wave64
    }
}

/// Inverse-CDF draw with a uniform `u` in `[0, 1)`.
pub fn sample<T: Scalar>(p: [T; 2], u: f64) -> Action {
    if u < p[0].to_f64_lossy() {
        Action::Wave32
    } else {
        Action::Wave64
    }
}
