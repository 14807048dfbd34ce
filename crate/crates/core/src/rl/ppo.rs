use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{log_prob_graph, ActorCritic};
use super::{PpoConfig, RlError};
use crate::nn::{Adam, Graph, Tensor};

/// Flattened training data of one iteration.
#[derive(Debug, Clone, Default)]
pub struct PpoBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Policy, log-std and value optimizers.
#[derive(Debug, Clone)]
pub struct PpoOptimizers {
    pub policy: Adam,
    pub log_std: Adam,
    pub value: Adam,
}

impl PpoOptimizers {
    pub fn new(cfg: &PpoConfig) -> Self {
        PpoOptimizers {
            policy: Adam::new(cfg.policy_network_learning_rate),
            log_std: Adam::new(cfg.policy_network_learning_rate),
            value: Adam::new(cfg.value_network_learning_rate),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Largest `|ρ − 1|` in the first minibatch of the first epoch.
    pub first_ratio_deviation: f64,
    pub minibatches: usize,
}

/// Clipped surrogate `mean_b min(ρA, clip(ρ, 1−ε, 1+ε)A)` and the per-sample
/// weights `m·A` whose product with `∇ρ` gives its gradient.
pub fn clipped_surrogate(ratio: &[f64], adv: &[f64], eps: f64) -> (f64, Vec<f64>, usize) {
    let mut total = 0.0;
    let mut clipped = 0;
    let weights = ratio
        .iter()
        .zip(adv)
        .map(|(&r, &a)| {
            let unclipped = r * a;
            let c = r.clamp(1.0 - eps, 1.0 + eps) * a;
            total += unclipped.min(c);
            if unclipped <= c || (r >= 1.0 - eps && r <= 1.0 + eps) {
                a
            } else {
                clipped += 1;
                0.0
            }
        })
        .collect();
    (total / ratio.len() as f64, weights, clipped)
}

fn rows(data: &[Vec<f64>], idx: &[usize]) -> Tensor {
    let w = data[idx[0]].len();
    Tensor::from_shape_fn((idx.len(), w), |(r, c)| data[idx[r]][c])
}

/// Policy step on one minibatch. Returns (surrogate, ratios).
fn policy_step(
    ac: &mut ActorCritic,
    opt: &mut PpoOptimizers,
    batch: &PpoBatch,
    idx: &[usize],
    eps: f64,
) -> Result<(f64, Vec<f64>, usize), RlError> {
    let states: Vec<&[f64]> = idx.iter().map(|&i| batch.states[i].as_slice()).collect();
    let x = ac.prepare(&states)?;
    let actions = rows(&batch.actions, idx);
    let mut g = Graph::new();
    let bound = ac.policy.bind(&mut g);
    let ls = g.input(ac.log_std.clone());
    let xv = g.input(x);
    let mean = ac.policy.forward(&mut g, &bound, xv, idx.len())?;
    let lp = log_prob_graph(&mut g, mean, ls, &actions)?;
    let old = Tensor::from_shape_fn((idx.len(), 1), |(r, _)| batch.log_probs[idx[r]]);
    let old = g.input(old);
    let diff = g.sub(lp, old)?;
    let ratio = g.exp(diff);
    let ratios = g.value(ratio).column(0).to_vec();
    let adv: Vec<f64> = idx.iter().map(|&i| batch.advantages[i]).collect();
    let (surrogate, weights, clipped) = clipped_surrogate(&ratios, &adv, eps);
    if !surrogate.is_finite() {
        return Err(RlError::NonFinite(format!("surrogate objective (ratios {:?})", &ratios[..ratios.len().min(4)])));
    }
    let w = g.input(Tensor::from_shape_vec((idx.len(), 1), weights).expect("column"));
    let prod = g.mul(ratio, w)?;
    let sum = g.sum_all(prod);
    let loss = g.scale(sum, -1.0 / idx.len() as f64);
    let mut wrt = bound.vars.clone();
    wrt.push(ls);
    let mut grads = g.backward(loss, &wrt)?;
    let ls_grad = grads.pop().expect("log-std gradient");
    opt.policy.step(&mut ac.policy, &grads)?;
    opt.log_std.step_tensors(std::slice::from_mut(&mut ac.log_std), &[ls_grad])?;
    ac.clamp_log_std();
    Ok((surrogate, ratios, clipped))
}

fn value_step(ac: &mut ActorCritic, opt: &mut PpoOptimizers, batch: &PpoBatch, idx: &[usize]) -> Result<f64, RlError> {
    let states: Vec<&[f64]> = idx.iter().map(|&i| batch.states[i].as_slice()).collect();
    let x = ac.prepare(&states)?;
    let mut g = Graph::new();
    let bound = ac.value.bind(&mut g);
    let xv = g.input(x);
    let v = ac.value.forward(&mut g, &bound, xv, idx.len())?;
    let target = g.input(Tensor::from_shape_fn((idx.len(), 1), |(r, _)| batch.returns[idx[r]]));
    let err = g.sub(v, target)?;
    let sq = g.square(err);
    let loss = g.mean_all(sq);
    let value = g.scalar(loss);
    if !value.is_finite() {
        return Err(RlError::NonFinite("value loss".into()));
    }
    let grads = g.backward(loss, &bound.vars)?;
    opt.value.step(&mut ac.value, &grads)?;
    Ok(value)
}

/// Epochs of shuffled minibatch updates of the policy (clipped surrogate)
/// and the value function (squared error to the returns).
pub fn ppo_update<R: Rng + ?Sized>(
    ac: &mut ActorCritic,
    opt: &mut PpoOptimizers,
    batch: &PpoBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats, RlError> {
    let mut stats = PpoStats::default();
    if batch.is_empty() {
        return Ok(stats);
    }
    let mb = cfg.ppo_batch_size.max(1);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let (mut pl, mut vl, mut clipped, mut kl, mut seen) = (0.0, 0.0, 0usize, 0.0, 0usize);
    for epoch in 0..cfg.ppo_optimization_epochs {
        order.shuffle(rng);
        for (k, idx) in order.chunks(mb).enumerate() {
            let (s, ratios, c) = policy_step(ac, opt, batch, idx, cfg.surrogate_clip_range)?;
            if epoch == 0 && k == 0 {
                stats.first_ratio_deviation = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
            }
            // (ρ − 1) − ln ρ estimates KL(old ‖ new)
            kl += ratios.iter().map(|r| (r - 1.0) - r.ln()).sum::<f64>();
            vl += value_step(ac, opt, batch, idx)? * idx.len() as f64;
            pl += -s * idx.len() as f64;
            clipped += c;
            seen += idx.len();
            stats.minibatches += 1;
        }
    }
    let n = seen.max(1) as f64;
    stats.policy_loss = pl / n;
    stats.value_loss = vl / n;
    stats.clip_fraction = clipped as f64 / n;
    stats.approx_kl = kl / n;
    Ok(stats)
}
