use rand::Rng;
use rand_distr::StandardNormal;

use super::{PpoConfig, RlError};
use crate::motion::STATE_FRAMES;
use crate::nn::{stack_sequences, Graph, Init, LayerSpec, Network, NnError, RunningNormalizer, Tensor, Var};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// Gaussian policy, value function and the state normalizer they share.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub policy: Network,
    /// `1 × action_dim`, independent of the state.
    pub log_std: Tensor,
    pub value: Network,
    pub normalizer: RunningNormalizer,
    frames: usize,
}

fn trunk(cfg: &PpoConfig, out: usize) -> Vec<LayerSpec> {
    let mut specs = vec![LayerSpec::Gru(cfg.policy_gru_units)];
    for &h in &cfg.policy_hidden_units {
        specs.push(LayerSpec::Dense(h));
        specs.push(LayerSpec::Relu);
    }
    specs.push(LayerSpec::Dense(out));
    specs
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        cfg: &PpoConfig,
        frame_width: usize,
        action_dim: usize,
        rng: &mut R,
    ) -> Result<Self, RlError> {
        let init = Init::TruncatedNormal { std: cfg.initial_weight_std };
        let policy = Network::new(frame_width, &trunk(cfg, action_dim), init, rng)?;
        let value = Network::new(frame_width, &trunk(cfg, 1), init, rng)?;
        Ok(ActorCritic {
            policy,
            log_std: Tensor::from_elem((1, action_dim), cfg.initial_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)),
            value,
            normalizer: RunningNormalizer::new(STATE_FRAMES * frame_width),
            frames: STATE_FRAMES,
        })
    }

    pub fn from_parts(policy: Network, log_std: Tensor, value: Network, normalizer: RunningNormalizer) -> Self {
        let frames = normalizer.dim() / policy.input_dim().max(1);
        ActorCritic { policy, log_std, value, normalizer, frames }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.ncols()
    }

    pub fn frame_width(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn state_len(&self) -> usize {
        self.frames * self.frame_width()
    }

    /// Normalized state windows in the time-major network layout.
    pub fn prepare(&self, states: &[&[f64]]) -> Result<Tensor, RlError> {
        for s in states {
            if s.len() != self.state_len() {
                return Err(RlError::Shape(format!("state has {} features, expected {}", s.len(), self.state_len())));
            }
        }
        let normed: Vec<Vec<f64>> = states.iter().map(|s| self.normalizer.normalize(s)).collect();
        let refs: Vec<&[f64]> = normed.iter().map(|v| v.as_slice()).collect();
        Ok(stack_sequences(&refs, self.frames, self.frame_width()))
    }

    /// Action means, one row per state.
    pub fn means(&self, states: &[&[f64]]) -> Result<Tensor, RlError> {
        let x = self.prepare(states)?;
        Ok(self.policy.infer(&x, states.len())?)
    }

    pub fn values(&self, states: &[&[f64]]) -> Result<Vec<f64>, RlError> {
        if states.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.prepare(states)?;
        Ok(self.value.infer(&x, states.len())?.column(0).to_vec())
    }

    /// Diagonal-Gaussian log densities of `actions` (rows) under `means`.
    pub fn log_probs(&self, means: &Tensor, actions: &Tensor) -> Result<Vec<f64>, RlError> {
        let mut g = Graph::new();
        let m = g.input(means.clone());
        let ls = g.input(self.log_std.clone());
        let lp = log_prob_graph(&mut g, m, ls, actions)?;
        Ok(g.value(lp).column(0).to_vec())
    }

    /// Samples one action per state; returns actions and their log densities.
    pub fn act<R: Rng + ?Sized>(
        &self,
        states: &[&[f64]],
        rngs: &mut [&mut R],
    ) -> Result<(Tensor, Vec<f64>), RlError> {
        let means = self.means(states)?;
        let actions = sample_actions(&means, &self.log_std, rngs);
        let lp = self.log_probs(&means, &actions)?;
        Ok((actions, lp))
    }

    /// Projects the log-std back into its allowed range.
    pub fn clamp_log_std(&mut self) {
        self.log_std.mapv_inplace(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }
}

/// `mean + exp(log_std) ⊙ ε` row by row, each row drawing from its own stream.
pub fn sample_actions<R: Rng + ?Sized>(means: &Tensor, log_std: &Tensor, rngs: &mut [&mut R]) -> Tensor {
    let mut a = means.clone();
    for (mut row, rng) in a.rows_mut().into_iter().zip(rngs.iter_mut()) {
        for (j, v) in row.iter_mut().enumerate() {
            let eps: f64 = rng.sample(StandardNormal);
            *v += log_std[[0, j]].exp() * eps;
        }
    }
    a
}

/// Single-state convenience: action and log density.
pub fn sample_action<R: Rng + ?Sized>(mean: &[f64], log_std: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
    let a: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(m, ls)| {
            let eps: f64 = rng.sample(StandardNormal);
            m + ls.exp() * eps
        })
        .collect();
    let lp = gaussian_log_prob(&a, mean, log_std);
    (a, lp)
}

/// Diagonal-Gaussian log density.
pub fn gaussian_log_prob(a: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    a.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((x, m), ls)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LOG_TWO_PI
        })
        .sum()
}

/// Log densities as a `batch × 1` column on the tape, differentiable in the
/// means and the log-std row.
pub fn log_prob_graph(g: &mut Graph, mean: Var, log_std: Var, actions: &Tensor) -> Result<Var, NnError> {
    let (b, d) = g.shape(mean);
    let a = g.input(actions.clone());
    let diff = g.sub(a, mean)?;
    let sq = g.square(diff);
    let two = g.scale(log_std, -2.0);
    let inv_var = g.exp(two);
    let scaled = g.mul_row(sq, inv_var)?;
    let quad = g.sum_cols(scaled);
    let quad = g.scale(quad, -0.5);
    let ls_sum = g.sum_all(log_std);
    let ls_col = g.broadcast_scalar(ls_sum, b, 1);
    let lp = g.sub(quad, ls_col)?;
    Ok(g.affine(lp, 1.0, -(d as f64) * HALF_LOG_TWO_PI))
}
