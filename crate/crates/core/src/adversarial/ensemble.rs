use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{clipped_mean, head_loss, LossKind};
use super::GanError;
use crate::motion::{FeatureKind, OBSERVATION_FRAMES};
use crate::nn::{
    input_gradient_norms, penalty_from_norms, stack_sequences, Adam, Init, LayerSpec, Network, RunningNormalizer,
    Tensor,
};

/// Discriminator hyperparameters. Defaults follow the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub loss: LossKind,
    pub gradient_penalty_coefficient: f64,
    pub discriminator_learning_rate: f64,
    pub discriminator_batch_size: usize,
    pub discriminator_replay_buffer_size: usize,
    pub ensemble_size: usize,
    pub gru_units: usize,
    pub hidden_units: Vec<usize>,
    pub observation: FeatureKind,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            loss: LossKind::Hinge,
            gradient_penalty_coefficient: 10.0,
            discriminator_learning_rate: 1e-5,
            discriminator_batch_size: 512,
            discriminator_replay_buffer_size: 8192,
            ensemble_size: 32,
            gru_units: 256,
            hidden_units: vec![256, 128],
            observation: FeatureKind::Link,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |field: &str, reason: &str| Err(GanError::Config { field: field.into(), reason: reason.into() });
        if !(self.gradient_penalty_coefficient >= 0.0 && self.gradient_penalty_coefficient.is_finite()) {
            return bad("gradient_penalty_coefficient", "must be finite and non-negative");
        }
        if !(self.discriminator_learning_rate > 0.0 && self.discriminator_learning_rate.is_finite()) {
            return bad("discriminator_learning_rate", "must be positive");
        }
        if self.discriminator_batch_size < 2 {
            return bad("discriminator_batch_size", "must be at least 2");
        }
        if self.discriminator_replay_buffer_size == 0 {
            return bad("discriminator_replay_buffer_size", "must be positive");
        }
        if self.ensemble_size == 0 {
            return bad("ensemble_size", "must be at least 1");
        }
        if self.gru_units == 0 || self.hidden_units.contains(&0) {
            return bad("hidden_units", "layer widths must be positive");
        }
        Ok(())
    }

    /// Layer stack: GRU, then ReLU dense layers, then one scalar output per head.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut specs = vec![LayerSpec::Gru(self.gru_units)];
        for &h in &self.hidden_units {
            specs.push(LayerSpec::Dense(h));
            specs.push(LayerSpec::Relu);
        }
        specs.push(LayerSpec::Dense(self.ensemble_size));
        specs
    }
}

/// Losses and diagnostics of one discriminator update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    /// `(1/N) Σ (L_i + λ·GP_i)`.
    pub loss: f64,
    pub head_losses: Vec<f64>,
    pub head_penalties: Vec<f64>,
    /// Mean input-gradient norm at the interpolated points, over heads and samples.
    pub grad_norm_mean: f64,
    pub agent_reward: f64,
    pub reference_reward: f64,
}

/// `N` scalar heads over a shared recurrent trunk, with its own input
/// normalizer and optimizer.
#[derive(Debug, Clone)]
pub struct DiscriminatorEnsemble {
    net: Network,
    normalizer: RunningNormalizer,
    optimizer: Adam,
    frames: usize,
    frame_width: usize,
}

impl DiscriminatorEnsemble {
    pub fn new<R: Rng + ?Sized>(cfg: &GanConfig, frame_width: usize, rng: &mut R) -> Result<Self, GanError> {
        cfg.validate()?;
        let net = Network::new(frame_width, &cfg.layer_specs(), Init::Orthogonal { gain: 1.0 }, rng)?;
        Ok(Self::from_parts(net, RunningNormalizer::new(OBSERVATION_FRAMES * frame_width), cfg.discriminator_learning_rate))
    }

    pub fn from_parts(net: Network, normalizer: RunningNormalizer, lr: f64) -> Self {
        let frame_width = net.input_dim();
        let frames = normalizer.dim() / frame_width.max(1);
        DiscriminatorEnsemble { net, normalizer, optimizer: Adam::new(lr), frames, frame_width }
    }

    pub fn num_heads(&self) -> usize {
        self.net.output_dim()
    }

    pub fn frame_width(&self) -> usize {
        self.frame_width
    }

    pub fn window_len(&self) -> usize {
        self.frames * self.frame_width
    }

    pub fn net(&self) -> &Network {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn normalizer(&self) -> &RunningNormalizer {
        &self.normalizer
    }

    pub fn normalizer_mut(&mut self) -> &mut RunningNormalizer {
        &mut self.normalizer
    }

    pub fn optimizer(&self) -> &Adam {
        &self.optimizer
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.optimizer.lr = lr;
    }

    /// Weight column and bias of head `i`.
    pub fn head(&self, i: usize) -> (Vec<f64>, f64) {
        let last = self.net.params().len();
        let w = &self.net.params()[last - 2].value;
        let b = &self.net.params()[last - 1].value;
        (w.column(i).to_vec(), b[[0, i]])
    }

    fn check(&self, windows: &[&[f64]]) -> Result<(), GanError> {
        for w in windows {
            if w.len() != self.window_len() {
                return Err(GanError::Width { expected: self.window_len(), found: w.len() });
            }
        }
        Ok(())
    }

    /// Normalized windows in the network's time-major layout.
    pub fn prepare(&self, windows: &[&[f64]]) -> Result<Tensor, GanError> {
        self.check(windows)?;
        let normed: Vec<Vec<f64>> = windows.iter().map(|w| self.normalizer.normalize(w)).collect();
        let refs: Vec<&[f64]> = normed.iter().map(|v| v.as_slice()).collect();
        Ok(stack_sequences(&refs, self.frames, self.frame_width))
    }

    /// Raw scores, one row per window and one column per head.
    pub fn scores_batch(&self, windows: &[&[f64]]) -> Result<Tensor, GanError> {
        if windows.is_empty() {
            return Ok(Tensor::zeros((0, self.num_heads())));
        }
        let x = self.prepare(windows)?;
        Ok(self.net.infer(&x, windows.len())?)
    }

    pub fn scores(&self, window: &[f64]) -> Result<Vec<f64>, GanError> {
        Ok(self.scores_batch(&[window])?.row(0).to_vec())
    }

    /// Trunk output (everything before the heads).
    pub fn features(&self, windows: &[&[f64]]) -> Result<Tensor, GanError> {
        let x = self.prepare(windows)?;
        Ok(self.net.infer_layers(&x, windows.len(), self.net.num_layers() - 1)?)
    }

    /// Mean of the head scores clipped to `[-1, 1]`.
    pub fn reward(&self, window: &[f64]) -> Result<f64, GanError> {
        Ok(clipped_mean(&self.scores(window)?))
    }

    pub fn rewards_batch(&self, windows: &[&[f64]]) -> Result<Vec<f64>, GanError> {
        let s = self.scores_batch(windows)?;
        Ok(s.rows().into_iter().map(|r| clipped_mean(r.as_slice().expect("row-major scores"))).collect())
    }

    /// Per-sample input-gradient norms of each head, `batch × N`, with respect
    /// to the normalized window.
    pub fn input_gradient_norms(&self, windows: &[&[f64]]) -> Result<Tensor, GanError> {
        let b = windows.len();
        let mut result = Tensor::zeros((b, self.num_heads()));
        if b == 0 {
            return Ok(result);
        }
        let mut g = crate::nn::Graph::new();
        let bound = self.net.bind(&mut g);
        let x = g.input(self.prepare(windows)?);
        let out = self.net.forward(&mut g, &bound, x, b)?;
        let mark = g.mark();
        for head in 0..self.num_heads() {
            let norms = input_gradient_norms(&mut g, x, out, b, head)?;
            result.column_mut(head).assign(&g.value(norms).column(0));
            g.truncate(mark);
        }
        Ok(result)
    }

    /// Ensemble loss and its parameter gradients for one minibatch of agent
    /// and reference windows. `alphas[k]` blends pair `k` for the penalty.
    pub fn loss_and_gradients(
        &self,
        agent: &[&[f64]],
        reference: &[&[f64]],
        alphas: &[f64],
        loss: LossKind,
        gp_coef: f64,
    ) -> Result<(UpdateReport, Vec<Tensor>), GanError> {
        let b = agent.len();
        if b == 0 || reference.len() != b || alphas.len() != b {
            return Err(GanError::Batch { agent: b, reference: reference.len() });
        }
        let n = self.num_heads();
        let mut g = crate::nn::Graph::new();
        let bound = self.net.bind(&mut g);
        let base = g.mark();

        let both: Vec<&[f64]> = agent.iter().chain(reference).copied().collect();
        let x = g.input(self.prepare(&both)?);
        let out = self.net.forward(&mut g, &bound, x, 2 * b)?;
        let da = g.slice_rows(out, 0, b)?;
        let dr = g.slice_rows(out, b, b)?;
        let per_head = head_loss(&mut g, loss, da, dr)?;
        let head_losses = g.value(per_head).row(0).to_vec();
        let scores = g.value(out).clone();
        let total = g.mean_all(per_head);
        let mut grads = g.backward(total, &bound.vars)?;
        g.truncate(base);

        let mut head_penalties = vec![0.0; n];
        let mut norm_sum = 0.0;
        if gp_coef > 0.0 {
            let mixed = interpolate_windows(agent, reference, alphas);
            let refs: Vec<&[f64]> = mixed.iter().map(|v| v.as_slice()).collect();
            let xi = g.input(self.prepare(&refs)?);
            let out = self.net.forward(&mut g, &bound, xi, b)?;
            let mark = g.mark();
            for head in 0..n {
                let norms = input_gradient_norms(&mut g, xi, out, b, head)?;
                norm_sum += g.value(norms).sum();
                let pen = penalty_from_norms(&mut g, norms);
                head_penalties[head] = g.scalar(pen);
                let scaled = g.scale(pen, gp_coef / n as f64);
                for (acc, gi) in grads.iter_mut().zip(g.backward(scaled, &bound.vars)?) {
                    *acc += &gi;
                }
                g.truncate(mark);
            }
        }
        let loss_value = head_losses.iter().zip(&head_penalties).map(|(l, p)| l + gp_coef * p).sum::<f64>() / n as f64;
        let clip_mean_rows = |r0: usize| {
            (r0..r0 + b).map(|r| clipped_mean(scores.row(r).as_slice().expect("row-major"))).sum::<f64>() / b as f64
        };
        let report = UpdateReport {
            loss: loss_value,
            head_losses,
            head_penalties,
            grad_norm_mean: if gp_coef > 0.0 { norm_sum / (n * b) as f64 } else { f64::NAN },
            agent_reward: clip_mean_rows(0),
            reference_reward: clip_mean_rows(b),
        };
        Ok((report, grads))
    }

    /// One optimizer step on a minibatch, with fresh uniform blend factors.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        agent: &[&[f64]],
        reference: &[&[f64]],
        cfg: &GanConfig,
        rng: &mut R,
    ) -> Result<UpdateReport, GanError> {
        let alphas: Vec<f64> = (0..agent.len()).map(|_| rng.random::<f64>()).collect();
        let (report, grads) =
            self.loss_and_gradients(agent, reference, &alphas, cfg.loss, cfg.gradient_penalty_coefficient)?;
        if !report.loss.is_finite() {
            return Err(GanError::NonFinite("discriminator loss".into()));
        }
        self.optimizer.step(&mut self.net, &grads)?;
        Ok(report)
    }

    /// Folds every window of the buffer into the input statistics.
    pub fn update_normalizer(&mut self, buffer: &super::PairBuffer) {
        let rows = buffer.agent().iter().chain(buffer.reference()).map(|w| w.as_slice());
        self.normalizer.update(rows);
    }

    /// One pass over the buffer: statistics update, then shuffled minibatches
    /// of `batch / 2` pairs (so each step sees `batch` windows).
    pub fn train_on_buffer<R: Rng + ?Sized>(
        &mut self,
        buffer: &super::PairBuffer,
        cfg: &GanConfig,
        rng: &mut R,
    ) -> Result<Vec<UpdateReport>, GanError> {
        if buffer.is_empty() {
            return Ok(Vec::new());
        }
        self.update_normalizer(buffer);
        let half = (cfg.discriminator_batch_size / 2).max(1);
        let mut order: Vec<usize> = (0..buffer.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
        let mut reports = Vec::new();
        for chunk in order.chunks(half) {
            let agent: Vec<&[f64]> = chunk.iter().map(|&i| buffer.agent()[i].as_slice()).collect();
            let reference: Vec<&[f64]> = chunk.iter().map(|&i| buffer.reference()[i].as_slice()).collect();
            reports.push(self.update(&agent, &reference, cfg, rng)?);
        }
        Ok(reports)
    }
}

/// `α·reference + (1 − α)·agent`, pair by pair.
pub fn interpolate_windows(agent: &[&[f64]], reference: &[&[f64]], alphas: &[f64]) -> Vec<Vec<f64>> {
    agent
        .iter()
        .zip(reference)
        .zip(alphas)
        .map(|((a, r), &alpha)| a.iter().zip(r.iter()).map(|(x, y)| alpha * y + (1.0 - alpha) * x).collect())
        .collect()
}
