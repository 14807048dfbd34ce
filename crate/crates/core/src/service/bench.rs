use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::NetworkRecord;
use super::ServiceError;
use crate::nn::{LayerSpec, Network};
use crate::rl::PolicyBundle;

/// Parameters implied by a layer stack.
pub fn count_params(input: usize, specs: &[LayerSpec]) -> usize {
    let mut width = input;
    let mut total = 0;
    for s in specs {
        match *s {
            // input weights, two recurrent blocks and biases for three gates
            LayerSpec::Gru(h) => {
                total += 3 * width * h + 3 * h * h + 3 * h;
                width = h;
            }
            LayerSpec::Dense(n) => {
                total += width * n + n;
                width = n;
            }
            _ => {}
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub trials: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
}

impl LatencyStats {
    fn of(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        LatencyStats { trials: samples.len(), mean_ms: mean, std_ms: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub policy_params: usize,
    pub value_params: usize,
    pub ensemble_params: usize,
    pub ensemble_heads: usize,
    /// Bytes of the JSON parameter records.
    pub policy_bytes: usize,
    pub ensemble_bytes: usize,
    pub policy_latency: LatencyStats,
    pub ensemble_latency: LatencyStats,
}

fn params_of(net: &Network) -> usize {
    net.params().iter().map(|p| p.value.len()).sum()
}

/// Single-sample forward passes of the policy and of the whole ensemble,
/// timed separately over `trials` random inputs.
pub fn bench(bundle: &PolicyBundle, trials: usize, seed: u64) -> Result<BenchReport, ServiceError> {
    if trials == 0 {
        return Err(ServiceError::Input("bench needs at least one trial".into()));
    }
    let policy = &bundle.actor.policy;
    let net = bundle.ensemble.net();
    if params_of(policy) == 0 || params_of(net) == 0 {
        return Err(ServiceError::Input(format!("bundle `{}` has no parameters", bundle.name)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state_len = bundle.actor.normalizer.dim();
    let window_len = bundle.ensemble.window_len();
    let mut time = |len: usize, f: &dyn Fn(&[f64]) -> Result<(), ServiceError>| -> Result<LatencyStats, ServiceError> {
        let mut samples = Vec::with_capacity(trials);
        for _ in 0..trials {
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t0 = Instant::now();
            f(&x)?;
            samples.push(t0.elapsed().as_secs_f64() * 1e3);
        }
        Ok(LatencyStats::of(&samples))
    };
    let policy_latency = time(state_len, &|x| {
        std::hint::black_box(bundle.act(x)?);
        Ok(())
    })?;
    let ensemble_latency = time(window_len, &|x| {
        std::hint::black_box(bundle.ensemble.scores(x).map_err(crate::rl::RlError::from)?);
        Ok(())
    })?;
    Ok(BenchReport {
        policy_params: params_of(policy),
        value_params: params_of(&bundle.actor.value),
        ensemble_params: params_of(net),
        ensemble_heads: bundle.ensemble.num_heads(),
        policy_bytes: serde_json::to_string(&NetworkRecord::of(policy)).map(|s| s.len()).unwrap_or(0),
        ensemble_bytes: serde_json::to_string(&NetworkRecord::of(net)).map(|s| s.len()).unwrap_or(0),
        policy_latency,
        ensemble_latency,
    })
}
