mod common;

use advmimic::adversarial::*;
use advmimic::motion::{generate_procedural_clips, ClipSpec, FeatureKind, PoseNoise, ReferenceSampler};
use advmimic::nn::{grad_norm_penalty, Graph, Init, LayerSpec, Network, Tensor};
use advmimic::physics::CharacterModel;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_cfg(n: usize) -> GanConfig {
    GanConfig {
        ensemble_size: n,
        gru_units: 6,
        hidden_units: vec![5],
        discriminator_batch_size: 8,
        discriminator_replay_buffer_size: 32,
        ..GanConfig::default()
    }
}

fn windows(rng: &mut ChaCha8Rng, count: usize, len: usize, offset: f64) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..len).map(|_| offset + rng.random_range(-1.0..1.0)).collect()).collect()
}

fn refs(w: &[Vec<f64>]) -> Vec<&[f64]> {
    w.iter().map(|v| v.as_slice()).collect()
}

#[test]
fn hinge_loss_tabulated_cases() {
    assert_eq!(hinge_loss_value(&[-1.0], &[1.0]), 0.0);
    assert_eq!(hinge_loss_value(&[0.0], &[0.0]), 2.0);
    assert_eq!(hinge_loss_value(&[-2.0], &[2.0]), 0.0);
    // saturated scores give no gradient
    let mut g = Graph::new();
    let a = g.input(Tensor::from_elem((1, 1), -2.0));
    let r = g.input(Tensor::from_elem((1, 1), 2.0));
    let loss = hinge_loss(&mut g, a, r).unwrap();
    let total = g.sum_all(loss);
    let grads = g.backward(total, &[a, r]).unwrap();
    assert!(grads.iter().all(|t| t.iter().all(|&v| v == 0.0)));
}

#[test]
fn hinge_gradient_in_the_active_region() {
    let mut g = Graph::new();
    let a = g.input(Tensor::from_shape_vec((2, 1), vec![0.5, -3.0]).unwrap());
    let r = g.input(Tensor::from_shape_vec((2, 1), vec![0.25, 4.0]).unwrap());
    let loss = hinge_loss(&mut g, a, r).unwrap();
    assert_eq!(g.value(loss)[[0, 0]], (1.5 + 0.0) / 2.0 + (0.75 + 0.0) / 2.0);
    let total = g.sum_all(loss);
    let grads = g.backward(total, &[a, r]).unwrap();
    assert_eq!(grads[0].column(0).to_vec(), vec![0.5, 0.0]);
    assert_eq!(grads[1].column(0).to_vec(), vec![-0.5, 0.0]);
}

#[test]
fn bce_loss_matches_log_sigmoid() {
    let v = bce_loss_value(&[0.3], &[-0.7]);
    let expected = (1.0f64 + 0.3f64.exp()).ln() + (1.0f64 + 0.7f64.exp()).ln();
    assert!((v - expected).abs() < 1e-14);
}

#[test]
fn linear_head_penalty_is_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let net = Network::new(7, &[LayerSpec::Dense(3)], Init::TruncatedNormal { std: 0.7 }, &mut rng).unwrap();
        let x = Tensor::from_shape_simple_fn((5, 7), || rng.random_range(-2.0..2.0));
        let w = net.params()[0].value.clone();
        for head in 0..3 {
            let norm = w.column(head).iter().map(|v| v * v).sum::<f64>().sqrt();
            let p = grad_norm_penalty(&net, &x, 5, head).unwrap();
            assert!((p - (norm - 1.0).powi(2)).abs() < 1e-12, "{p} vs {}", (norm - 1.0).powi(2));
        }
    }
}

#[test]
fn reward_is_the_clipped_mean_of_head_scores() {
    assert_eq!(clipped_mean(&[0.5, 2.0, -3.0, -0.25]), 0.0625);
    assert_eq!(clipped_mean(&[1.0, 1.0]), 1.0);
    assert_eq!(clipped_mean(&[-7.0]), -1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ens = DiscriminatorEnsemble::new(&small_cfg(4), 3, &mut rng).unwrap();
    common::oracles::constant_output(ens.net_mut(), &[0.5, 2.0, -3.0, -0.25]);
    let w = vec![0.1; ens.window_len()];
    assert_eq!(ens.reward(&w).unwrap(), 0.0625);
}

#[test]
fn heads_share_the_trunk_and_differ_only_in_the_last_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ens = DiscriminatorEnsemble::new(&small_cfg(5), 3, &mut rng).unwrap();
    let ws = windows(&mut rng, 6, ens.window_len(), 0.0);
    let feats = ens.features(&refs(&ws)).unwrap();
    let scores = ens.scores_batch(&refs(&ws)).unwrap();
    for i in 0..5 {
        let (w, b) = ens.head(i);
        for (r, f) in feats.rows().into_iter().enumerate() {
            let oracle: f64 = f.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            assert!((oracle - scores[[r, i]]).abs() < 1e-12);
        }
    }
}

#[test]
fn single_head_ensemble_reduces_to_one_discriminator() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ens = DiscriminatorEnsemble::new(&small_cfg(1), 3, &mut rng).unwrap();
    let w = windows(&mut rng, 1, ens.window_len(), 0.0).remove(0);
    assert_eq!(ens.reward(&w).unwrap(), ens.scores(&w).unwrap()[0].clamp(-1.0, 1.0));
}

#[test]
fn interpolation_endpoints() {
    let a = vec![vec![0.0, 2.0]];
    let r = vec![vec![4.0, -2.0]];
    let m = interpolate_windows(&refs(&a), &refs(&r), &[0.25]);
    assert_eq!(m, vec![vec![1.0, 1.0]]);
    assert_eq!(interpolate_windows(&refs(&a), &refs(&r), &[0.0]), a);
    assert_eq!(interpolate_windows(&refs(&a), &refs(&r), &[1.0]), r);
}

#[test]
fn updates_separate_distinct_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut cfg = small_cfg(3);
    cfg.discriminator_learning_rate = 1e-2;
    cfg.gradient_penalty_coefficient = 0.0;
    let mut ens = DiscriminatorEnsemble::new(&cfg, 3, &mut rng).unwrap();
    let agent = windows(&mut rng, 16, ens.window_len(), -1.0);
    let reference = windows(&mut rng, 16, ens.window_len(), 1.0);
    let (a, r) = (refs(&agent), refs(&reference));
    ens.normalizer_mut().update(a.iter().chain(r.iter()).copied());
    let before = ens.update(&a, &r, &cfg, &mut rng).unwrap().loss;
    for _ in 0..60 {
        ens.update(&a, &r, &cfg, &mut rng).unwrap();
    }
    let after = ens.update(&a, &r, &cfg, &mut rng).unwrap();
    assert!(after.loss < before);
    assert!(after.reference_reward > after.agent_reward);
}

#[test]
fn replay_buffer_is_bounded_and_clears() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut buf = PairBuffer::new(4);
    for i in 0..10 {
        buf.push(vec![i as f64], vec![-(i as f64)], &mut rng);
    }
    assert_eq!(buf.len(), 4);
    // pairs stay aligned through replacement
    for (a, r) in buf.agent().iter().zip(buf.reference()) {
        assert_eq!(a[0], -r[0]);
    }
    buf.clear();
    assert!(buf.is_empty());
}

#[test]
fn config_rejects_bad_values() {
    assert!(GanConfig { ensemble_size: 0, ..GanConfig::default() }.validate().is_err());
    assert!(GanConfig { gradient_penalty_coefficient: -1.0, ..GanConfig::default() }.validate().is_err());
    let cfg = GanConfig::default();
    assert_eq!(cfg.gradient_penalty_coefficient, 10.0);
    assert_eq!(cfg.discriminator_learning_rate, 1e-5);
    assert_eq!(cfg.discriminator_batch_size, 512);
    assert_eq!(cfg.discriminator_replay_buffer_size, 8192);
}

#[test]
fn reference_windows_score_against_noisy_ones() {
    let model = CharacterModel::biped();
    let clips = generate_procedural_clips(&ClipSpec::new("walk"), &model).unwrap();
    let sampler = ReferenceSampler::new(&clips, FeatureKind::Link).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let clean = sampler.sample(&clips, &model, None, &mut rng).unwrap().0.data;
    let noise = PoseNoise::sample(model.num_joints(), 0.3, &mut rng);
    let noisy = sampler.sample(&clips, &model, Some(&noise), &mut rng).unwrap().0.data;
    assert_eq!(clean.len(), noisy.len());
    assert_ne!(clean, noisy);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rewards_stay_in_unit_interval(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ens = DiscriminatorEnsemble::new(&small_cfg(3), 2, &mut rng).unwrap();
        let ws: Vec<Vec<f64>> = (0..4).map(|_| (0..ens.window_len()).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).collect();
        for r in ens.rewards_batch(&refs(&ws)).unwrap() {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn hinge_loss_is_nonnegative_and_zero_only_when_separated(
        a in prop::collection::vec(-3.0f64..3.0, 1..8),
        r in prop::collection::vec(-3.0f64..3.0, 1..8),
    ) {
        let l = hinge_loss_value(&a, &r);
        prop_assert!(l >= 0.0);
        let separated = a.iter().all(|&x| x <= -1.0) && r.iter().all(|&x| x >= 1.0);
        prop_assert_eq!(l == 0.0, separated);
    }

    #[test]
    fn clipped_mean_is_bounded_and_monotone(s in prop::collection::vec(-5.0f64..5.0, 1..10), k in 0usize..10, bump in 0.0f64..3.0) {
        let m = clipped_mean(&s);
        prop_assert!((-1.0..=1.0).contains(&m));
        let mut t = s.clone();
        let i = k % t.len();
        t[i] += bump;
        prop_assert!(clipped_mean(&t) >= m);
    }
}
