//! Independent reference implementations shared by the test suites.

use advmimic::nn::*;
use advmimic::physics::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEPS: usize = 3;
pub const BATCH: usize = 4;
pub const INPUT: usize = 3;

pub fn small_net(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = [LayerSpec::Gru(5), LayerSpec::Dense(4), LayerSpec::Relu, LayerSpec::Dense(2)];
    let mut net = Network::new(INPUT, &specs, Init::Orthogonal { gain: 1.0 }, &mut rng).unwrap();
    // non-zero biases so every parameter matters
    for p in net.params().iter().map(|p| p.name.clone()).collect::<Vec<_>>() {
        if p.ends_with(".b") {
            let shape = net.param(&p).unwrap().dim();
            net.set_param(&p, Tensor::from_shape_simple_fn(shape, || rng.random_range(-0.5..0.5))).unwrap();
        }
    }
    net
}

pub fn random_input(seed: u64, rows: usize, cols: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    Tensor::from_shape_simple_fn((rows, cols), || rng.random_range(-1.5..1.5))
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)` over all entries of all tensors.
pub fn relative_error(a: &[Tensor], b: &[Tensor]) -> f64 {
    let (mut diff, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        for (p, q) in x.iter().zip(y.iter()) {
            diff += (p - q) * (p - q);
            na += p * p;
            nb += q * q;
        }
    }
    diff.sqrt() / na.sqrt().max(nb.sqrt()).max(1e-300)
}


/// Weighted output sum, so every output entry contributes differently.
pub fn weighted_loss(net: &Network, x: &Tensor, coef: &Tensor) -> f64 {
    (net.infer(x, BATCH).unwrap() * coef).sum()
}

pub fn analytic_gradient(net: &Network, x: &Tensor, coef: &Tensor) -> Vec<Tensor> {
    let mut g = Graph::new();
    let bound = net.bind(&mut g);
    let xv = g.input(x.clone());
    let y = net.forward(&mut g, &bound, xv, BATCH).unwrap();
    let c = g.input(coef.clone());
    let prod = g.mul(y, c).unwrap();
    let loss = g.sum_all(prod);
    g.backward(loss, &bound.vars).unwrap()
}

pub fn numeric_gradient(net: &Network, f: impl Fn(&Network) -> f64, h: f64) -> Vec<Tensor> {
    let mut probe = net.clone();
    (0..net.params().len())
        .map(|i| {
            let shape = net.params()[i].value.dim();
            let mut grad = Tensor::zeros(shape);
            for k in 0..grad.len() {
                let orig = probe.param_mut(i).as_slice().unwrap()[k];
                probe.param_mut(i).as_slice_mut().unwrap()[k] = orig + h;
                let plus = f(&probe);
                probe.param_mut(i).as_slice_mut().unwrap()[k] = orig - h;
                let minus = f(&probe);
                probe.param_mut(i).as_slice_mut().unwrap()[k] = orig;
                grad.as_slice_mut().unwrap()[k] = (plus - minus) / (2.0 * h);
            }
            grad
        })
        .collect()
}


/// 3×3 homogeneous transforms composed link by link, independent of the
/// library's recursion.
pub fn chain_oracle(model: &CharacterModel, state: &SimState) -> Vec<[f64; 2]> {
    type H = [[f64; 3]; 3];
    fn mul(a: &H, b: &H) -> H {
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }
    fn rot(t: f64) -> H {
        [[t.cos(), -t.sin(), 0.0], [t.sin(), t.cos(), 0.0], [0.0, 0.0, 1.0]]
    }
    fn trans(x: f64, z: f64) -> H {
        [[1.0, 0.0, x], [0.0, 1.0, z], [0.0, 0.0, 1.0]]
    }
    let mut frames: Vec<Option<H>> = vec![None; model.num_links()];
    frames[0] = Some(mul(&trans(state.root_pos[0], state.root_pos[1]), &rot(state.root_angle)));
    while frames.iter().any(|f| f.is_none()) {
        for (j, joint) in model.joints.iter().enumerate() {
            if let (Some(parent), None) = (frames[joint.parent], frames[joint.child]) {
                let at_joint = mul(&parent, &trans(joint.parent_anchor[0], joint.parent_anchor[1]));
                let rotated = mul(&at_joint, &rot(state.q[j]));
                frames[joint.child] = Some(mul(&rotated, &trans(-joint.child_anchor[0], -joint.child_anchor[1])));
            }
        }
    }
    frames.into_iter().map(|f| { let f = f.unwrap(); [f[0][2], f[1][2]] }).collect()
}

pub fn random_state(model: &CharacterModel, rng: &mut ChaCha8Rng) -> SimState {
    let mut s = SimState::rest(model, [rng.random_range(-5.0..5.0), rng.random_range(0.5..3.0)]);
    s.root_angle = rng.random_range(-3.0..3.0);
    for (j, joint) in model.joints.iter().enumerate() {
        s.q[j] = rng.random_range(joint.limits[0]..joint.limits[1]);
    }
    s
}

/// Advantages as explicit discounted sums of TD errors, cut at terminations.
pub fn gae_brute_force(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let live = |t: usize| if dones[t] { 0.0 } else { 1.0 };
    let delta = |t: usize| rewards[t] + gamma * values[t + 1] * live(t) - values[t];
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut weight = 1.0;
            for k in t..n {
                sum += weight * delta(k);
                weight *= gamma * lambda * live(k);
            }
            sum
        })
        .collect()
}

/// Zeroes the last layer's weights and sets its bias, so every output is `c`.
pub fn constant_output(net: &mut Network, c: &[f64]) {
    let names: Vec<String> = net.params().iter().map(|p| p.name.clone()).collect();
    let (w, b) = (&names[names.len() - 2], &names[names.len() - 1]);
    let shape = net.param(w).unwrap().dim();
    net.set_param(w, Tensor::zeros(shape)).unwrap();
    net.set_param(b, Tensor::from_shape_vec((1, c.len()), c.to_vec()).unwrap()).unwrap();
}
