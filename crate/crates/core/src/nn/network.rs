use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Tensor, Var};
use super::init::{init_orthogonal, init_truncated_normal};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    /// Gated recurrent unit over the input sequence; emits the last hidden state.
    Gru(usize),
    Dense(usize),
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Orthogonal { gain: f64 },
    TruncatedNormal { std: f64 },
    Zeros,
}

impl Init {
    fn sample<R: Rng + ?Sized>(self, rows: usize, cols: usize, rng: &mut R) -> Tensor {
        match self {
            Init::Orthogonal { gain } => init_orthogonal(rows, cols, gain, rng),
            Init::TruncatedNormal { std } => init_truncated_normal(rows, cols, std, rng),
            Init::Zeros => Tensor::zeros((rows, cols)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Arc<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    /// Parameter indices: `w` is `in × 3H` (update, reset, candidate),
    /// `u_zr` is `H × 2H`, `u_h` is `H × H`, `b` is `1 × 3H`.
    Gru { hidden: usize, w: usize, u_zr: usize, u_h: usize, b: usize },
    Dense { w: usize, b: usize },
    Relu,
    Tanh,
}

/// Feed-forward stack with an optional leading GRU.
///
/// Sequence inputs are stacked time-major: rows `t·B .. (t+1)·B` hold step `t`
/// of a batch of `B` sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input: usize,
    output: usize,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    params: Vec<Param>,
}

/// Parameters of a [`Network`] placed on a graph.
#[derive(Debug, Clone)]
pub struct Bound {
    pub vars: Vec<Var>,
}

impl Network {
    /// Builds a network; `init` is used for every weight matrix, biases start at zero.
    pub fn new<R: Rng + ?Sized>(input: usize, specs: &[LayerSpec], init: Init, rng: &mut R) -> Result<Self, NnError> {
        let mut params = Vec::new();
        let mut layers = Vec::new();
        let mut width = input;
        for (i, spec) in specs.iter().enumerate() {
            let mut add = |name: String, value: Tensor| {
                params.push(Param { name, value: Arc::new(value) });
                params.len() - 1
            };
            match *spec {
                LayerSpec::Gru(h) => {
                    if i != 0 {
                        return Err(NnError::Shape("a GRU layer must come first".into()));
                    }
                    let mut w = Tensor::zeros((width, 3 * h));
                    let mut u_zr = Tensor::zeros((h, 2 * h));
                    for gate in 0..3 {
                        w.slice_mut(ndarray::s![.., gate * h..(gate + 1) * h]).assign(&init.sample(width, h, rng));
                    }
                    for gate in 0..2 {
                        u_zr.slice_mut(ndarray::s![.., gate * h..(gate + 1) * h]).assign(&init.sample(h, h, rng));
                    }
                    let u_h = init.sample(h, h, rng);
                    layers.push(Layer::Gru {
                        hidden: h,
                        w: add(format!("{i}.gru.w"), w),
                        u_zr: add(format!("{i}.gru.u_zr"), u_zr),
                        u_h: add(format!("{i}.gru.u_h"), u_h),
                        b: add(format!("{i}.gru.b"), Tensor::zeros((1, 3 * h))),
                    });
                    width = h;
                }
                LayerSpec::Dense(out) => {
                    let w = add(format!("{i}.dense.w"), init.sample(width, out, rng));
                    let b = add(format!("{i}.dense.b"), Tensor::zeros((1, out)));
                    layers.push(Layer::Dense { w, b });
                    width = out;
                }
                LayerSpec::Relu => layers.push(Layer::Relu),
                LayerSpec::Tanh => layers.push(Layer::Tanh),
            }
        }
        Ok(Network { input, output: width, specs: specs.to_vec(), layers, params })
    }

    /// Rebuilds a network from its layer specs and named parameter values.
    /// Every parameter must be present with the shape the specs imply.
    pub fn from_params(input: usize, specs: &[LayerSpec], params: Vec<(String, Tensor)>) -> Result<Self, NnError> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut net = Network::new(input, specs, Init::Zeros, &mut rng)?;
        if params.len() != net.params.len() {
            return Err(NnError::Shape(format!("{} parameters given, layers need {}", params.len(), net.params.len())));
        }
        for (name, value) in params {
            net.set_param(&name, value)?;
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn output_dim(&self) -> usize {
        self.output
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.layers.first(), Some(Layer::Gru { .. }))
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &*p.value)
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Replaces a parameter; the shape must match.
    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<(), NnError> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| NnError::MissingParam(name.to_string()))?;
        if p.value.dim() != value.dim() {
            return Err(NnError::Shape(format!("{name}: {:?} vs {:?}", p.value.dim(), value.dim())));
        }
        p.value = Arc::new(value);
        Ok(())
    }

    pub fn param_mut(&mut self, index: usize) -> &mut Tensor {
        Arc::make_mut(&mut self.params[index].value)
    }

    /// Puts the parameters on the graph as leaves (shared, not copied).
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound { vars: self.params.iter().map(|p| g.input_shared(p.value.clone())).collect() }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Forward pass. For recurrent networks `x` is `T·batch × input`, otherwise `batch × input`.
    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: Var, batch: usize) -> Result<Var, NnError> {
        self.forward_layers(g, bound, x, batch, self.layers.len())
    }

    /// Forward pass through the first `upto` layers only.
    pub fn forward_layers(&self, g: &mut Graph, bound: &Bound, x: Var, batch: usize, upto: usize) -> Result<Var, NnError> {
        let (rows, cols) = g.shape(x);
        if cols != self.input {
            return Err(NnError::Shape(format!("input width {cols}, network expects {}", self.input)));
        }
        let p = |i: usize| bound.vars[i];
        let mut h = x;
        for layer in &self.layers[..upto] {
            h = match *layer {
                Layer::Gru { hidden, w, u_zr, u_h, b } => {
                    if batch == 0 || rows % batch != 0 {
                        return Err(NnError::Shape(format!("{rows} rows is not a whole number of steps of {batch}")));
                    }
                    let steps = rows / batch;
                    // slice the (small) weights per gate rather than the (large)
                    // activations, so the backward pass never pads batch-sized tensors
                    let gate_w: Vec<Var> = (0..3).map(|k| g.slice_cols(p(w), k * hidden, hidden)).collect::<Result<_, _>>()?;
                    let gate_b: Vec<Var> = (0..3).map(|k| g.slice_cols(p(b), k * hidden, hidden)).collect::<Result<_, _>>()?;
                    let uz = g.slice_cols(p(u_zr), 0, hidden)?;
                    let ur = g.slice_cols(p(u_zr), hidden, hidden)?;
                    let mut state: Option<Var> = None;
                    for t in 0..steps {
                        let xt = if steps == 1 { h } else { g.slice_rows(h, t * batch, batch)? };
                        let mut proj = |k: usize| -> Result<Var, NnError> {
                            let y = g.matmul(xt, gate_w[k])?;
                            g.add_row(y, gate_b[k])
                        };
                        let (xz, xr, xh) = (proj(0)?, proj(1)?, proj(2)?);
                        state = Some(match state {
                            // zero initial state: the recurrent terms vanish
                            None => {
                                let z = g.sigmoid(xz);
                                let cand = g.tanh(xh);
                                g.mul(z, cand)?
                            }
                            Some(prev) => {
                                let hz = g.matmul(prev, uz)?;
                                let hr = g.matmul(prev, ur)?;
                                let zs = g.add(xz, hz)?;
                                let z = g.sigmoid(zs);
                                let rs = g.add(xr, hr)?;
                                let r = g.sigmoid(rs);
                                let rh = g.mul(r, prev)?;
                                let rhu = g.matmul(rh, p(u_h))?;
                                let cs = g.add(xh, rhu)?;
                                let cand = g.tanh(cs);
                                // (1 - z) h + z h~ = h + z (h~ - h)
                                let diff = g.sub(cand, prev)?;
                                let step = g.mul(z, diff)?;
                                g.add(prev, step)?
                            }
                        });
                    }
                    state.expect("at least one step")
                }
                Layer::Dense { w, b } => {
                    let y = g.matmul(h, p(w))?;
                    g.add_row(y, p(b))?
                }
                Layer::Relu => g.relu(h),
                Layer::Tanh => g.tanh(h),
            };
        }
        Ok(h)
    }

    /// Forward pass without keeping a tape.
    pub fn infer(&self, x: &Tensor, batch: usize) -> Result<Tensor, NnError> {
        self.infer_layers(x, batch, self.layers.len())
    }

    pub fn infer_layers(&self, x: &Tensor, batch: usize, upto: usize) -> Result<Tensor, NnError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xv = g.input(x.clone());
        let y = self.forward_layers(&mut g, &bound, xv, batch, upto)?;
        Ok(g.value(y).clone())
    }
}

/// Stacks `batch` sequences, each `steps × width` row-major, into the time-major layout.
pub fn stack_sequences(seqs: &[&[f64]], steps: usize, width: usize) -> Tensor {
    let batch = seqs.len();
    Tensor::from_shape_fn((steps * batch, width), |(r, c)| {
        let (t, b) = (r / batch, r % batch);
        seqs[b][t * width + c]
    })
}
