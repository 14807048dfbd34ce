//! Input-gradient norm penalty `(‖∇ₓ f(x)‖₂ − 1)²` and its parameter gradient.

use super::graph::{Graph, Tensor, Var};
use super::network::Network;
use super::NnError;

/// Keeps the norm differentiable where the input gradient vanishes.
const NORM_EPS: f64 = 1e-12;

/// Per-sample input-gradient norms of output column `head`, as a `batch × 1` column.
///
/// Rows of `x` belonging to one sample (all time steps of a sequence) are
/// treated as one flattened input.
pub fn input_gradient_norms(
    g: &mut Graph,
    x: Var,
    out: Var,
    batch: usize,
    head: usize,
) -> Result<Var, NnError> {
    let d = g.slice_cols(out, head, 1)?;
    let total = g.sum_all(d);
    let gx = g.grad(total, &[x], None)?[0];
    let sq = g.square(gx);
    let rows = g.sum_cols(sq);
    let steps = g.shape(rows).0 / batch;
    let mut acc = g.slice_rows(rows, 0, batch)?;
    for t in 1..steps {
        let part = g.slice_rows(rows, t * batch, batch)?;
        acc = g.add(acc, part)?;
    }
    let shifted = g.affine(acc, 1.0, NORM_EPS);
    Ok(g.sqrt(shifted))
}

/// Mean over the batch of `(norm − 1)²`, recorded on the tape.
pub fn penalty_from_norms(g: &mut Graph, norms: Var) -> Var {
    let dev = g.affine(norms, 1.0, -1.0);
    let sq = g.square(dev);
    g.mean_all(sq)
}

fn check_head(net: &Network, head: usize) -> Result<(), NnError> {
    if head >= net.output_dim() {
        return Err(NnError::Shape(format!("head {head} of {}", net.output_dim())));
    }
    Ok(())
}

/// Penalty value of output `head` on input `x`.
pub fn grad_norm_penalty(net: &Network, x: &Tensor, batch: usize, head: usize) -> Result<f64, NnError> {
    check_head(net, head)?;
    let mut g = Graph::new();
    let bound = net.bind(&mut g);
    let xv = g.input(x.clone());
    let out = net.forward(&mut g, &bound, xv, batch)?;
    let norms = input_gradient_norms(&mut g, xv, out, batch, head)?;
    let pen = penalty_from_norms(&mut g, norms);
    Ok(g.scalar(pen))
}

/// Penalty value and its exact gradient with respect to every parameter
/// (double backpropagation).
pub fn grad_norm_penalty_backward(
    net: &Network,
    x: &Tensor,
    batch: usize,
    head: usize,
) -> Result<(f64, Vec<Tensor>), NnError> {
    check_head(net, head)?;
    let mut g = Graph::new();
    let bound = net.bind(&mut g);
    let xv = g.input(x.clone());
    let out = net.forward(&mut g, &bound, xv, batch)?;
    let norms = input_gradient_norms(&mut g, xv, out, batch, head)?;
    let pen = penalty_from_norms(&mut g, norms);
    let grads = g.backward(pen, &bound.vars)?;
    Ok((g.scalar(pen), grads))
}

/// The same gradient by central differences over every parameter entry.
/// Slow; meant as a cross-check on small networks.
pub fn grad_norm_penalty_finite_difference(
    net: &Network,
    x: &Tensor,
    batch: usize,
    head: usize,
    h: f64,
) -> Result<(f64, Vec<Tensor>), NnError> {
    let value = grad_norm_penalty(net, x, batch, head)?;
    let mut probe = net.clone();
    let mut grads = Vec::with_capacity(net.params().len());
    for i in 0..net.params().len() {
        let shape = net.params()[i].value.dim();
        let mut grad = Tensor::zeros(shape);
        for k in 0..grad.len() {
            let orig = probe.param_mut(i).as_slice().expect("contiguous")[k];
            probe.param_mut(i).as_slice_mut().expect("contiguous")[k] = orig + h;
            let plus = grad_norm_penalty(&probe, x, batch, head)?;
            probe.param_mut(i).as_slice_mut().expect("contiguous")[k] = orig - h;
            let minus = grad_norm_penalty(&probe, x, batch, head)?;
            probe.param_mut(i).as_slice_mut().expect("contiguous")[k] = orig;
            grad.as_slice_mut().expect("contiguous")[k] = (plus - minus) / (2.0 * h);
        }
        grads.push(grad);
    }
    Ok((value, grads))
}
