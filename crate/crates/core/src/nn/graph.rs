//! Eager tape of 2-D tensor operations with reverse-mode differentiation.
//!
//! Gradients are themselves recorded as graph operations, so a gradient can
//! be differentiated again (needed for input-gradient penalties).

use std::sync::Arc;

use ndarray::{s, Array2, Zip};

use super::NnError;

pub type Tensor = Array2<f64>;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Affine { a: Var, scale: f64 },
    Sigmoid(Var),
    Tanh(Var),
    /// ReLU; the gradient uses the stored 0/1 mask as a constant.
    Relu { a: Var, mask: Var },
    Square(Var),
    Sqrt(Var),
    Recip(Var),
    Exp(Var),
    Softplus(Var),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    BroadcastScalar(Var),
    BroadcastRows(Var),
    BroadcastCols(Var),
    Slice { a: Var, r0: usize, c0: usize },
    Pad { a: Var, r0: usize, c0: usize },
}

#[derive(Debug, Clone)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
}

/// Records operations as they are evaluated.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Elementwise `f(a, b)` for equal shapes, on plain slices when both are row-major.
fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    match (a.as_slice(), b.as_slice()) {
        (Some(x), Some(y)) => {
            let v: Vec<f64> = x.iter().zip(y).map(|(&p, &q)| f(p, q)).collect();
            Tensor::from_shape_vec(a.dim(), v).expect("same shape")
        }
        _ => Zip::from(a).and(b).map_collect(|&p, &q| f(p, q)),
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    t.dim()
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Current tape position, for [`Graph::truncate`].
    pub fn mark(&self) -> usize {
        self.nodes.len()
    }

    /// Drops every node recorded after `mark`.
    pub fn truncate(&mut self, mark: usize) {
        self.nodes.truncate(mark);
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Arc::new(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        dims(&self.nodes[v.0].value)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// A leaf. Leaves only receive gradients when listed in `wrt`.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A leaf sharing storage with `value` (no copy).
    pub fn input_shared(&mut self, value: Arc<Tensor>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn constant_like(&mut self, v: Var, c: f64) -> Var {
        let (r, k) = self.shape(v);
        self.input(Tensor::from_elem((r, k), c))
    }

    fn check_same(&self, a: Var, b: Var, op: &str) -> Result<(), NnError> {
        if self.shape(a) != self.shape(b) {
            return Err(NnError::Shape(format!("{op}: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var, NnError> {
        let (av, bv) = (self.value(a), self.value(b));
        let av = if ta { av.t() } else { av.view() };
        let bv = if tb { bv.t() } else { bv.view() };
        if av.ncols() != bv.nrows() {
            return Err(NnError::Shape(format!("matmul: {:?} x {:?}", av.dim(), bv.dim())));
        }
        // always row-major, so elementwise ops downstream stay on the contiguous path
        let mut out = Tensor::zeros((av.nrows(), bv.ncols()));
        ndarray::linalg::general_mat_mul(1.0, &av, &bv, 0.0, &mut out);
        Ok(self.push(out, Op::MatMul { a, b, ta, tb }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.matmul_t(a, b, false, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.check_same(a, b, "add")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.check_same(a, b, "sub")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.check_same(a, b, "mul")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    fn check_row(&self, a: Var, row: Var, op: &str) -> Result<(), NnError> {
        let ca = self.shape(a).1;
        if self.shape(row) != (1, ca) {
            return Err(NnError::Shape(format!("{op}: {:?} with row {:?}", self.shape(a), self.shape(row))));
        }
        Ok(())
    }

    /// `a + row`, broadcasting the `1 × m` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NnError> {
        self.check_row(a, row, "add_row")?;
        let out = self.value(a) + self.value(row);
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// `a ⊙ row`, broadcasting the `1 × m` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var, NnError> {
        self.check_row(a, row, "mul_row")?;
        let out = self.value(a) * self.value(row);
        Ok(self.push(out, Op::MulRow(a, row)))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(a).mapv(|x| scale * x + shift);
        self.push(out, Op::Affine { a, scale })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.affine(a, c, 0.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mask = self.value(a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
        let out = self.value(a).mapv(|x| x.max(0.0));
        let mask = self.input(mask);
        self.push(out, Op::Relu { a, mask })
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x * x);
        self.push(out, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::sqrt);
        self.push(out, Op::Sqrt(a))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| 1.0 / x);
        self.push(out, Op::Recip(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::exp);
        self.push(out, Op::Exp(a))
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(softplus);
        self.push(out, Op::Softplus(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Tensor::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Column sums as a `1 × m` row.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let out = self.value(a).sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
        self.push(out, Op::SumRows(a))
    }

    /// Row sums as an `n × 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let out = self.value(a).sum_axis(ndarray::Axis(1)).insert_axis(ndarray::Axis(1));
        self.push(out, Op::SumCols(a))
    }

    pub fn broadcast_scalar(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let out = Tensor::from_elem((rows, cols), self.scalar(a));
        self.push(out, Op::BroadcastScalar(a))
    }

    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Var {
        let v = self.value(a);
        let out = v.broadcast((rows, v.ncols())).expect("1 x m row").to_owned();
        self.push(out, Op::BroadcastRows(a))
    }

    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Var {
        let v = self.value(a);
        let out = v.broadcast((v.nrows(), cols)).expect("n x 1 column").to_owned();
        self.push(out, Op::BroadcastCols(a))
    }

    pub fn slice(&mut self, a: Var, r0: usize, nr: usize, c0: usize, nc: usize) -> Result<Var, NnError> {
        let (rows, cols) = self.shape(a);
        if r0 + nr > rows || c0 + nc > cols {
            return Err(NnError::Shape(format!("slice [{r0}+{nr}, {c0}+{nc}] of {rows}x{cols}")));
        }
        let out = self.value(a).slice(s![r0..r0 + nr, c0..c0 + nc]).to_owned();
        Ok(self.push(out, Op::Slice { a, r0, c0 }))
    }

    pub fn slice_cols(&mut self, a: Var, c0: usize, nc: usize) -> Result<Var, NnError> {
        let rows = self.shape(a).0;
        self.slice(a, 0, rows, c0, nc)
    }

    pub fn slice_rows(&mut self, a: Var, r0: usize, nr: usize) -> Result<Var, NnError> {
        let cols = self.shape(a).1;
        self.slice(a, r0, nr, 0, cols)
    }

    /// Embeds `a` into a zero `rows × cols` tensor at `(r0, c0)`.
    pub fn pad(&mut self, a: Var, r0: usize, c0: usize, rows: usize, cols: usize) -> Var {
        let (nr, nc) = self.shape(a);
        let mut out = Tensor::zeros((rows, cols));
        out.slice_mut(s![r0..r0 + nr, c0..c0 + nc]).assign(self.value(a));
        self.push(out, Op::Pad { a, r0, c0 })
    }

    fn accumulate(&mut self, grads: &mut [Option<Var>], target: Var, g: Var) {
        grads[target.0] = Some(match grads[target.0] {
            None => g,
            Some(prev) => self.add(prev, g).expect("gradient shapes agree"),
        });
    }

    /// Gradients of `out` with respect to each of `wrt`, recorded on the tape.
    ///
    /// `seed` is the upstream gradient (same shape as `out`); ones when `None`.
    /// Variables that `out` does not depend on receive a zero gradient.
    pub fn grad(&mut self, out: Var, wrt: &[Var], seed: Option<Var>) -> Result<Vec<Var>, NnError> {
        let n = out.0 + 1;
        let mut needed = vec![false; n];
        for w in wrt {
            if w.0 < n {
                needed[w.0] = true;
            }
        }
        for i in 0..n {
            if needed[i] {
                continue;
            }
            needed[i] = parents(self.nodes[i].op).iter().flatten().any(|p| needed[p.0]);
        }
        let seed = match seed {
            Some(s) => {
                self.check_same(s, out, "grad seed")?;
                s
            }
            None => self.constant_like(out, 1.0),
        };
        let mut grads: Vec<Option<Var>> = vec![None; n];
        grads[out.0] = Some(seed);
        for i in (0..n).rev() {
            let g = match grads[i] {
                Some(g) if needed[i] => g,
                _ => continue,
            };
            let op = self.nodes[i].op;
            let y = Var(i);
            let need = |v: Var| needed[v.0];
            match op {
                Op::Leaf => {}
                Op::MatMul { a, b, ta, tb } => {
                    if need(a) {
                        let ga = match (ta, tb) {
                            (false, false) => self.matmul_t(g, b, false, true)?,
                            (false, true) => self.matmul_t(g, b, false, false)?,
                            (true, false) => self.matmul_t(b, g, false, true)?,
                            (true, true) => self.matmul_t(b, g, true, true)?,
                        };
                        self.accumulate(&mut grads, a, ga);
                    }
                    if need(b) {
                        let gb = match (ta, tb) {
                            (false, false) => self.matmul_t(a, g, true, false)?,
                            (false, true) => self.matmul_t(g, a, true, false)?,
                            (true, false) => self.matmul_t(a, g, false, false)?,
                            (true, true) => self.matmul_t(g, a, true, true)?,
                        };
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::Add(a, b) => {
                    if need(a) {
                        self.accumulate(&mut grads, a, g);
                    }
                    if need(b) {
                        self.accumulate(&mut grads, b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if need(a) {
                        self.accumulate(&mut grads, a, g);
                    }
                    if need(b) {
                        let gb = self.scale(g, -1.0);
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::Mul(a, b) => {
                    if need(a) {
                        let ga = self.mul(g, b)?;
                        self.accumulate(&mut grads, a, ga);
                    }
                    if need(b) {
                        let gb = self.mul(g, a)?;
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::AddRow(a, row) => {
                    if need(a) {
                        self.accumulate(&mut grads, a, g);
                    }
                    if need(row) {
                        let gr = self.sum_rows(g);
                        self.accumulate(&mut grads, row, gr);
                    }
                }
                Op::MulRow(a, row) => {
                    if need(a) {
                        let ga = self.mul_row(g, row)?;
                        self.accumulate(&mut grads, a, ga);
                    }
                    if need(row) {
                        let prod = self.mul(g, a)?;
                        let gr = self.sum_rows(prod);
                        self.accumulate(&mut grads, row, gr);
                    }
                }
                Op::Affine { a, scale } => {
                    let ga = self.scale(g, scale);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Sigmoid(a) => {
                    // σ' = y (1 - y)
                    let one_minus = self.affine(y, -1.0, 1.0);
                    let d = self.mul(y, one_minus)?;
                    let ga = self.mul(g, d)?;
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Tanh(a) => {
                    let sq = self.square(y);
                    let d = self.affine(sq, -1.0, 1.0);
                    let ga = self.mul(g, d)?;
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Relu { a, mask } => {
                    let ga = self.mul(g, mask)?;
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Square(a) => {
                    let two_a = self.scale(a, 2.0);
                    let ga = self.mul(g, two_a)?;
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Sqrt(a) => {
                    let r = self.recip(y);
                    let d = self.scale(r, 0.5);
                    let ga = self.mul(g, d)?;
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Recip(a) => {
                    let sq = self.square(y);
                    let d = self.scale(sq, -1.0);
                    let ga = self.mul(g, d)?;
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Exp(a) => {
                    let ga = self.mul(g, y)?;
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Softplus(a) => {
                    let d = self.sigmoid(a);
                    let ga = self.mul(g, d)?;
                    self.accumulate(&mut grads, a, ga);
                }
                Op::SumAll(a) => {
                    let (r, c) = self.shape(a);
                    let ga = self.broadcast_scalar(g, r, c);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::SumRows(a) => {
                    let r = self.shape(a).0;
                    let ga = self.broadcast_rows(g, r);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::SumCols(a) => {
                    let c = self.shape(a).1;
                    let ga = self.broadcast_cols(g, c);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::BroadcastScalar(a) => {
                    let ga = self.sum_all(g);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::BroadcastRows(a) => {
                    let ga = self.sum_rows(g);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::BroadcastCols(a) => {
                    let ga = self.sum_cols(g);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Slice { a, r0, c0 } => {
                    let (rows, cols) = self.shape(a);
                    let ga = self.pad(g, r0, c0, rows, cols);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Pad { a, r0, c0 } => {
                    let (nr, nc) = self.shape(a);
                    let ga = self.slice(g, r0, nr, c0, nc)?;
                    self.accumulate(&mut grads, a, ga);
                }
            }
        }
        let mut result = Vec::with_capacity(wrt.len());
        for w in wrt {
            result.push(match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => self.constant_like(*w, 0.0),
            });
        }
        Ok(result)
    }

    /// Numeric gradients of the scalar `out`; the recorded backward nodes are
    /// discarded afterwards.
    pub fn backward(&mut self, out: Var, wrt: &[Var]) -> Result<Vec<Tensor>, NnError> {
        if self.shape(out) != (1, 1) {
            return Err(NnError::Shape(format!("backward needs a scalar output, got {:?}", self.shape(out))));
        }
        let mark = self.mark();
        let gs = self.grad(out, wrt, None)?;
        let values = gs.iter().map(|g| self.value(*g).clone()).collect();
        self.truncate(mark);
        Ok(values)
    }
}

fn parents(op: Op) -> [Option<Var>; 2] {
    match op {
        Op::Leaf => [None, None],
        Op::MatMul { a, b, .. } | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) | Op::MulRow(a, b) => {
            [Some(a), Some(b)]
        }
        Op::Affine { a, .. }
        | Op::Sigmoid(a)
        | Op::Tanh(a)
        | Op::Relu { a, .. }
        | Op::Square(a)
        | Op::Sqrt(a)
        | Op::Recip(a)
        | Op::Exp(a)
        | Op::Softplus(a)
        | Op::SumAll(a)
        | Op::SumRows(a)
        | Op::SumCols(a)
        | Op::BroadcastScalar(a)
        | Op::BroadcastRows(a)
        | Op::BroadcastCols(a)
        | Op::Slice { a, .. }
        | Op::Pad { a, .. } => [Some(a), None],
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `‖a‖` over all entries.
pub fn frobenius(a: &Tensor) -> f64 {
    let mut s = 0.0;
    Zip::from(a).for_each(|x| s += x * x);
    s.sqrt()
}
