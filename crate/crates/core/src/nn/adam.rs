use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{Network, NnError, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    #[serde(skip)]
    m: Vec<Tensor>,
    #[serde(skip)]
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// One update of every parameter of `net` with `grads` (same order as `net.params()`).
    pub fn step(&mut self, net: &mut Network, grads: &[Tensor]) -> Result<(), NnError> {
        let names: Vec<String> = net.params().iter().map(|p| p.name.clone()).collect();
        self.check(&names, &net.params().iter().map(|p| p.value.dim()).collect::<Vec<_>>(), grads)?;
        self.advance();
        for (i, g) in grads.iter().enumerate() {
            self.apply(i, net.param_mut(i), g);
        }
        Ok(())
    }

    /// The same update on free-standing tensors.
    pub fn step_tensors(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), NnError> {
        let names: Vec<String> = (0..params.len()).map(|i| format!("tensor {i}")).collect();
        self.check(&names, &params.iter().map(|p| p.dim()).collect::<Vec<_>>(), grads)?;
        self.advance();
        for (i, g) in grads.iter().enumerate() {
            self.apply(i, &mut params[i], g);
        }
        Ok(())
    }

    fn check(&mut self, names: &[String], shapes: &[(usize, usize)], grads: &[Tensor]) -> Result<(), NnError> {
        if grads.len() != shapes.len() {
            return Err(NnError::Shape(format!("{} gradients for {} parameters", grads.len(), shapes.len())));
        }
        if self.m.len() != grads.len() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.dim())).collect();
            self.v = self.m.clone();
        }
        for (i, g) in grads.iter().enumerate() {
            if g.dim() != shapes[i] || g.dim() != self.m[i].dim() {
                return Err(NnError::Shape(format!("gradient {i} has shape {:?}", g.dim())));
            }
            if !g.iter().all(|v| v.is_finite()) {
                return Err(NnError::NonFinite(names[i].clone()));
            }
        }
        Ok(())
    }

    fn advance(&mut self) {
        self.t += 1;
    }

    fn apply(&mut self, i: usize, p: &mut Tensor, g: &Tensor) {
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let (lr, eps) = (self.lr, self.eps);
        Zip::from(p).and(&mut self.m[i]).and(&mut self.v[i]).and(g).for_each(|p, m, v, &g| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        });
    }
}
