use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Tensor;

/// Matrix with orthonormal columns (tall) or rows (wide), scaled by `gain`.
pub fn init_orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Tensor {
    if gain == 0.0 {
        return Tensor::zeros((rows, cols));
    }
    let (n, k) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    // k random n-vectors, orthonormalised by twice-repeated modified Gram-Schmidt
    let mut q: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    for j in 0..k {
        for _ in 0..2 {
            for i in 0..j {
                let dot: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
                let qi = q[i].clone();
                for (x, y) in q[j].iter_mut().zip(&qi) {
                    *x -= dot * y;
                }
            }
        }
        let norm = q[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        q[j].iter_mut().for_each(|x| *x /= norm);
    }
    Tensor::from_shape_fn((rows, cols), |(r, c)| {
        let v = if rows >= cols { q[c][r] } else { q[r][c] };
        gain * v
    })
}

/// Normal samples with `|x| ≤ 2·std`, out-of-range draws resampled.
pub fn init_truncated_normal<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Tensor {
    Tensor::from_shape_simple_fn((rows, cols), || {
        if std == 0.0 {
            return 0.0;
        }
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z.abs() <= 2.0 {
                return z * std;
            }
        }
    })
}

/// Standard deviation of the normal truncated at two standard deviations, relative to the untruncated one.
pub fn truncated_normal_std_ratio() -> f64 {
    // Var = 1 - 2·φ(2)·2 / (2Φ(2) - 1)
    let phi2 = (-2.0f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mass = 0.954_499_736_103_641_6;
    (1.0 - 4.0 * phi2 / mass).sqrt()
}
