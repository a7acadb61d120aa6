use serde::{Deserialize, Serialize};

use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub params: LogisticParams,
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    /// Full-batch gradient descent on mean log-loss with an L2 penalty on the weights.
    pub fn fit(rows: &[f64], d: usize, y: &[bool], params: LogisticParams) -> Self {
        let n = y.len();
        let mut weights = vec![0.0; d];
        let mut bias = 0.0;
        for _ in 0..params.epochs {
            let grad = par::ordered_vec_sum(n, d + 1, |i, acc| {
                let x = &rows[i * d..(i + 1) * d];
                let z = bias + dot(&weights, x);
                let err = sigmoid(z) - if y[i] { 1.0 } else { 0.0 };
                for (a, v) in acc[..d].iter_mut().zip(x) {
                    *a += err * v;
                }
                acc[d] += err;
            });
            let inv_n = 1.0 / n as f64;
            for (w, g) in weights.iter_mut().zip(&grad[..d]) {
                *w -= params.learning_rate * (g * inv_n + params.l2 * *w);
            }
            bias -= params.learning_rate * grad[d] * inv_n;
        }
        Self {
            params,
            weights,
            bias,
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.bias + dot(&self.weights, x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
