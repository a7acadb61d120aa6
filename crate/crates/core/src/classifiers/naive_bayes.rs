use serde::{Deserialize, Serialize};

use super::logistic::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NaiveBayesParams {
    /// Variance floor as a fraction of the largest per-feature variance.
    pub var_smoothing: f64,
}

impl Default for NaiveBayesParams {
    fn default() -> Self {
        Self { var_smoothing: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub log_prior: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub params: NaiveBayesParams,
    pub normal: ClassStats,
    pub abnormal: ClassStats,
}

fn moments(rows: &[f64], d: usize, keep: impl Fn(usize) -> bool) -> (usize, Vec<f64>, Vec<f64>) {
    let mut n = 0usize;
    let mut mean = vec![0.0; d];
    for (i, row) in rows.chunks_exact(d).enumerate() {
        if keep(i) {
            n += 1;
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
    }
    let nf = n.max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![0.0; d];
    for (i, row) in rows.chunks_exact(d).enumerate() {
        if keep(i) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
    }
    var.iter_mut().for_each(|s| *s /= nf);
    (n, mean, var)
}

impl GaussianNb {
    pub fn fit(rows: &[f64], d: usize, y: &[bool], params: NaiveBayesParams) -> Self {
        let (_, _, all_var) = moments(rows, d, |_| true);
        let max_var = all_var.iter().cloned().fold(0.0, f64::max);
        let floor = if max_var > 0.0 {
            params.var_smoothing * max_var
        } else {
            params.var_smoothing
        };
        let total = y.len() as f64;
        let class = |target: bool| {
            let (n, mean, mut var) = moments(rows, d, |i| y[i] == target);
            var.iter_mut().for_each(|v| *v += floor);
            ClassStats {
                log_prior: (n as f64 / total).ln(),
                mean,
                var,
            }
        };
        Self {
            params,
            normal: class(false),
            abnormal: class(true),
        }
    }

    fn log_joint(c: &ClassStats, x: &[f64]) -> f64 {
        let mut ll = c.log_prior;
        for ((v, m), var) in x.iter().zip(&c.mean).zip(&c.var) {
            ll -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (v - m) * (v - m) / var);
        }
        ll
    }

    /// Posterior probability of the abnormal class.
    pub fn score(&self, x: &[f64]) -> f64 {
        let diff = Self::log_joint(&self.abnormal, x) - Self::log_joint(&self.normal, x);
        if diff.is_nan() {
            0.5
        } else {
            sigmoid(diff)
        }
    }
}
