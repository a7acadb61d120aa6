use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Brute-force Euclidean nearest neighbours over the (standardised) training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub params: KnnParams,
    pub dim: usize,
    pub rows: Vec<f64>,
    pub labels: Vec<bool>,
}

impl KnnModel {
    pub fn fit(rows: &[f64], d: usize, y: &[bool], params: KnnParams) -> Self {
        Self {
            params,
            dim: d,
            rows: rows.to_vec(),
            labels: y.to_vec(),
        }
    }

    /// Fraction of the `k` nearest training points labelled abnormal.
    /// Distance ties keep the earlier training point.
    pub fn score(&self, x: &[f64]) -> f64 {
        let k = self.params.k.min(self.labels.len()).max(1);
        // (distance², index), kept sorted ascending
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, row) in self.rows.chunks_exact(self.dim).enumerate() {
            let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.len() == k && !(d2 < best[k - 1].0) {
                continue;
            }
            let pos = best.partition_point(|&(bd, _)| bd <= d2);
            best.insert(pos, (d2, i));
            best.truncate(k);
        }
        let hits = best.iter().filter(|&&(_, i)| self.labels[i]).count();
        hits as f64 / best.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_neighbour_with_k1() {
        let rows = [0.0, 0.0, 1.0, 1.0, 5.0, 5.0];
        let y = [false, true, false];
        let m = KnnModel::fit(&rows, 2, &y, KnnParams { k: 1 });
        for (i, label) in y.iter().enumerate() {
            let s = m.score(&rows[i * 2..i * 2 + 2]);
            assert_eq!(s, if *label { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn ties_prefer_training_order() {
        let rows = [1.0, -1.0];
        let m = KnnModel::fit(&rows, 1, &[true, false], KnnParams { k: 1 });
        assert_eq!(m.score(&[0.0]), 1.0);
        let m = KnnModel::fit(&rows, 1, &[false, true], KnnParams { k: 1 });
        assert_eq!(m.score(&[0.0]), 0.0);
    }

    #[test]
    fn k_larger_than_training_set() {
        let m = KnnModel::fit(&[0.0, 1.0, 2.0], 1, &[true, false, false], KnnParams { k: 10 });
        assert!((m.score(&[0.0]) - 1.0 / 3.0).abs() < 1e-15);
    }
}
