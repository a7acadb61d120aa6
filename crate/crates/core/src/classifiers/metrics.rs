use serde::{Deserialize, Serialize};

/// Confusion counts with abnormal as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    /// Hard decisions via `score > threshold`.
    pub fn from_scores(scores: &[f64], abnormal: &[bool], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &y) in scores.iter().zip(abnormal) {
            match (s > threshold, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Precision is undefined (reported as 0) when nothing was flagged.
    pub fn precision_defined(&self) -> bool {
        self.tp + self.fp > 0
    }

    /// Recall is undefined (reported as 0) when there are no positives.
    pub fn recall_defined(&self) -> bool {
        self.tp + self.fn_ > 0
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl EvalMetrics {
    pub fn from_confusion(c: &Confusion) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        Self {
            precision,
            recall,
            f1: f1_score(precision, recall),
            accuracy: ratio(c.tp + c.tn, c.total()),
        }
    }

    /// Metric-wise arithmetic mean.
    pub fn mean(all: &[EvalMetrics]) -> EvalMetrics {
        if all.is_empty() {
            return EvalMetrics::default();
        }
        let n = all.len() as f64;
        let sum = |f: fn(&EvalMetrics) -> f64| all.iter().map(f).sum::<f64>() / n;
        EvalMetrics {
            precision: sum(|m| m.precision),
            recall: sum(|m| m.recall),
            f1: sum(|m| m.f1),
            accuracy: sum(|m| m.accuracy),
        }
    }
}
