use serde::{Deserialize, Serialize};

use super::{train, Confusion, EvalMetrics, Hyperparams, ModelKind};
use crate::data::stratified_kfold;
use crate::error::Result;
use crate::features::FeatureMatrix;
use crate::par;

/// Hard-decision threshold used inside cross-validation.
pub const CROSS_VALIDATION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub confusion: Confusion,
    pub metrics: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub kind: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub mean: EvalMetrics,
}

/// Stratified k-fold cross-validation. Each fold trains on the remaining
/// folds (scaler fitted on those rows only) and evaluates at 0.5.
pub fn cross_validate(
    kind: ModelKind,
    matrix: &FeatureMatrix,
    k: usize,
    hyperparams: &Hyperparams,
    seed: u64,
) -> Result<CrossValReport> {
    hyperparams.validate(kind)?;
    let y = matrix.binary_labels()?;
    let folds = stratified_kfold(&y, k, seed)?;
    let results: Vec<Result<FoldResult>> = par::map_indices(k, |f| {
        let test_idx = &folds[f];
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        let train_m = matrix.select(&train_idx);
        let test_m = matrix.select(test_idx);
        let model = train(kind, &train_m, hyperparams, seed)?;
        let scores = model.predict_batch(&test_m)?;
        let test_y: Vec<bool> = test_idx.iter().map(|&i| y[i]).collect();
        let confusion = Confusion::from_scores(&scores, &test_y, CROSS_VALIDATION_THRESHOLD);
        Ok(FoldResult {
            fold: f,
            train_size: train_idx.len(),
            test_size: test_idx.len(),
            confusion,
            metrics: EvalMetrics::from_confusion(&confusion),
        })
    });
    let folds: Vec<FoldResult> = results.into_iter().collect::<Result<_>>()?;
    let mean = EvalMetrics::mean(&folds.iter().map(|f| f.metrics).collect::<Vec<_>>());
    Ok(CrossValReport {
        kind,
        k,
        seed,
        folds,
        mean,
    })
}
