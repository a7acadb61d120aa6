//! Binary classifiers producing abnormality scores in `[0, 1]`.
//!
//! Every kind is trained on standardised features; the fitted scaler travels
//! with the model so raw feature rows can be scored directly. Models persist
//! as versioned JSON documents.

mod forest;
mod knn;
mod logistic;
mod metrics;
mod naive_bayes;
mod validation;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use forest::{best_split, ForestParams, Node, RandomForest, SplitChoice, Tree};
pub use knn::{KnnModel, KnnParams};
pub use logistic::{LogisticModel, LogisticParams};
pub use metrics::{f1_score, Confusion, EvalMetrics};
pub use naive_bayes::{ClassStats, GaussianNb, NaiveBayesParams};
pub use validation::{cross_validate, CrossValReport, FoldResult};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeaturizerSpec, Standardizer};
use crate::par;

/// Current model file format.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    Rf,
    Knn,
    Gnb,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Lr, ModelKind::Rf, ModelKind::Knn, ModelKind::Gnb];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Rf => "rf",
            ModelKind::Knn => "knn",
            ModelKind::Gnb => "gnb",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Lr => "LR",
            ModelKind::Rf => "RF",
            ModelKind::Knn => "KNN",
            ModelKind::Gnb => "NB",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lr" | "logistic" | "logistic-regression" => Ok(ModelKind::Lr),
            "rf" | "forest" | "random-forest" => Ok(ModelKind::Rf),
            "knn" | "k-nearest-neighbors" => Ok(ModelKind::Knn),
            "gnb" | "nb" | "naive-bayes" => Ok(ModelKind::Gnb),
            other => Err(Error::param("kind", format!("unknown classifier `{other}`"))),
        }
    }
}

/// Hyperparameters for every kind; only the trained kind's entry is used.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub logistic: LogisticParams,
    pub forest: ForestParams,
    pub knn: KnnParams,
    pub naive_bayes: NaiveBayesParams,
}

impl Hyperparams {
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        match kind {
            ModelKind::Lr => {
                let p = &self.logistic;
                if !(p.learning_rate > 0.0) || !p.learning_rate.is_finite() {
                    return Err(Error::param("learning_rate", "must be positive"));
                }
                if !(p.l2 >= 0.0) {
                    return Err(Error::param("l2", "must be non-negative"));
                }
            }
            ModelKind::Rf => {
                if self.forest.n_trees == 0 {
                    return Err(Error::param("n_trees", "must be at least 1"));
                }
                if self.forest.max_features == Some(0) {
                    return Err(Error::param("max_features", "must be at least 1"));
                }
            }
            ModelKind::Knn => {
                if self.knn.k == 0 {
                    return Err(Error::param("k", "must be at least 1"));
                }
            }
            ModelKind::Gnb => {
                if !(self.naive_bayes.var_smoothing > 0.0) {
                    return Err(Error::param("var_smoothing", "must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Kind-specific learned state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Learned {
    Lr(LogisticModel),
    Rf(RandomForest),
    Knn(KnnModel),
    Gnb(GaussianNb),
}

impl Learned {
    fn score(&self, x: &[f64]) -> f64 {
        match self {
            Learned::Lr(m) => m.score(x),
            Learned::Rf(m) => m.score(x),
            Learned::Knn(m) => m.score(x),
            Learned::Gnb(m) => m.score(x),
        }
    }
}

/// A trained classifier: the scoring function together with everything
/// needed to reproduce and apply it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub seed: u64,
    pub feature_names: Vec<String>,
    /// How the training features were produced, when known.
    #[serde(default)]
    pub featurizer: Option<FeaturizerSpec>,
    pub scaler: Standardizer,
    pub model: Learned,
}

/// Trains `kind` on a labelled matrix. Deterministic in `(matrix, hyperparams, seed)`.
pub fn train(kind: ModelKind, matrix: &FeatureMatrix, hyperparams: &Hyperparams, seed: u64) -> Result<TrainedModel> {
    hyperparams.validate(kind)?;
    let y = matrix.binary_labels()?;
    if y.is_empty() {
        return Err(Error::Empty("training matrix"));
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::SingleClass);
    }
    let scaler = Standardizer::fit(matrix);
    let scaled = scaler.transform(matrix)?;
    let d = scaled.n_features();
    let rows: Vec<f64> = scaled.rows().flatten().copied().collect();
    let model = match kind {
        ModelKind::Lr => Learned::Lr(LogisticModel::fit(&rows, d, &y, hyperparams.logistic)),
        ModelKind::Rf => Learned::Rf(RandomForest::fit(&rows, d, &y, hyperparams.forest, seed)),
        ModelKind::Knn => Learned::Knn(KnnModel::fit(&rows, d, &y, hyperparams.knn)),
        ModelKind::Gnb => Learned::Gnb(GaussianNb::fit(&rows, d, &y, hyperparams.naive_bayes)),
    };
    Ok(TrainedModel {
        format_version: FORMAT_VERSION,
        kind,
        seed,
        feature_names: matrix.names().to_vec(),
        featurizer: None,
        scaler,
        model,
    })
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Abnormality score of one raw (unscaled) feature row.
    pub fn predict_proba(&self, sample: &[f64]) -> Result<f64> {
        if sample.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: sample.len(),
            });
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample".into()));
        }
        let mut x = sample.to_vec();
        self.scaler.apply(&mut x);
        let s = self.model.score(&x);
        Ok(if s.is_nan() { 0.5 } else { s.clamp(0.0, 1.0) })
    }

    /// Scores every row of `matrix`, in row order.
    pub fn predict_batch(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        if matrix.n_features() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: matrix.n_features(),
            });
        }
        par::map_indices(matrix.n_samples(), |i| self.predict_proba(matrix.row(i)))
            .into_iter()
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if header.format_version > FORMAT_VERSION {
            return Err(Error::UnsupportedFormat {
                found: header.format_version,
                supported: FORMAT_VERSION,
            });
        }
        serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Confusion counts and metrics for a held-out matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: Confusion,
    pub metrics: EvalMetrics,
}

/// Evaluates hard decisions `score > threshold` against the matrix labels.
pub fn evaluate(model: &TrainedModel, test: &FeatureMatrix, threshold: f64) -> Result<Evaluation> {
    if test.n_samples() == 0 {
        return Err(Error::Empty("evaluation matrix"));
    }
    let y = test.binary_labels()?;
    let scores = model.predict_batch(test)?;
    let confusion = Confusion::from_scores(&scores, &y, threshold);
    Ok(Evaluation {
        confusion,
        metrics: EvalMetrics::from_confusion(&confusion),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;

    fn separable(n: usize) -> FeatureMatrix {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let abnormal = i % 2 == 1;
            let base = if abnormal { 5.0 } else { -5.0 };
            data.push(base + (i as f64 * 0.37).sin());
            labels.push(Label::from_abnormal(abnormal));
        }
        FeatureMatrix::new(vec!["x".into()], data, labels).unwrap()
    }

    #[test]
    fn every_kind_fits_separable_clusters() {
        let m = separable(60);
        for kind in ModelKind::ALL {
            let model = train(kind, &m, &Hyperparams::default(), 7).unwrap();
            let e = evaluate(&model, &m, 0.5).unwrap();
            assert_eq!(e.metrics.accuracy, 1.0, "{kind}");
        }
    }

    #[test]
    fn single_class_rejected() {
        let m = FeatureMatrix::new(vec!["x".into()], vec![1.0, 2.0], vec![Label::Normal; 2]).unwrap();
        assert!(matches!(train(ModelKind::Rf, &m, &Hyperparams::default(), 0), Err(Error::SingleClass)));
        let u = FeatureMatrix::new(vec!["x".into()], vec![1.0, 2.0], vec![Label::Unlabeled; 2]).unwrap();
        assert!(matches!(train(ModelKind::Lr, &u, &Hyperparams::default(), 0), Err(Error::Unlabeled)));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let model = train(ModelKind::Gnb, &separable(10), &Hyperparams::default(), 0).unwrap();
        assert!(matches!(model.predict_proba(&[1.0, 2.0]), Err(Error::DimensionMismatch { expected: 1, found: 2 })));
    }

    #[test]
    fn gnb_symmetry_point() {
        let m = FeatureMatrix::new(
            vec!["x".into()],
            vec![-2.0, -1.0, 1.0, 2.0],
            vec![Label::Normal, Label::Normal, Label::Abnormal, Label::Abnormal],
        )
        .unwrap();
        let model = train(ModelKind::Gnb, &m, &Hyperparams::default(), 0).unwrap();
        assert_eq!(model.predict_proba(&[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn knn_k1_returns_training_label() {
        let m = separable(20);
        let mut hp = Hyperparams::default();
        hp.knn.k = 1;
        let model = train(ModelKind::Knn, &m, &hp, 0).unwrap();
        for (row, label) in m.rows().zip(m.labels()) {
            let expect = if *label == Label::Abnormal { 1.0 } else { 0.0 };
            assert_eq!(model.predict_proba(row).unwrap(), expect);
        }
    }

    #[test]
    fn zero_logistic_scores_half() {
        let model = TrainedModel {
            format_version: FORMAT_VERSION,
            kind: ModelKind::Lr,
            seed: 0,
            feature_names: vec!["a".into(), "b".into()],
            featurizer: None,
            scaler: Standardizer {
                mean: vec![0.0; 2],
                std: vec![1.0; 2],
            },
            model: Learned::Lr(LogisticModel {
                params: LogisticParams::default(),
                weights: vec![0.0; 2],
                bias: 0.0,
            }),
        };
        assert_eq!(model.predict_proba(&[3.0, -4.0]).unwrap(), 0.5);
    }

    #[test]
    fn newer_format_version_rejected() {
        let model = train(ModelKind::Gnb, &separable(10), &Hyperparams::default(), 0).unwrap();
        let json = model.to_json().unwrap();
        assert_eq!(TrainedModel::from_json(&json).unwrap(), model);
        let bumped = json.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(
            TrainedModel::from_json(&bumped),
            Err(Error::UnsupportedFormat { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn forest_model_files_are_bit_identical() {
        let m = separable(80);
        let a = train(ModelKind::Rf, &m, &Hyperparams::default(), 99).unwrap().to_json().unwrap();
        let b = train(ModelKind::Rf, &m, &Hyperparams::default(), 99).unwrap().to_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("RF".parse::<ModelKind>().unwrap(), ModelKind::Rf);
        assert_eq!("naive-bayes".parse::<ModelKind>().unwrap(), ModelKind::Gnb);
        assert!("svc".parse::<ModelKind>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_matrix() -> impl Strategy<Value = FeatureMatrix> {
            proptest::collection::vec((-50.0..50.0f64, -50.0..50.0f64, any::<bool>()), 6..30).prop_filter_map(
                "both classes",
                |rows| {
                    let n_abn = rows.iter().filter(|r| r.2).count();
                    if n_abn == 0 || n_abn == rows.len() {
                        return None;
                    }
                    let data = rows.iter().flat_map(|r| [r.0, r.1]).collect();
                    let labels = rows.iter().map(|r| Label::from_abnormal(r.2)).collect();
                    FeatureMatrix::new(vec!["a".into(), "b".into()], data, labels).ok()
                },
            )
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn scores_stay_in_unit_interval(m in random_matrix(), q in proptest::collection::vec(-1e6..1e6f64, 2)) {
                let mut hp = Hyperparams::default();
                hp.forest.n_trees = 5;
                hp.logistic.epochs = 50;
                for kind in ModelKind::ALL {
                    let model = train(kind, &m, &hp, 1).unwrap();
                    let s = model.predict_proba(&q).unwrap();
                    prop_assert!((0.0..=1.0).contains(&s), "{} gave {}", kind, s);
                }
            }
        }
    }
}
