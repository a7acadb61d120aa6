//! Threshold detector over classifier scores, per-class score histograms,
//! and detection-margin analysis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifiers::TrainedModel;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Histogram resolution used when none is given.
pub const DEFAULT_BINS: usize = 50;

/// Margins evaluated by [`tune_threshold`] when none are supplied.
pub const DEFAULT_MARGINS: [Margin; 4] = [
    Margin { lo: 0.4, hi: 0.5 },
    Margin { lo: 0.3, hi: 0.5 },
    Margin { lo: 0.4, hi: 0.6 },
    Margin { lo: 0.3, hi: 0.6 },
];

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param(name, format!("{v} is outside [0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Normal,
    Abnormal,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Normal => "normal",
            Decision::Abnormal => "abnormal",
        })
    }
}

/// Strict rule: only scores above the threshold are abnormal.
pub fn decide(score: f64, threshold: f64) -> Decision {
    if score > threshold {
        Decision::Abnormal
    } else {
        Decision::Normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub score: f64,
    pub decision: Decision,
}

impl Verdict {
    pub fn new(score: f64, threshold: f64) -> Self {
        Self {
            score,
            decision: decide(score, threshold),
        }
    }
}

/// A trained scorer paired with its alarm threshold.
#[derive(Debug, Clone)]
pub struct Detector<'a> {
    model: &'a TrainedModel,
    threshold: f64,
}

impl<'a> Detector<'a> {
    pub fn new(model: &'a TrainedModel, threshold: f64) -> Result<Self> {
        check_unit("threshold", threshold)?;
        Ok(Self { model, threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn model(&self) -> &TrainedModel {
        self.model
    }

    pub fn detect(&self, sample: &[f64]) -> Result<Verdict> {
        Ok(Verdict::new(self.model.predict_proba(sample)?, self.threshold))
    }

    pub fn detect_batch(&self, matrix: &FeatureMatrix) -> Result<Vec<Verdict>> {
        Ok(self
            .model
            .predict_batch(matrix)?
            .into_iter()
            .map(|s| Verdict::new(s, self.threshold))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreClass {
    Normal,
    Abnormal,
}

/// Equal-width histogram of scores over [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub class: ScoreClass,
    /// `bins + 1` edges from 0 to 1.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n: u64,
}

impl ScoreDistribution {
    /// Bin `i` covers `[i/bins, (i+1)/bins)`; a score of exactly 1 lands in the last bin.
    pub fn from_scores(class: ScoreClass, scores: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::param("bins", "must be at least 1"));
        }
        let mut counts = vec![0u64; bins];
        for &s in scores {
            check_unit("score", s)?;
            let b = ((s * bins as f64).floor() as usize).min(bins - 1);
            counts[b] += 1;
        }
        let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        Ok(Self {
            class,
            edges,
            counts,
            n: scores.len() as u64,
        })
    }

    pub fn write_csv_to<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["class", "bin_lo", "bin_hi", "count"])?;
        let class = match self.class {
            ScoreClass::Normal => "normal",
            ScoreClass::Abnormal => "abnormal",
        };
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([
                class.to_string(),
                self.edges[i].to_string(),
                self.edges[i + 1].to_string(),
                c.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<histogram>", e))?;
        Ok(())
    }
}

/// Normal and abnormal scores of a labeled matrix.
pub fn class_scores(model: &TrainedModel, matrix: &FeatureMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let y = matrix.binary_labels()?;
    let scores = model.predict_batch(matrix)?;
    let mut normal = Vec::new();
    let mut abnormal = Vec::new();
    for (s, a) in scores.into_iter().zip(y) {
        if a {
            abnormal.push(s);
        } else {
            normal.push(s);
        }
    }
    Ok((normal, abnormal))
}

pub fn score_distribution(
    model: &TrainedModel,
    matrix: &FeatureMatrix,
    bins: usize,
) -> Result<(ScoreDistribution, ScoreDistribution)> {
    let (normal, abnormal) = class_scores(model, matrix)?;
    Ok((
        ScoreDistribution::from_scores(ScoreClass::Normal, &normal, bins)?,
        ScoreDistribution::from_scores(ScoreClass::Abnormal, &abnormal, bins)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub lo: f64,
    pub hi: f64,
}

impl Margin {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let m = Self { lo, hi };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("margin lower bound", self.lo)?;
        check_unit("margin upper bound", self.hi)?;
        if self.lo > self.hi {
            return Err(Error::param("margin", format!("lower bound {} exceeds upper bound {}", self.lo, self.hi)));
        }
        Ok(())
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

impl fmt::Display for Margin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

/// Parses `lo-hi` or `lo,hi`.
impl FromStr for Margin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(',')
            .or_else(|| s.split_once('-'))
            .ok_or_else(|| Error::param("margin", format!("`{s}` is not of the form lo-hi")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::param("margin", format!("`{v}` is not a number")))
        };
        Margin::new(parse(lo)?, parse(hi)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub margin: Margin,
    pub n_normal: u64,
    pub n_attack: u64,
    /// Normals scoring above the lower bound.
    pub normal_misclassified: u64,
    /// Attacks scoring below the upper bound.
    pub attack_misclassified: u64,
    pub fp_rate: f64,
    pub fn_rate: f64,
}

/// Worst-case error counts for any threshold inside the margin.
pub fn margin_analysis(normal_scores: &[f64], attack_scores: &[f64], margin: Margin) -> Result<MarginReport> {
    margin.validate()?;
    if normal_scores.is_empty() {
        return Err(Error::Empty("normal scores"));
    }
    if attack_scores.is_empty() {
        return Err(Error::Empty("attack scores"));
    }
    for &s in normal_scores.iter().chain(attack_scores) {
        check_unit("score", s)?;
    }
    let fp = normal_scores.iter().filter(|&&s| s > margin.lo).count() as u64;
    let fn_ = attack_scores.iter().filter(|&&s| s < margin.hi).count() as u64;
    let (nn, na) = (normal_scores.len() as u64, attack_scores.len() as u64);
    Ok(MarginReport {
        margin,
        n_normal: nn,
        n_attack: na,
        normal_misclassified: fp,
        attack_misclassified: fn_,
        fp_rate: fp as f64 / nn as f64,
        fn_rate: fn_ as f64 / na as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankBy {
    /// Fewest missed attacks first, then fewest false alarms.
    #[default]
    FnFirst,
    FpFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    /// Reports in candidate order.
    pub reports: Vec<MarginReport>,
    /// Index into `reports` of the best margin.
    pub winner: usize,
    /// Midpoint of the winning margin.
    pub threshold: f64,
}

impl TuningResult {
    pub fn best(&self) -> &MarginReport {
        &self.reports[self.winner]
    }

    /// Reports sorted best first; ties keep candidate order.
    pub fn ranked(&self, rank: RankBy) -> Vec<MarginReport> {
        let mut r = self.reports.clone();
        r.sort_by(|a, b| rank_key(a, rank).partial_cmp(&rank_key(b, rank)).unwrap());
        r
    }
}

fn rank_key(r: &MarginReport, rank: RankBy) -> (u64, u64) {
    // Counts order identically to rates within one score set.
    match rank {
        RankBy::FnFirst => (r.attack_misclassified, r.normal_misclassified),
        RankBy::FpFirst => (r.normal_misclassified, r.attack_misclassified),
    }
}

pub fn tune_threshold(
    normal_scores: &[f64],
    attack_scores: &[f64],
    candidates: &[Margin],
    rank: RankBy,
) -> Result<TuningResult> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate margins"));
    }
    let reports = candidates
        .iter()
        .map(|&m| margin_analysis(normal_scores, attack_scores, m))
        .collect::<Result<Vec<_>>>()?;
    let winner = (0..reports.len())
        .min_by_key(|&i| rank_key(&reports[i], rank))
        .expect("non-empty");
    let threshold = reports[winner].margin.midpoint();
    Ok(TuningResult {
        reports,
        winner,
        threshold,
    })
}

/// Jaccard overlap between alarm frames and true attack frames; 1 when both are empty.
pub fn alarm_overlap(alarms: &[bool], attacks: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &t) in alarms.iter().zip(attacks) {
        inter += (a && t) as usize;
        union += (a || t) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_boundary() {
        assert_eq!(decide(0.7, 0.5), Decision::Abnormal);
        assert_eq!(decide(0.5, 0.5), Decision::Normal);
        assert_eq!(decide(0.0, 0.0), Decision::Normal);
    }

    #[test]
    fn hand_binned_histogram() {
        let h = ScoreDistribution::from_scores(ScoreClass::Normal, &[0.05, 0.15, 0.95], 10).unwrap();
        assert_eq!(h.counts, vec![1, 1, 0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(h.edges.len(), 11);
        let zeros = ScoreDistribution::from_scores(ScoreClass::Abnormal, &[0.0; 7], 10).unwrap();
        assert_eq!(zeros.counts[0], 7);
        let one = ScoreDistribution::from_scores(ScoreClass::Abnormal, &[1.0], 4).unwrap();
        assert_eq!(one.counts, vec![0, 0, 0, 1]);
        assert!(ScoreDistribution::from_scores(ScoreClass::Normal, &[0.1], 0).is_err());
        assert!(ScoreDistribution::from_scores(ScoreClass::Normal, &[1.1], 4).is_err());
    }

    #[test]
    fn overlap_is_jaccard() {
        assert_eq!(alarm_overlap(&[true, true, false, false], &[true, false, true, false]), 1.0 / 3.0);
        assert_eq!(alarm_overlap(&[false; 3], &[false; 3]), 1.0);
        assert_eq!(alarm_overlap(&[true, false], &[true, false]), 1.0);
    }

    #[test]
    fn small_margin_count() {
        let r = margin_analysis(&[0.1, 0.45, 0.3], &[0.9, 0.55], Margin::new(0.4, 0.5).unwrap()).unwrap();
        assert_eq!((r.normal_misclassified, r.attack_misclassified), (1, 0));
        assert!((r.fp_rate - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_full_margin() {
        let r = margin_analysis(&[0.0, 0.2, 1.0], &[0.0, 0.99, 1.0], Margin::new(0.0, 1.0).unwrap()).unwrap();
        assert_eq!((r.normal_misclassified, r.attack_misclassified), (2, 2));
    }

    #[test]
    fn margin_errors() {
        let m = Margin { lo: 0.4, hi: 0.5 };
        assert!(matches!(margin_analysis(&[], &[0.9], m), Err(Error::Empty(_))));
        assert!(matches!(margin_analysis(&[0.1], &[], m), Err(Error::Empty(_))));
        assert!(margin_analysis(&[0.1], &[0.9], Margin { lo: 0.6, hi: 0.5 }).is_err());
        assert!(margin_analysis(&[1.5], &[0.9], m).is_err());
        assert!(tune_threshold(&[0.1], &[0.9], &[], RankBy::FnFirst).is_err());
    }

    #[test]
    fn margin_parsing() {
        assert_eq!("0.4-0.5".parse::<Margin>().unwrap(), Margin { lo: 0.4, hi: 0.5 });
        assert_eq!("0.3,0.6".parse::<Margin>().unwrap(), Margin { lo: 0.3, hi: 0.6 });
        assert!("0.6-0.5".parse::<Margin>().is_err());
        assert!("abc".parse::<Margin>().is_err());
    }

    #[test]
    fn single_candidate_wins() {
        let m = Margin::new(0.2, 0.8).unwrap();
        let t = tune_threshold(&[0.1, 0.9], &[0.95], &[m], RankBy::FnFirst).unwrap();
        assert_eq!(t.winner, 0);
        assert_eq!(t.threshold, 0.5);
    }

    #[test]
    fn rank_rule_changes_winner() {
        // Wider margin: fewer FN, more FP.
        let normal = [0.1, 0.35];
        let attack = [0.45, 0.9];
        let c = [Margin { lo: 0.4, hi: 0.5 }, Margin { lo: 0.3, hi: 0.4 }];
        let fn_first = tune_threshold(&normal, &attack, &c, RankBy::FnFirst).unwrap();
        let fp_first = tune_threshold(&normal, &attack, &c, RankBy::FpFirst).unwrap();
        assert_eq!(fn_first.winner, 1);
        assert_eq!(fp_first.winner, 0);
        assert_eq!(fn_first.ranked(RankBy::FnFirst)[0], fn_first.reports[1]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn scores() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(prop_oneof![0.0..=1.0f64, Just(0.5), Just(0.0), Just(1.0)], 1..40)
        }

        proptest! {
            #[test]
            fn max_threshold_raises_nothing(s in scores()) {
                let t = s.iter().cloned().fold(0.0, f64::max);
                prop_assert!(s.iter().all(|&x| decide(x, t) == Decision::Normal));
            }

            #[test]
            fn widening_never_reduces_counts(
                n in scores(), a in scores(),
                lo in 0.0..=1.0f64, hi in 0.0..=1.0f64, dl in 0.0..=1.0f64, dh in 0.0..=1.0f64,
            ) {
                let (lo, hi) = (lo.min(hi), lo.max(hi));
                let inner = margin_analysis(&n, &a, Margin::new(lo, hi).unwrap()).unwrap();
                let outer = margin_analysis(&n, &a, Margin::new(lo * (1.0 - dl), hi + (1.0 - hi) * dh).unwrap()).unwrap();
                prop_assert!(outer.normal_misclassified >= inner.normal_misclassified);
                prop_assert!(outer.attack_misclassified >= inner.attack_misclassified);
            }

            #[test]
            fn point_margin_matches_threshold_counts(n in scores(), a in scores(), t in 0.0..=1.0f64) {
                let r = margin_analysis(&n, &a, Margin::new(t, t).unwrap()).unwrap();
                let fp = n.iter().filter(|&&s| decide(s, t) == Decision::Abnormal).count() as u64;
                prop_assert_eq!(r.normal_misclassified, fp);
                prop_assert_eq!(r.attack_misclassified, a.iter().filter(|&&s| s < t).count() as u64);
                prop_assert!((0.0..=1.0).contains(&r.fp_rate) && (0.0..=1.0).contains(&r.fn_rate));
                prop_assert_eq!((r.fp_rate * r.n_normal as f64).round() as u64, r.normal_misclassified);
                prop_assert_eq!((r.fn_rate * r.n_attack as f64).round() as u64, r.attack_misclassified);
            }
        }
    }
}
