//! Feature extraction: physics residuals against one-step lateral-state
//! predictions, rolling residual statistics, raw telemetry channels, and
//! train-fitted standardisation.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Label, TelemetryFrame};
use crate::dynamics::{LateralState, StateSpace};
use crate::error::{Error, Result};
use crate::manifest::sha256_hex;

/// Measured-minus-predicted lateral state for each frame after the first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResidualSeries {
    /// Timestamp of the frame being predicted.
    pub timestamps: Vec<f64>,
    pub predicted: Vec<LateralState>,
    pub measured: Vec<LateralState>,
    pub vy: Vec<f64>,
    pub r: Vec<f64>,
}

impl ResidualSeries {
    pub fn len(&self) -> usize {
        self.vy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vy.is_empty()
    }

    pub fn rms(&self) -> (f64, f64) {
        let rms = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
            }
        };
        (rms(&self.vy), rms(&self.r))
    }
}

fn lateral(frame: &TelemetryFrame) -> LateralState {
    LateralState::new(frame.lateral_speed, frame.yaw_rate)
}

/// Predicts each frame's lateral state from its predecessor with one Euler
/// step over the actual timestamp gap and records the prediction error.
pub fn compute_residuals(frames: &[TelemetryFrame], model: &StateSpace) -> Result<ResidualSeries> {
    let mut out = ResidualSeries::default();
    for (i, pair) in frames.windows(2).enumerate() {
        let (prev, cur) = (&pair[0], &pair[1]);
        let dt = cur.timestamp - prev.timestamp;
        if !(dt > 0.0) {
            return Err(Error::NonIncreasingTime {
                index: i + 1,
                previous: prev.timestamp,
                current: cur.timestamp,
            });
        }
        let predicted = model.predict(lateral(prev), prev.steering_angle, dt)?;
        let measured = lateral(cur);
        let (evy, er) = (measured.vy - predicted.vy, measured.r - predicted.r);
        if !evy.is_finite() || !er.is_finite() {
            return Err(Error::NonFinite(format!("residual at frame {}", i + 1)));
        }
        out.timestamps.push(cur.timestamp);
        out.predicted.push(predicted);
        out.measured.push(measured);
        out.vy.push(evy);
        out.r.push(er);
    }
    Ok(out)
}

/// Trailing-window mean and population standard deviation. The first
/// `window - 1` entries use the available prefix.
pub fn rolling_stats(values: &[f64], window: usize) -> (Vec<f64>, Vec<f64>) {
    let window = window.max(1);
    let mut means = Vec::with_capacity(values.len());
    let mut stds = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let w = &values[(i + 1).saturating_sub(window)..=i];
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        means.push(mean);
        stds.push(var.sqrt());
    }
    (means, stds)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Rolling window length for residual statistics.
    pub window: usize,
    /// Include the nine raw telemetry channels.
    pub include_raw: bool,
    /// Include the arm flag as a 0/1 feature.
    pub include_arm: bool,
    /// Include residuals and their rolling statistics.
    pub include_residuals: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window: 10,
            include_raw: true,
            include_arm: false,
            include_residuals: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::param("window", "must be at least 1"));
        }
        if !self.include_raw && !self.include_residuals && !self.include_arm {
            return Err(Error::param("features", "at least one feature group must be enabled"));
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.include_raw {
            names.extend(TelemetryFrame::NUMERIC_CHANNELS.iter().map(|s| s.to_string()));
        }
        if self.include_arm {
            names.push("arm".into());
        }
        if self.include_residuals {
            for n in [
                "residual_vy",
                "residual_r",
                "residual_vy_mean",
                "residual_vy_std",
                "residual_r_mean",
                "residual_r_std",
            ] {
                names.push(n.into());
            }
        }
        names
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<String>,
    pub config_hash: String,
}

/// Dense row-major sample matrix with per-sample labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    data: Vec<f64>,
    labels: Vec<Label>,
    pub provenance: Provenance,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, data: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        let d = names.len();
        if d == 0 {
            return Err(Error::Empty("feature names"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::param("feature names", format!("duplicate name `{n}`")));
            }
        }
        if data.len() != labels.len() * d {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * d,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "feature `{}` of sample {}",
                names[pos % d],
                pos / d
            )));
        }
        Ok(Self {
            names,
            data,
            labels,
            provenance: Provenance::default(),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_features())
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Abnormal-class indicator per sample; fails if any sample is unlabeled.
    pub fn binary_labels(&self) -> Result<Vec<bool>> {
        self.labels
            .iter()
            .map(|l| l.is_abnormal().ok_or(Error::Unlabeled))
            .collect()
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_features());
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            names: self.names.clone(),
            data,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Stacks matrices with identical feature names.
    pub fn concat(parts: &[FeatureMatrix]) -> Result<FeatureMatrix> {
        let first = parts.first().ok_or(Error::Empty("feature matrices"))?;
        let mut out = first.clone();
        for p in &parts[1..] {
            if p.names != first.names {
                return Err(Error::param("features", "cannot stack matrices with different columns"));
            }
            out.data.extend_from_slice(&p.data);
            out.labels.extend_from_slice(&p.labels);
            out.provenance.sources.extend(p.provenance.sources.iter().cloned());
        }
        Ok(out)
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = self.names.clone();
        header.push("label".into());
        wtr.write_record(&header)?;
        for (row, label) in self.rows().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
            rec.push(label.as_str().into());
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }

    /// Reads a matrix written by [`FeatureMatrix::write_csv_to`]. A `label`
    /// column, if present, supplies labels; every other column is a feature.
    pub fn read_csv<R: Read>(reader: R) -> Result<FeatureMatrix> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let label_idx = headers.iter().position(|h| h == "label");
        let names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_idx)
            .map(|(_, h)| h.to_string())
            .collect();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            for (i, field) in record.iter().enumerate() {
                if Some(i) == label_idx {
                    labels.push(field.parse::<Label>().map_err(|message| Error::Parse {
                        line,
                        column: "label".into(),
                        message,
                    })?);
                } else {
                    data.push(field.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        column: headers.get(i).unwrap_or("?").to_string(),
                        message: format!("`{field}` is not a number"),
                    })?);
                }
            }
            if label_idx.is_none() {
                labels.push(Label::Unlabeled);
            }
        }
        FeatureMatrix::new(names, data, labels)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
        let path = path.as_ref();
        let mut m = Self::read_csv(File::open(path).map_err(|e| Error::io(path, e))?)?;
        m.provenance.sources = vec![path.display().to_string()];
        Ok(m)
    }
}

/// Builds one sample per frame after the first.
///
/// Raw channels and labels come from the predicted frame; residual features
/// compare it against the one-step prediction from its predecessor.
pub fn build_features(frames: &[TelemetryFrame], model: &StateSpace, config: &FeatureConfig) -> Result<FeatureMatrix> {
    config.validate()?;
    if frames.len() < 2 {
        return Err(Error::Empty("at least two frames are needed to build features"));
    }
    let residuals = compute_residuals(frames, model)?;
    let (vy_mean, vy_std) = rolling_stats(&residuals.vy, config.window);
    let (r_mean, r_std) = rolling_stats(&residuals.r, config.window);
    let names = config.feature_names();
    let mut data = Vec::with_capacity(residuals.len() * names.len());
    let mut labels = Vec::with_capacity(residuals.len());
    for (j, frame) in frames[1..].iter().enumerate() {
        if config.include_raw {
            data.extend_from_slice(&frame.numeric_channels());
        }
        if config.include_arm {
            data.push(if frame.armed { 1.0 } else { 0.0 });
        }
        if config.include_residuals {
            data.extend_from_slice(&[
                residuals.vy[j],
                residuals.r[j],
                vy_mean[j],
                vy_std[j],
                r_mean[j],
                r_std[j],
            ]);
        }
        labels.push(frame.label);
    }
    let mut m = FeatureMatrix::new(names, data, labels)?;
    m.provenance.config_hash = featurizer_hash(model, config);
    Ok(m)
}

/// Featurizer settings recorded alongside feature matrices and models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizerSpec {
    pub features: FeatureConfig,
    pub lateral_model: StateSpace,
}

impl FeaturizerSpec {
    pub fn build(&self, frames: &[TelemetryFrame]) -> Result<FeatureMatrix> {
        build_features(frames, &self.lateral_model, &self.features)
    }

    pub fn hash(&self) -> String {
        featurizer_hash(&self.lateral_model, &self.features)
    }
}

/// Stable digest of a featurizer configuration together with its lateral model.
pub fn featurizer_hash(model: &StateSpace, config: &FeatureConfig) -> String {
    let text = serde_json::to_string(&(config, model)).unwrap_or_default();
    sha256_hex(text.as_bytes())
}

/// Per-feature mean and population standard deviation fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(m: &FeatureMatrix) -> Self {
        let d = m.n_features();
        let n = m.n_samples().max(1) as f64;
        let mut mean = vec![0.0; d];
        for row in m.rows() {
            for (acc, v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n);
        let mut var = vec![0.0; d];
        for row in m.rows() {
            for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt()).collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Scales one row in place. Zero-variance features are left untouched.
    pub fn apply(&self, row: &mut [f64]) {
        for ((v, mu), sd) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            if *sd > 0.0 {
                *v = (*v - mu) / sd;
            }
        }
    }

    pub fn transform(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        if m.n_features() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: m.n_features(),
            });
        }
        let mut out = m.clone();
        for row in out.data.chunks_exact_mut(self.dim()) {
            self.apply(row);
        }
        Ok(out)
    }
}

/// Standardises `m` with `stats`, or with statistics fitted on `m` itself.
pub fn standardize(m: &FeatureMatrix, stats: Option<&Standardizer>) -> Result<(FeatureMatrix, Standardizer)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => Standardizer::fit(m),
    };
    Ok((stats.transform(m)?, stats))
}
