//! Run configuration: one TOML document covering every subcommand. Missing
//! sections take their defaults; the resolved document is written back to
//! each run directory so a run can be replayed from it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::{Hyperparams, ModelKind};
use crate::data::{ColumnMap, SubsetKind};
use crate::detector::{Margin, RankBy, DEFAULT_BINS, DEFAULT_MARGINS};
use crate::dynamics::{MatrixSource, StateSpace, VehicleParams};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeaturizerSpec};
use crate::simulate::{AttackScript, BenchmarkConfig, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Table,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::param("format", format!("unknown report format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Kind trained by `train`; `crossval` evaluates every entry of `kinds`.
    pub kind: ModelKind,
    pub kinds: Vec<ModelKind>,
    pub folds: usize,
    pub hyperparams: Hyperparams,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Rf,
            kinds: ModelKind::ALL.to_vec(),
            folds: 5,
            hyperparams: Hyperparams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSettings {
    pub threshold: f64,
    pub margins: Vec<Margin>,
    pub rank: RankBy,
    pub bins: usize,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            margins: DEFAULT_MARGINS.to_vec(),
            rank: RankBy::default(),
            bins: DEFAULT_BINS,
        }
    }
}

/// File locations. Relative paths resolve against the working directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct IoConfig {
    /// Telemetry files.
    pub inputs: Vec<PathBuf>,
    /// Laser logs paired with `inputs` by position.
    pub laser_logs: Vec<PathBuf>,
    /// Label every input with this subset's class instead of using logs.
    pub subset: Option<SubsetKind>,
    /// Laser-log join tolerance in seconds; half the median frame gap if unset.
    pub join_tolerance: Option<f64>,
    pub features: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// Tuning report whose threshold `detect` uses.
    pub tuning: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub vehicle: VehicleParams,
    pub matrices: MatrixSource,
    pub features: FeatureConfig,
    pub columns: ColumnMap,
    pub classifier: ClassifierConfig,
    pub detector: DetectorSettings,
    pub scenario: Scenario,
    pub attack: AttackScript,
    /// When set, `simulate` writes the multi-episode benchmark instead of one scenario.
    pub benchmark: Option<BenchmarkConfig>,
    pub report: ReportFormat,
    pub io: IoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            vehicle: VehicleParams::QCAR,
            matrices: MatrixSource::default(),
            features: FeatureConfig::default(),
            columns: ColumnMap::default(),
            classifier: ClassifierConfig::default(),
            detector: DetectorSettings::default(),
            scenario: Scenario::default(),
            attack: AttackScript::default(),
            benchmark: None,
            report: ReportFormat::default(),
            io: IoConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.features.validate()?;
        if !(0.0..=1.0).contains(&self.detector.threshold) {
            return Err(Error::param("threshold", "must lie in [0, 1]"));
        }
        for m in &self.detector.margins {
            m.validate()?;
        }
        if self.detector.bins == 0 {
            return Err(Error::param("bins", "must be at least 1"));
        }
        if self.classifier.kinds.is_empty() {
            return Err(Error::param("kinds", "at least one classifier kind is required"));
        }
        Ok(())
    }

    pub fn lateral_model(&self) -> Result<StateSpace> {
        self.matrices.resolve(&self.vehicle)
    }

    pub fn featurizer(&self) -> Result<FeaturizerSpec> {
        Ok(FeaturizerSpec {
            features: self.features.clone(),
            lateral_model: self.lateral_model()?,
        })
    }
}
