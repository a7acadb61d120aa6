//! Telemetry ingestion, labelling and partitioning.
//!
//! Frames follow the AVP telemetry schema: timestamp, arm flag, desired,
//! longitudinal, lateral and measured speed, obstacle distance, steering
//! angle, yaw angle, yaw rate and throttle. The canonical on-disk form is
//! comma-separated UTF-8 with one header row and a trailing `label` column.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
    #[default]
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
            Label::Unlabeled => "unlabeled",
        }
    }

    /// `Some(true)` for abnormal, `Some(false)` for normal.
    pub fn is_abnormal(self) -> Option<bool> {
        match self {
            Label::Normal => Some(false),
            Label::Abnormal => Some(true),
            Label::Unlabeled => None,
        }
    }

    pub fn from_abnormal(abnormal: bool) -> Self {
        if abnormal {
            Label::Abnormal
        } else {
            Label::Normal
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "0" => Ok(Label::Normal),
            "abnormal" | "attack" | "1" => Ok(Label::Abnormal),
            "" | "unlabeled" => Ok(Label::Unlabeled),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

/// One timestamped telemetry row.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetryFrame {
    /// Seconds.
    pub timestamp: f64,
    pub armed: bool,
    pub desired_speed: f64,
    pub longitudinal_speed: f64,
    pub lateral_speed: f64,
    pub measured_speed: f64,
    /// Metres to the nearest obstacle reported by the depth camera.
    pub obstacle_distance: f64,
    /// Radians.
    pub steering_angle: f64,
    pub yaw_angle: f64,
    pub yaw_rate: f64,
    /// Percent, `0..=100`.
    pub throttle: f64,
    pub label: Label,
}

impl TelemetryFrame {
    /// The nine numeric channels other than the timestamp, in schema order.
    pub const NUMERIC_CHANNELS: [&'static str; 9] = [
        "desired_speed",
        "longitudinal_speed",
        "lateral_speed",
        "measured_speed",
        "obstacle_distance",
        "steering_angle",
        "yaw_angle",
        "yaw_rate",
        "throttle",
    ];

    pub fn numeric_channels(&self) -> [f64; 9] {
        [
            self.desired_speed,
            self.longitudinal_speed,
            self.lateral_speed,
            self.measured_speed,
            self.obstacle_distance,
            self.steering_angle,
            self.yaw_angle,
            self.yaw_rate,
            self.throttle,
        ]
    }
}

/// Header names for each schema field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub timestamp: String,
    pub arm: String,
    pub desired_speed: String,
    pub longitudinal_speed: String,
    pub lateral_speed: String,
    pub measured_speed: String,
    pub obstacle_distance: String,
    pub steering_angle: String,
    pub yaw_angle: String,
    pub yaw_rate: String,
    pub throttle: String,
    /// Optional label column; absent columns leave frames unlabeled.
    pub label: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            arm: "arm".into(),
            desired_speed: "desired_speed".into(),
            longitudinal_speed: "longitudinal_speed".into(),
            lateral_speed: "lateral_speed".into(),
            measured_speed: "measured_speed".into(),
            obstacle_distance: "obstacle_distance".into(),
            steering_angle: "steering_angle".into(),
            yaw_angle: "yaw_angle".into(),
            yaw_rate: "yaw_rate".into(),
            throttle: "throttle".into(),
            label: "label".into(),
        }
    }
}

impl ColumnMap {
    fn required(&self) -> [(&'static str, &str); 11] {
        [
            ("timestamp", &self.timestamp),
            ("arm", &self.arm),
            ("desired_speed", &self.desired_speed),
            ("longitudinal_speed", &self.longitudinal_speed),
            ("lateral_speed", &self.lateral_speed),
            ("measured_speed", &self.measured_speed),
            ("obstacle_distance", &self.obstacle_distance),
            ("steering_angle", &self.steering_angle),
            ("yaw_angle", &self.yaw_angle),
            ("yaw_rate", &self.yaw_rate),
            ("throttle", &self.throttle),
        ]
    }
}

fn parse_number(field: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        column: column.to_string(),
        message: format!("`{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            column: column.to_string(),
            message: format!("`{field}` is not finite"),
        });
    }
    Ok(v)
}

fn parse_flag(field: &str, line: usize, column: &str) -> Result<bool> {
    match field.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "armed" => Ok(true),
        "0" | "false" | "disarmed" => Ok(false),
        other => Err(Error::Parse {
            line,
            column: column.to_string(),
            message: format!("`{other}` is not a boolean flag"),
        }),
    }
}

/// Reads frames from any reader. See [`load_frames`].
pub fn read_frames<R: Read>(reader: R, map: &ColumnMap) -> Result<Vec<TelemetryFrame>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 11];
    for (slot, (feature, column)) in idx.iter_mut().zip(map.required()) {
        *slot = find(column).ok_or_else(|| Error::MissingColumn {
            feature,
            column: column.to_string(),
        })?;
    }
    let label_idx = find(&map.label);
    let names = map.required();

    let mut frames = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let get = |i: usize| record.get(idx[i]).unwrap_or("");
        let num = |i: usize| parse_number(get(i), line, names[i].1);
        let frame = TelemetryFrame {
            timestamp: num(0)?,
            armed: parse_flag(get(1), line, names[1].1)?,
            desired_speed: num(2)?,
            longitudinal_speed: num(3)?,
            lateral_speed: num(4)?,
            measured_speed: num(5)?,
            obstacle_distance: num(6)?,
            steering_angle: num(7)?,
            yaw_angle: num(8)?,
            yaw_rate: num(9)?,
            throttle: num(10)?,
            label: match label_idx {
                Some(li) => record
                    .get(li)
                    .unwrap_or("")
                    .parse()
                    .map_err(|message| Error::Parse {
                        line,
                        column: map.label.clone(),
                        message,
                    })?,
                None => Label::Unlabeled,
            },
        };
        if frame.timestamp < 0.0 {
            return Err(Error::Parse {
                line,
                column: map.timestamp.clone(),
                message: "timestamp must be non-negative".into(),
            });
        }
        if !(0.0..=100.0).contains(&frame.throttle) {
            return Err(Error::Parse {
                line,
                column: map.throttle.clone(),
                message: format!("throttle {} outside [0, 100]", frame.throttle),
            });
        }
        frames.push(frame);
    }

    frames.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let before = frames.len();
    frames.dedup_by(|later, first| later.timestamp == first.timestamp);
    if frames.len() != before {
        warn!(
            "dropped {} frame(s) with duplicate timestamps (kept first occurrence)",
            before - frames.len()
        );
    }
    Ok(frames)
}

/// Loads a telemetry file. Frames are returned sorted by timestamp, keeping
/// the first occurrence of any duplicated timestamp.
pub fn load_frames(path: impl AsRef<Path>, map: &ColumnMap) -> Result<Vec<TelemetryFrame>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_frames(file, map)
}

/// Writes frames in the canonical format using the default column names.
pub fn write_frames_to<W: Write>(writer: W, frames: &[TelemetryFrame]) -> Result<()> {
    let map = ColumnMap::default();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = map.required().iter().map(|(_, c)| *c).collect();
    header.push(&map.label);
    wtr.write_record(&header)?;
    for f in frames {
        let mut row = Vec::with_capacity(12);
        row.push(f.timestamp.to_string());
        row.push(if f.armed { "1" } else { "0" }.to_string());
        row.extend(f.numeric_channels().iter().map(f64::to_string));
        row.push(f.label.as_str().to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

pub fn write_frames(path: impl AsRef<Path>, frames: &[TelemetryFrame]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_frames_to(std::io::BufWriter::new(file), frames)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetKind {
    Normal,
    Attack,
}

/// Labels every frame with the subset's class.
pub fn label_by_subset(frames: &[TelemetryFrame], kind: SubsetKind) -> Vec<TelemetryFrame> {
    let label = match kind {
        SubsetKind::Normal => Label::Normal,
        SubsetKind::Attack => Label::Abnormal,
    };
    frames.iter().map(|f| TelemetryFrame { label, ..*f }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserEntry {
    pub timestamp: f64,
    pub active: bool,
}

/// Attacker laser on/off log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LaserLog {
    entries: Vec<LaserEntry>,
}

impl LaserLog {
    /// Validates ordering and finiteness.
    pub fn new(entries: Vec<LaserEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if !e.timestamp.is_finite() {
                return Err(Error::NonFinite(format!("laser log entry {i}")));
            }
            if i > 0 && e.timestamp < entries[i - 1].timestamp {
                return Err(Error::Parse {
                    line: i + 2,
                    column: "timestamp".into(),
                    message: "laser log timestamps must be non-decreasing".into(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[LaserEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Nearest entry to `t`; equidistant neighbours resolve to the earlier one.
    pub fn nearest(&self, t: f64) -> Option<&LaserEntry> {
        let i = self.entries.partition_point(|e| e.timestamp < t);
        let after = self.entries.get(i);
        let before = i.checked_sub(1).and_then(|j| self.entries.get(j));
        match (before, after) {
            (Some(b), Some(a)) => {
                if (a.timestamp - t) < (t - b.timestamp) {
                    Some(a)
                } else {
                    Some(b)
                }
            }
            (b, a) => b.or(a),
        }
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let ti = headers
            .iter()
            .position(|h| h == "timestamp")
            .ok_or_else(|| Error::MissingColumn {
                feature: "timestamp",
                column: "timestamp".into(),
            })?;
        let si = headers
            .iter()
            .position(|h| h == "laser_state")
            .ok_or_else(|| Error::MissingColumn {
                feature: "laser_state",
                column: "laser_state".into(),
            })?;
        let mut entries = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let timestamp = parse_number(record.get(ti).unwrap_or(""), line, "timestamp")?;
            let active = match record.get(si).unwrap_or("").trim() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse {
                        line,
                        column: "laser_state".into(),
                        message: format!("`{other}` is not 0 or 1"),
                    })
                }
            };
            entries.push(LaserEntry { timestamp, active });
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read(File::open(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["timestamp", "laser_state"])?;
        for e in &self.entries {
            wtr.write_record([e.timestamp.to_string(), if e.active { "1" } else { "0" }.into()])?;
        }
        wtr.flush().map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
    }
}

/// Result of aligning frames with a laser log.
#[derive(Debug, Clone)]
pub struct JoinOutcome {
    pub frames: Vec<TelemetryFrame>,
    /// Frames with no log entry within tolerance.
    pub unmatched: usize,
}

impl JoinOutcome {
    pub fn unmatched_fraction(&self) -> f64 {
        if self.frames.is_empty() {
            0.0
        } else {
            self.unmatched as f64 / self.frames.len() as f64
        }
    }
}

/// Half the median spacing between consecutive frames.
pub fn default_join_tolerance(frames: &[TelemetryFrame]) -> Option<f64> {
    let mut gaps: Vec<f64> = frames
        .windows(2)
        .map(|w| w[1].timestamp - w[0].timestamp)
        .collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len();
    let median = if n % 2 == 1 {
        gaps[n / 2]
    } else {
        0.5 * (gaps[n / 2 - 1] + gaps[n / 2])
    };
    Some(0.5 * median)
}

/// Labels frames from the nearest laser-log entry within `tolerance` seconds.
///
/// A matched frame becomes abnormal when the laser was on and normal when it
/// was off; unmatched frames keep their label. More than 1% unmatched frames
/// logs a warning.
pub fn join_laser_log(frames: &[TelemetryFrame], log: &LaserLog, tolerance: f64) -> JoinOutcome {
    let mut unmatched = 0;
    let frames: Vec<TelemetryFrame> = frames
        .iter()
        .map(|f| match log.nearest(f.timestamp) {
            Some(e) if (e.timestamp - f.timestamp).abs() <= tolerance => TelemetryFrame {
                label: Label::from_abnormal(e.active),
                ..*f
            },
            _ => {
                unmatched += 1;
                *f
            }
        })
        .collect();
    let out = JoinOutcome { frames, unmatched };
    if out.unmatched_fraction() > 0.01 {
        warn!(
            "{} of {} frames have no laser-log entry within {tolerance} s",
            out.unmatched,
            out.frames.len()
        );
    }
    out
}

/// Splits sample indices into `k` class-stratified folds.
///
/// Each class is shuffled with a seeded generator and dealt round-robin;
/// dealing continues across classes so total fold sizes differ by at most one.
/// `labels[i]` is `true` for abnormal samples.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidFolds {
            k,
            reason: "at least 2 folds are required".into(),
        });
    }
    let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &abnormal) in labels.iter().enumerate() {
        classes[abnormal as usize].push(i);
    }
    if classes.iter().any(Vec::is_empty) {
        return Err(Error::SingleClass);
    }
    let minority = classes.iter().map(Vec::len).min().unwrap_or(0);
    if k > minority {
        return Err(Error::InvalidFolds {
            k,
            reason: format!("minority class has only {minority} samples"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0usize;
    for class in classes.iter_mut() {
        class.shuffle(&mut rng);
        for &i in class.iter() {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Stratified folds over labelled frames.
pub fn stratified_kfold_frames(frames: &[TelemetryFrame], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let labels = frames
        .iter()
        .map(|f| f.label.is_abnormal().ok_or(Error::Unlabeled))
        .collect::<Result<Vec<_>>>()?;
    stratified_kfold(&labels, k, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetCount {
    pub name: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub subsets: Vec<SubsetCount>,
    pub total: usize,
    pub normal: usize,
    pub abnormal: usize,
    pub unlabeled: usize,
    pub normal_share: f64,
    pub abnormal_share: f64,
    pub unlabeled_share: f64,
}

impl DatasetSummary {
    pub fn from_subsets<'a, I>(subsets: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a [TelemetryFrame])>,
    {
        let mut out = DatasetSummary {
            subsets: Vec::new(),
            total: 0,
            normal: 0,
            abnormal: 0,
            unlabeled: 0,
            normal_share: 0.0,
            abnormal_share: 0.0,
            unlabeled_share: 0.0,
        };
        for (name, frames) in subsets {
            out.subsets.push(SubsetCount {
                name: name.to_string(),
                rows: frames.len(),
            });
            out.total += frames.len();
            for f in frames {
                match f.label {
                    Label::Normal => out.normal += 1,
                    Label::Abnormal => out.abnormal += 1,
                    Label::Unlabeled => out.unlabeled += 1,
                }
            }
        }
        if out.total > 0 {
            let n = out.total as f64;
            out.normal_share = out.normal as f64 / n;
            out.abnormal_share = out.abnormal as f64 / n;
            out.unlabeled_share = out.unlabeled as f64 / n;
        }
        out
    }
}
