//! Command-line front end. Each subcommand resolves a [`RunConfig`] from an
//! optional `--config` file plus flags, writes it to the run directory as
//! `config.toml`, does its work, and finishes with `manifest.json`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::classifiers::{cross_validate, train, CrossValReport, ModelKind, TrainedModel};
use crate::config::{ReportFormat, RunConfig};
use crate::data::{
    default_join_tolerance, join_laser_log, label_by_subset, load_frames, write_frames, DatasetSummary,
    LaserLog, SubsetKind, TelemetryFrame,
};
use crate::detector::{alarm_overlap, class_scores, tune_threshold, Decision, Detector, Margin, RankBy, ScoreClass, ScoreDistribution, TuningResult};
use crate::dynamics::MatrixSource;
use crate::error::{Error, ErrorClass, Result};
use crate::features::{FeatureMatrix, FeaturizerSpec};
use crate::manifest::Manifest;
use crate::simulate::{generate_benchmark, run_attacked_scenario, BenchmarkConfig};

#[derive(Debug, Parser)]
#[command(name = "avguard", version, about = "Anomaly detection for vehicle perception telemetry")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic telemetry and laser logs.
    Simulate(SimulateArgs),
    /// Load, label and normalise telemetry files.
    Ingest(IngestArgs),
    /// Build a feature matrix from telemetry.
    Featurize(FeaturizeArgs),
    /// Train a classifier.
    Train(TrainArgs),
    /// Stratified k-fold evaluation of one or more classifiers.
    Crossval(CrossvalArgs),
    /// Evaluate detection margins and pick a threshold.
    Tune(TuneArgs),
    /// Score telemetry frame by frame.
    Detect(DetectArgs),
    /// Render a saved cross-validation, tuning or detection result.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory for outputs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Telemetry CSV files.
    #[arg(long = "input", num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Laser logs paired with the inputs by position.
    #[arg(long = "laser-log", num_args = 1..)]
    pub laser_logs: Vec<PathBuf>,
    /// Label every input as this subset's class.
    #[arg(long, value_parser = parse_subset)]
    pub subset: Option<SubsetKind>,
    #[arg(long)]
    pub join_tolerance: Option<f64>,
    /// Feature matrix CSV to use instead of featurizing inputs.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Lateral matrices used for residual features.
    #[arg(long)]
    pub matrices: Option<MatrixSource>,
    /// Rolling window for residual statistics.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Write the multi-episode benchmark corpus.
    #[arg(long)]
    pub benchmark: bool,
    /// Benchmark episode count (implies --benchmark).
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub kind: Option<ModelKind>,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated classifier kinds.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Vec<ModelKind>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub format: Option<ReportFormat>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Candidate margins as `lo-hi`.
    #[arg(long = "margin", num_args = 1..)]
    pub margins: Vec<Margin>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long, value_parser = parse_rank)]
    pub rank: Option<RankBy>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Tuning result whose threshold to use.
    #[arg(long)]
    pub tuning: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A crossval.json, tuning.json or detect_summary.json file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub format: Option<ReportFormat>,
    /// Also write the report into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_subset(s: &str) -> std::result::Result<SubsetKind, String> {
    match s {
        "normal" => Ok(SubsetKind::Normal),
        "attack" => Ok(SubsetKind::Attack),
        other => Err(format!("unknown subset `{other}` (expected normal or attack)")),
    }
}

fn parse_rank(s: &str) -> std::result::Result<RankBy, String> {
    match s {
        "fn-first" => Ok(RankBy::FnFirst),
        "fp-first" => Ok(RankBy::FpFirst),
        other => Err(format!("unknown ranking `{other}` (expected fn-first or fp-first)")),
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

fn base_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.io.out = Some(o.clone());
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut RunConfig, d: &DataArgs) {
    if !d.inputs.is_empty() {
        cfg.io.inputs = d.inputs.clone();
    }
    if !d.laser_logs.is_empty() {
        cfg.io.laser_logs = d.laser_logs.clone();
    }
    if d.subset.is_some() {
        cfg.io.subset = d.subset;
    }
    if d.join_tolerance.is_some() {
        cfg.io.join_tolerance = d.join_tolerance;
    }
    if d.features.is_some() {
        cfg.io.features = d.features.clone();
    }
    if let Some(m) = d.matrices {
        cfg.matrices = m;
    }
    if let Some(w) = d.window {
        cfg.features.window = w;
    }
}

/// Validated config plus its run directory, with `config.toml` written.
struct Run {
    cfg: RunConfig,
    dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn start(subcommand: &str, cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let dir = cfg
            .io
            .out
            .clone()
            .ok_or_else(|| Error::Config("no output directory (use --out or io.out)".into()))?;
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let text = cfg.to_toml()?;
        let path = dir.join("config.toml");
        fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
        let mut manifest = Manifest::new(subcommand, &text);
        manifest.add_artifact(&dir, "config.toml")?;
        Ok(Self { cfg, dir, manifest })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.manifest.add_artifact(&self.dir, name)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write_text(name, &(to_json(value)? + "\n"))
    }

    fn finish(self) -> Result<PathBuf> {
        self.manifest.save(&self.dir)?;
        Ok(self.dir)
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        column: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Loads every input and applies subset labels or laser-log labels.
fn load_labeled(run: &mut Run) -> Result<Vec<(PathBuf, Vec<TelemetryFrame>)>> {
    let io = run.cfg.io.clone();
    if io.inputs.is_empty() {
        return Err(Error::Config("no telemetry inputs (use --input or io.inputs)".into()));
    }
    if !io.laser_logs.is_empty() && io.laser_logs.len() != io.inputs.len() {
        return Err(Error::Config(format!(
            "{} laser logs given for {} inputs",
            io.laser_logs.len(),
            io.inputs.len()
        )));
    }
    let mut out = Vec::with_capacity(io.inputs.len());
    for (i, path) in io.inputs.iter().enumerate() {
        let mut frames = load_frames(path, &run.cfg.columns)?;
        run.manifest.add_input(path)?;
        if let Some(kind) = io.subset {
            frames = label_by_subset(&frames, kind);
        } else if let Some(log_path) = io.laser_logs.get(i) {
            let log = LaserLog::load(log_path)?;
            run.manifest.add_input(log_path)?;
            let tol = io.join_tolerance.or_else(|| default_join_tolerance(&frames)).unwrap_or(0.0);
            let joined = join_laser_log(&frames, &log, tol);
            if joined.unmatched > 0 {
                warn!("{}: {} frames had no laser-log entry", path.display(), joined.unmatched);
            }
            frames = joined.frames;
        }
        out.push((path.clone(), frames));
    }
    Ok(out)
}

/// Features from `io.features` if set, otherwise built per input file.
fn load_features(run: &mut Run) -> Result<(FeatureMatrix, Option<FeaturizerSpec>)> {
    if let Some(path) = run.cfg.io.features.clone() {
        let m = FeatureMatrix::load_csv(&path)?;
        run.manifest.add_input(&path)?;
        let spec = run.cfg.featurizer()?;
        let known = spec.features.feature_names() == m.names();
        return Ok((m, known.then_some(spec)));
    }
    let spec = run.cfg.featurizer()?;
    let files = load_labeled(run)?;
    let parts = files
        .iter()
        .map(|(_, frames)| spec.build(frames))
        .collect::<Result<Vec<_>>>()?;
    let mut m = FeatureMatrix::concat(&parts)?;
    m.provenance.sources = files.iter().map(|(p, _)| p.display().to_string()).collect();
    m.provenance.config_hash = spec.hash();
    Ok((m, Some(spec)))
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<PathBuf> {
    let mut cfg = base_config(&args.common)?;
    if args.benchmark || args.episodes.is_some() {
        let b = cfg.benchmark.get_or_insert_with(BenchmarkConfig::default);
        if let Some(n) = args.episodes {
            b.episodes = n;
        }
    }
    if let Some(d) = args.duration {
        cfg.scenario.duration = d;
        if let Some(b) = cfg.benchmark.as_mut() {
            b.duration = d;
        }
    }
    if let Some(dt) = args.dt {
        cfg.scenario.dt = dt;
        if let Some(b) = cfg.benchmark.as_mut() {
            b.dt = dt;
        }
    }
    cfg.scenario.seed = cfg.seed;
    if let Some(b) = cfg.benchmark.as_mut() {
        b.seed = cfg.seed;
    }
    cfg.scenario.validate()?;
    let mut run = Run::start("simulate", cfg)?;
    let params = run.cfg.vehicle;
    let mut summary = Vec::new();
    if let Some(bench) = run.cfg.benchmark.clone() {
        let episodes = generate_benchmark(&params, &bench)?;
        for ep in &episodes {
            let data = format!("{}.csv", ep.name);
            let log = format!("{}_laser.csv", ep.name);
            write_frames(run.path(&data), &ep.frames)?;
            ep.laser_log.save(run.path(&log))?;
            run.manifest.add_artifact(&run.dir, &data)?;
            run.manifest.add_artifact(&run.dir, &log)?;
        }
        let total: usize = episodes.iter().map(|e| e.frames.len()).sum();
        info!("wrote {} episodes, {total} frames", episodes.len());
        summary.extend(episodes.iter().map(|e| (e.name.clone(), e.frames.clone())));
    } else {
        let (frames, log) = run_attacked_scenario(&params, &run.cfg.scenario, &run.cfg.attack)?;
        write_frames(run.path("telemetry.csv"), &frames)?;
        log.save(run.path("laser_log.csv"))?;
        run.manifest.add_artifact(&run.dir, "telemetry.csv")?;
        run.manifest.add_artifact(&run.dir, "laser_log.csv")?;
        info!("wrote {} frames", frames.len());
        summary.push(("telemetry".into(), frames));
    }
    let s = DatasetSummary::from_subsets(summary.iter().map(|(n, f)| (n.as_str(), f.as_slice())));
    run.write_json("summary.json", &s)?;
    run.finish()
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<PathBuf> {
    let mut cfg = base_config(&args.common)?;
    apply_data(&mut cfg, &args.data);
    let mut run = Run::start("ingest", cfg)?;
    let files = load_labeled(&mut run)?;
    let mut used = BTreeSet::new();
    let mut names = Vec::new();
    for (i, (path, frames)) in files.iter().enumerate() {
        let mut stem = file_stem(path);
        if !used.insert(stem.clone()) {
            stem = format!("{stem}_{i}");
            used.insert(stem.clone());
        }
        let name = format!("{stem}.csv");
        write_frames(run.path(&name), frames)?;
        run.manifest.add_artifact(&run.dir, &name)?;
        names.push(stem);
    }
    let s = DatasetSummary::from_subsets(names.iter().zip(&files).map(|(n, (_, f))| (n.as_str(), f.as_slice())));
    println!(
        "{} frames: {} normal, {} abnormal, {} unlabeled",
        s.total, s.normal, s.abnormal, s.unlabeled
    );
    run.write_json("summary.json", &s)?;
    run.finish()
}

pub fn cmd_featurize(args: &FeaturizeArgs) -> Result<PathBuf> {
    let mut cfg = base_config(&args.common)?;
    apply_data(&mut cfg, &args.data);
    cfg.io.features = None;
    let mut run = Run::start("featurize", cfg)?;
    let (m, spec) = load_features(&mut run)?;
    m.save_csv(run.path("features.csv"))?;
    run.manifest.add_artifact(&run.dir, "features.csv")?;
    run.write_json("featurizer.json", &spec)?;
    println!("{} samples x {} features", m.n_samples(), m.n_features());
    run.finish()
}

pub fn cmd_train(args: &TrainArgs) -> Result<PathBuf> {
    let mut cfg = base_config(&args.common)?;
    apply_data(&mut cfg, &args.data);
    if let Some(k) = args.kind {
        cfg.classifier.kind = k;
    }
    let mut run = Run::start("train", cfg)?;
    let (m, spec) = load_features(&mut run)?;
    let c = &run.cfg.classifier;
    let mut model = train(c.kind, &m, &c.hyperparams, run.cfg.seed)?;
    model.featurizer = spec;
    run.write_text("model.json", &(model.to_json()? + "\n"))?;
    println!("trained {} on {} samples", model.kind.display_name(), m.n_samples());
    run.finish()
}

const METRIC_ROWS: [&str; 4] = ["Accuracy", "Precision", "Recall", "F1"];

/// Metrics-by-kind table; `*` marks a mean that includes an undefined fold.
pub fn crossval_table(reports: &[CrossValReport]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<10}", "Metric");
    for r in reports {
        let _ = write!(out, " {:>8}", r.kind.display_name());
    }
    out.push('\n');
    let mut flagged = false;
    for (row, name) in METRIC_ROWS.iter().enumerate() {
        let _ = write!(out, "{name:<10}");
        for r in reports {
            let m = r.mean;
            let v = [m.accuracy, m.precision, m.recall, m.f1][row];
            let undefined = r.folds.iter().any(|f| match row {
                1 => !f.confusion.precision_defined(),
                2 => !f.confusion.recall_defined(),
                3 => !f.confusion.precision_defined() || !f.confusion.recall_defined(),
                _ => false,
            });
            flagged |= undefined;
            let cell = format!("{:.3}{}", finite_or_zero(v), if undefined { "*" } else { "" });
            let _ = write!(out, " {cell:>8}");
        }
        out.push('\n');
    }
    if flagged {
        out.push_str("* undefined in at least one fold; counted as 0\n");
    }
    out
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

fn fold_table(reports: &[CrossValReport]) -> String {
    let mut out = String::from("kind,fold,test_size,tp,fp,tn,fn,accuracy,precision,recall,f1\n");
    for r in reports {
        for f in &r.folds {
            let c = f.confusion;
            let m = f.metrics;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                r.kind, f.fold, f.test_size, c.tp, c.fp, c.tn, c.fn_, m.accuracy, m.precision, m.recall, m.f1
            );
        }
    }
    out
}

pub fn cmd_crossval(args: &CrossvalArgs) -> Result<PathBuf> {
    let mut cfg = base_config(&args.common)?;
    apply_data(&mut cfg, &args.data);
    if !args.kinds.is_empty() {
        cfg.classifier.kinds = args.kinds.clone();
    }
    if let Some(k) = args.folds {
        cfg.classifier.folds = k;
    }
    if let Some(f) = args.format {
        cfg.report = f;
    }
    let mut run = Run::start("crossval", cfg)?;
    let (m, _) = load_features(&mut run)?;
    let c = run.cfg.classifier.clone();
    let reports = c
        .kinds
        .iter()
        .map(|&kind| cross_validate(kind, &m, c.folds, &c.hyperparams, run.cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    let table = crossval_table(&reports);
    run.write_json("crossval.json", &reports)?;
    run.write_text("crossval.txt", &table)?;
    run.write_text("crossval_folds.csv", &fold_table(&reports))?;
    match run.cfg.report {
        ReportFormat::Table => print!("{table}"),
        ReportFormat::Json => println!("{}", to_json(&reports)?),
    }
    run.finish()
}

fn load_model(run: &mut Run) -> Result<TrainedModel> {
    let path = run
        .cfg
        .io
        .model
        .clone()
        .ok_or_else(|| Error::Config("no model file (use --model or io.model)".into()))?;
    let model = TrainedModel::load(&path)?;
    run.manifest.add_input(&path)?;
    Ok(model)
}

pub fn margins_csv(t: &TuningResult) -> String {
    let mut out =
        String::from("lo,hi,n_normal,normal_misclassified,fp_rate,n_attack,attack_misclassified,fn_rate,winner\n");
    for (i, r) in t.reports.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{},{},{:.6},{}",
            r.margin.lo,
            r.margin.hi,
            r.n_normal,
            r.normal_misclassified,
            r.fp_rate,
            r.n_attack,
            r.attack_misclassified,
            r.fn_rate,
            i == t.winner
        );
    }
    out
}

pub fn cmd_tune(args: &TuneArgs) -> Result<PathBuf> {
    let mut cfg = base_config(&args.common)?;
    apply_data(&mut cfg, &args.data);
    if args.model.is_some() {
        cfg.io.model = args.model.clone();
    }
    if !args.margins.is_empty() {
        cfg.detector.margins = args.margins.clone();
    }
    if let Some(b) = args.bins {
        cfg.detector.bins = b;
    }
    if let Some(r) = args.rank {
        cfg.detector.rank = r;
    }
    let mut run = Run::start("tune", cfg)?;
    let model = load_model(&mut run)?;
    let m = features_for_model(&mut run, &model)?;
    let (normal, attack) = class_scores(&model, &m)?;
    let d = run.cfg.detector.clone();
    let tuning = tune_threshold(&normal, &attack, &d.margins, d.rank)?;
    run.write_text("margins.csv", &margins_csv(&tuning))?;
    run.write_json("tuning.json", &tuning)?;
    let mut hist = Vec::new();
    ScoreDistribution::from_scores(ScoreClass::Normal, &normal, d.bins)?.write_csv_to(&mut hist)?;
    let abnormal = ScoreDistribution::from_scores(ScoreClass::Abnormal, &attack, d.bins)?;
    let mut rows = Vec::new();
    abnormal.write_csv_to(&mut rows)?;
    // Drop the second header line.
    let body = String::from_utf8_lossy(&rows);
    let text = String::from_utf8_lossy(&hist).into_owned() + body.split_once('\n').map_or("", |(_, b)| b);
    run.write_text("score_histogram.csv", &text)?;
    print!("{}", tuning_table(&tuning));
    run.finish()
}

pub fn tuning_table(t: &TuningResult) -> String {
    let mut out = format!("{:<10} {:>8} {:>8}\n", "Margin", "FP rate", "FN rate");
    for (i, r) in t.reports.iter().enumerate() {
        let mark = if i == t.winner { " <" } else { "" };
        let _ = writeln!(
            out,
            "{:<10} {:>8.4} {:>8.5}{mark}",
            format!("{} - {}", r.margin.lo, r.margin.hi),
            r.fp_rate,
            r.fn_rate
        );
    }
    let _ = writeln!(out, "threshold {}", t.threshold);
    out
}

/// Features for scoring with `model`: the `io.features` matrix if given,
/// else built from inputs with the model's own featurizer.
fn features_for_model(run: &mut Run, model: &TrainedModel) -> Result<FeatureMatrix> {
    if run.cfg.io.features.is_some() {
        return Ok(load_features(run)?.0);
    }
    let spec = model
        .featurizer
        .clone()
        .ok_or_else(|| Error::Model("model does not record its featurizer; pass --features".into()))?;
    let files = load_labeled(run)?;
    let parts = files
        .iter()
        .map(|(_, f)| spec.build(f))
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::concat(&parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectSummary {
    pub threshold: f64,
    pub frames: usize,
    pub alarms: usize,
    /// Present when every scored frame is labeled.
    pub labeled: Option<LabeledOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledOutcome {
    pub attack_frames: usize,
    pub true_alarms: usize,
    pub overlap: f64,
}

#[derive(Debug, Deserialize)]
struct ThresholdOnly {
    threshold: f64,
}

pub fn cmd_detect(args: &DetectArgs) -> Result<PathBuf> {
    let mut cfg = base_config(&args.common)?;
    apply_data(&mut cfg, &args.data);
    cfg.io.features = None;
    if args.model.is_some() {
        cfg.io.model = args.model.clone();
    }
    if args.tuning.is_some() {
        cfg.io.tuning = args.tuning.clone();
    }
    if let Some(t) = args.threshold {
        cfg.detector.threshold = t;
        cfg.io.tuning = None;
    } else if let Some(p) = &cfg.io.tuning {
        cfg.detector.threshold = read_json::<ThresholdOnly>(p)?.threshold;
    }
    let mut run = Run::start("detect", cfg)?;
    if let Some(p) = run.cfg.io.tuning.clone() {
        run.manifest.add_input(&p)?;
    }
    let model = load_model(&mut run)?;
    let spec = model
        .featurizer
        .clone()
        .ok_or_else(|| Error::Model("model does not record its featurizer".into()))?;
    let detector = Detector::new(&model, run.cfg.detector.threshold)?;
    let files = load_labeled(&mut run)?;
    let mut out = String::from("file,timestamp,score,decision,label\n");
    let (mut alarms, mut truth) = (Vec::new(), Vec::new());
    let mut all_labeled = true;
    for (path, frames) in &files {
        let m = spec.build(frames)?;
        let verdicts = detector.detect_batch(&m)?;
        let name = file_stem(path);
        // Row j scores frame j + 1; the first frame has no predecessor.
        for (v, f) in verdicts.iter().zip(&frames[1..]) {
            let _ = writeln!(out, "{name},{},{},{},{}", f.timestamp, v.score, v.decision, f.label);
            alarms.push(v.decision == Decision::Abnormal);
            match f.label.is_abnormal() {
                Some(a) => truth.push(a),
                None => all_labeled = false,
            }
        }
    }
    run.write_text("verdicts.csv", &out)?;
    let n_alarms = alarms.iter().filter(|&&a| a).count();
    let labeled = all_labeled.then(|| LabeledOutcome {
        attack_frames: truth.iter().filter(|&&t| t).count(),
        true_alarms: alarms.iter().zip(&truth).filter(|(a, t)| **a && **t).count(),
        overlap: alarm_overlap(&alarms, &truth),
    });
    let summary = DetectSummary {
        threshold: run.cfg.detector.threshold,
        frames: alarms.len(),
        alarms: n_alarms,
        labeled,
    };
    run.write_json("detect_summary.json", &summary)?;
    println!("{}", detect_line(&summary));
    run.finish()
}

fn detect_line(s: &DetectSummary) -> String {
    let mut line = format!("{} frames scored, {} alarms at threshold {}", s.frames, s.alarms, s.threshold);
    if let Some(l) = &s.labeled {
        let _ = write!(line, "; {} attack frames, overlap {:.4}", l.attack_frames, l.overlap);
    }
    line
}

pub fn cmd_report(args: &ReportArgs) -> Result<Option<PathBuf>> {
    let text = fs::read_to_string(&args.input).map_err(|e| Error::io(&args.input, e))?;
    let format = args.format.unwrap_or_default();
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        column: args.input.display().to_string(),
        message: e.to_string(),
    })?;
    let rendered = if let Ok(r) = serde_json::from_value::<Vec<CrossValReport>>(value.clone()) {
        match format {
            ReportFormat::Table => crossval_table(&r),
            ReportFormat::Json => to_json(&r)? + "\n",
        }
    } else if let Ok(t) = serde_json::from_value::<TuningResult>(value.clone()) {
        match format {
            ReportFormat::Table => tuning_table(&t),
            ReportFormat::Json => to_json(&t)? + "\n",
        }
    } else if let Ok(s) = serde_json::from_value::<DetectSummary>(value) {
        match format {
            ReportFormat::Table => detect_line(&s) + "\n",
            ReportFormat::Json => to_json(&s)? + "\n",
        }
    } else {
        return Err(Error::Parse {
            line: 0,
            column: args.input.display().to_string(),
            message: "not a crossval, tuning or detect summary file".into(),
        });
    };
    print!("{rendered}");
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let name = match format {
                ReportFormat::Table => "report.txt",
                ReportFormat::Json => "report.json",
            };
            let path = dir.join(name);
            fs::write(&path, &rendered).map_err(|e| Error::io(&path, e))?;
            let mut manifest = Manifest::new("report", &text);
            manifest.add_input(&args.input)?;
            manifest.add_artifact(dir, name)?;
            manifest.save(dir)?;
            Ok(Some(dir.clone()))
        }
        None => Ok(None),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a).map(drop),
        Command::Ingest(a) => cmd_ingest(a).map(drop),
        Command::Featurize(a) => cmd_featurize(a).map(drop),
        Command::Train(a) => cmd_train(a).map(drop),
        Command::Crossval(a) => cmd_crossval(a).map(drop),
        Command::Tune(a) => cmd_tune(a).map(drop),
        Command::Detect(a) => cmd_detect(a).map(drop),
        Command::Report(a) => cmd_report(a).map(drop),
    }
}
