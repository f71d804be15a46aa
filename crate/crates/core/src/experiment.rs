//! Manifest-driven experiments: dataset directories, per-arm training runs,
//! checkpoints and Markdown/JSON reports.
//!
//! A manifest names datasets (CSV files, seeded synthetic series or merges of
//! other entries) and arms (model variants). Every `(dataset, arm)` pair
//! becomes one report row. All randomness is derived from `master_seed`, so
//! a manifest and its seed determine every output byte.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposer::{subcharts, DecomposeError};
use crate::labeling::{build_samples, ClassBalance, LabelerParams, ManifestRecord, StrengthLabel, HISTORY_LEN};
use crate::market_data::{parse_csv, synth_series, BadRowPolicy, ColumnMap, MarketDataError, Series, SynthParams};
use crate::metrics::EvalReport;
use crate::model::{
    train, train_dcp, Autoencoder, Classifier, ClassifierDataset, ClassifierSample, DcpConfig, DcpDataset,
    DcpSample, EpochRecord, ModelConfig, ModelError, SplitSizes, TrainConfig, Variant,
};
use crate::neural::{decode_checkpoint, encode_checkpoint};
use crate::pattern::PatternRuleParams;
use crate::raster::{read_ppm, render_pattern, render_window, write_ppm, RasterError, RasterImage, RenderSpec};
use crate::rng::stage_seed;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("source not found: {0}")]
    SourceNotFound(String),
    #[error("dataset {0:?} has no admissible samples")]
    EmptyDataset(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

type Result<T> = std::result::Result<T, ExperimentError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |e| ExperimentError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        columns: ColumnMap,
        #[serde(default)]
        bad_rows: BadRowPolicy,
    },
    Synth {
        candles: usize,
        #[serde(default)]
        params: SynthParams,
        /// Defaults to a seed derived from the master seed and dataset name.
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Concatenates the samples of other (non-merge) entries.
    Merge { members: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    #[serde(flatten)]
    pub source: DatasetSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub name: String,
    pub variant: Variant,
    #[serde(default)]
    pub include_pattern: bool,
}

impl ArmSpec {
    fn is_dcp(&self) -> bool {
        matches!(self.variant, Variant::Cae | Variant::Cnn1d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub datasets: Vec<DatasetEntry>,
    pub arms: Vec<ArmSpec>,
    #[serde(default)]
    pub pattern: PatternRuleParams,
    #[serde(default)]
    pub labeler: LabelerParams,
    #[serde(default)]
    pub render: RenderSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub dcp: DcpConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentManifest {
    /// Reads a JSON manifest; relative CSV paths and `output_dir` are
    /// resolved against the manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut m: Self = serde_json::from_str(&text).map_err(|e| ExperimentError::Json {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if m.output_dir.is_relative() {
            m.output_dir = base.join(&m.output_dir);
        }
        for d in &mut m.datasets {
            if let DatasetSource::Csv { path, .. } = &mut d.source {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ExperimentError::InvalidManifest(msg));
        let mut names = HashSet::new();
        for d in &self.datasets {
            if d.name.is_empty() || !names.insert(d.name.as_str()) {
                return bad(format!("dataset name {:?} is empty or repeated", d.name));
            }
        }
        for d in &self.datasets {
            if let DatasetSource::Merge { members } = &d.source {
                if members.is_empty() {
                    return bad(format!("merge {:?} has no members", d.name));
                }
                for m in members {
                    match self.dataset(m) {
                        Some(DatasetEntry { source: DatasetSource::Merge { .. }, .. }) => {
                            return bad(format!("merge {:?} lists another merge {m:?}", d.name))
                        }
                        Some(_) => {}
                        None => return Err(ExperimentError::SourceNotFound(format!("merge member {m:?}"))),
                    }
                }
            }
        }
        let mut arms = HashSet::new();
        for a in &self.arms {
            if a.name.is_empty() || !arms.insert(a.name.as_str()) {
                return bad(format!("arm name {:?} is empty or repeated", a.name));
            }
            if a.include_pattern != (a.variant == Variant::TwoStream) {
                return bad(format!(
                    "arm {:?}: include_pattern must be true exactly for the TwoStream variant",
                    a.name
                ));
            }
        }
        Ok(())
    }

    pub fn dataset(&self, name: &str) -> Option<&DatasetEntry> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn arm(&self, name: &str) -> Option<&ArmSpec> {
        self.arms.iter().find(|a| a.name == name)
    }

    pub fn dataset_dir(&self, name: &str) -> PathBuf {
        self.output_dir.join("datasets").join(name)
    }

    pub fn checkpoint_path(&self, dataset: &str, arm: &str) -> PathBuf {
        self.output_dir.join("checkpoints").join(format!("{dataset}__{arm}.ckpt"))
    }

    pub fn cae_checkpoint_path(&self, dataset: &str, arm: &str) -> PathBuf {
        self.output_dir.join("checkpoints").join(format!("{dataset}__{arm}.cae.ckpt"))
    }

    /// Model configuration for one arm, with its initialization seed.
    pub fn arm_model_config(&self, dataset: &str, arm: &ArmSpec) -> ModelConfig {
        ModelConfig {
            variant: arm.variant,
            seed: stage_seed(self.master_seed, &format!("init:{dataset}:{}", arm.name)),
            ..self.model.clone()
        }
    }

    pub fn arm_train_config(&self, dataset: &str, arm: &ArmSpec) -> TrainConfig {
        TrainConfig {
            seed: stage_seed(self.master_seed, &format!("train:{dataset}:{}", arm.name)),
            ..self.train
        }
    }

    /// The series behind a (non-merge) entry, symbol set to the entry name.
    pub fn load_series(&self, entry: &DatasetEntry) -> Result<Series> {
        match &entry.source {
            DatasetSource::Csv { path, columns, bad_rows } => {
                let text = fs::read_to_string(path)
                    .map_err(|_| ExperimentError::SourceNotFound(path.display().to_string()))?;
                Ok(parse_csv(&text, &entry.name, columns, *bad_rows)?.series)
            }
            DatasetSource::Synth { candles, params, seed } => {
                let seed = seed.unwrap_or_else(|| stage_seed(self.master_seed, &format!("synth:{}", entry.name)));
                let s = synth_series(seed, *candles, params)?;
                Ok(Series::new(&entry.name, s.candles().to_vec())?)
            }
            DatasetSource::Merge { .. } => Err(ExperimentError::InvalidManifest(format!(
                "{:?} is a merge, not a series",
                entry.name
            ))),
        }
    }

    /// Every member series of an entry: itself, or a merge's members.
    pub fn member_series(&self, name: &str) -> Result<Vec<Series>> {
        let entry = self
            .dataset(name)
            .ok_or_else(|| ExperimentError::SourceNotFound(format!("dataset {name:?}")))?;
        match &entry.source {
            DatasetSource::Merge { members } => members
                .iter()
                .map(|m| {
                    let e = self
                        .dataset(m)
                        .ok_or_else(|| ExperimentError::SourceNotFound(format!("merge member {m:?}")))?;
                    self.load_series(e)
                })
                .collect(),
            _ => Ok(vec![self.load_series(entry)?]),
        }
    }
}

/// Counts from one dataset build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub samples: usize,
    pub total_matches: usize,
    pub excluded: usize,
    pub class_balance: ClassBalance,
}

fn file_stem_for(index: usize, sample_id: &str) -> String {
    let clean: String = sample_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("{index:05}_{clean}")
}

/// Detects, labels and renders every admissible sample of `series` into
/// `dir`: `manifest.jsonl`, `history/*.ppm` and `pattern/*.ppm`. Previous
/// contents of those paths are replaced, so identical inputs give identical
/// bytes.
pub fn build_dataset(
    name: &str,
    series: &[Series],
    dir: &Path,
    pattern: &PatternRuleParams,
    labeler: &LabelerParams,
    render: &RenderSpec,
) -> Result<DatasetSummary> {
    render.validate()?;
    let mut samples = Vec::new();
    let (mut total_matches, mut excluded) = (0, 0);
    for s in series {
        let set = build_samples(s, pattern, labeler, HISTORY_LEN);
        total_matches += set.total_matches;
        excluded += set.excluded;
        samples.extend(set.samples);
    }
    if samples.is_empty() {
        return Err(ExperimentError::EmptyDataset(name.to_string()));
    }
    for sub in ["history", "pattern"] {
        let p = dir.join(sub);
        if p.exists() {
            fs::remove_dir_all(&p).map_err(io_err(&p))?;
        }
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    let mut lines = String::new();
    for (i, s) in samples.iter().enumerate() {
        let stem = file_stem_for(i, &s.sample_id);
        let history_rel = format!("history/{stem}.ppm");
        let pattern_rel = format!("pattern/{stem}.ppm");
        write_bytes(&dir.join(&history_rel), &write_ppm(&render_window(&s.history, render)?))?;
        let crop = render_pattern(&s.history, &s.pattern, render)?;
        write_bytes(&dir.join(&pattern_rel), &write_ppm(&crop))?;
        let record = ManifestRecord {
            history_image_path: Some(history_rel),
            pattern_image_path: Some(pattern_rel),
            ..ManifestRecord::from_sample(s)
        };
        lines.push_str(&serde_json::to_string(&record).expect("records serialize"));
        lines.push('\n');
    }
    write_bytes(&dir.join("manifest.jsonl"), lines.as_bytes())?;
    Ok(DatasetSummary {
        samples: samples.len(),
        total_matches,
        excluded,
        class_balance: ClassBalance::of(samples.iter().map(|s| s.strength)),
    })
}

pub fn read_records(dir: &Path) -> Result<Vec<ManifestRecord>> {
    let path = dir.join("manifest.jsonl");
    let text = fs::read_to_string(&path).map_err(|_| ExperimentError::SourceNotFound(path.display().to_string()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| ExperimentError::Json {
                path: path.clone(),
                message: e.to_string(),
            })
        })
        .collect()
}

fn load_image(dir: &Path, rel: &Option<String>, sample_id: &str) -> Result<RasterImage> {
    let rel = rel
        .as_ref()
        .ok_or_else(|| ExperimentError::SourceNotFound(format!("image path of {sample_id}")))?;
    Ok(read_ppm(&read_bytes(&dir.join(rel))?)?)
}

fn resized_chw(image: &RasterImage, shape: [usize; 3]) -> Vec<f32> {
    image.resize_nearest(shape[2], shape[1]).to_chw()
}

/// Image dataset for the MiniCNN and TwoStream arms.
pub fn load_classifier_dataset(dir: &Path, model: &ModelConfig, include_pattern: bool) -> Result<ClassifierDataset> {
    let mut samples = Vec::new();
    for r in read_records(dir)? {
        let history = load_image(dir, &r.history_image_path, &r.sample_id)?;
        let secondary = if include_pattern {
            Some(resized_chw(&load_image(dir, &r.pattern_image_path, &r.sample_id)?, model.pattern_shape))
        } else {
            None
        };
        samples.push(ClassifierSample {
            primary: resized_chw(&history, model.history_shape),
            secondary,
            label: r.strength == StrengthLabel::Strong,
            member: r.symbol,
            order: r.end_index as i64,
        });
    }
    Ok(ClassifierDataset {
        primary_shape: model.history_shape.to_vec(),
        secondary_shape: include_pattern.then(|| model.pattern_shape.to_vec()),
        samples,
    })
}

/// Sub-chart sequences (k = 3, stride = 1) cut from each history image.
pub fn load_dcp_dataset(dir: &Path, render: &RenderSpec, model: &ModelConfig) -> Result<DcpDataset> {
    let mut samples = Vec::new();
    for r in read_records(dir)? {
        let history = load_image(dir, &r.history_image_path, &r.sample_id)?;
        let subcharts = subcharts(&history, render, 3, 1)?
            .iter()
            .map(|c| resized_chw(c, model.subchart_shape))
            .collect();
        samples.push(DcpSample {
            subcharts,
            label: r.strength == StrengthLabel::Strong,
            member: r.symbol,
            order: r.end_index as i64,
        });
    }
    Ok(DcpDataset {
        subchart_shape: model.subchart_shape.to_vec(),
        samples,
    })
}

/// Result of one trained arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRun {
    pub history: Vec<EpochRecord>,
    pub test: EvalReport,
    pub split: SplitSizes,
    /// Autoencoder reconstruction MSE per epoch (decomposition arms only).
    pub cae_mse: Option<Vec<f64>>,
    pub checkpoint: String,
}

fn relative_to(base: &Path, path: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

/// Trains one arm on an already built dataset directory and writes its
/// checkpoint(s).
pub fn train_arm(m: &ExperimentManifest, dataset: &str, arm: &ArmSpec) -> Result<ArmRun> {
    let dir = m.dataset_dir(dataset);
    let model_cfg = m.arm_model_config(dataset, arm);
    let train_cfg = m.arm_train_config(dataset, arm);
    let ckpt = m.checkpoint_path(dataset, arm.name.as_str());
    if arm.is_dcp() {
        let ds = load_dcp_dataset(&dir, &m.render, &model_cfg)?;
        let out = train_dcp(&ds, &model_cfg, &train_cfg, &m.dcp)?;
        write_bytes(&ckpt, &encode_checkpoint(&out.classifier.export_params()))?;
        write_bytes(
            &m.cae_checkpoint_path(dataset, &arm.name),
            &encode_checkpoint(&out.cae.export_params()),
        )?;
        Ok(ArmRun {
            history: out.report.history,
            test: out.report.test,
            split: out.report.split,
            cae_mse: Some(out.cae_mse),
            checkpoint: relative_to(&m.output_dir, &ckpt),
        })
    } else {
        let ds = load_classifier_dataset(&dir, &model_cfg, arm.include_pattern)?;
        let mut model = Classifier::build(&model_cfg)?;
        let report = train(&mut model, &ds, &train_cfg)?;
        write_bytes(&ckpt, &encode_checkpoint(&model.export_params()))?;
        Ok(ArmRun {
            history: report.history,
            test: report.test,
            split: report.split,
            cae_mse: None,
            checkpoint: relative_to(&m.output_dir, &ckpt),
        })
    }
}

/// Re-evaluates a saved arm checkpoint on its dataset's test partition.
pub fn evaluate_arm(m: &ExperimentManifest, dataset: &str, arm: &ArmSpec) -> Result<EvalReport> {
    let dir = m.dataset_dir(dataset);
    let model_cfg = m.arm_model_config(dataset, arm);
    let train_cfg = m.arm_train_config(dataset, arm);
    let decode = |p: PathBuf| -> Result<_> { Ok(decode_checkpoint(&read_bytes(&p)?).map_err(ModelError::from)?) };
    let (model, ds) = if arm.is_dcp() {
        let mut cae = Autoencoder::build(&ModelConfig { variant: Variant::Cae, ..model_cfg.clone() })?;
        cae.import_params(&decode(m.cae_checkpoint_path(dataset, &arm.name))?)?;
        let dcp = load_dcp_dataset(&dir, &m.render, &model_cfg)?;
        let mut samples = Vec::with_capacity(dcp.len());
        for s in dcp.samples {
            let rows: Vec<&[f32]> = s.subcharts.iter().map(Vec::as_slice).collect();
            let z = cae.encode(&crate::neural::stack(&dcp.subchart_shape, &rows).map_err(ModelError::from)?)?;
            let (latent, seq) = (cae.latent_dim(), rows.len());
            let mut primary = vec![0.0f32; latent * seq];
            for (t, zt) in z.data().chunks_exact(latent).enumerate() {
                for (c, &v) in zt.iter().enumerate() {
                    primary[c * seq + t] = v;
                }
            }
            samples.push(ClassifierSample { primary, secondary: None, label: s.label, member: s.member, order: s.order });
        }
        let ds = ClassifierDataset {
            primary_shape: vec![model_cfg.latent_dim, model_cfg.seq_len],
            secondary_shape: None,
            samples,
        };
        (Classifier::build(&ModelConfig { variant: Variant::Cnn1d, ..model_cfg })?, ds)
    } else {
        let ds = load_classifier_dataset(&dir, &model_cfg, arm.include_pattern)?;
        (Classifier::build(&model_cfg)?, ds)
    };
    let mut model = model;
    model.import_params(&decode(m.checkpoint_path(dataset, &arm.name))?)?;
    let split = ds.split(&train_cfg.split, train_cfg.seed)?;
    let (report, _) = crate::model::evaluate_classifier(&model, &ds, &split.test, train_cfg.threshold)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub crate_version: String,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub arm: String,
    pub variant: Variant,
    pub dataset_summary: Option<DatasetSummary>,
    pub run: Option<ArmRun>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub environment: Environment,
    /// Dataset-major, in manifest order.
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn all_succeeded(&self) -> bool {
        self.rows.iter().all(|r| r.error.is_none())
    }
}

/// Builds every dataset, trains every arm on every dataset, writes
/// checkpoints plus `report.json` and `report.md` into `output_dir`. A
/// failing dataset or arm is recorded in its rows and does not stop the rest.
pub fn run_experiment(m: &ExperimentManifest) -> Result<ExperimentReport> {
    m.validate()?;
    let mut rows = Vec::new();
    for entry in &m.datasets {
        let built = m.member_series(&entry.name).and_then(|series| {
            build_dataset(&entry.name, &series, &m.dataset_dir(&entry.name), &m.pattern, &m.labeler, &m.render)
        });
        for arm in &m.arms {
            let (summary, outcome) = match &built {
                Ok(summary) => (Some(*summary), train_arm(m, &entry.name, arm).map_err(|e| e.to_string())),
                Err(e) => (None, Err(format!("dataset build failed: {e}"))),
            };
            let (run, error) = match outcome {
                Ok(run) => (Some(run), None),
                Err(e) => (None, Some(e)),
            };
            rows.push(ReportRow {
                dataset: entry.name.clone(),
                arm: arm.name.clone(),
                variant: arm.variant,
                dataset_summary: summary,
                run,
                error,
            });
        }
    }
    let report = ExperimentReport {
        environment: Environment {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: m.master_seed,
        },
        rows,
    };
    write_report(&report, &m.output_dir)?;
    Ok(report)
}

pub fn write_report(report: &ExperimentReport, output_dir: &Path) -> Result<()> {
    let (md, json) = render_report(report);
    write_bytes(&output_dir.join("report.json"), json.as_bytes())?;
    write_bytes(&output_dir.join("report.md"), md.as_bytes())
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    serde_json::from_slice(&read_bytes(path)?).map_err(|e| ExperimentError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn cell(x: f64) -> String {
    format!("{x:.3}")
}

/// Markdown with one `Dataset | Accuracy | F1 | AUC` table per arm plus a
/// sample-count table, and the full-precision JSON sidecar.
pub fn render_report(report: &ExperimentReport) -> (String, String) {
    let mut md = String::new();
    let env = &report.environment;
    let _ = writeln!(md, "# Experiment report\n");
    let _ = writeln!(md, "candlenet {}, master seed {}.\n", env.crate_version, env.master_seed);
    let mut arms: Vec<(&str, Variant)> = Vec::new();
    for r in &report.rows {
        if !arms.iter().any(|(a, _)| *a == r.arm) {
            arms.push((&r.arm, r.variant));
        }
    }
    let mut errors = Vec::new();
    for (arm, variant) in arms {
        let _ = writeln!(md, "## {arm} ({variant:?})\n");
        let _ = writeln!(md, "| Dataset | Accuracy | F1 | AUC |");
        let _ = writeln!(md, "|---|---|---|---|");
        for r in report.rows.iter().filter(|r| r.arm == arm) {
            match (&r.run, &r.error) {
                (Some(run), _) => {
                    let auc = run.test.auc.map_or_else(|| "n/a".to_string(), cell);
                    let _ = writeln!(
                        md,
                        "| {} | {} | {} | {} |",
                        r.dataset,
                        cell(run.test.accuracy),
                        cell(run.test.f1),
                        auc
                    );
                }
                (None, err) => {
                    errors.push(format!("{} / {}: {}", r.dataset, arm, err.as_deref().unwrap_or("unknown error")));
                    let _ = writeln!(md, "| {} | error | error | error |", r.dataset);
                }
            }
        }
        md.push('\n');
    }
    let _ = writeln!(md, "## Samples\n");
    let _ = writeln!(md, "| Dataset | Arm | Samples | Strong | Weak | Train | Val | Test |");
    let _ = writeln!(md, "|---|---|---|---|---|---|---|---|");
    for r in &report.rows {
        let (n, strong, weak) = r
            .dataset_summary
            .map_or(("-".into(), "-".into(), "-".into()), |s| {
                (s.samples.to_string(), s.class_balance.strong.to_string(), s.class_balance.weak.to_string())
            });
        let (tr, va, te) = r.run.as_ref().map_or(("-".into(), "-".into(), "-".into()), |run| {
            (run.split.train.to_string(), run.split.val.to_string(), run.split.test.to_string())
        });
        let _ = writeln!(md, "| {} | {} | {n} | {strong} | {weak} | {tr} | {va} | {te} |", r.dataset, r.arm);
    }
    if !errors.is_empty() {
        let _ = writeln!(md, "\n## Errors\n");
        for e in errors {
            let _ = writeln!(md, "- {e}");
        }
    }
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    (md, json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::Candle;

    fn constant_series(n: usize) -> Series {
        let candles = (0..n).map(|i| Candle::new(i as i64, 100.0, 100.0, 100.0, 100.0)).collect();
        Series::new("FLAT", candles).unwrap()
    }

    #[test]
    fn constant_series_builds_26_samples() {
        let dir = tempfile::tempdir().unwrap();
        let s = constant_series(60);
        let p = PatternRuleParams::default();
        let l = LabelerParams::default();
        let r = RenderSpec::default();
        let summary = build_dataset("flat", std::slice::from_ref(&s), dir.path(), &p, &l, &r).unwrap();
        assert_eq!(summary.samples, 26);
        assert_eq!(fs::read_dir(dir.path().join("history")).unwrap().count(), 26);
        assert_eq!(fs::read_dir(dir.path().join("pattern")).unwrap().count(), 26);
        let before = fs::read(dir.path().join("manifest.jsonl")).unwrap();
        build_dataset("flat", &[s], dir.path(), &p, &l, &r).unwrap();
        assert_eq!(before, fs::read(dir.path().join("manifest.jsonl")).unwrap());
        assert_eq!(read_records(dir.path()).unwrap().len(), 26);
    }

    #[test]
    fn short_series_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let err = build_dataset(
            "short",
            &[constant_series(34)],
            dir.path(),
            &PatternRuleParams::default(),
            &LabelerParams::default(),
            &RenderSpec::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ExperimentError::EmptyDataset(_)));
    }

    fn manifest_json(extra: &str) -> String {
        format!(
            r#"{{"master_seed": 1, "datasets": [{{"name": "a", "source": "synth", "candles": 100}}{extra}],
                "arms": [{{"name": "plain", "variant": "MiniCnn"}}]}}"#
        )
    }

    #[test]
    fn manifest_validation() {
        let ok: ExperimentManifest = serde_json::from_str(&manifest_json("")).unwrap();
        ok.validate().unwrap();
        assert_eq!(ok.output_dir, PathBuf::from("out"));
        let dup: ExperimentManifest =
            serde_json::from_str(&manifest_json(r#", {"name": "a", "source": "synth", "candles": 5}"#)).unwrap();
        assert!(matches!(dup.validate(), Err(ExperimentError::InvalidManifest(_))));
        let missing: ExperimentManifest =
            serde_json::from_str(&manifest_json(r#", {"name": "m", "source": "merge", "members": ["zz"]}"#)).unwrap();
        assert!(matches!(missing.validate(), Err(ExperimentError::SourceNotFound(_))));
        let mut wrong_arm = ok.clone();
        wrong_arm.arms[0].include_pattern = true;
        assert!(wrong_arm.validate().is_err());
        assert!(serde_json::from_str::<ExperimentManifest>(r#"{"datasets": [], "arms": []}"#).is_err());
    }

    #[test]
    fn missing_csv_is_source_not_found() {
        let m: ExperimentManifest = serde_json::from_str(
            r#"{"master_seed": 1, "datasets": [{"name": "x", "source": "csv", "path": "/no/such.csv"}], "arms": []}"#,
        )
        .unwrap();
        assert!(matches!(m.member_series("x"), Err(ExperimentError::SourceNotFound(_))));
    }

    #[test]
    fn report_markdown_shape() {
        let test = crate::metrics::evaluate(&[0.9, 0.2], &[true, false], 0.5).unwrap();
        let row = |arm: &str, ok: bool| ReportRow {
            dataset: "d1".into(),
            arm: arm.into(),
            variant: Variant::MiniCnn,
            dataset_summary: None,
            run: ok.then(|| ArmRun {
                history: vec![],
                test: test.clone(),
                split: SplitSizes { train: 1, val: 1, test: 2 },
                cae_mse: None,
                checkpoint: "c".into(),
            }),
            error: (!ok).then(|| "boom".to_string()),
        };
        let report = ExperimentReport {
            environment: Environment { crate_version: "0".into(), master_seed: 3 },
            rows: vec![row("a", true), row("b", false)],
        };
        let (md, json) = render_report(&report);
        assert_eq!(md.matches("| Dataset | Accuracy | F1 | AUC |").count(), 2);
        assert!(md.contains("| d1 | 1.000 | 1.000 | 1.000 |"));
        assert!(md.contains("d1 / b: boom"));
        assert_eq!(serde_json::from_str::<ExperimentReport>(&json).unwrap(), report);
        assert!(!report.all_succeeded());
    }
}
