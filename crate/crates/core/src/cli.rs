//! Batch commands behind the `carapace` binary.
//!
//! Every command writes under an output directory:
//!
//! - `preprocess`: `roi/<sample_id>.pgm` (window-sized ROIs) and `provenance.json`
//! - `describe`: `descriptors/<sample_id>.hog.{json,bin}` or `<sample_id>.keypoints.json`
//! - `evaluate`: `report.json`, `roc.csv`, `confusion.csv`
//! - `synth`: a surrogate dataset (`images/*.pgm` plus `manifest.csv`)

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    self, dataset_stats, load_manifest, save_pgm, DatasetStats, RoiRect, SampleRecord,
};
use crate::eval::{check_threshold_grid, EvalReport, FoldMode};
use crate::hog::{descriptor_len, write_descriptor};
use crate::keypoint::extract_features;
use crate::nndr::check_threshold;
use crate::pipeline::{
    evaluate_rois, hog_for_roi, load_roi, load_rois, to_window, DescriptorConfig, DescriptorKind,
    EvalSettings, PipelineError,
};
use crate::synthetic::{generate, SurrogateConfig};

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid flags or configuration; exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Problems with the data or the filesystem; exit code 1.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<dataset::DatasetError> for CliError {
    fn from(e: dataset::DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_error(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Parses `start:end:step` or a comma-separated list.
pub fn parse_threshold_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("invalid threshold grid {spec:?}"));
    let grid: Vec<f64> = if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let [start, end, step] = parts[..] else {
            return Err(bad());
        };
        if !step.is_finite() || step <= 0.0 || end < start {
            return Err(bad());
        }
        let n = ((end - start) / step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect()
    } else {
        spec.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    check_threshold_grid(&grid).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(grid)
}

/// `loo` or a fold count.
pub fn parse_fold_mode(spec: &str) -> Result<FoldMode, CliError> {
    match spec.trim() {
        "loo" | "leave-one-out" => Ok(FoldMode::LeaveOneOut),
        k => k
            .parse::<usize>()
            .map(FoldMode::KFold)
            .map_err(|_| CliError::Config(format!("invalid fold mode {spec:?}; use 'loo' or k"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub descriptor: DescriptorConfig,
    pub evaluation: EvalSettings,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_threshold(self.evaluation.operating_threshold)
            .map_err(|e| CliError::Config(e.to_string()))?;
        check_threshold_grid(&self.evaluation.thresholds)
            .map_err(|e| CliError::Config(e.to_string()))?;
        descriptor_len(&self.descriptor.hog).map_err(|e| CliError::Config(e.to_string()))?;
        self.descriptor
            .smoothing
            .kernel()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let t = self.descriptor.acceptance_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(CliError::Config(format!(
                "acceptance threshold must be in (0, 1], got {t}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct Provenance<'a> {
    manifest: &'a Path,
    pipeline: [&'static str; 6],
    descriptor: &'a DescriptorConfig,
    samples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessSummary {
    pub written: Vec<PathBuf>,
}

/// Writes one window-sized PGM per sample. Samples that fail are listed in
/// the error after all others have been written.
pub fn cmd_preprocess(config: &RunConfig) -> Result<PreprocessSummary, CliError> {
    config.validate()?;
    let records = load_manifest(&config.manifest)?;
    let roi_dir = config.out.join("roi");
    create_dir(&roi_dir)?;
    let mut written = Vec::new();
    let mut failures = Vec::new();
    for (record, roi) in records
        .iter()
        .zip(load_rois(&records, &config.descriptor.smoothing))
    {
        let result = roi
            .and_then(|r| to_window(&r, &config.descriptor.hog))
            .map_err(CliError::from)
            .and_then(|w| {
                let path = roi_dir.join(format!("{}.pgm", record.sample_id()));
                save_pgm(&path, &w)?;
                Ok(path)
            });
        match result {
            Ok(path) => written.push(path),
            Err(e) => failures.push(format!(
                "{} ({}): {e}",
                record.sample_id(),
                record.image_path.display()
            )),
        }
    }
    write_json(
        &config.out.join("provenance.json"),
        &Provenance {
            manifest: &config.manifest,
            pipeline: [
                "grayscale",
                "rotate",
                "crop_roi",
                "gaussian_smooth",
                "resize",
                "write_pgm",
            ],
            descriptor: &config.descriptor,
            samples: records.iter().map(SampleRecord::sample_id).collect(),
        },
    )?;
    if failures.is_empty() {
        Ok(PreprocessSummary { written })
    } else {
        Err(CliError::Data(format!(
            "{} of {} samples failed:\n  {}",
            failures.len(),
            records.len(),
            failures.join("\n  ")
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DescribeSummary {
    Hog {
        length: usize,
        block_norm_min: f64,
        block_norm_mean: f64,
        block_norm_max: f64,
        all_zero: bool,
        files: Vec<PathBuf>,
    },
    Keypoint {
        count: usize,
        files: Vec<PathBuf>,
    },
}

pub fn cmd_describe(config: &RunConfig, sample_id: &str) -> Result<DescribeSummary, CliError> {
    config.validate()?;
    let records = load_manifest(&config.manifest)?;
    let record = records
        .iter()
        .find(|r| r.sample_id() == sample_id)
        .ok_or_else(|| CliError::Data(format!("unknown sample {sample_id:?}")))?;
    let roi = load_roi(record, &config.descriptor.smoothing)?;
    let dir = config.out.join("descriptors");
    create_dir(&dir)?;
    match config.descriptor.kind {
        DescriptorKind::Hog => {
            let desc = hog_for_roi(&roi, &config.descriptor.hog)?;
            let json = dir.join(format!("{sample_id}.hog.json"));
            let bin = dir.join(format!("{sample_id}.hog.bin"));
            write_json(&json, &desc)?;
            let file = fs::File::create(&bin).map_err(|e| io_error(&bin, e))?;
            write_descriptor(&mut BufWriter::new(file), &desc).map_err(|e| io_error(&bin, e))?;
            let norms = desc.block_norms();
            let (min, max) = norms
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            Ok(DescribeSummary::Hog {
                length: desc.len(),
                block_norm_min: min,
                block_norm_mean: norms.iter().sum::<f64>() / norms.len() as f64,
                block_norm_max: max,
                all_zero: desc.is_zero(),
                files: vec![json, bin],
            })
        }
        DescriptorKind::Keypoint => {
            let features = extract_features(&roi, &config.descriptor.keypoint)
                .map_err(|e| CliError::Data(e.to_string()))?;
            let json = dir.join(format!("{sample_id}.keypoints.json"));
            write_json(&json, &features)?;
            Ok(DescribeSummary::Keypoint {
                count: features.len(),
                files: vec![json],
            })
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunReport<'a> {
    pub config: &'a RunConfig,
    pub dataset: DatasetStats,
    pub evaluation: &'a EvalReport,
}

pub const REPORT_FILES: [&str; 3] = ["report.json", "roc.csv", "confusion.csv"];

fn write_roc_csv(path: &Path, report: &EvalReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(["threshold", "tp", "fp", "tn", "fn", "tpr", "fpr"])
        .map_err(|e| io_error(path, e))?;
    for p in &report.sweep {
        w.write_record([
            p.threshold.to_string(),
            p.counts.tp.to_string(),
            p.counts.fp.to_string(),
            p.counts.tn.to_string(),
            p.counts.fn_.to_string(),
            p.rates.tpr.to_string(),
            p.rates.fpr.to_string(),
        ])
        .map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

fn write_confusion_csv(path: &Path, report: &EvalReport) -> Result<(), CliError> {
    let cm = &report.confusion;
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    let mut header = vec!["actual".to_string()];
    header.extend(cm.column_labels().into_iter().map(String::from));
    w.write_record(&header).map_err(|e| io_error(path, e))?;
    for (class, row) in cm.classes.iter().zip(&cm.proportions) {
        let mut rec = vec![class.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

fn write_outputs(
    config: &RunConfig,
    stats: DatasetStats,
    report: &EvalReport,
) -> Result<(), CliError> {
    create_dir(&config.out)?;
    write_json(
        &config.out.join("report.json"),
        &RunReport {
            config,
            dataset: stats,
            evaluation: report,
        },
    )?;
    write_roc_csv(&config.out.join("roc.csv"), report)?;
    write_confusion_csv(&config.out.join("confusion.csv"), report)
}

fn remove_outputs(out: &Path) {
    for name in REPORT_FILES {
        let _ = fs::remove_file(out.join(name));
    }
}

/// Runs the cross-validated evaluation and writes the report files. Nothing
/// is left behind on failure.
pub fn cmd_evaluate(config: &RunConfig) -> Result<EvalReport, CliError> {
    config.validate()?;
    let result = (|| {
        let records = load_manifest(&config.manifest)?;
        let rois = load_rois(&records, &config.descriptor.smoothing)
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let ids: Vec<String> = records.iter().map(SampleRecord::sample_id).collect();
        let labels: Vec<String> = records.iter().map(|r| r.individual_id.clone()).collect();
        let report = evaluate_rois(&ids, &labels, &rois, &config.descriptor, &config.evaluation)?;
        write_outputs(config, dataset_stats(&records), &report)?;
        Ok(report)
    })();
    if result.is_err() {
        remove_outputs(&config.out);
    }
    result
}

/// Writes the surrogate dataset as PGM files with a manifest. Returns the
/// manifest path.
pub fn cmd_synth(out: &Path, cfg: &SurrogateConfig) -> Result<PathBuf, CliError> {
    if cfg.classes == 0 || cfg.per_class == 0 {
        return Err(CliError::Config(
            "classes and per-class must be at least 1".into(),
        ));
    }
    let image_dir = out.join("images");
    create_dir(&image_dir)?;
    let mut records = Vec::new();
    for s in generate(cfg) {
        let path = image_dir.join(format!("{}.pgm", s.sample_id));
        save_pgm(&path, &s.image)?;
        records.push(SampleRecord {
            image_path: path,
            individual_id: s.class_label,
            rotation_deg: 0.0,
            roi: RoiRect {
                x: 0,
                y: 0,
                w: s.image.width() as u32,
                h: s.image.height() as u32,
            },
        });
    }
    let manifest = out.join("manifest.csv");
    dataset::write_manifest(&manifest, &records)?;
    Ok(manifest)
}
