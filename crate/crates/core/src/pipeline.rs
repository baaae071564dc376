//! End-to-end preprocessing and evaluation over a set of samples.
//!
//! Order is fixed: decode, grayscale, rotate upright, crop the ROI, smooth,
//! then (HOG only) resize to the descriptor window.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{load_image, DatasetError, SampleRecord};
use crate::eval::{
    self, make_folds, score_queries, DistanceMatrix, EvalError, EvalReport, FoldMode,
};
use crate::hog::{compute_hog, hog_distance, HogDescriptor, HogError, HogParams};
use crate::imgproc::{
    crop_roi, gaussian_smooth, resize, rotate, to_grayscale, GrayImage, ImageError, Kernel,
};
use crate::keypoint::{
    extract_features, feature_score, match_count_distance, KeypointError, KeypointFeatures,
    KeypointParams,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Hog(#[from] HogError),
    #[error(transparent)]
    Keypoint(#[from] KeypointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("sample {sample_id}: {source}")]
    Sample {
        sample_id: String,
        #[source]
        source: Box<PipelineError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub kernel_size: usize,
    pub sigma: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            kernel_size: 4,
            sigma: 1.0,
        }
    }
}

impl SmoothingParams {
    pub fn kernel(&self) -> Result<Kernel, ImageError> {
        Kernel::gaussian(self.kernel_size, self.sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorKind {
    Hog,
    Keypoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorConfig {
    pub kind: DescriptorKind,
    pub hog: HogParams,
    pub smoothing: SmoothingParams,
    pub keypoint: KeypointParams,
    /// Ratio-test threshold used when matching keypoints.
    pub acceptance_threshold: f64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            kind: DescriptorKind::Hog,
            hog: HogParams::default(),
            smoothing: SmoothingParams::default(),
            keypoint: KeypointParams::default(),
            acceptance_threshold: 0.8,
        }
    }
}

/// Grayscale, rotate, crop and smooth one decoded image.
pub fn prepare_roi(
    rgb: &image::RgbImage,
    record: &SampleRecord,
    smoothing: &SmoothingParams,
) -> Result<GrayImage, PipelineError> {
    let gray = to_grayscale(rgb);
    let upright = rotate(&gray, record.rotation_deg);
    let roi = crop_roi(&upright, &record.roi)?;
    Ok(gaussian_smooth(&roi, &smoothing.kernel()?))
}

/// Loads the sample's image and prepares its smoothed ROI.
pub fn load_roi(
    record: &SampleRecord,
    smoothing: &SmoothingParams,
) -> Result<GrayImage, PipelineError> {
    let rgb = load_image(&record.image_path)?;
    prepare_roi(&rgb, record, smoothing)
}

/// Resizes a smoothed ROI to the descriptor window.
pub fn to_window(roi: &GrayImage, hog: &HogParams) -> Result<GrayImage, PipelineError> {
    Ok(resize(roi, hog.window_w, hog.window_h)?)
}

pub fn hog_for_roi(roi: &GrayImage, hog: &HogParams) -> Result<HogDescriptor, PipelineError> {
    Ok(compute_hog(&to_window(roi, hog)?, hog)?)
}

/// Computed descriptors for every sample, index-aligned with the input.
pub enum DescriptorSet {
    Hog(Vec<HogDescriptor>),
    Keypoint(Vec<KeypointFeatures>),
}

pub fn describe_all(
    rois: &[GrayImage],
    config: &DescriptorConfig,
) -> Result<DescriptorSet, PipelineError> {
    Ok(match config.kind {
        DescriptorKind::Hog => DescriptorSet::Hog(
            rois.par_iter()
                .map(|r| hog_for_roi(r, &config.hog))
                .collect::<Result<_, _>>()?,
        ),
        DescriptorKind::Keypoint => DescriptorSet::Keypoint(
            rois.par_iter()
                .map(|r| extract_features(r, &config.keypoint))
                .collect::<Result<_, _>>()?,
        ),
    })
}

/// All query-to-gallery distances. Keypoint similarity is the positive match
/// count from query to gallery, mapped to `1 / (1 + count)`.
pub fn distance_matrix(
    set: &DescriptorSet,
    config: &DescriptorConfig,
) -> Result<DistanceMatrix, PipelineError> {
    match set {
        DescriptorSet::Hog(d) => DistanceMatrix::from_fn(d.len(), |q, g| {
            hog_distance(&d[q], &d[g]).map_err(PipelineError::from)
        }),
        DescriptorSet::Keypoint(f) => DistanceMatrix::from_fn(f.len(), |q, g| {
            feature_score(&f[q], &f[g], config.acceptance_threshold)
                .map(match_count_distance)
                .map_err(PipelineError::from)
        }),
    }
}

/// Sorted distinct labels.
pub fn class_list(labels: &[String]) -> Vec<String> {
    labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub fold_mode: FoldMode,
    pub seed: u64,
    pub thresholds: Vec<f64>,
    pub operating_threshold: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            fold_mode: FoldMode::LeaveOneOut,
            seed: 0,
            thresholds: eval::default_threshold_grid(),
            operating_threshold: 0.9,
        }
    }
}

/// Cross-validated evaluation of prepared (smoothed) ROIs.
pub fn evaluate_rois(
    sample_ids: &[String],
    labels: &[String],
    rois: &[GrayImage],
    config: &DescriptorConfig,
    settings: &EvalSettings,
) -> Result<EvalReport, PipelineError> {
    let descriptors = describe_all(rois, config)?;
    let distances = distance_matrix(&descriptors, config)?;
    let plan = make_folds(labels.len(), settings.fold_mode, settings.seed)?;
    let queries = score_queries(&plan, sample_ids, labels, &distances)?;
    Ok(eval::build_report(
        &queries,
        &class_list(labels),
        &settings.thresholds,
        settings.operating_threshold,
    )?)
}

/// Loads and prepares every record, reporting failures per sample.
pub fn load_rois(
    records: &[SampleRecord],
    smoothing: &SmoothingParams,
) -> Vec<Result<GrayImage, PipelineError>> {
    records
        .par_iter()
        .map(|r| {
            load_roi(r, smoothing).map_err(|e| PipelineError::Sample {
                sample_id: r.sample_id(),
                source: Box::new(e),
            })
        })
        .collect()
}
