//! Dataset manifest and image loading.
//!
//! A manifest is a UTF-8 CSV file with the header
//! `image_path,individual_id,rotation_deg,roi_x,roi_y,roi_w,roi_h`. Lines
//! starting with `#` are comments. Relative image paths resolve against the
//! manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("manifest line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("manifest line {line}: ROI must have w >= 1 and h >= 1")]
    InvalidRoi { line: u64 },
    #[error("manifest line {line}: duplicate sample id {id:?}")]
    DuplicateSample { line: u64, id: String },
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub const MANIFEST_HEADER: [&str; 7] = [
    "image_path",
    "individual_id",
    "rotation_deg",
    "roi_x",
    "roi_y",
    "roi_w",
    "roi_h",
];

/// Region of interest in the rotated image frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub image_path: PathBuf,
    pub individual_id: String,
    /// Degrees counterclockwise that bring the carapace upright.
    pub rotation_deg: f64,
    pub roi: RoiRect,
}

impl SampleRecord {
    /// Unique key of the sample: the image file stem.
    pub fn sample_id(&self) -> String {
        self.image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.image_path.to_string_lossy().into_owned())
    }
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    image_path: String,
    individual_id: String,
    rotation_deg: f64,
    roi_x: u32,
    roi_y: u32,
    roi_w: u32,
    roi_h: u32,
}

/// Reads and validates a manifest. Rows keep file order.
pub fn load_manifest(path: &Path) -> Result<Vec<SampleRecord>, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DatasetError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;

    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            return Err(DatasetError::Parse {
                line: 1,
                reason: e.to_string(),
            })
        }
    };
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(DatasetError::Parse {
            line: reader.position().line().max(1),
            reason: format!("expected header {}", MANIFEST_HEADER.join(",")),
        });
    }

    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for result in reader.records() {
        let record = result.map_err(|e| DatasetError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: ManifestRow =
            record
                .deserialize(Some(&headers))
                .map_err(|e| DatasetError::Parse {
                    line,
                    reason: e.to_string(),
                })?;
        let parse_err = |reason: &str| DatasetError::Parse {
            line,
            reason: reason.to_string(),
        };
        if !row.rotation_deg.is_finite() {
            return Err(parse_err("rotation_deg must be finite"));
        }
        if row.individual_id.is_empty() {
            return Err(parse_err("individual_id must be non-empty"));
        }
        if row.image_path.is_empty() {
            return Err(parse_err("image_path must be non-empty"));
        }
        if row.roi_w == 0 || row.roi_h == 0 {
            return Err(DatasetError::InvalidRoi { line });
        }
        let sample = SampleRecord {
            image_path: base.join(&row.image_path),
            individual_id: row.individual_id,
            rotation_deg: row.rotation_deg,
            roi: RoiRect {
                x: row.roi_x,
                y: row.roi_y,
                w: row.roi_w,
                h: row.roi_h,
            },
        };
        let id = sample.sample_id();
        if !ids.insert(id.clone()) {
            return Err(DatasetError::DuplicateSample { line, id });
        }
        out.push(sample);
    }
    Ok(out)
}

/// Writes records as a manifest. Paths under the manifest's directory are
/// stored relative to it.
pub fn write_manifest(path: &Path, records: &[SampleRecord]) -> Result<(), DatasetError> {
    let io_err = |source: std::io::Error| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut writer = csv::Writer::from_path(path).map_err(|e| io_err(e.into()))?;
    writer
        .write_record(MANIFEST_HEADER)
        .map_err(|e| io_err(e.into()))?;
    for r in records {
        let rel = r.image_path.strip_prefix(&base).unwrap_or(&r.image_path);
        writer
            .write_record([
                rel.to_string_lossy().into_owned(),
                r.individual_id.clone(),
                r.rotation_deg.to_string(),
                r.roi.x.to_string(),
                r.roi.y.to_string(),
                r.roi.w.to_string(),
                r.roi.h.to_string(),
            ])
            .map_err(|e| io_err(e.into()))?;
    }
    writer.flush().map_err(io_err)
}

/// Image counts per individual.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DatasetStats {
    pub per_class: BTreeMap<String, usize>,
    pub total: usize,
}

pub fn dataset_stats(records: &[SampleRecord]) -> DatasetStats {
    let mut per_class = BTreeMap::new();
    for r in records {
        *per_class.entry(r.individual_id.clone()).or_insert(0) += 1;
    }
    DatasetStats {
        per_class,
        total: records.len(),
    }
}

/// Decodes a PNG or binary PGM file into 8-bit RGB.
pub fn load_image(path: &Path) -> Result<image::RgbImage, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let decoded = image::ImageReader::open(path)
        .map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .decode()
        .map_err(|e| DatasetError::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    Ok(decoded.to_rgb8())
}

/// Writes an 8-bit binary PGM (P5).
pub fn save_pgm(path: &Path, img: &crate::imgproc::GrayImage) -> Result<(), DatasetError> {
    let io_err = |source: std::io::Error| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let luma = img.to_luma8();
    let mut file = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    write!(file, "P5\n{} {}\n255\n", luma.width(), luma.height()).map_err(io_err)?;
    file.write_all(luma.as_raw()).map_err(io_err)?;
    file.flush().map_err(io_err)
}
