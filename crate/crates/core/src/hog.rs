//! Histogram of Oriented Gradients over a fixed window.
//!
//! The default geometry is a 96x128 window, 8x8-pixel cells, 2x2-cell blocks
//! sliding by one cell and 9 unsigned orientation bins, which gives
//! 11 x 15 blocks x 36 values = 5,940 values.
//!
//! Votes are interpolated between the two nearest orientation bins only; there
//! is no spatial interpolation between cells and no Gaussian block window.
//! Each block is normalized as `v / sqrt(|v|^2 + eps^2)` with `eps = 1e-3`,
//! measured on gradients of an image rescaled to `[0, 1]`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imgproc::GrayImage;

#[derive(Debug, Error)]
pub enum HogError {
    #[error("window {window_w}x{window_h} is not tiled by {cell}-pixel cells into at least {block}x{block} cells")]
    IncompatibleGeometry {
        window_w: usize,
        window_h: usize,
        cell: usize,
        block: usize,
    },
    #[error("image is {actual_w}x{actual_h}, expected the {window_w}x{window_h} window")]
    WindowMismatch {
        window_w: usize,
        window_h: usize,
        actual_w: usize,
        actual_h: usize,
    },
    #[error("descriptor lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bad descriptor file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Additive term in block normalization.
pub const BLOCK_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HogParams {
    pub window_w: usize,
    pub window_h: usize,
    /// Cell side in pixels.
    pub cell: usize,
    /// Block side in cells.
    pub block: usize,
    /// Block stride in cells.
    pub block_stride: usize,
    pub bins: usize,
}

impl Default for HogParams {
    fn default() -> Self {
        Self {
            window_w: 96,
            window_h: 128,
            cell: 8,
            block: 2,
            block_stride: 1,
            bins: 9,
        }
    }
}

impl HogParams {
    pub fn validate(&self) -> Result<(), HogError> {
        let bad = self.cell == 0
            || self.block == 0
            || self.block_stride == 0
            || self.bins == 0
            || !self.window_w.is_multiple_of(self.cell)
            || !self.window_h.is_multiple_of(self.cell)
            || self.window_w / self.cell < self.block
            || self.window_h / self.cell < self.block;
        if bad {
            return Err(HogError::IncompatibleGeometry {
                window_w: self.window_w,
                window_h: self.window_h,
                cell: self.cell,
                block: self.block,
            });
        }
        Ok(())
    }

    pub fn cells_x(&self) -> usize {
        self.window_w / self.cell
    }

    pub fn cells_y(&self) -> usize {
        self.window_h / self.cell
    }

    pub fn blocks_x(&self) -> usize {
        (self.cells_x() - self.block) / self.block_stride + 1
    }

    pub fn blocks_y(&self) -> usize {
        (self.cells_y() - self.block) / self.block_stride + 1
    }

    /// Values per block.
    pub fn block_len(&self) -> usize {
        self.block * self.block * self.bins
    }
}

/// Number of values in a descriptor for `params`.
pub fn descriptor_len(params: &HogParams) -> Result<usize, HogError> {
    params.validate()?;
    Ok(params.blocks_x() * params.blocks_y() * params.block_len())
}

/// Per-pixel gradient magnitude and unsigned orientation in degrees `[0, 180)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    pub orientation: Vec<f64>,
}

/// Folds an angle in degrees onto `[0, 180)`.
pub fn unsigned_orientation(gx: f64, gy: f64) -> f64 {
    let mut deg = gy.atan2(gx).to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if deg >= 180.0 {
        deg -= 180.0;
    }
    deg
}

/// Central differences `(I(x+1) - I(x-1)) / 2` on both axes with edge
/// replication.
pub fn compute_gradients(img: &GrayImage) -> GradientField {
    let (w, h) = (img.width(), img.height());
    let mut magnitude = Vec::with_capacity(w * h);
    let mut orientation = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (img.get_clamped(x + 1, y) - img.get_clamped(x - 1, y)) / 2.0;
            let gy = (img.get_clamped(x, y + 1) - img.get_clamped(x, y - 1)) / 2.0;
            magnitude.push((gx * gx + gy * gy).sqrt());
            orientation.push(unsigned_orientation(gx, gy));
        }
    }
    GradientField {
        width: w,
        height: h,
        magnitude,
        orientation,
    }
}

/// Orientation histograms per cell, row-major over cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub cells_x: usize,
    pub cells_y: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl CellGrid {
    pub fn cell(&self, cx: usize, cy: usize) -> &[f64] {
        let start = (cy * self.cells_x + cx) * self.bins;
        &self.values[start..start + self.bins]
    }
}

/// Splits a vote between the two nearest bin centres, circular over 180 degrees.
/// Returns `(lower_bin, upper_bin, upper_weight)`.
#[inline]
fn bin_split(orientation: f64, bins: usize) -> (usize, usize, f64) {
    let width = 180.0 / bins as f64;
    let pos = orientation / width - 0.5;
    let lower = pos.floor();
    let frac = pos - lower;
    let lower = (lower as isize).rem_euclid(bins as isize) as usize;
    (lower, (lower + 1) % bins, frac)
}

pub fn cell_histograms(grad: &GradientField, params: &HogParams) -> Result<CellGrid, HogError> {
    params.validate()?;
    if grad.width != params.window_w || grad.height != params.window_h {
        return Err(HogError::WindowMismatch {
            window_w: params.window_w,
            window_h: params.window_h,
            actual_w: grad.width,
            actual_h: grad.height,
        });
    }
    let (cells_x, cells_y, bins) = (params.cells_x(), params.cells_y(), params.bins);
    let mut values = vec![0.0; cells_x * cells_y * bins];
    for y in 0..grad.height {
        let cy = y / params.cell;
        for x in 0..grad.width {
            let i = y * grad.width + x;
            let mag = grad.magnitude[i];
            if mag == 0.0 {
                continue;
            }
            let cx = x / params.cell;
            let (lo, hi, frac) = bin_split(grad.orientation[i], bins);
            let base = (cy * cells_x + cx) * bins;
            values[base + lo] += mag * (1.0 - frac);
            values[base + hi] += mag * frac;
        }
    }
    Ok(CellGrid {
        cells_x,
        cells_y,
        bins,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HogDescriptor {
    pub params: HogParams,
    pub values: Vec<f32>,
}

impl HogDescriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn blocks(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.params.block_len())
    }

    /// L2 norm of every block, in block order.
    pub fn block_norms(&self) -> Vec<f64> {
        self.blocks()
            .map(|b| b.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Slides the block over the cell grid and L2-normalizes each block.
pub fn block_normalize(cells: &CellGrid, params: &HogParams) -> Result<HogDescriptor, HogError> {
    params.validate()?;
    if cells.cells_x != params.cells_x()
        || cells.cells_y != params.cells_y()
        || cells.bins != params.bins
    {
        return Err(HogError::WindowMismatch {
            window_w: params.window_w,
            window_h: params.window_h,
            actual_w: cells.cells_x * params.cell,
            actual_h: cells.cells_y * params.cell,
        });
    }
    let len = descriptor_len(params)?;
    let mut values = Vec::with_capacity(len);
    let mut block = Vec::with_capacity(params.block_len());
    for by in 0..params.blocks_y() {
        for bx in 0..params.blocks_x() {
            block.clear();
            for dy in 0..params.block {
                for dx in 0..params.block {
                    let cx = bx * params.block_stride + dx;
                    let cy = by * params.block_stride + dy;
                    block.extend_from_slice(cells.cell(cx, cy));
                }
            }
            let energy: f64 = block.iter().map(|v| v * v).sum();
            let scale = 1.0 / (energy + BLOCK_EPSILON * BLOCK_EPSILON).sqrt();
            values.extend(block.iter().map(|&v| (v * scale) as f32));
        }
    }
    assert_eq!(values.len(), len);
    Ok(HogDescriptor {
        params: *params,
        values,
    })
}

/// Full descriptor of an image already at window resolution. Intensities are
/// rescaled from 0..=255 to 0..=1 before taking gradients.
pub fn compute_hog(img: &GrayImage, params: &HogParams) -> Result<HogDescriptor, HogError> {
    params.validate()?;
    if img.width() != params.window_w || img.height() != params.window_h {
        return Err(HogError::WindowMismatch {
            window_w: params.window_w,
            window_h: params.window_h,
            actual_w: img.width(),
            actual_h: img.height(),
        });
    }
    let unit = img.map(|v| v / 255.0);
    let grad = compute_gradients(&unit);
    let cells = cell_histograms(&grad, params)?;
    block_normalize(&cells, params)
}

/// Euclidean distance between descriptor values.
pub fn hog_distance(a: &HogDescriptor, b: &HogDescriptor) -> Result<f64, HogError> {
    if a.values.len() != b.values.len() {
        return Err(HogError::LengthMismatch(a.values.len(), b.values.len()));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt())
}

const MAGIC: &[u8; 4] = b"HOGD";
const FORMAT_VERSION: u32 = 1;

/// Binary cache layout: `HOGD`, u32 version, u64 length, then `length`
/// little-endian f32 values. The geometry is not stored; the reader supplies it.
pub fn write_descriptor<W: Write>(out: &mut W, desc: &HogDescriptor) -> Result<(), HogError> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(desc.values.len() as u64).to_le_bytes())?;
    for v in &desc.values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_descriptor<R: Read>(
    input: &mut R,
    params: &HogParams,
) -> Result<HogDescriptor, HogError> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Err(HogError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(HogError::Format(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let expected = descriptor_len(params)?;
    if len != expected {
        return Err(HogError::LengthMismatch(len, expected));
    }
    let mut raw = vec![0u8; len * 4];
    input.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(HogDescriptor {
        params: *params,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(window_w: usize, window_h: usize) -> HogParams {
        HogParams {
            window_w,
            window_h,
            ..HogParams::default()
        }
    }

    #[test]
    fn descriptor_lengths() {
        assert_eq!(descriptor_len(&HogParams::default()).unwrap(), 5940);
        assert_eq!(descriptor_len(&small(64, 128)).unwrap(), 3780);
        assert_eq!(descriptor_len(&small(16, 16)).unwrap(), 36);
        assert!(matches!(
            descriptor_len(&small(100, 128)),
            Err(HogError::IncompatibleGeometry { .. })
        ));
        assert!(descriptor_len(&small(8, 16)).is_err());
    }

    #[test]
    fn constant_image_has_no_gradient() {
        let g = compute_gradients(&GrayImage::filled(10, 6, 77.0).unwrap());
        assert!(g.magnitude.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn horizontal_ramp() {
        let img = GrayImage::from_fn(12, 5, |x, _| x as f64).unwrap();
        let g = compute_gradients(&img);
        for y in 0..5 {
            for x in 1..11 {
                let i = y * 12 + x;
                assert_eq!(g.magnitude[i], 1.0);
                assert_eq!(g.orientation[i], 0.0);
            }
        }
    }

    #[test]
    fn vertical_step_edge_band() {
        let (w, h, edge) = (12, 6, 5);
        let img = GrayImage::from_fn(w, h, |x, _| if x >= edge { 1.0 } else { 0.0 }).unwrap();
        let g = compute_gradients(&img);
        for y in 0..h {
            for x in 0..w {
                // finite-difference oracle on the explicit step
                let left = if x == 0 { 0 } else { x - 1 };
                let right = (x + 1).min(w - 1);
                let step = |x: usize| if x >= edge { 1.0 } else { 0.0 };
                let expected = (step(right) - step(left)) / 2.0;
                let i = y * w + x;
                assert_eq!(g.magnitude[i], expected);
                if x == edge - 1 || x == edge {
                    assert_eq!(g.magnitude[i], 0.5);
                    assert_eq!(g.orientation[i], 0.0);
                } else {
                    assert_eq!(g.magnitude[i], 0.0);
                }
            }
        }
    }

    #[test]
    fn orientation_folds_into_half_turn() {
        assert_eq!(unsigned_orientation(1.0, 0.0), 0.0);
        assert_eq!(unsigned_orientation(-1.0, 0.0), 0.0);
        assert!((unsigned_orientation(0.0, -1.0) - 90.0).abs() < 1e-12);
        assert!((unsigned_orientation(-1.0, -1.0) - 45.0).abs() < 1e-12);
        assert!((unsigned_orientation(1.0, -1.0) - 135.0).abs() < 1e-12);
    }

    fn single_vote(orientation: f64) -> CellGrid {
        let params = small(16, 16);
        let mut grad = GradientField {
            width: 16,
            height: 16,
            magnitude: vec![0.0; 256],
            orientation: vec![0.0; 256],
        };
        // pixel (9, 2) lives in cell (1, 0)
        grad.magnitude[2 * 16 + 9] = 1.0;
        grad.orientation[2 * 16 + 9] = orientation;
        cell_histograms(&grad, &params).unwrap()
    }

    #[test]
    fn vote_at_bin_centre_and_boundary() {
        let centre = single_vote(10.0);
        assert_eq!(centre.cell(1, 0)[0], 1.0);
        assert!(centre.cell(1, 0)[1..].iter().all(|&v| v == 0.0));
        assert!(centre.cell(0, 0).iter().all(|&v| v == 0.0));

        let boundary = single_vote(20.0);
        assert!((boundary.cell(1, 0)[0] - 0.5).abs() < 1e-12);
        assert!((boundary.cell(1, 0)[1] - 0.5).abs() < 1e-12);

        // wraps: 5 degrees sits between bin 8 (170) and bin 0 (190 == 10)
        let wrap = single_vote(5.0);
        assert!((wrap.cell(1, 0)[8] - 0.25).abs() < 1e-12);
        assert!((wrap.cell(1, 0)[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn zero_magnitudes_give_zero_histograms() {
        let grid = single_vote(10.0);
        let mut zero = grid.clone();
        zero.values.iter_mut().for_each(|v| *v = 0.0);
        let desc = block_normalize(&zero, &small(16, 16)).unwrap();
        assert!(desc.is_zero());
        assert_eq!(desc.len(), 36);
    }

    #[test]
    fn single_strong_entry_normalizes_to_one() {
        let params = small(16, 16);
        let mut grid = single_vote(10.0);
        grid.values.iter_mut().for_each(|v| *v *= 1e4);
        let desc = block_normalize(&grid, &params).unwrap();
        let hot = 9; // cell (1,0) is second in the block, bin 0
        assert!((f64::from(desc.values[hot]) - 1.0).abs() < 1e-6);
        for (i, &v) in desc.values.iter().enumerate() {
            if i != hot {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn default_geometry_block_count() {
        let p = HogParams::default();
        assert_eq!((p.blocks_x(), p.blocks_y()), (11, 15));
        let img = GrayImage::from_fn(96, 128, |x, y| ((x * 3 + y * 5) % 17) as f64 * 15.0).unwrap();
        let d = compute_hog(&img, &p).unwrap();
        assert_eq!(d.len(), 5940);
        assert_eq!(d.block_norms().len(), 165);
        assert!(d.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn constant_image_gives_zero_descriptor() {
        let img = GrayImage::filled(96, 128, 128.0).unwrap();
        assert!(compute_hog(&img, &HogParams::default()).unwrap().is_zero());
    }

    #[test]
    fn wrong_window_is_rejected() {
        let img = GrayImage::filled(64, 64, 0.0).unwrap();
        assert!(matches!(
            compute_hog(&img, &HogParams::default()),
            Err(HogError::WindowMismatch { .. })
        ));
    }

    #[test]
    fn distance_cases() {
        let params = small(16, 16);
        let mut a = HogDescriptor {
            params,
            values: vec![0.0; 36],
        };
        assert_eq!(hog_distance(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.values[7] = 3.0;
        assert_eq!(hog_distance(&a, &b).unwrap(), 3.0);
        a.values.push(0.0);
        assert!(matches!(
            hog_distance(&a, &b),
            Err(HogError::LengthMismatch(37, 36))
        ));
    }

    #[test]
    fn binary_cache_round_trip() {
        let img = GrayImage::from_fn(96, 128, |x, y| ((x ^ y) % 13) as f64 * 19.0).unwrap();
        let p = HogParams::default();
        let d = compute_hog(&img, &p).unwrap();
        let mut buf = Vec::new();
        write_descriptor(&mut buf, &d).unwrap();
        assert_eq!(buf.len(), 16 + 5940 * 4);
        assert_eq!(&buf[..4], b"HOGD");
        let back = read_descriptor(&mut buf.as_slice(), &p).unwrap();
        assert_eq!(back, d);
        buf[0] = b'X';
        assert!(read_descriptor(&mut buf.as_slice(), &p).is_err());
    }
}
