//! Image-processing primitives used by the preprocessing pipeline.
//!
//! All operations take an immutable [`GrayImage`] and return a new one. Pixel
//! intensities are `f64` on the 0..=255 scale; nothing here clamps, so
//! arithmetic on images (gain, inversion) stays exact.

use thiserror::Error;

use crate::dataset::RoiRect;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("pixel buffer has {actual} values, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("ROI {roi:?} is outside a {width}x{height} image")]
    RoiOutOfBounds {
        roi: RoiRect,
        width: usize,
        height: usize,
    },
    #[error("kernel weights sum to {sum}, expected 1")]
    KernelNotNormalized { sum: f64 },
    #[error("kernel of size {size} needs {expected} weights, got {actual}")]
    KernelShape {
        size: usize,
        expected: usize,
        actual: usize,
    },
    #[error("kernel anchor {anchor} outside kernel of size {size}")]
    KernelAnchor { anchor: usize, size: usize },
}

/// Single-channel raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage { width, height });
        }
        if pixels.len() != width * height {
            return Err(ImageError::BufferSize {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image with every pixel set to `value`.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    /// Converts an 8-bit luma buffer.
    pub fn from_luma8(img: &image::GrayImage) -> Self {
        let (w, h) = img.dimensions();
        Self {
            width: w as usize,
            height: h as usize,
            pixels: img.as_raw().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Rounds and clamps every pixel into an 8-bit luma buffer.
    pub fn to_luma8(&self) -> image::GrayImage {
        let raw = self
            .pixels
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.pixels[y * self.width + x] = value;
    }

    /// Pixel lookup with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[cy * self.width + cx]
    }

    /// Applies `f` to every pixel.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }
}

/// Luma from 8-bit RGB using BT.601 weights.
pub fn to_grayscale(img: &image::RgbImage) -> GrayImage {
    let (w, h) = img.dimensions();
    let pixels = img
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)
        })
        .collect();
    GrayImage {
        width: w as usize,
        height: h as usize,
        pixels,
    }
}

fn snap_unit(v: f64) -> f64 {
    const TOL: f64 = 1e-12;
    if v.abs() < TOL {
        0.0
    } else if (v - 1.0).abs() < TOL {
        1.0
    } else if (v + 1.0).abs() < TOL {
        -1.0
    } else {
        v
    }
}

fn bounding_extent(len: f64) -> usize {
    // Lengths within 1e-9 of an integer are treated as that integer so that
    // quarter turns do not grow the canvas by a pixel.
    let rounded = len.round();
    let n = if (len - rounded).abs() < 1e-9 {
        rounded
    } else {
        len.ceil()
    };
    (n as usize).max(1)
}

/// Bilinear sample at `(sx, sy)`; points outside the pixel-centre hull are 0.
fn sample_or_zero(img: &GrayImage, sx: f64, sy: f64) -> f64 {
    const TOL: f64 = 1e-9;
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    if sx < -TOL || sy < -TOL || sx > max_x + TOL || sy > max_y + TOL {
        return 0.0;
    }
    bilinear(img, sx.clamp(0.0, max_x), sy.clamp(0.0, max_y))
}

/// Bilinear interpolation; coordinates must already lie inside the image.
#[inline]
fn bilinear(img: &GrayImage, sx: f64, sy: f64) -> f64 {
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
    let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Rotates counterclockwise (as displayed, y pointing down) about the image
/// centre. The canvas grows to hold the whole rotated source; uncovered pixels
/// are 0.
pub fn rotate(img: &GrayImage, deg: f64) -> GrayImage {
    let (sin, cos) = deg.to_radians().sin_cos();
    let (sin, cos) = (snap_unit(sin), snap_unit(cos));
    if sin == 0.0 && cos == 1.0 {
        return img.clone();
    }

    let (w, h) = (img.width as f64, img.height as f64);
    let out_w = bounding_extent(w * cos.abs() + h * sin.abs());
    let out_h = bounding_extent(w * sin.abs() + h * cos.abs());

    let src_cx = (w - 1.0) / 2.0;
    let src_cy = (h - 1.0) / 2.0;
    let dst_cx = (out_w as f64 - 1.0) / 2.0;
    let dst_cy = (out_h as f64 - 1.0) / 2.0;

    let mut pixels = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let dy = y as f64 - dst_cy;
        for x in 0..out_w {
            let dx = x as f64 - dst_cx;
            // inverse of the forward map (x cos + y sin, -x sin + y cos)
            let sx = dx * cos - dy * sin + src_cx;
            let sy = dx * sin + dy * cos + src_cy;
            pixels.push(sample_or_zero(img, sx, sy));
        }
    }
    GrayImage {
        width: out_w,
        height: out_h,
        pixels,
    }
}

/// Copies the `roi` sub-image verbatim.
pub fn crop_roi(img: &GrayImage, roi: &RoiRect) -> Result<GrayImage, ImageError> {
    let out_of_bounds = || ImageError::RoiOutOfBounds {
        roi: *roi,
        width: img.width,
        height: img.height,
    };
    if roi.w == 0 || roi.h == 0 {
        return Err(out_of_bounds());
    }
    let (x, y, w, h) = (
        roi.x as usize,
        roi.y as usize,
        roi.w as usize,
        roi.h as usize,
    );
    if x + w > img.width || y + h > img.height {
        return Err(out_of_bounds());
    }
    let mut pixels = Vec::with_capacity(w * h);
    for row in y..y + h {
        let start = row * img.width + x;
        pixels.extend_from_slice(&img.pixels[start..start + w]);
    }
    Ok(GrayImage {
        width: w,
        height: h,
        pixels,
    })
}

/// Square convolution kernel with normalized weights.
///
/// `anchor` is the kernel index aligned with the output pixel on both axes:
/// output `(x, y)` reads the input window `[x - anchor, x - anchor + size)`.
/// For an even size the anchor is the top-left of the central 2x2 quad.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    anchor: usize,
    weights: Vec<f64>,
}

impl Kernel {
    const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self, ImageError> {
        Self::with_anchor(size, size.saturating_sub(1) / 2, weights)
    }

    pub fn with_anchor(size: usize, anchor: usize, weights: Vec<f64>) -> Result<Self, ImageError> {
        if size == 0 || weights.len() != size * size {
            return Err(ImageError::KernelShape {
                size,
                expected: size * size,
                actual: weights.len(),
            });
        }
        if anchor >= size {
            return Err(ImageError::KernelAnchor { anchor, size });
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(ImageError::KernelNotNormalized { sum });
        }
        Ok(Self {
            size,
            anchor,
            weights,
        })
    }

    /// Samples an isotropic Gaussian at offsets centred on the kernel middle
    /// (`-1.5, -0.5, 0.5, 1.5` for size 4) and normalizes.
    pub fn gaussian(size: usize, sigma: f64) -> Result<Self, ImageError> {
        let centre = (size as f64 - 1.0) / 2.0;
        let one_d: Vec<f64> = (0..size)
            .map(|i| {
                let t = i as f64 - centre;
                (-t * t / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let mut weights = Vec::with_capacity(size * size);
        for wy in &one_d {
            for wx in &one_d {
                weights.push(wy * wx);
            }
        }
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        Self::new(size, weights)
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, kx: usize, ky: usize) -> f64 {
        self.weights[ky * self.size + kx]
    }

    /// The kernel equivalent to smoothing with `self` and then `other`.
    pub fn then(&self, other: &Kernel) -> Kernel {
        let size = self.size + other.size - 1;
        let mut weights = vec![0.0; size * size];
        for ay in 0..self.size {
            for ax in 0..self.size {
                let wa = self.weight(ax, ay);
                for by in 0..other.size {
                    for bx in 0..other.size {
                        weights[(ay + by) * size + ax + bx] += wa * other.weight(bx, by);
                    }
                }
            }
        }
        Kernel {
            size,
            anchor: self.anchor + other.anchor,
            weights,
        }
    }
}

impl Default for Kernel {
    /// 4x4 Gaussian, sigma 1.
    fn default() -> Self {
        Kernel::gaussian(4, 1.0).expect("default kernel is valid")
    }
}

/// 2-D filtering with edge replication at the borders.
pub fn gaussian_smooth(img: &GrayImage, kernel: &Kernel) -> GrayImage {
    let anchor = kernel.anchor as isize;
    let mut pixels = Vec::with_capacity(img.pixels.len());
    for y in 0..img.height as isize {
        for x in 0..img.width as isize {
            let mut acc = 0.0;
            for ky in 0..kernel.size {
                let sy = y - anchor + ky as isize;
                for kx in 0..kernel.size {
                    let sx = x - anchor + kx as isize;
                    acc += kernel.weight(kx, ky) * img.get_clamped(sx, sy);
                }
            }
            pixels.push(acc);
        }
    }
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// Bilinear resampling with pixel-centre alignment.
pub fn resize(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage, ImageError> {
    if out_w == 0 || out_h == 0 {
        return Err(ImageError::EmptyImage {
            width: out_w,
            height: out_h,
        });
    }
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let scale_x = img.width as f64 / out_w as f64;
    let scale_y = img.height as f64 / out_h as f64;
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    let mut pixels = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let sy = ((y as f64 + 0.5) * scale_y - 0.5).clamp(0.0, max_y);
        for x in 0..out_w {
            let sx = ((x as f64 + 0.5) * scale_x - 0.5).clamp(0.0, max_x);
            pixels.push(bilinear(img, sx, sy));
        }
    }
    Ok(GrayImage {
        width: out_w,
        height: out_h,
        pixels,
    })
}
