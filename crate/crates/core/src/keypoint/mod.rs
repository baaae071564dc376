//! Keypoint-descriptor baseline: single-octave ORB-style features matched by
//! Hamming distance under a nearest/second-nearest ratio test.
//!
//! Two images are compared by the number of query keypoints that pass the
//! ratio test against the gallery image's keypoints.

pub mod brief;
pub mod fast;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imgproc::{gaussian_smooth, GrayImage, ImageError, Kernel};

pub use brief::{describe_brief, BinaryDescriptor};
pub use fast::{detect_fast, Keypoint};

#[derive(Debug, Error)]
pub enum KeypointError {
    #[error("31x31 patch around ({x}, {y}) leaves the image")]
    PatchOutOfBounds { x: f64, y: f64 },
    #[error("gallery needs at least 2 descriptors for a ratio test, got {0}")]
    EmptyGallery(usize),
    #[error("acceptance threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointParams {
    /// FAST intensity delta.
    pub fast_threshold: f64,
    pub max_keypoints: usize,
    /// Gaussian applied before sampling descriptors.
    pub smoothing_size: usize,
    pub smoothing_sigma: f64,
}

impl Default for KeypointParams {
    fn default() -> Self {
        Self {
            fast_threshold: 20.0,
            max_keypoints: 500,
            smoothing_size: 4,
            smoothing_sigma: 1.0,
        }
    }
}

/// Keypoints of one image with their descriptors, index-aligned.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeypointFeatures {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<BinaryDescriptor>,
}

impl KeypointFeatures {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// Detects on `img` and describes on a smoothed copy.
pub fn extract_features(
    img: &GrayImage,
    params: &KeypointParams,
) -> Result<KeypointFeatures, KeypointError> {
    let keypoints = detect_fast(img, params.fast_threshold, params.max_keypoints);
    if keypoints.is_empty() {
        return Ok(KeypointFeatures::default());
    }
    let kernel = Kernel::gaussian(params.smoothing_size, params.smoothing_sigma)?;
    let smoothed = gaussian_smooth(img, &kernel);
    let descriptors = keypoints
        .iter()
        .map(|kp| describe_brief(&smoothed, kp))
        .collect::<Result<_, _>>()?;
    Ok(KeypointFeatures {
        keypoints,
        descriptors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorMatch {
    pub query: usize,
    pub gallery: usize,
    pub distance: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeypointMatchResult {
    pub matches: Vec<DescriptorMatch>,
    pub positive_match_count: usize,
}

/// Ratio-test matching. A query descriptor is kept when
/// `nearest / second_nearest < acceptance_threshold`; a zero second distance
/// never passes.
pub fn match_keypoints(
    query: &[BinaryDescriptor],
    gallery: &[BinaryDescriptor],
    acceptance_threshold: f64,
) -> Result<KeypointMatchResult, KeypointError> {
    if !(acceptance_threshold > 0.0 && acceptance_threshold <= 1.0) {
        return Err(KeypointError::InvalidThreshold(acceptance_threshold));
    }
    if gallery.len() < 2 {
        return Err(KeypointError::EmptyGallery(gallery.len()));
    }
    let mut matches = Vec::new();
    for (qi, q) in query.iter().enumerate() {
        let mut best = (u32::MAX, usize::MAX);
        let mut second = u32::MAX;
        for (gi, g) in gallery.iter().enumerate() {
            let d = q.hamming(g);
            if d < best.0 {
                second = best.0;
                best = (d, gi);
            } else if d < second {
                second = d;
            }
        }
        if second > 0 && f64::from(best.0) / f64::from(second) < acceptance_threshold {
            matches.push(DescriptorMatch {
                query: qi,
                gallery: best.1,
                distance: best.0,
            });
        }
    }
    let positive_match_count = matches.len();
    Ok(KeypointMatchResult {
        matches,
        positive_match_count,
    })
}

/// Positive-match count between two feature sets; 0 when either side has too
/// few keypoints for the ratio test.
pub fn feature_score(
    query: &KeypointFeatures,
    gallery: &KeypointFeatures,
    acceptance_threshold: f64,
) -> Result<usize, KeypointError> {
    if query.is_empty() || gallery.len() < 2 {
        if !(acceptance_threshold > 0.0 && acceptance_threshold <= 1.0) {
            return Err(KeypointError::InvalidThreshold(acceptance_threshold));
        }
        return Ok(0);
    }
    Ok(match_keypoints(
        &query.descriptors,
        &gallery.descriptors,
        acceptance_threshold,
    )?
    .positive_match_count)
}

/// Detect, describe and match two images.
pub fn keypoint_image_score(
    query_img: &GrayImage,
    gallery_img: &GrayImage,
    acceptance_threshold: f64,
    params: &KeypointParams,
) -> Result<usize, KeypointError> {
    let q = extract_features(query_img, params)?;
    let g = extract_features(gallery_img, params)?;
    feature_score(&q, &g, acceptance_threshold)
}

/// Turns a match count into a distance for nearest-neighbour ranking: more
/// matches, smaller distance.
pub fn match_count_distance(count: usize) -> f64 {
    1.0 / (1.0 + count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc_with_ones(n: usize) -> BinaryDescriptor {
        let mut d = BinaryDescriptor::zero();
        for i in 0..n {
            d.set_bit(i);
        }
        d
    }

    #[test]
    fn exact_match_passes_any_threshold() {
        let q = desc_with_ones(10);
        let gallery = [desc_with_ones(200), q, desc_with_ones(160)];
        for t in [0.01, 0.2, 0.8, 1.0] {
            let r = match_keypoints(&[q], &gallery, t).unwrap();
            assert_eq!(r.positive_match_count, 1);
            assert_eq!(r.matches[0].gallery, 1);
            assert_eq!(r.matches[0].distance, 0);
        }
    }

    #[test]
    fn equidistant_gallery_is_rejected() {
        let q = desc_with_ones(0);
        let gallery = [desc_with_ones(5), {
            let mut d = BinaryDescriptor::zero();
            for i in 100..105 {
                d.set_bit(i);
            }
            d
        }];
        for t in [0.2, 0.5, 0.8, 0.99] {
            assert_eq!(
                match_keypoints(&[q], &gallery, t)
                    .unwrap()
                    .positive_match_count,
                0
            );
        }
    }

    #[test]
    fn matching_errors() {
        let q = [desc_with_ones(1)];
        assert!(matches!(
            match_keypoints(&q, &[desc_with_ones(2)], 0.8),
            Err(KeypointError::EmptyGallery(1))
        ));
        let g = [desc_with_ones(2), desc_with_ones(3)];
        assert!(matches!(
            match_keypoints(&q, &g, 0.0),
            Err(KeypointError::InvalidThreshold(_))
        ));
        assert!(match_keypoints(&q, &g, 1.5).is_err());
    }

    #[test]
    fn constant_images_score_zero() {
        let a = GrayImage::filled(64, 64, 90.0).unwrap();
        let b = GrayImage::filled(64, 64, 30.0).unwrap();
        let p = KeypointParams::default();
        assert_eq!(keypoint_image_score(&a, &b, 0.8, &p).unwrap(), 0);
    }

    #[test]
    fn distance_bridge_is_decreasing() {
        assert_eq!(match_count_distance(0), 1.0);
        assert_eq!(match_count_distance(1), 0.5);
        assert!(match_count_distance(10) < match_count_distance(9));
    }
}
