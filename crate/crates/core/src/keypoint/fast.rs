//! FAST-9 corner detection with intensity-centroid orientation.

use serde::{Deserialize, Serialize};

use crate::imgproc::GrayImage;

/// Distance a keypoint must keep from every image border so its 31x31 patch
/// (and any rotation of it) fits.
pub const KEYPOINT_MARGIN: usize = 16;

/// Radius of the disc used for the intensity centroid.
pub const ORIENTATION_RADIUS: isize = 15;

/// Bresenham circle of radius 3, clockwise from the top.
pub const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Contiguous arc length required by the segment test.
pub const ARC_LENGTH: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub response: f64,
    /// Degrees in `[0, 360)`, measured in image coordinates (y down).
    pub orientation: f64,
}

fn longest_circular_run(flags: &[bool; 16]) -> usize {
    if flags.iter().all(|&f| f) {
        return 16;
    }
    let mut best = 0;
    let mut run = 0;
    for i in 0..32 {
        if flags[i % 16] {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best.min(16)
}

/// Sums in ascending order so the result does not depend on where the
/// circle starts, which keeps scores identical under quarter turns.
fn ordered_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

/// Segment test at `(x, y)`. Returns the corner score (sum of absolute
/// differences beyond the threshold over the qualifying side) or `None`.
/// The circle must lie inside the image.
pub fn segment_test(img: &GrayImage, x: usize, y: usize, threshold: f64) -> Option<f64> {
    let centre = img.get(x, y);
    let mut brighter = [false; 16];
    let mut darker = [false; 16];
    let mut bright_terms = Vec::with_capacity(16);
    let mut dark_terms = Vec::with_capacity(16);
    for (i, &(dx, dy)) in CIRCLE.iter().enumerate() {
        let v = img.get((x as isize + dx) as usize, (y as isize + dy) as usize);
        if v > centre + threshold {
            brighter[i] = true;
            bright_terms.push(v - centre - threshold);
        } else if v < centre - threshold {
            darker[i] = true;
            dark_terms.push(centre - v - threshold);
        }
    }
    let bright = longest_circular_run(&brighter) >= ARC_LENGTH;
    let dark = longest_circular_run(&darker) >= ARC_LENGTH;
    match (bright, dark) {
        (false, false) => None,
        (true, false) => Some(ordered_sum(&mut bright_terms)),
        (false, true) => Some(ordered_sum(&mut dark_terms)),
        (true, true) => Some(ordered_sum(&mut bright_terms).max(ordered_sum(&mut dark_terms))),
    }
}

/// Segment-test scores for every pixel inside the keypoint margin; 0 where
/// the test fails.
pub fn corner_scores(img: &GrayImage, threshold: f64) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let mut scores = vec![0.0; w * h];
    if w < 2 * KEYPOINT_MARGIN + 1 || h < 2 * KEYPOINT_MARGIN + 1 {
        return scores;
    }
    for y in KEYPOINT_MARGIN..h - KEYPOINT_MARGIN {
        for x in KEYPOINT_MARGIN..w - KEYPOINT_MARGIN {
            if let Some(s) = segment_test(img, x, y, threshold) {
                scores[y * w + x] = s;
            }
        }
    }
    scores
}

/// Orientation of the intensity centroid within a radius-15 disc.
pub fn intensity_centroid_angle(img: &GrayImage, x: usize, y: usize) -> f64 {
    let r = ORIENTATION_RADIUS;
    let (mut m10, mut m01) = (0.0, 0.0);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let v = img.get_clamped(x as isize + dx, y as isize + dy);
            m10 += dx as f64 * v;
            m01 += dy as f64 * v;
        }
    }
    let deg = m01.atan2(m10).to_degrees();
    if deg < 0.0 {
        deg + 360.0
    } else {
        deg
    }
}

/// FAST-9 corners with 3x3 non-maximum suppression, strongest first.
///
/// A corner survives suppression when no 8-neighbour has a strictly larger
/// score, so plateaus are kept whole and the result does not depend on scan
/// order.
pub fn detect_fast(img: &GrayImage, threshold: f64, max_keypoints: usize) -> Vec<Keypoint> {
    let (w, h) = (img.width(), img.height());
    let scores = corner_scores(img, threshold);
    let mut keypoints = Vec::new();
    if w < 2 * KEYPOINT_MARGIN + 1 || h < 2 * KEYPOINT_MARGIN + 1 {
        return keypoints;
    }
    for y in KEYPOINT_MARGIN..h - KEYPOINT_MARGIN {
        for x in KEYPOINT_MARGIN..w - KEYPOINT_MARGIN {
            let s = scores[y * w + x];
            if s <= 0.0 {
                continue;
            }
            let is_max = (-1isize..=1).all(|dy| {
                (-1isize..=1).all(|dx| {
                    let n = (y as isize + dy) as usize * w + (x as isize + dx) as usize;
                    scores[n] <= s
                })
            });
            if is_max {
                keypoints.push(Keypoint {
                    x: x as f64,
                    y: y as f64,
                    response: s,
                    orientation: intensity_centroid_angle(img, x, y),
                });
            }
        }
    }
    keypoints.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    keypoints.truncate(max_keypoints);
    keypoints
}
