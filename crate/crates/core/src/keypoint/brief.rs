//! Steered BRIEF: 256 intensity comparisons in a 31x31 patch, with the test
//! pattern rotated to the keypoint orientation in 12 degree steps.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::fast::Keypoint;
use super::KeypointError;
use crate::imgproc::GrayImage;

pub const DESCRIPTOR_BITS: usize = 256;
pub const PATCH_RADIUS: isize = 15;
pub const ANGLE_STEPS: usize = 30;
pub const ANGLE_STEP_DEG: f64 = 360.0 / ANGLE_STEPS as f64;

/// Pixel-pair table `x1 y1 x2 y2`, one row per bit.
pub const PATTERN_TEXT: &str = include_str!("../../data/brief_pattern.txt");

/// A pair of patch offsets compared for one descriptor bit.
pub type TestPair = [i32; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryDescriptor(pub [u64; 4]);

impl BinaryDescriptor {
    pub fn zero() -> Self {
        Self([0; 4])
    }

    pub fn bit(&self, i: usize) -> bool {
        (self.0[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }

    pub fn complement(&self) -> Self {
        Self(self.0.map(|w| !w))
    }

    pub fn hamming(&self, other: &Self) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

pub fn parse_pattern(text: &str) -> Result<Vec<TestPair>, String> {
    let mut pairs = Vec::with_capacity(DESCRIPTOR_BITS);
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums: Vec<i32> = line
            .split_whitespace()
            .map(|t| t.parse::<i32>().map_err(|e| format!("line {}: {e}", n + 1)))
            .collect::<Result<_, _>>()?;
        let pair: TestPair = nums
            .try_into()
            .map_err(|_| format!("line {}: expected 4 integers", n + 1))?;
        pairs.push(pair);
    }
    if pairs.len() != DESCRIPTOR_BITS {
        return Err(format!(
            "expected {DESCRIPTOR_BITS} pairs, found {}",
            pairs.len()
        ));
    }
    Ok(pairs)
}

/// The committed test pattern.
pub fn pattern() -> &'static [TestPair] {
    static PATTERN: OnceLock<Vec<TestPair>> = OnceLock::new();
    PATTERN.get_or_init(|| parse_pattern(PATTERN_TEXT).expect("committed BRIEF pattern is valid"))
}

/// Rotates an offset by `deg` in image coordinates and rounds to the nearest
/// pixel.
pub fn rotate_offset(x: i32, y: i32, deg: f64) -> (i32, i32) {
    let (s, c) = deg.to_radians().sin_cos();
    let (x, y) = (f64::from(x), f64::from(y));
    (
        (x * c - y * s).round() as i32,
        (x * s + y * c).round() as i32,
    )
}

fn steered_tables() -> &'static [Vec<TestPair>] {
    static TABLES: OnceLock<Vec<Vec<TestPair>>> = OnceLock::new();
    TABLES.get_or_init(|| {
        (0..ANGLE_STEPS)
            .map(|k| {
                let deg = k as f64 * ANGLE_STEP_DEG;
                pattern()
                    .iter()
                    .map(|&[x1, y1, x2, y2]| {
                        let (a, b) = rotate_offset(x1, y1, deg);
                        let (c, d) = rotate_offset(x2, y2, deg);
                        [a, b, c, d]
                    })
                    .collect()
            })
            .collect()
    })
}

/// Index of the discretized angle nearest to `orientation`.
pub fn angle_bin(orientation: f64) -> usize {
    ((orientation / ANGLE_STEP_DEG).round() as i64).rem_euclid(ANGLE_STEPS as i64) as usize
}

/// Test pattern rotated to the given angle bin.
pub fn steered_pattern(bin: usize) -> &'static [TestPair] {
    &steered_tables()[bin % ANGLE_STEPS]
}

/// Bit `i` is set when the first pixel of pair `i` is strictly brighter than
/// the second. The image is expected to be smoothed already.
pub fn describe_brief(img: &GrayImage, kp: &Keypoint) -> Result<BinaryDescriptor, KeypointError> {
    let cx = kp.x.round() as isize;
    let cy = kp.y.round() as isize;
    let (w, h) = (img.width() as isize, img.height() as isize);
    if cx - PATCH_RADIUS < 0
        || cy - PATCH_RADIUS < 0
        || cx + PATCH_RADIUS >= w
        || cy + PATCH_RADIUS >= h
    {
        return Err(KeypointError::PatchOutOfBounds { x: kp.x, y: kp.y });
    }
    let at = |dx: i32, dy: i32| img.get((cx + dx as isize) as usize, (cy + dy as isize) as usize);
    let mut desc = BinaryDescriptor::zero();
    for (i, &[x1, y1, x2, y2]) in steered_pattern(angle_bin(kp.orientation))
        .iter()
        .enumerate()
    {
        if at(x1, y1) > at(x2, y2) {
            desc.set_bit(i);
        }
    }
    Ok(desc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Seed the committed pattern was generated from.
    const PATTERN_SEED: u64 = 0x0b21_ef00;

    fn generate_pattern(seed: u64) -> Vec<TestPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::<f64>::new(0.0, 31.0 / 5.0).unwrap();
        let point = |rng: &mut ChaCha8Rng| loop {
            let x = normal.sample(rng).round() as i32;
            let y = normal.sample(rng).round() as i32;
            if x * x + y * y <= 15 * 15 {
                return (x, y);
            }
        };
        let mut pairs = Vec::with_capacity(DESCRIPTOR_BITS);
        while pairs.len() < DESCRIPTOR_BITS {
            let (x1, y1) = point(&mut rng);
            let (x2, y2) = point(&mut rng);
            if (x1, y1) != (x2, y2) {
                pairs.push([x1, y1, x2, y2]);
            }
        }
        pairs
    }

    #[test]
    #[ignore = "regenerates data/brief_pattern.txt"]
    fn write_pattern_file() {
        let mut text = String::from("# x1 y1 x2 y2\n");
        for [a, b, c, d] in generate_pattern(PATTERN_SEED) {
            text.push_str(&format!("{a} {b} {c} {d}\n"));
        }
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/brief_pattern.txt");
        std::fs::write(path, text).unwrap();
    }

    #[test]
    fn committed_pattern_is_well_formed() {
        let p = pattern();
        assert_eq!(p.len(), 256);
        for &[x1, y1, x2, y2] in p {
            assert!(x1 * x1 + y1 * y1 <= 225 && x2 * x2 + y2 * y2 <= 225);
            assert_ne!((x1, y1), (x2, y2));
        }
        assert_eq!(p, generate_pattern(PATTERN_SEED).as_slice());
        // every steered point stays within the patch
        for bin in 0..ANGLE_STEPS {
            for &pair in steered_pattern(bin) {
                assert!(pair.iter().all(|v| v.abs() <= 15));
            }
        }
    }

    #[test]
    fn angle_bins() {
        assert_eq!(angle_bin(0.0), 0);
        assert_eq!(angle_bin(12.0), 1);
        assert_eq!(angle_bin(359.0), 0);
        assert_eq!(angle_bin(185.0), 15);
        assert_eq!(angle_bin(-12.0), 29);
    }

    #[test]
    fn parse_rejects_short_tables() {
        assert!(parse_pattern("1 2 3 4\n").is_err());
        assert!(parse_pattern("1 2 3\n").is_err());
    }

    #[test]
    fn constant_patch_is_all_zero() {
        let img = GrayImage::filled(40, 40, 100.0).unwrap();
        let kp = Keypoint {
            x: 20.0,
            y: 20.0,
            response: 1.0,
            orientation: 77.0,
        };
        assert_eq!(describe_brief(&img, &kp).unwrap(), BinaryDescriptor::zero());
    }

    #[test]
    fn patch_must_fit() {
        let img = GrayImage::filled(40, 40, 100.0).unwrap();
        let kp = Keypoint {
            x: 14.0,
            y: 20.0,
            response: 1.0,
            orientation: 0.0,
        };
        assert!(matches!(
            describe_brief(&img, &kp),
            Err(KeypointError::PatchOutOfBounds { .. })
        ));
    }
}
