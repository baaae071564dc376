//! Synthetic carapace surrogate.
//!
//! Each class is a Voronoi tiling of an elliptical shell: 13 scute seeds laid
//! out like the vertebral and costal rows and jittered per class, drawn as
//! thin dark boundary lines over a dim shell. Every image of a class gets its
//! own brightness gain, sub-pixel translation and additive Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::imgproc::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub classes: usize,
    pub per_class: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Gain drawn uniformly from `1 +- brightness_jitter`.
    pub brightness_jitter: f64,
    pub noise_sigma: f64,
    /// Translation drawn uniformly from `+- max_shift` pixels per axis.
    pub max_shift: f64,
    /// Darkening of scute boundary lines, intensity levels.
    pub line_contrast: f64,
    /// Per-class jitter of scute seeds relative to the shell half-width.
    pub seed_jitter: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            classes: 16,
            per_class: 4,
            width: 128,
            height: 160,
            seed: 2015,
            brightness_jitter: 0.10,
            noise_sigma: 4.0,
            max_shift: 3.0,
            line_contrast: 24.0,
            seed_jitter: 0.18,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub sample_id: String,
    pub class_label: String,
    pub image: GrayImage,
}

/// Shell geometry and scute seeds of one individual, in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScutePattern {
    pub centre: (f64, f64),
    pub semi_axes: (f64, f64),
    pub seeds: Vec<(f64, f64)>,
    /// Mean intensity of each scute, index-aligned with `seeds`.
    pub shades: Vec<f64>,
}

const SHELL_LEVEL: f64 = 96.0;
const BACKGROUND_LEVEL: f64 = 64.0;
const LINE_HALF_WIDTH: f64 = 1.5;

impl ScutePattern {
    pub fn random(cfg: &SurrogateConfig, rng: &mut impl Rng) -> Self {
        let (w, h) = (cfg.width as f64, cfg.height as f64);
        let centre = (w / 2.0, h / 2.0);
        let (a, b) = (0.42 * w, 0.44 * h);
        let mut layout = Vec::with_capacity(13);
        for t in [-0.72, -0.36, 0.0, 0.36, 0.72] {
            layout.push((0.0, t));
        }
        for side in [-1.0, 1.0] {
            for t in [-0.54, -0.18, 0.18, 0.54] {
                layout.push((side * 0.58, t));
            }
        }
        let jitter = cfg.seed_jitter * a;
        let seeds = layout
            .into_iter()
            .map(|(u, v)| {
                (
                    centre.0 + u * a + rng.random_range(-jitter..=jitter),
                    centre.1 + v * b + rng.random_range(-jitter..=jitter),
                )
            })
            .collect::<Vec<_>>();
        let shades = seeds
            .iter()
            .map(|_| SHELL_LEVEL + rng.random_range(-6.0..=6.0))
            .collect();
        Self {
            centre,
            semi_axes: (a, b),
            seeds,
            shades,
        }
    }

    /// Noise-free intensity at a continuous point.
    pub fn intensity(&self, x: f64, y: f64, line_contrast: f64) -> f64 {
        let (cx, cy) = self.centre;
        let (a, b) = self.semi_axes;
        let (u, v) = ((x - cx) / a, (y - cy) / b);
        let r = (u * u + v * v).sqrt();
        // approximate distance to the rim in pixels
        let rim_dist = (r - 1.0).abs() * a.min(b);
        let rim_line = (1.0 - rim_dist / LINE_HALF_WIDTH).max(0.0);
        if r > 1.0 {
            return BACKGROUND_LEVEL - line_contrast * rim_line;
        }

        let (mut i1, mut i2) = (0usize, usize::MAX);
        let (mut d1, mut d2) = (f64::INFINITY, f64::INFINITY);
        for (i, &(sx, sy)) in self.seeds.iter().enumerate() {
            let d = (x - sx).powi(2) + (y - sy).powi(2);
            if d < d1 {
                (i2, d2) = (i1, d1);
                (i1, d1) = (i, d);
            } else if d < d2 {
                (i2, d2) = (i, d);
            }
        }
        let (s1, s2) = (self.seeds[i1], self.seeds[i2]);
        let sep = ((s1.0 - s2.0).powi(2) + (s1.1 - s2.1).powi(2)).sqrt();
        // distance to the bisector between the two nearest seeds
        let boundary_dist = (d2 - d1) / (2.0 * sep);
        let boundary_line = (1.0 - boundary_dist / LINE_HALF_WIDTH).max(0.0);
        self.shades[i1] - line_contrast * boundary_line.max(rim_line)
    }
}

/// Renders one observation of `pattern` shifted by `shift`, scaled by `gain`,
/// with additive noise.
pub fn render(
    pattern: &ScutePattern,
    cfg: &SurrogateConfig,
    shift: (f64, f64),
    gain: f64,
    rng: &mut impl Rng,
) -> GrayImage {
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("finite sigma");
    GrayImage::from_fn(cfg.width, cfg.height, |x, y| {
        let clean = pattern.intensity(x as f64 - shift.0, y as f64 - shift.1, cfg.line_contrast);
        (gain * clean + noise.sample(rng)).clamp(0.0, 255.0)
    })
    .expect("non-empty surrogate image")
}

/// Generates `classes x per_class` images, ordered by class then index.
pub fn generate(cfg: &SurrogateConfig) -> Vec<SyntheticSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.classes * cfg.per_class);
    for c in 0..cfg.classes {
        let pattern = ScutePattern::random(cfg, &mut rng);
        let class_label = format!("turtle_{:02}", c + 1);
        for i in 0..cfg.per_class {
            let shift = (
                rng.random_range(-cfg.max_shift..=cfg.max_shift),
                rng.random_range(-cfg.max_shift..=cfg.max_shift),
            );
            let gain = rng.random_range(1.0 - cfg.brightness_jitter..=1.0 + cfg.brightness_jitter);
            let image = render(&pattern, cfg, shift, gain, &mut rng);
            samples.push(SyntheticSample {
                sample_id: format!("{class_label}_{}", (b'a' + (i % 26) as u8) as char),
                class_label: class_label.clone(),
                image,
            });
        }
    }
    samples
}
