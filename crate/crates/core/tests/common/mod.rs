#![allow(dead_code)]

use std::path::{Path, PathBuf};

use carapace::dataset::{save_pgm, write_manifest, RoiRect, SampleRecord};
use carapace::imgproc::GrayImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Images per individual in the published dataset, turtles 1 to 16.
pub const REFERENCE_COUNTS: [usize; 16] = [3, 3, 6, 3, 7, 11, 4, 3, 4, 6, 3, 6, 3, 2, 3, 3];

pub fn class_label(i: usize) -> String {
    format!("turtle_{:02}", i + 1)
}

/// Records laid out like the published dataset, without image files.
pub fn reference_records(dir: &Path) -> Vec<SampleRecord> {
    let mut records = Vec::new();
    for (c, &n) in REFERENCE_COUNTS.iter().enumerate() {
        for k in 0..n {
            records.push(SampleRecord {
                image_path: dir.join(format!("{}_{}.png", class_label(c), k)),
                individual_id: class_label(c),
                rotation_deg: (c * 7 + k) as f64 * 1.5,
                roi: RoiRect {
                    x: k as u32,
                    y: 2,
                    w: 96,
                    h: 128,
                },
            });
        }
    }
    records
}

pub fn noise_image(w: usize, h: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::from_fn(w, h, |_, _| rng.random_range(0.0..=255.0)).unwrap()
}

/// Writes `(image, label)` pairs as PGM files plus a manifest covering the
/// whole image; returns the manifest path.
pub fn write_dataset(dir: &Path, samples: &[(GrayImage, String)]) -> PathBuf {
    let mut records = Vec::new();
    for (i, (img, label)) in samples.iter().enumerate() {
        let path = dir.join(format!("{label}_{i:03}.pgm"));
        save_pgm(&path, img).unwrap();
        records.push(SampleRecord {
            image_path: path,
            individual_id: label.clone(),
            rotation_deg: 0.0,
            roi: RoiRect {
                x: 0,
                y: 0,
                w: img.width() as u32,
                h: img.height() as u32,
            },
        });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &records).unwrap();
    manifest
}

/// Brute-force ratio score over `(sample_id, class, distance)` triples:
/// `(beta, best id, second id, top tie)`.
pub fn oracle_nndr(entries: &[(String, String, f64)]) -> (f64, String, String, bool) {
    let key = |e: &(String, String, f64)| (e.2, e.0.clone());
    let mut best = 0;
    for i in 1..entries.len() {
        if key(&entries[i]) < key(&entries[best]) {
            best = i;
        }
    }
    let mut second = if best == 0 { 1 } else { 0 };
    for i in 0..entries.len() {
        if i != best && key(&entries[i]) < key(&entries[second]) {
            second = i;
        }
    }
    let top = entries[best].2;
    let beta = if entries[second].2 == 0.0 {
        0.0
    } else {
        top / entries[second].2
    };
    let tie = entries
        .iter()
        .enumerate()
        .any(|(i, e)| i != best && e.1 != entries[best].1 && (e.2 - top).abs() <= 1e-9 * top);
    (
        beta,
        entries[best].0.clone(),
        entries[second].0.clone(),
        tie,
    )
}

/// Random scalar galleries with many exact distance ties: `(query, entries)`
/// where entries are `(sample_id, class, position)`.
pub fn random_instance(rng: &mut impl Rng) -> (f64, Vec<(String, String, f64)>) {
    let n = rng.random_range(2..=50);
    let classes = rng.random_range(1..=6);
    let spread = rng.random_range(1..=40);
    let query = f64::from(rng.random_range(0..=spread));
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let entries = ids
        .into_iter()
        .map(|id| {
            (
                format!("s{id:03}"),
                format!("c{}", rng.random_range(0..classes)),
                f64::from(rng.random_range(0..=spread)),
            )
        })
        .collect();
    (query, entries)
}
