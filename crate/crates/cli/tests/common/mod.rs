#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srclass::data::Dataset;
use srclass::Matrix;

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// 100 samples, one feature on [-2, 2], class = x > 0.
pub fn threshold(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<[f64; 1]> = (0..100).map(|_| [rng.gen_range(-2.0..2.0)]).collect();
    let y = rows.iter().map(|r| usize::from(r[0] > 0.0)).collect();
    Dataset::new(
        Matrix::from_rows(&rows).unwrap(),
        y,
        vec!["x".into()],
        vec!["0".into(), "1".into()],
    )
    .unwrap()
}

/// `n` samples from three isotropic Gaussian blobs in 2D.
pub fn blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [(0.0, 0.0), (4.0, 0.0), (2.0, 3.5)];
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 3;
        rows.push([
            centers[c].0 + 0.6 * normal(&mut rng),
            centers[c].1 + 0.6 * normal(&mut rng),
        ]);
        y.push(c);
    }
    Dataset::new(
        Matrix::from_rows(&rows).unwrap(),
        y,
        vec!["x1".into(), "x2".into()],
        vec!["a".into(), "b".into(), "c".into()],
    )
    .unwrap()
}

pub fn to_csv(d: &Dataset, label: &str) -> String {
    let mut out = d.feature_names.join(",");
    let _ = writeln!(out, ",{label}");
    for (row, &c) in d.x.rows().zip(&d.y) {
        for v in row {
            let _ = write!(out, "{v:?},");
        }
        let _ = writeln!(out, "{}", d.class_labels[c]);
    }
    out
}

pub fn write_dataset(dir: &Path, name: &str, d: &Dataset) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, to_csv(d, "target")).unwrap();
    path
}
