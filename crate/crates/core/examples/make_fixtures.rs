//! Regenerates `fixtures/mnist/{images,classifiers}.json` from procedural
//! digits: trains the three one-vs-all classifiers and picks two `0`s and
//! one `1` that every classifier labels correctly with a wide margin.
//!
//! cargo run -p volchem-core --example make_fixtures [out_dir]

use std::path::PathBuf;

use volchem_core::classifier::ClassLabel;
use volchem_core::harness::digits::{preprocess, synthetic_set, SIDE};
use volchem_core::harness::mnist::{train_one_vs_all, MnistFixtures, TestImage};

const TRAIN_SEED: u64 = 2024;
const TEST_SEED: u64 = 4048;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/mnist"));

    let (train_set, train_labels) = synthetic_set(100, TRAIN_SEED);
    let train: Vec<(Vec<bool>, u8)> = train_set
        .pixels
        .iter()
        .zip(&train_labels)
        .map(|(p, &l)| (preprocess(p, SIDE, SIDE), l))
        .collect();
    let classifiers = train_one_vs_all(&train, &[0, 1, 2], 100, TRAIN_SEED)?;

    let (test_set, test_labels) = synthetic_set(40, TEST_SEED);
    let margin = |x: &[bool], digit: u8| -> Option<f64> {
        let mut worst = f64::INFINITY;
        for c in &classifiers {
            let z = c.predict(x).ok()?;
            let scale: f64 = c
                .weights
                .iter()
                .zip(x)
                .filter(|(_, &b)| b)
                .map(|(w, _)| w.abs())
                .sum();
            let want = if c.foreground_label == digit.to_string() {
                ClassLabel::Match
            } else {
                ClassLabel::Mismatch
            };
            let signed = if want == ClassLabel::Match { z } else { -z };
            if signed <= 0.0 {
                return None;
            }
            worst = worst.min(signed / scale);
        }
        Some(worst)
    };
    let mut ranked: Vec<(f64, usize)> = test_set
        .pixels
        .iter()
        .zip(&test_labels)
        .enumerate()
        .filter(|(_, (_, &d))| d <= 1)
        .filter_map(|(i, (p, &d))| margin(&preprocess(p, SIDE, SIDE), d).map(|m| (m, i)))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut images = Vec::new();
    for want in [0u8, 0, 1] {
        let (m, i) = *ranked
            .iter()
            .find(|(_, i)| {
                test_labels[*i] == want && !images.iter().any(|(j, _): &(usize, TestImage)| j == i)
            })
            .ok_or("no usable test image")?;
        eprintln!("digit {want}: test image {i}, relative margin {m:.3}");
        images.push((
            i,
            TestImage {
                name: format!("img{}", images.len() + 1),
                digit: want,
                bits: preprocess(&test_set.pixels[i], SIDE, SIDE),
            },
        ));
    }
    let fx = MnistFixtures {
        images: images.into_iter().map(|(_, t)| t).collect(),
        classifiers,
    };
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("images.json"), fx.images_json() + "\n")?;
    std::fs::write(out.join("classifiers.json"), fx.classifiers_json() + "\n")?;
    eprintln!("wrote {}", out.display());
    Ok(())
}
