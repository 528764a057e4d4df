//! Shared fixtures for the benchmarks.

use gener_core::metrics::ScoredSet;
use gener_core::model::Batch;
use gener_core::{GenerConfig, PairFeatures, Rng};

/// `n` scores on a coarse grid (so ties occur) with roughly balanced labels.
pub fn scored_set(n: usize, seed: u64) -> ScoredSet {
    let mut rng = Rng::new(seed);
    let labels: Vec<bool> = (0..n).map(|_| rng.below(2) == 1).collect();
    let scores = labels
        .iter()
        .map(|&l| ((rng.normal() + if l { 1.0 } else { 0.0 }) * 100.0).round() / 100.0)
        .collect();
    ScoredSet::new(scores, labels).expect("valid set")
}

/// A random batch of `n` pairs of length `l`.
pub fn batch(n: usize, l: usize, seed: u64) -> Batch<f32> {
    let mut rng = Rng::new(seed);
    let features: Vec<PairFeatures> = (0..n)
        .map(|_| {
            let a: Vec<f64> = (0..l).map(|_| rng.normal()).collect();
            let b: Vec<f64> = (0..l).map(|_| rng.normal()).collect();
            PairFeatures::from_rows(&a, &b).expect("equal lengths")
        })
        .collect();
    let refs: Vec<&PairFeatures> = features.iter().collect();
    Batch::from_features(&refs, (0..n).map(|i| i % 2).collect()).expect("consistent widths")
}

pub fn default_config(l: usize) -> GenerConfig {
    GenerConfig::default().with_length(l)
}
