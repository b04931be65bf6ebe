#![allow(dead_code)]

use cmtfa::rng;
use cmtfa::EdgeWeightVector;
use rand::seq::SliceRandom;
use rand::Rng;

/// Random edge weights of length `n`: half the draws have iid uniform
/// magnitudes (mostly non-dominant for n ≥ 4), half are built dominant with
/// a clear margin. Signs are random and the lead lands at a random position.
pub fn random_alpha(seed: u64, index: u64, n: usize) -> EdgeWeightVector {
    let mut rng = rng::stream(seed, index);
    let mut magnitudes: Vec<f64> = if rng.random::<bool>() {
        (0..n).map(|_| rng.random_range(0.02..0.98)).collect()
    } else {
        let tail_sum = rng.random_range(0.05..0.9);
        let raw: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let lead = tail_sum + (0.99 - tail_sum) * rng.random_range(0.05..1.0);
        std::iter::once(lead).chain(raw.iter().map(|r| r * tail_sum / total)).collect()
    };
    magnitudes.shuffle(&mut rng);
    let alpha = magnitudes
        .into_iter()
        .map(|m| if rng.random::<bool>() { m } else { -m })
        .collect();
    EdgeWeightVector::new(alpha).expect("generator stays inside the domain")
}

/// Dimension in `lo..=hi` for draw `index`.
pub fn random_dim(seed: u64, index: u64, lo: usize, hi: usize) -> usize {
    rng::stream(seed ^ 0x5eed, index).random_range(lo..=hi)
}
