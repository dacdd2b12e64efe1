#![allow(dead_code)]

use pufferfish::{MarkovChainModel, TransitionMatrix};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

/// Probability vector with every entry at least `floor`.
pub fn positive_simplex(rng: &mut ChaCha20Rng, k: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0) + floor).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Uniform draw from the simplex (normalized exponentials).
pub fn uniform_simplex(rng: &mut ChaCha20Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

pub fn positive_matrix(rng: &mut ChaCha20Rng, k: usize) -> TransitionMatrix {
    TransitionMatrix::renormalized((0..k).map(|_| positive_simplex(rng, k, 0.05)).collect()).unwrap()
}

pub fn positive_chain(rng: &mut ChaCha20Rng, k: usize, len: usize) -> MarkovChainModel {
    MarkovChainModel::new(positive_simplex(rng, k, 0.05), positive_matrix(rng, k), len).unwrap()
}
