//! Synthetic trees and attention maps for benchmarks and fixtures.
//!
//! A hidden binary tree per sentence is encoded as a distance vector. Each
//! simulated head observes that vector with Gaussian noise of its own scale
//! and attends from word `x` to word `y` with weight `exp(-sharpness * h)`,
//! where `h` is the highest noisy gap between them. Words in the same low
//! constituent therefore get similar attention rows.

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Normal};

use crate::archive::{AttentionArchive, SentenceAttention};
use crate::distance::{distance_to_tree, tree_to_distance, BinaryTree, DistanceVector};
use crate::ensemble::ValidationItem;
use crate::treebank::binary_spans;

/// Random binary tree over `z` words with uniformly drawn split points.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, z: usize) -> BinaryTree {
    assert!(z >= 1);
    grow(rng, 1, z)
}

fn grow<R: Rng + ?Sized>(rng: &mut R, i: usize, j: usize) -> BinaryTree {
    if i == j {
        return BinaryTree::Leaf(i);
    }
    let k = rng.random_range(i..j);
    BinaryTree::node(grow(rng, i, k), grow(rng, k + 1, j))
}

/// Row-stochastic `z x z` attention derived from gap heights.
pub fn attention_from_distances(d: &[f64], sharpness: f64) -> Vec<f32> {
    let z = d.len() + 1;
    let mut out = vec![0f32; z * z];
    for x in 0..z {
        let mut row = vec![0f64; z];
        for (y, w) in row.iter_mut().enumerate() {
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            let h = d[lo..hi].iter().copied().fold(0.0, f64::max);
            *w = (-sharpness * h).exp();
        }
        let sum: f64 = row.iter().sum();
        for (y, w) in row.into_iter().enumerate() {
            out[x * z + y] = (w / sum) as f32;
        }
    }
    out
}

/// Noisy copy of a distance vector.
pub fn perturb<R: Rng + ?Sized>(rng: &mut R, d: &DistanceVector, noise: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise scale");
    d.0.iter().map(|&v| v + normal.sample(rng)).collect()
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub model_id: String,
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub layers: usize,
    pub heads: usize,
    /// Per-head noise scales are drawn uniformly from this range.
    pub noise: (f64, f64),
    pub sharpness: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            model_id: "synthetic".into(),
            sentences: 40,
            min_len: 4,
            max_len: 14,
            layers: 3,
            heads: 4,
            noise: (0.8, 3.0),
            sharpness: 1.5,
        }
    }
}

/// Hidden gold trees plus an archive of heads that observe them noisily.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub gold: Vec<BinaryTree>,
    pub archive: AttentionArchive,
    /// Noise scale of head `(m, n)` at index `(m-1) * heads + (n-1)`.
    pub head_noise: Vec<f64>,
}

impl SyntheticCorpus {
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, cfg: &SyntheticConfig) -> Self {
        let gold: Vec<BinaryTree> = (0..cfg.sentences)
            .map(|_| {
                let z = rng.random_range(cfg.min_len..=cfg.max_len);
                random_tree(rng, z)
            })
            .collect();
        Self::observe(rng, cfg, gold)
    }

    /// Simulates heads over given gold trees.
    pub fn observe<R: Rng + ?Sized>(rng: &mut R, cfg: &SyntheticConfig, gold: Vec<BinaryTree>) -> Self {
        let maps = cfg.layers * cfg.heads;
        let head_noise: Vec<f64> = (0..maps).map(|_| rng.random_range(cfg.noise.0..=cfg.noise.1)).collect();
        let sentences = gold
            .iter()
            .enumerate()
            .map(|(id, tree)| {
                let hidden = tree_to_distance(tree);
                let z = tree.num_leaves();
                let mut data = Vec::with_capacity(maps * z * z);
                for &noise in &head_noise {
                    let seen = perturb(rng, &hidden, noise);
                    data.extend(attention_from_distances(&seen, cfg.sharpness));
                }
                SentenceAttention { id: id as u32, z, data }
            })
            .collect();
        SyntheticCorpus {
            gold,
            archive: AttentionArchive {
                model_id: cfg.model_id.clone(),
                num_layers: cfg.layers,
                num_heads: cfg.heads,
                sentences,
            },
            head_noise,
        }
    }

    pub fn validation_items(&self) -> Vec<ValidationItem> {
        self.gold
            .iter()
            .enumerate()
            .map(|(id, t)| ValidationItem {
                sentence_id: id as u32,
                z: t.num_leaves(),
                gold: binary_spans(t),
            })
            .collect()
    }
}

/// Tree restored from a noisy observation, without going through attention.
pub fn noisy_tree<R: Rng + ?Sized>(rng: &mut R, tree: &BinaryTree, noise: f64) -> BinaryTree {
    let seen = perturb(rng, &tree_to_distance(tree), noise);
    distance_to_tree(&DistanceVector(seen))
}
