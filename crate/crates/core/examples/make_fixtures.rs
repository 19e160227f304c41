//! Regenerates the archives under `tests/fixtures/` from `gold.mrg`.
//!
//! Each simulated model observes the gold trees through noisy heads. Run with
//! `cargo run -p attnparse --example make_fixtures`; the golden outputs are then
//! refreshed by `UPDATE_GOLDEN=1 cargo test -p attnparse --test acceptance`.

use std::fs;
use std::path::Path;

use attnparse::archive::write_archive;
use attnparse::synthetic::{SyntheticConfig, SyntheticCorpus};
use attnparse::treebank::{filter_tree, read_treebank, LabeledTree, PreprocessConfig};
use attnparse::BinaryTree;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Right-binarizes an n-ary tree, numbering leaves from `next`.
fn binarize(tree: &LabeledTree, next: &mut usize) -> BinaryTree {
    match tree {
        LabeledTree::Leaf { .. } => {
            *next += 1;
            BinaryTree::Leaf(*next - 1)
        }
        LabeledTree::Node { children, .. } => {
            let mut parts: Vec<BinaryTree> = children.iter().map(|c| binarize(c, next)).collect();
            let mut tree = parts.pop().expect("nodes have children");
            while let Some(left) = parts.pop() {
                tree = BinaryTree::node(left, tree);
            }
            tree
        }
    }
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let text = fs::read_to_string(dir.join("gold.mrg")).expect("gold.mrg");
    let trees = read_treebank(text.as_bytes()).expect("valid treebank");
    let pre = PreprocessConfig::default();
    let gold: Vec<BinaryTree> = trees
        .iter()
        .map(|t| binarize(&filter_tree(t, &pre).expect("non-empty"), &mut 1))
        .collect();

    let models = [("enc-small", 2, 3, 11u64), ("enc-base", 3, 2, 12u64)];
    for (name, layers, heads, seed) in models {
        let cfg = SyntheticConfig {
            model_id: name.to_string(),
            layers,
            heads,
            noise: (0.3, 2.5),
            ..SyntheticConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corpus = SyntheticCorpus::observe(&mut rng, &cfg, gold.clone());
        let path = dir.join(format!("{name}.atna"));
        write_archive(&corpus.archive, &path).expect("write archive");
        println!("wrote {}", path.display());
    }
}
