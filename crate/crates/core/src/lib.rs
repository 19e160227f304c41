//! Constituency tree induction from transformer attention maps.
//!
//! Each attention head yields a tree by chart decoding over pairwise
//! distances between the heads' attention rows. Heads are combined by
//! averaging the syntactic distances of their trees, and the members of an
//! ensemble are chosen on a validation treebank by one of several selection
//! strategies.
//!
//! Modules, bottom-up:
//!
//! * [`treebank`]: bracketed tree I/O, punctuation filtering, gold spans
//! * [`distance`]: binary trees and syntactic distance vectors
//! * [`archive`]: the ATNA attention archive format
//! * [`scoring`]: HEL/JSD, pair scores, CKY decoding
//! * [`eval`]: sentence F1 and per-label recall
//! * [`ensemble`]: head pools and selection strategies
//! * [`cli`]: the `attnparse` command line

pub mod archive;
pub mod cli;
pub mod distance;
pub mod ensemble;
pub mod eval;
pub mod scoring;
pub mod synthetic;
pub mod treebank;

pub use archive::{read_archive, write_archive, ArchiveError, AttentionArchive, HeadId, SentenceAttention};
pub use distance::{average_distances, distance_to_tree, tree_to_distance, BinaryTree, DistanceVector};
pub use ensemble::{EnsembleOptions, HeadPool, HeadSelection, SetScorer, Strategy, ValidationScorer};
pub use eval::{corpus_f1, label_recall, sentence_f1, SentenceScore};
pub use scoring::{cky_decode, distance_matrix, hellinger, jsd, pair_score, DistanceMatrix, Measure};
pub use treebank::{parse_bracketed, preprocess, write_bracketed, LabeledTree, PreprocessConfig, Span, SpanSet};
