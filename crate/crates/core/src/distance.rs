//! Binary trees and their syntactic-distance encoding.
//!
//! A tree over `z` words maps to a vector of `z - 1` gap heights. Gap `k`
//! (1-based) sits between word `k` and word `k + 1`; the root gap holds the
//! strict maximum. Restoring a tree splits recursively at the highest gap,
//! preferring the leftmost one on ties, which is what makes averaged vectors
//! usable as an ensemble.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::treebank::Span;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DistanceError {
    #[error("cannot average an empty list of distance vectors")]
    Empty,
    #[error("distance vector {index} has length {found}, expected {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
}

/// Strictly binary tree whose leaves are 1-based word positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BinaryTree {
    Leaf(usize),
    Node(Box<BinaryTree>, Box<BinaryTree>),
}

impl BinaryTree {
    pub fn node(left: BinaryTree, right: BinaryTree) -> Self {
        BinaryTree::Node(Box::new(left), Box::new(right))
    }

    /// `(w1 (w2 (... wz)))`
    pub fn right_branching(z: usize) -> Self {
        assert!(z >= 1);
        let mut tree = BinaryTree::Leaf(z);
        for pos in (1..z).rev() {
            tree = BinaryTree::node(BinaryTree::Leaf(pos), tree);
        }
        tree
    }

    /// `(((w1 w2) ...) wz)`
    pub fn left_branching(z: usize) -> Self {
        assert!(z >= 1);
        let mut tree = BinaryTree::Leaf(1);
        for pos in 2..=z {
            tree = BinaryTree::node(tree, BinaryTree::Leaf(pos));
        }
        tree
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            BinaryTree::Leaf(_) => 1,
            BinaryTree::Node(l, r) => l.num_leaves() + r.num_leaves(),
        }
    }

    pub fn span(&self) -> Span {
        match self {
            BinaryTree::Leaf(p) => Span::new(*p, *p),
            BinaryTree::Node(l, r) => Span::new(l.span().start, r.span().end),
        }
    }

    /// Spans of all internal nodes in pre-order; always `z - 1` of them.
    pub fn spans(&self) -> Vec<Span> {
        let mut out = Vec::new();
        self.collect_spans(&mut out);
        out
    }

    fn collect_spans(&self, out: &mut Vec<Span>) -> Span {
        match self {
            BinaryTree::Leaf(p) => Span::new(*p, *p),
            BinaryTree::Node(l, r) => {
                let idx = out.len();
                out.push(Span::new(1, 1));
                let ls = l.collect_spans(out);
                let rs = r.collect_spans(out);
                out[idx] = Span::new(ls.start, rs.end);
                out[idx]
            }
        }
    }

    /// Leaves are exactly `1..=z` in order.
    pub fn is_well_formed(&self) -> bool {
        let mut next = 1;
        self.check_leaves(&mut next)
    }

    fn check_leaves(&self, next: &mut usize) -> bool {
        match self {
            BinaryTree::Leaf(p) => {
                let ok = *p == *next;
                *next += 1;
                ok
            }
            BinaryTree::Node(l, r) => l.check_leaves(next) && r.check_leaves(next),
        }
    }
}

/// Gap heights of a binary tree; `values[k]` is the gap after word `k + 1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistanceVector(pub Vec<f64>);

impl DistanceVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of words the vector describes.
    pub fn num_words(&self) -> usize {
        self.0.len() + 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn tree_to_distance(tree: &BinaryTree) -> DistanceVector {
    let mut out = Vec::with_capacity(tree.num_leaves().saturating_sub(1));
    heights(tree, &mut out);
    DistanceVector(out)
}

/// Appends the subtree's gap heights to `out` and returns the subtree height
/// (0 for a leaf).
fn heights(tree: &BinaryTree, out: &mut Vec<f64>) -> f64 {
    match tree {
        BinaryTree::Leaf(_) => 0.0,
        BinaryTree::Node(l, r) => {
            let lh = heights(l, out);
            let gap = out.len();
            out.push(0.0);
            let rh = heights(r, out);
            let h = 1.0 + lh.max(rh);
            out[gap] = h;
            h
        }
    }
}

pub fn distance_to_tree(d: &DistanceVector) -> BinaryTree {
    build(d.as_slice(), 1)
}

fn build(gaps: &[f64], first: usize) -> BinaryTree {
    if gaps.is_empty() {
        return BinaryTree::Leaf(first);
    }
    let mut best = 0;
    for (k, &v) in gaps.iter().enumerate().skip(1) {
        if v > gaps[best] {
            best = k;
        }
    }
    let left = build(&gaps[..best], first);
    let right = build(&gaps[best + 1..], first + best + 1);
    BinaryTree::node(left, right)
}

/// Element-wise arithmetic mean.
pub fn average_distances(ds: &[DistanceVector]) -> Result<DistanceVector, DistanceError> {
    let first = ds.first().ok_or(DistanceError::Empty)?;
    let len = first.len();
    let mut sum = vec![0.0; len];
    for (index, d) in ds.iter().enumerate() {
        if d.len() != len {
            return Err(DistanceError::LengthMismatch {
                index,
                expected: len,
                found: d.len(),
            });
        }
        for (acc, v) in sum.iter_mut().zip(&d.0) {
            *acc += v;
        }
    }
    let n = ds.len() as f64;
    Ok(DistanceVector(sum.into_iter().map(|s| s / n).collect()))
}

/// Replaces each value with its rank among the vector's values (ties share
/// the mean rank). Not applied by default.
pub fn rank_normalize(d: &DistanceVector) -> DistanceVector {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d.0[a].total_cmp(&d.0[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && d.0[order[j + 1]] == d.0[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    DistanceVector(ranks)
}
