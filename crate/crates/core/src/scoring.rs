//! Pair scores over spans and minimum-cost chart decoding.
//!
//! For one head, every pair of words is compared by a distance between their
//! attention distributions. The compositional cost of a span is the mean
//! distance over all word pairs inside it, and the decoded tree minimizes the
//! sum of span costs over its internal nodes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::HeadMatrix;
use crate::distance::BinaryTree;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoringError {
    #[error("distributions differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("span ({i}, {j}) is outside 1..={z}")]
    OutOfRange { i: usize, j: usize, z: usize },
    #[error("cannot decode an empty sentence")]
    EmptySentence,
    #[error("unknown measure {0:?} (expected HEL or JSD)")]
    UnknownMeasure(String),
}

/// Distance between two attention distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Measure {
    #[default]
    #[serde(rename = "HEL")]
    Hellinger,
    #[serde(rename = "JSD")]
    JensenShannon,
}

impl Measure {
    pub fn apply(self, p: &[f64], q: &[f64]) -> Result<f64, ScoringError> {
        match self {
            Measure::Hellinger => hellinger(p, q),
            Measure::JensenShannon => jsd(p, q),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::Hellinger => "HEL",
            Measure::JensenShannon => "JSD",
        })
    }
}

impl FromStr for Measure {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "HEL" | "HELLINGER" => Ok(Measure::Hellinger),
            "JSD" | "JS" => Ok(Measure::JensenShannon),
            _ => Err(ScoringError::UnknownMeasure(s.to_string())),
        }
    }
}

/// `‖√p − √q‖₂ / √2`, in `[0, 1]` for probability vectors.
pub fn hellinger(p: &[f64], q: &[f64]) -> Result<f64, ScoringError> {
    if p.len() != q.len() {
        return Err(ScoringError::LengthMismatch(p.len(), q.len()));
    }
    let sq: f64 = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let d = a.max(0.0).sqrt() - b.max(0.0).sqrt();
            d * d
        })
        .sum();
    Ok((sq / 2.0).sqrt().min(1.0))
}

/// Square root of the base-2 Jensen-Shannon divergence, with `0·log 0 = 0`.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64, ScoringError> {
    if p.len() != q.len() {
        return Err(ScoringError::LengthMismatch(p.len(), q.len()));
    }
    let mut div = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            div += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            div += 0.5 * b * (b / m).log2();
        }
    }
    Ok(div.clamp(0.0, 1.0).sqrt())
}

/// Symmetric `z x z` matrix of pairwise word distances for one head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    z: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix from row-major values; no symmetry check.
    pub fn from_values(z: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), z * z);
        DistanceMatrix { z, values }
    }

    /// Symmetric matrix with zero diagonal from the strict upper triangle,
    /// given as a function of 0-based `(x, y)` with `x < y`.
    pub fn from_upper(z: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; z * z];
        for x in 0..z {
            for y in x + 1..z {
                let v = f(x, y);
                values[x * z + y] = v;
                values[y * z + x] = v;
            }
        }
        DistanceMatrix { z, values }
    }

    pub fn z(&self) -> usize {
        self.z
    }

    /// 0-based access.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[x * self.z + y]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Applies `measure` to every pair of rows of a head's attention matrix.
pub fn distance_matrix(maps: HeadMatrix<'_>, measure: Measure) -> Result<DistanceMatrix, ScoringError> {
    let z = maps.z();
    let rows: Vec<Vec<f64>> = (0..z)
        .map(|x| maps.row(x).iter().map(|&v| v as f64).collect())
        .collect();
    let mut values = vec![0.0; z * z];
    for x in 0..z {
        for y in x + 1..z {
            let v = measure.apply(&rows[x], &rows[y])?;
            values[x * z + y] = v;
            values[y * z + x] = v;
        }
    }
    Ok(DistanceMatrix { z, values })
}

/// Mean distance over all word pairs in the 1-based span `[i, j]`, computed
/// directly; 0 when `i == j`.
pub fn pair_score(d: &DistanceMatrix, i: usize, j: usize) -> Result<f64, ScoringError> {
    if i < 1 || i > j || j > d.z {
        return Err(ScoringError::OutOfRange { i, j, z: d.z });
    }
    if i == j {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for x in i - 1..j {
        for y in x + 1..j {
            sum += d.get(x, y);
        }
    }
    Ok(sum / pairs(j - i + 1))
}

fn pairs(width: usize) -> f64 {
    (width * (width - 1) / 2) as f64
}

/// Two-dimensional prefix sums over the strict upper triangle of `D`, so the
/// sum of all pairs inside any span is four lookups.
#[derive(Debug, Clone)]
pub struct SpanSums {
    z: usize,
    /// `(z+1) x (z+1)`; entry `[a][b]` sums `D[x][y]` for `x < a`, `y < b`, `x < y`.
    prefix: Vec<f64>,
}

impl SpanSums {
    pub fn new(d: &DistanceMatrix) -> Self {
        let z = d.z;
        let w = z + 1;
        let mut prefix = vec![0.0; w * w];
        for a in 1..=z {
            let x = a - 1;
            let mut row = 0.0;
            for b in 1..=z {
                let y = b - 1;
                if x < y {
                    row += d.get(x, y);
                }
                prefix[a * w + b] = prefix[(a - 1) * w + b] + row;
            }
        }
        SpanSums { z, prefix }
    }

    /// Sum of `D[x][y]` over pairs `i <= x < y <= j` (1-based).
    pub fn pair_sum(&self, i: usize, j: usize) -> f64 {
        let w = self.z + 1;
        let (lo, hi) = (i - 1, j);
        self.prefix[hi * w + hi] - self.prefix[lo * w + hi] - self.prefix[hi * w + lo] + self.prefix[lo * w + lo]
    }

    pub fn pair_score(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.pair_sum(i, j) / pairs(j - i + 1)
        }
    }
}

/// Filled chart of minimum span costs and their best split points.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreChart {
    z: usize,
    span_cost: Vec<f64>,
    best_split: Vec<usize>,
}

impl ScoreChart {
    pub fn z(&self) -> usize {
        self.z
    }

    /// Minimum cost of any subtree over `[i, j]` (1-based).
    pub fn span_cost(&self, i: usize, j: usize) -> f64 {
        self.span_cost[(i - 1) * self.z + (j - 1)]
    }

    /// Best `k` splitting `[i, j]` into `[i, k]` and `[k+1, j]`; 0 for `i == j`.
    pub fn best_split(&self, i: usize, j: usize) -> usize {
        self.best_split[(i - 1) * self.z + (j - 1)]
    }

    /// Cost of the decoded tree.
    pub fn total_cost(&self) -> f64 {
        if self.z == 0 {
            0.0
        } else {
            self.span_cost(1, self.z)
        }
    }

    fn tree(&self, i: usize, j: usize) -> BinaryTree {
        if i == j {
            return BinaryTree::Leaf(i);
        }
        let k = self.best_split(i, j);
        BinaryTree::node(self.tree(i, k), self.tree(k + 1, j))
    }
}

/// Split costs closer than this (relative) count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// CKY over pair scores; split ties go to the smallest `k`.
pub fn cky_decode(d: &DistanceMatrix) -> Result<(BinaryTree, ScoreChart), ScoringError> {
    let z = d.z;
    if z == 0 {
        return Err(ScoringError::EmptySentence);
    }
    let sums = SpanSums::new(d);
    let mut chart = ScoreChart {
        z,
        span_cost: vec![0.0; z * z],
        best_split: vec![0; z * z],
    };
    for width in 2..=z {
        for i in 1..=z + 1 - width {
            let j = i + width - 1;
            let mut best = f64::INFINITY;
            let mut best_k = i;
            for k in i..j {
                let cost = chart.span_cost(i, k) + chart.span_cost(k + 1, j);
                if k == i || cost < best - TIE_TOLERANCE * best.abs().max(1.0) {
                    best = cost;
                    best_k = k;
                }
            }
            let idx = (i - 1) * z + (j - 1);
            chart.span_cost[idx] = sums.pair_score(i, j) + best;
            chart.best_split[idx] = best_k;
        }
    }
    Ok((chart.tree(1, z), chart))
}

/// Sum of pair scores over a tree's internal spans.
pub fn tree_cost(d: &DistanceMatrix, tree: &BinaryTree) -> f64 {
    let sums = SpanSums::new(d);
    tree.spans().iter().map(|s| sums.pair_score(s.start, s.end)).sum()
}

/// Decodes one head's attention matrix into a tree.
pub fn decode_head(maps: HeadMatrix<'_>, measure: Measure) -> Result<BinaryTree, ScoringError> {
    let d = distance_matrix(maps, measure)?;
    Ok(cky_decode(&d)?.0)
}
