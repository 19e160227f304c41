//! Head pools, validation scoring of head sets, and ensemble selection.
//!
//! Every head decodes its own tree for a sentence. An ensemble converts the
//! member trees to syntactic distances, averages them, and restores a single
//! tree. Selection strategies decide which heads join the ensemble by scoring
//! candidate sets on a validation split:
//!
//! * `single`: the best head on its own.
//! * `layer`: all heads of the best layer (one model only).
//! * `topk`: the first K heads of the pool sorted by per-head score.
//! * `greedy`: walk the sorted pool, keep a head only if the set score
//!   strictly improves.
//! * `beam`: grow `b` sets in parallel, each extended only by heads that come
//!   after its last member in the sorted pool, keeping the best `b` per round.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{check_alignment, ArchiveError, AttentionArchive, HeadId, HeadMatrix};
use crate::distance::{
    average_distances, distance_to_tree, rank_normalize, tree_to_distance, BinaryTree, DistanceVector,
};
use crate::eval::{corpus_f1, sentence_f1_with, EmptyGoldPolicy};
use crate::scoring::{decode_head, Measure, ScoringError};
use crate::treebank::{binary_spans, SpanSet};

/// Top-K size used for a single model.
pub const DEFAULT_TOP_K: usize = 20;
/// Beam width used for a single model.
pub const DEFAULT_BEAM: usize = 5;
/// Beam width used when pooling several models.
pub const DEFAULT_MULTI_MODEL_BEAM: usize = 30;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("head pool is empty")]
    EmptyPool,
    #[error("no heads given")]
    NoHeads,
    #[error("K must be at least 1")]
    InvalidK,
    #[error("beam size must be at least 1")]
    InvalidBeam,
    #[error("strategy requires a pool sorted by validation score")]
    NotSorted,
    #[error("layer-wise selection is defined for a single model, pool spans {0} models")]
    MultiModelLayer(usize),
    #[error("validation set has no scorable sentences")]
    EmptyValidation,
    #[error("subset size {requested} outside 1..={available}")]
    SubsetOutOfRange { requested: usize, available: usize },
    #[error("sentence lengths disagree across models: {0}")]
    LengthMismatch(String),
    #[error("validation sentence {id} not found in archive {model}")]
    MissingSentence { id: u32, model: String },
    #[error("validation sentence {id} has {gold} words but the archive has {archive}")]
    SentenceLength { id: u32, gold: usize, archive: usize },
    #[error("head {model}:{layer}:{head} is not present in the loaded archives")]
    UnknownHead { model: String, layer: usize, head: usize },
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

/// Scores a set of heads on validation data. Heads arrive in pool order.
pub trait SetScorer: Sync {
    fn score(&self, heads: &[HeadId]) -> f64;
}

impl<F> SetScorer for F
where
    F: Fn(&[HeadId]) -> f64 + Sync,
{
    fn score(&self, heads: &[HeadId]) -> f64 {
        self(heads)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub head: HeadId,
    pub val: f64,
}

/// Ordered list of candidate heads with their individual validation scores.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadPool {
    entries: Vec<PoolEntry>,
    sorted: bool,
}

impl HeadPool {
    /// Pool in the given order; call [`HeadPool::sorted`] before order-based strategies.
    pub fn from_scores(scores: impl IntoIterator<Item = (HeadId, f64)>) -> Self {
        HeadPool {
            entries: scores.into_iter().map(|(head, val)| PoolEntry { head, val }).collect(),
            sorted: false,
        }
    }

    /// Scores every head on its own, in parallel.
    pub fn score_heads<S: SetScorer + ?Sized>(heads: Vec<HeadId>, scorer: &S) -> Self {
        let vals: Vec<f64> = heads
            .par_iter()
            .map(|h| scorer.score(std::slice::from_ref(h)))
            .collect();
        Self::from_scores(heads.into_iter().zip(vals))
    }

    /// Descending score, ties by `(model, layer, head)`.
    pub fn sorted(mut self) -> Self {
        self.entries
            .sort_by(|a, b| b.val.total_cmp(&a.val).then_with(|| a.head.cmp(&b.head)));
        self.sorted = true;
        self
    }

    pub fn is_sorted(&self) -> bool {
        self.sorted
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn heads(&self) -> Vec<HeadId> {
        self.entries.iter().map(|e| e.head).collect()
    }

    pub fn models(&self) -> usize {
        let mut models: Vec<usize> = self.entries.iter().map(|e| e.head.model).collect();
        models.sort_unstable();
        models.dedup();
        models.len()
    }

    fn require_sorted(&self) -> Result<(), EnsembleError> {
        if self.entries.is_empty() {
            return Err(EnsembleError::EmptyPool);
        }
        if !self.sorted {
            return Err(EnsembleError::NotSorted);
        }
        Ok(())
    }

    fn heads_at(&self, positions: &[usize]) -> Vec<HeadId> {
        positions.iter().map(|&i| self.entries[i].head).collect()
    }
}

/// Every `(p, m, n)` across the archives, in index order.
pub fn all_heads(archives: &[AttentionArchive]) -> Vec<HeadId> {
    let mut heads = Vec::new();
    for (p, a) in archives.iter().enumerate() {
        for m in 1..=a.num_layers {
            for n in 1..=a.num_heads {
                heads.push(HeadId::new(p, m, n));
            }
        }
    }
    heads
}

/// Scores and sorts all heads of all archives.
pub fn build_multi_pool(
    archives: &[AttentionArchive],
    scorer: &ValidationScorer<'_>,
) -> Result<HeadPool, EnsembleError> {
    check_alignment(archives)?;
    let heads = all_heads(archives);
    if heads.is_empty() {
        return Err(EnsembleError::EmptyPool);
    }
    Ok(HeadPool::score_heads(heads, scorer).sorted())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Single,
    Layer,
    TopK,
    Greedy,
    Beam,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Single => "single",
            Strategy::Layer => "layer",
            Strategy::TopK => "topk",
            Strategy::Greedy => "greedy",
            Strategy::Beam => "beam",
        })
    }
}

impl FromStr for Strategy {
    type Err = EnsembleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(Strategy::Single),
            "layer" | "layer-wise" | "layerwise" => Ok(Strategy::Layer),
            "topk" | "top-k" => Ok(Strategy::TopK),
            "greedy" => Ok(Strategy::Greedy),
            "beam" => Ok(Strategy::Beam),
            _ => Err(EnsembleError::UnknownStrategy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub k: Option<usize>,
    pub beam: Option<usize>,
}

/// One scored candidate set during a selection run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub round: usize,
    pub heads: Vec<HeadId>,
    pub score: f64,
    pub accepted: bool,
}

/// Which validation sentences a selection was scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetInfo {
    pub count: usize,
    pub total: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadSelection {
    pub strategy: Strategy,
    /// In sorted-pool order.
    pub chosen: Vec<HeadId>,
    pub hyperparameters: Hyperparameters,
    pub validation_f1: f64,
    pub subset: Option<SubsetInfo>,
    /// Set when greedy accepted nothing and fell back to the best head.
    pub degenerate: bool,
    pub trace: Vec<TraceEntry>,
}

impl HeadSelection {
    fn new(strategy: Strategy, chosen: Vec<HeadId>, validation_f1: f64) -> Self {
        HeadSelection {
            strategy,
            chosen,
            hyperparameters: Hyperparameters::default(),
            validation_f1,
            subset: None,
            degenerate: false,
            trace: Vec::new(),
        }
    }
}

pub fn select_single(pool: &HeadPool) -> Result<HeadSelection, EnsembleError> {
    let best = pool
        .entries
        .iter()
        .reduce(|best, e| {
            if e.val > best.val || (e.val == best.val && e.head < best.head) {
                e
            } else {
                best
            }
        })
        .ok_or(EnsembleError::EmptyPool)?;
    Ok(HeadSelection::new(Strategy::Single, vec![best.head], best.val))
}

pub fn select_layer<S: SetScorer + ?Sized>(pool: &HeadPool, scorer: &S) -> Result<HeadSelection, EnsembleError> {
    if pool.is_empty() {
        return Err(EnsembleError::EmptyPool);
    }
    let models = pool.models();
    if models > 1 {
        return Err(EnsembleError::MultiModelLayer(models));
    }
    let mut layers: BTreeMap<usize, Vec<HeadId>> = BTreeMap::new();
    for e in &pool.entries {
        layers.entry(e.head.layer).or_default().push(e.head);
    }
    let mut best: Option<(usize, f64)> = None;
    let mut trace = Vec::new();
    for (&layer, heads) in &layers {
        let score = scorer.score(heads);
        debug!("layer {layer}: {score:.6}");
        trace.push(TraceEntry {
            round: layer,
            heads: heads.clone(),
            score,
            accepted: false,
        });
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((layer, score));
        }
    }
    let (layer, score) = best.expect("pool is non-empty");
    for t in &mut trace {
        t.accepted = t.round == layer;
    }
    let mut sel = HeadSelection::new(Strategy::Layer, layers.remove(&layer).unwrap(), score);
    sel.trace = trace;
    Ok(sel)
}

pub fn select_topk<S: SetScorer + ?Sized>(
    pool: &HeadPool,
    k: usize,
    scorer: &S,
) -> Result<HeadSelection, EnsembleError> {
    if k < 1 {
        return Err(EnsembleError::InvalidK);
    }
    pool.require_sorted()?;
    let chosen: Vec<HeadId> = pool.entries.iter().take(k).map(|e| e.head).collect();
    let score = scorer.score(&chosen);
    let mut sel = HeadSelection::new(Strategy::TopK, chosen, score);
    sel.hyperparameters.k = Some(k);
    Ok(sel)
}

/// Forward selection over the sorted pool; a head stays only if the grown
/// set's score strictly exceeds the best so far (which starts at 0).
pub fn select_greedy<S: SetScorer + ?Sized>(pool: &HeadPool, scorer: &S) -> Result<HeadSelection, EnsembleError> {
    pool.require_sorted()?;
    let mut kept: Vec<usize> = Vec::new();
    let mut best = 0.0;
    let mut trace = Vec::new();
    for i in 0..pool.len() {
        kept.push(i);
        let heads = pool.heads_at(&kept);
        let score = scorer.score(&heads);
        let accepted = score > best;
        debug!(
            "greedy step {}: {} -> {score:.6} ({})",
            i + 1,
            pool.entries[i].head,
            if accepted { "kept" } else { "dropped" }
        );
        trace.push(TraceEntry {
            round: i + 1,
            heads,
            score,
            accepted,
        });
        if accepted {
            best = score;
        } else {
            kept.pop();
        }
    }
    let mut degenerate = false;
    if kept.is_empty() {
        // Nothing ever scored above 0; fall back to the top head.
        kept.push(0);
        best = scorer.score(&pool.heads_at(&kept));
        degenerate = true;
    }
    info!("greedy kept {} of {} heads, score {best:.6}", kept.len(), pool.len());
    let mut sel = HeadSelection::new(Strategy::Greedy, pool.heads_at(&kept), best);
    sel.degenerate = degenerate;
    sel.trace = trace;
    Ok(sel)
}

/// Beam search over ordered head sets.
///
/// The beam starts with the first `b` heads as singletons. Each round, a set
/// whose last member sits at pool position `mu` spawns `H ∪ {mu + i}` for
/// `i = 1..=b`, stopping at the first position past the end and counting one
/// exhaustion. The best `b` candidates (higher score first, then spawn
/// order) form the next beam. The search ends once a round records at least
/// `b` exhaustions, or produces no candidates at all, and returns the best
/// set of the final beam.
pub fn select_beam<S: SetScorer + ?Sized>(
    pool: &HeadPool,
    b: usize,
    scorer: &S,
) -> Result<HeadSelection, EnsembleError> {
    if b < 1 {
        return Err(EnsembleError::InvalidBeam);
    }
    pool.require_sorted()?;
    let n = pool.len();
    let mut beam: Vec<Vec<usize>> = (0..b.min(n)).map(|i| vec![i]).collect();
    let mut beam_scores: Option<Vec<f64>> = None;
    let mut trace = Vec::new();
    let mut round = 0;
    loop {
        round += 1;
        let mut exhausted = 0;
        let mut candidates: Vec<Vec<usize>> = Vec::new();
        for set in &beam {
            let last = *set.last().expect("beam sets are non-empty");
            for i in 1..=b {
                let next = last + i;
                if next >= n {
                    exhausted += 1;
                    break;
                }
                let mut grown = set.clone();
                grown.push(next);
                candidates.push(grown);
            }
        }
        if candidates.is_empty() {
            break;
        }
        let scores: Vec<f64> = candidates.par_iter().map(|c| scorer.score(&pool.heads_at(c))).collect();
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&x, &y| scores[y].total_cmp(&scores[x]).then(x.cmp(&y)));
        order.truncate(b);
        for (spawn, c) in candidates.iter().enumerate() {
            trace.push(TraceEntry {
                round,
                heads: pool.heads_at(c),
                score: scores[spawn],
                accepted: order.contains(&spawn),
            });
        }
        debug!(
            "beam round {round}: {} candidates, best {:.6}, {exhausted} exhausted",
            candidates.len(),
            scores[order[0]]
        );
        beam_scores = Some(order.iter().map(|&i| scores[i]).collect());
        beam = order.into_iter().map(|i| candidates[i].clone()).collect();
        if exhausted >= b {
            break;
        }
    }
    let scores = beam_scores.unwrap_or_else(|| beam.iter().map(|s| scorer.score(&pool.heads_at(s))).collect());
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    info!(
        "beam finished after {round} rounds, best set has {} heads, score {:.6}",
        beam[best].len(),
        scores[best]
    );
    let mut sel = HeadSelection::new(Strategy::Beam, pool.heads_at(&beam[best]), scores[best]);
    sel.hyperparameters.beam = Some(b);
    sel.trace = trace;
    Ok(sel)
}

/// Runs `strategy` with the given hyperparameters, falling back to the
/// defaults for K and b.
pub fn select<S: SetScorer + ?Sized>(
    strategy: Strategy,
    pool: &HeadPool,
    hyper: Hyperparameters,
    scorer: &S,
) -> Result<HeadSelection, EnsembleError> {
    match strategy {
        Strategy::Single => select_single(pool),
        Strategy::Layer => select_layer(pool, scorer),
        Strategy::TopK => select_topk(pool, hyper.k.unwrap_or(DEFAULT_TOP_K), scorer),
        Strategy::Greedy => select_greedy(pool, scorer),
        Strategy::Beam => {
            let default = if pool.models() > 1 {
                DEFAULT_MULTI_MODEL_BEAM
            } else {
                DEFAULT_BEAM
            };
            select_beam(pool, hyper.beam.unwrap_or(default), scorer)
        }
    }
}

/// How member trees are fused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub measure: Measure,
    /// Rank-transform each member's distance vector before averaging.
    pub rank_normalize: bool,
}

fn member_vector(tree: &BinaryTree, opts: EnsembleOptions) -> DistanceVector {
    let d = tree_to_distance(tree);
    if opts.rank_normalize {
        rank_normalize(&d)
    } else {
        d
    }
}

/// Decodes each head's matrix, averages the trees' distance vectors, and
/// restores the final tree.
pub fn ensemble_parse(maps: &[HeadMatrix<'_>], opts: EnsembleOptions) -> Result<BinaryTree, EnsembleError> {
    let first = maps.first().ok_or(EnsembleError::NoHeads)?;
    if let Some(m) = maps.iter().find(|m| m.z() != first.z()) {
        return Err(EnsembleError::LengthMismatch(format!(
            "{} vs {} words",
            first.z(),
            m.z()
        )));
    }
    let vectors = maps
        .iter()
        .map(|&m| Ok(member_vector(&decode_head(m, opts.measure)?, opts)))
        .collect::<Result<Vec<_>, EnsembleError>>()?;
    Ok(fuse(&vectors))
}

fn fuse(vectors: &[DistanceVector]) -> BinaryTree {
    let mean = average_distances(vectors).expect("non-empty, equal-length member vectors");
    distance_to_tree(&mean)
}

/// Ensemble parse of the sentence at `sentence_index` in aligned archives.
pub fn parse_sentence(
    archives: &[AttentionArchive],
    sentence_index: usize,
    heads: &[HeadId],
    opts: EnsembleOptions,
) -> Result<BinaryTree, EnsembleError> {
    let maps = heads
        .iter()
        .map(|h| {
            let archive = archives.get(h.model).ok_or_else(|| {
                ArchiveError::OutOfRange(format!("model index {} with {} archives", h.model, archives.len()))
            })?;
            archive
                .head_distributions(*h, sentence_index)
                .map_err(EnsembleError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;
    ensemble_parse(&maps, opts)
}

/// A validation sentence: its id in the split and its filtered gold spans.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationItem {
    pub sentence_id: u32,
    pub z: usize,
    pub gold: SpanSet,
}

/// Corpus F1 of head ensembles on a validation set, with per-head decode
/// results and per-set scores memoized.
pub struct ValidationScorer<'a> {
    archives: &'a [AttentionArchive],
    /// `(archive sentence index, gold spans)`
    items: Vec<(usize, SpanSet)>,
    opts: EnsembleOptions,
    policy: EmptyGoldPolicy,
    head_vectors: RwLock<HashMap<HeadId, Arc<Vec<DistanceVector>>>>,
    set_scores: RwLock<HashMap<Vec<HeadId>, f64>>,
}

impl<'a> ValidationScorer<'a> {
    pub fn new(
        archives: &'a [AttentionArchive],
        validation: &[ValidationItem],
        opts: EnsembleOptions,
        policy: EmptyGoldPolicy,
    ) -> Result<Self, EnsembleError> {
        check_alignment(archives)?;
        let first = archives.first().ok_or(EnsembleError::EmptyPool)?;
        let index = first.index_by_id();
        let mut items = Vec::with_capacity(validation.len());
        for v in validation {
            let &pos = index
                .get(&v.sentence_id)
                .ok_or_else(|| EnsembleError::MissingSentence {
                    id: v.sentence_id,
                    model: first.model_id.clone(),
                })?;
            let z = first.sentences[pos].z;
            if z != v.z {
                return Err(EnsembleError::SentenceLength {
                    id: v.sentence_id,
                    gold: v.z,
                    archive: z,
                });
            }
            items.push((pos, v.gold.clone()));
        }
        let scorable = items.iter().any(|(_, g)| !g.is_empty()) || policy == EmptyGoldPolicy::ScoreOne;
        if items.is_empty() || !scorable {
            return Err(EnsembleError::EmptyValidation);
        }
        Ok(ValidationScorer {
            archives,
            items,
            opts,
            policy,
            head_vectors: RwLock::new(HashMap::new()),
            set_scores: RwLock::new(HashMap::new()),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn options(&self) -> EnsembleOptions {
        self.opts
    }

    fn vectors(&self, head: HeadId) -> Arc<Vec<DistanceVector>> {
        if let Some(v) = self.head_vectors.read().unwrap().get(&head) {
            return Arc::clone(v);
        }
        let archive = &self.archives[head.model];
        assert!(
            (1..=archive.num_layers).contains(&head.layer) && (1..=archive.num_heads).contains(&head.head),
            "head {head} outside archive bounds"
        );
        let vectors: Vec<DistanceVector> = self
            .items
            .iter()
            .map(|&(pos, _)| {
                let maps = archive.sentences[pos].matrix(archive.num_heads, head.layer, head.head);
                let tree = decode_head(maps, self.opts.measure).expect("validated archive sentence");
                member_vector(&tree, self.opts)
            })
            .collect();
        let vectors = Arc::new(vectors);
        self.head_vectors
            .write()
            .unwrap()
            .entry(head)
            .or_insert_with(|| Arc::clone(&vectors));
        vectors
    }

    /// Per-sentence predicted trees for a head set.
    pub fn predictions(&self, heads: &[HeadId]) -> Vec<BinaryTree> {
        let members: Vec<_> = heads.iter().map(|&h| self.vectors(h)).collect();
        (0..self.items.len())
            .map(|s| {
                let vs: Vec<DistanceVector> = members.iter().map(|m| m[s].clone()).collect();
                fuse(&vs)
            })
            .collect()
    }

    fn compute(&self, heads: &[HeadId]) -> f64 {
        let scores: Vec<_> = self
            .predictions(heads)
            .iter()
            .zip(&self.items)
            .map(|(tree, (_, gold))| sentence_f1_with(&binary_spans(tree), gold, self.policy))
            .collect();
        corpus_f1(&scores).expect("validation set has scorable sentences")
    }
}

impl SetScorer for ValidationScorer<'_> {
    fn score(&self, heads: &[HeadId]) -> f64 {
        assert!(!heads.is_empty(), "cannot score an empty head set");
        let mut key = heads.to_vec();
        key.sort_unstable();
        if let Some(&v) = self.set_scores.read().unwrap().get(&key) {
            return v;
        }
        let v = self.compute(heads);
        self.set_scores.write().unwrap().insert(key, v);
        v
    }
}

/// Size of a validation subsample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubsetSize {
    All,
    Count(usize),
    Fraction(f64),
}

impl SubsetSize {
    pub fn resolve(self, available: usize) -> Result<usize, EnsembleError> {
        let requested = match self {
            SubsetSize::All => available,
            SubsetSize::Count(n) => n,
            SubsetSize::Fraction(f) if f.is_finite() && f > 0.0 => (f * available as f64).round() as usize,
            SubsetSize::Fraction(_) => 0,
        };
        if requested < 1 || requested > available {
            return Err(EnsembleError::SubsetOutOfRange { requested, available });
        }
        Ok(requested)
    }
}

/// Seeded random subset, returned in original order.
pub fn subsample_validation<T: Clone>(
    items: &[T],
    size: SubsetSize,
    seed: u64,
) -> Result<(Vec<T>, SubsetInfo), EnsembleError> {
    let count = size.resolve(items.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, items.len(), count).into_vec();
    picked.sort_unstable();
    let subset = picked.into_iter().map(|i| items[i].clone()).collect();
    Ok((
        subset,
        SubsetInfo {
            count,
            total: items.len(),
            seed: Some(seed),
        },
    ))
}

/// A head as persisted: model name instead of index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadRef {
    pub model: String,
    pub layer: usize,
    pub head: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: usize,
    pub heads: Vec<HeadRef>,
    pub score: f64,
    pub accepted: bool,
}

/// JSON form of a [`HeadSelection`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDocument {
    pub strategy: Strategy,
    pub hyperparameters: Hyperparameters,
    pub measure: Measure,
    #[serde(default)]
    pub rank_normalize: bool,
    pub chosen: Vec<HeadRef>,
    pub validation_f1: f64,
    pub validation_subset: Option<SubsetInfo>,
    #[serde(default)]
    pub degenerate: bool,
    #[serde(default)]
    pub trace: Vec<TraceRecord>,
    pub toolkit_version: String,
}

fn head_ref(h: HeadId, model_ids: &[String]) -> HeadRef {
    HeadRef {
        model: model_ids[h.model].clone(),
        layer: h.layer,
        head: h.head,
    }
}

impl SelectionDocument {
    pub fn new(sel: &HeadSelection, opts: EnsembleOptions, model_ids: &[String]) -> Self {
        SelectionDocument {
            strategy: sel.strategy,
            hyperparameters: sel.hyperparameters,
            measure: opts.measure,
            rank_normalize: opts.rank_normalize,
            chosen: sel.chosen.iter().map(|&h| head_ref(h, model_ids)).collect(),
            validation_f1: sel.validation_f1,
            validation_subset: sel.subset,
            degenerate: sel.degenerate,
            trace: sel
                .trace
                .iter()
                .map(|t| TraceRecord {
                    round: t.round,
                    heads: t.heads.iter().map(|&h| head_ref(h, model_ids)).collect(),
                    score: t.score,
                    accepted: t.accepted,
                })
                .collect(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn options(&self) -> EnsembleOptions {
        EnsembleOptions {
            measure: self.measure,
            rank_normalize: self.rank_normalize,
        }
    }

    /// Resolves the chosen heads against loaded archives.
    pub fn resolve_heads(&self, archives: &[AttentionArchive]) -> Result<Vec<HeadId>, EnsembleError> {
        self.chosen
            .iter()
            .map(|r| {
                let unknown = || EnsembleError::UnknownHead {
                    model: r.model.clone(),
                    layer: r.layer,
                    head: r.head,
                };
                let p = archives
                    .iter()
                    .position(|a| a.model_id == r.model)
                    .ok_or_else(unknown)?;
                let a = &archives[p];
                if !(1..=a.num_layers).contains(&r.layer) || !(1..=a.num_heads).contains(&r.head) {
                    return Err(unknown());
                }
                Ok(HeadId::new(p, r.layer, r.head))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn h(i: usize) -> HeadId {
        HeadId::new(0, 1, i)
    }

    fn pool(vals: &[f64]) -> HeadPool {
        HeadPool::from_scores(vals.iter().enumerate().map(|(i, &v)| (h(i + 1), v))).sorted()
    }

    /// Scores sets by lookup on their head numbers.
    fn scripted(table: &[(&[usize], f64)]) -> impl Fn(&[HeadId]) -> f64 + Sync {
        let map: HashMap<Vec<usize>, f64> = table.iter().map(|(k, v)| (k.to_vec(), *v)).collect();
        move |heads: &[HeadId]| {
            let key: Vec<usize> = heads.iter().map(|h| h.head).collect();
            *map.get(&key).unwrap_or(&0.0)
        }
    }

    #[test]
    fn single_picks_argmax() {
        let p = HeadPool::from_scores([(h(1), 0.5), (h(2), 0.4), (h(3), 0.3)]);
        assert_eq!(select_single(&p).unwrap().chosen, vec![h(1)]);
        let tie = HeadPool::from_scores([(h(2), 0.5), (h(1), 0.5), (h(3), 0.3)]);
        assert_eq!(select_single(&tie).unwrap().chosen, vec![h(1)]);
    }

    #[test]
    fn sorting_breaks_ties_by_id() {
        let p = HeadPool::from_scores([(h(3), 0.2), (h(2), 0.5), (h(1), 0.5)]).sorted();
        assert_eq!(p.heads(), vec![h(1), h(2), h(3)]);
    }

    #[test]
    fn topk_takes_prefix() {
        let p = pool(&[0.5, 0.4, 0.3]);
        let s = select_topk(&p, 2, &|_: &[HeadId]| 0.1).unwrap();
        assert_eq!(s.chosen, vec![h(1), h(2)]);
        let s = select_topk(&p, 20, &|_: &[HeadId]| 0.1).unwrap();
        assert_eq!(s.chosen.len(), 3);
        assert!(matches!(
            select_topk(&p, 0, &|_: &[HeadId]| 0.1),
            Err(EnsembleError::InvalidK)
        ));
        let unsorted = HeadPool::from_scores([(h(1), 0.1)]);
        assert!(matches!(
            select_topk(&unsorted, 1, &|_: &[HeadId]| 0.1),
            Err(EnsembleError::NotSorted)
        ));
    }

    #[test]
    fn greedy_scripted_trace() {
        let p = pool(&[0.5, 0.4, 0.3]);
        let f = scripted(&[(&[1], 0.5), (&[1, 2], 0.55), (&[1, 2, 3], 0.53)]);
        let s = select_greedy(&p, &f).unwrap();
        assert_eq!(s.chosen, vec![h(1), h(2)]);
        assert_eq!(s.validation_f1, 0.55);
        assert!(!s.degenerate);
    }

    #[test]
    fn greedy_monotone_takes_everything() {
        let p = pool(&[0.5, 0.4, 0.3, 0.2]);
        let s = select_greedy(&p, &|hs: &[HeadId]| hs.len() as f64 / 10.0).unwrap();
        assert_eq!(s.chosen.len(), 4);
    }

    #[test]
    fn greedy_rejects_equal_scores() {
        let p = pool(&[0.5, 0.4, 0.3]);
        let s = select_greedy(&p, &|_: &[HeadId]| 0.5).unwrap();
        assert_eq!(s.chosen, vec![h(1)]);
    }

    #[test]
    fn greedy_all_zero_falls_back() {
        let p = pool(&[0.0, 0.0]);
        let s = select_greedy(&p, &|_: &[HeadId]| 0.0).unwrap();
        assert_eq!(s.chosen, vec![h(1)]);
        assert!(s.degenerate);
    }

    #[test]
    fn beam_width_one_walks_the_pool() {
        let p = pool(&[0.5, 0.4, 0.3]);
        let f = scripted(&[(&[1, 2], 0.6), (&[1, 2, 3], 0.55)]);
        let s = select_beam(&p, 1, &f).unwrap();
        assert_eq!(s.chosen, vec![h(1), h(2), h(3)]);
        assert_eq!(s.validation_f1, 0.55);
    }

    #[test]
    fn beam_single_head_pool() {
        let p = pool(&[0.5]);
        let s = select_beam(&p, 3, &|_: &[HeadId]| 0.5).unwrap();
        assert_eq!(s.chosen, vec![h(1)]);
        assert!(matches!(
            select_beam(&p, 0, &|_: &[HeadId]| 0.5),
            Err(EnsembleError::InvalidBeam)
        ));
    }

    #[test]
    fn beam_keeps_top_candidates() {
        // b = 2 over 4 heads: round 1 spawns {1,2},{1,3},{2,3},{2,4}
        let p = pool(&[0.9, 0.8, 0.7, 0.6]);
        let f = scripted(&[
            (&[1, 2], 0.1),
            (&[1, 3], 0.7),
            (&[2, 3], 0.2),
            (&[2, 4], 0.6),
            (&[1, 3, 4], 0.65),
        ]);
        let s = select_beam(&p, 2, &f).unwrap();
        // round 2: {1,3} -> {1,3,4} then exhausted; {2,4} exhausted: e = 2
        assert_eq!(s.chosen, vec![h(1), h(3), h(4)]);
    }

    #[test]
    fn layer_selection() {
        let heads = [
            HeadId::new(0, 1, 1),
            HeadId::new(0, 1, 2),
            HeadId::new(0, 2, 1),
            HeadId::new(0, 2, 2),
        ];
        let p = HeadPool::from_scores(heads.iter().map(|&h| (h, 0.1))).sorted();
        let f = |hs: &[HeadId]| if hs[0].layer == 1 { 0.4 } else { 0.6 };
        let s = select_layer(&p, &f).unwrap();
        assert_eq!(s.chosen, vec![heads[2], heads[3]]);
        let s = select_layer(&p, &|_: &[HeadId]| 0.5).unwrap();
        assert_eq!(s.chosen, vec![heads[0], heads[1]]);
        let multi = HeadPool::from_scores([(HeadId::new(0, 1, 1), 0.1), (HeadId::new(1, 1, 1), 0.1)]);
        assert!(matches!(
            select_layer(&multi, &f),
            Err(EnsembleError::MultiModelLayer(2))
        ));
    }

    #[test]
    fn subsample_is_deterministic() {
        let items: Vec<usize> = (0..1700).collect();
        let (a, info) = subsample_validation(&items, SubsetSize::Fraction(0.01), 7).unwrap();
        assert_eq!(a.len(), 17);
        assert_eq!(info.count, 17);
        let (b, _) = subsample_validation(&items, SubsetSize::Fraction(0.01), 7).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        let (all, _) = subsample_validation(&items, SubsetSize::Count(1700), 3).unwrap();
        assert_eq!(all, items);
        assert!(subsample_validation(&items, SubsetSize::Count(0), 3).is_err());
        assert!(subsample_validation(&items, SubsetSize::Count(1701), 3).is_err());
    }

    #[test]
    fn strategy_names() {
        for s in [
            Strategy::Single,
            Strategy::Layer,
            Strategy::TopK,
            Strategy::Greedy,
            Strategy::Beam,
        ] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("random".parse::<Strategy>().is_err());
    }
}
