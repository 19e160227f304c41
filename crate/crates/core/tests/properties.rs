use std::collections::BTreeSet;
use std::io::Cursor;

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use attnparse::archive::{ArchiveReader, AttentionArchive, HeadId, SentenceAttention};
use attnparse::distance::{average_distances, distance_to_tree, tree_to_distance, BinaryTree, DistanceVector};
use attnparse::ensemble::{select_greedy, select_single, select_topk, HeadPool};
use attnparse::eval::{corpus_f1, label_recall, sentence_f1, SentenceScore};
use attnparse::scoring::{cky_decode, hellinger, jsd, pair_score, DistanceMatrix, SpanSums};
use attnparse::synthetic::random_tree;
use attnparse::treebank::{
    binary_spans, filter_tree, parse_bracketed, preprocess, write_bracketed, LabeledTree, PreprocessConfig, Span,
    SpanSet,
};

fn tree(max_z: usize) -> impl Strategy<Value = BinaryTree> {
    (1..=max_z, any::<u64>()).prop_map(|(z, seed)| random_tree(&mut ChaCha8Rng::seed_from_u64(seed), z))
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64], n).prop_map(|mut v| {
        if v.iter().all(|&x| x == 0.0) {
            v[0] = 1.0;
        }
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    })
}

fn matrix(max_z: usize) -> impl Strategy<Value = DistanceMatrix> {
    (1..=max_z, any::<u64>()).prop_map(|(z, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DistanceMatrix::from_upper(z, |_, _| rng.random::<f64>())
    })
}

const TAGS: &[&str] = &["NN", "VB", "DT", ",", ".", "``", "-NONE-", "JJ"];
const PHRASES: &[&str] = &["NP", "NP-SBJ", "VP", "PP-LOC", "S", "SBAR", "ADJP=2"];

fn labeled(depth: u32) -> impl Strategy<Value = LabeledTree> {
    let leaf = (0..TAGS.len(), 0..50u32).prop_map(|(t, w)| LabeledTree::Leaf {
        tag: TAGS[t].to_string(),
        word: if TAGS[t] == "-NONE-" {
            "*T*-1".into()
        } else {
            format!("w{w}")
        },
    });
    leaf.prop_recursive(depth, 40, 4, |inner| {
        (0..PHRASES.len(), prop::collection::vec(inner, 1..4)).prop_map(|(l, children)| LabeledTree::Node {
            label: PHRASES[l].to_string(),
            children,
        })
    })
}

/// Spans of the kept words, re-indexed by walking the original tree.
fn reindexed(t: &LabeledTree, cfg: &PreprocessConfig, next: &mut usize, out: &mut SpanSet) -> Option<(usize, usize)> {
    match t {
        LabeledTree::Leaf { tag, .. } => {
            let dropped = (cfg.remove_punctuation && cfg.punctuation_tags.iter().any(|p| p == tag))
                || (cfg.remove_empty_elements && tag == "-NONE-");
            if dropped {
                None
            } else {
                *next += 1;
                Some((*next, *next))
            }
        }
        LabeledTree::Node { label, children } => {
            let mut range: Option<(usize, usize)> = None;
            for c in children {
                if let Some((a, b)) = reindexed(c, cfg, next, out) {
                    range = Some(range.map_or((a, b), |(lo, _)| (lo, b)));
                }
            }
            let (a, b) = range?;
            let base = label.split(['-', '=']).next().unwrap();
            out.insert_labeled(Span::new(a, b), base);
            Some((a, b))
        }
    }
}

fn archive() -> impl Strategy<Value = AttentionArchive> {
    (
        1..=3usize,
        1..=3usize,
        prop::collection::vec(1..=6usize, 0..4),
        any::<u64>(),
    )
        .prop_map(|(l, a, lens, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sentences = lens
                .iter()
                .enumerate()
                .map(|(id, &z)| {
                    let mut data = Vec::new();
                    for _ in 0..l * a * z {
                        let row: Vec<f32> = (0..z).map(|_| rng.random::<f32>() + 0.01).collect();
                        let s: f32 = row.iter().sum();
                        data.extend(row.iter().map(|x| x / s));
                    }
                    SentenceAttention {
                        id: id as u32 * 3,
                        z,
                        data,
                    }
                })
                .collect();
            AttentionArchive {
                model_id: format!("m{seed:x}"),
                num_layers: l,
                num_heads: a,
                sentences,
            }
        })
}

fn spanset() -> impl Strategy<Value = SpanSet> {
    prop::collection::vec((1..8usize, 0..4usize), 0..8)
        .prop_map(|v| v.into_iter().map(|(i, w)| Span::new(i, i + w + 1)).collect())
}

proptest! {
    #[test]
    fn bracketed_round_trip_keeps_spans(t in tree(15)) {
        let z = t.num_leaves();
        let words: Vec<String> = (1..=z).map(|i| format!("w{i}")).collect();
        let text = write_bracketed(&t, &words).unwrap();
        let parsed = parse_bracketed(&text).unwrap();
        let cfg = PreprocessConfig { remove_punctuation: false, ..PreprocessConfig::default() };
        let gold = preprocess(&parsed, 0, &cfg);
        prop_assert_eq!(&gold.sentence.words, &words);
        let got: Vec<Span> = gold.spans.iter().copied().collect();
        let want: Vec<Span> = binary_spans(&t).iter().copied().collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn preprocessing_is_idempotent(t in labeled(4)) {
        let cfg = PreprocessConfig::default();
        if let Some(once) = filter_tree(&t, &cfg) {
            prop_assert_eq!(filter_tree(&once, &cfg), Some(once.clone()));
            let a = preprocess(&t, 0, &cfg);
            let b = preprocess(&once, 0, &cfg);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn reindexing_matches_walk(t in labeled(4)) {
        let cfg = PreprocessConfig::default();
        let mut expect = SpanSet::new();
        let mut n = 0;
        reindexed(&t, &cfg, &mut n, &mut expect);
        match filter_tree(&t, &cfg) {
            None => prop_assert_eq!(n, 0),
            Some(f) => {
                prop_assert_eq!(f.num_leaves(), n);
                prop_assert_eq!(f.spans(), expect);
            }
        }
    }

    #[test]
    fn filtered_spans_do_not_cross(t in labeled(4)) {
        let g = preprocess(&t, 0, &PreprocessConfig::default());
        let spans: Vec<Span> = g.spans.iter().copied().collect();
        for a in &spans {
            prop_assert!(a.start >= 1 && a.end <= g.sentence.len());
            for b in &spans {
                let disjoint = a.end < b.start || b.end < a.start;
                prop_assert!(disjoint || a.contains(b) || b.contains(a), "{a:?} crosses {b:?}");
            }
        }
    }

    #[test]
    fn distance_round_trip(t in tree(12)) {
        prop_assert_eq!(distance_to_tree(&tree_to_distance(&t)), t);
    }

    #[test]
    fn restore_ignores_monotone_maps(d in prop::collection::vec(-50.0..50.0f64, 0..12)) {
        let base = distance_to_tree(&DistanceVector(d.clone()));
        let affine = DistanceVector(d.iter().map(|x| 3.0 * x + 7.0).collect());
        let cubic = DistanceVector(d.iter().map(|x| x * x * x).collect());
        prop_assert_eq!(distance_to_tree(&affine), base.clone());
        prop_assert_eq!(distance_to_tree(&cubic), base);
    }

    #[test]
    fn averaging_ignores_member_order(
        members in prop::collection::vec(prop::collection::vec(0.0..10.0f64, 5), 1..6),
        rot in 0usize..6,
    ) {
        let a: Vec<DistanceVector> = members.iter().cloned().map(DistanceVector).collect();
        let mut b = a.clone();
        b.rotate_left(rot % a.len());
        b.reverse();
        let (x, y) = (average_distances(&a).unwrap(), average_distances(&b).unwrap());
        for (u, v) in x.0.iter().zip(&y.0) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn measures_are_metrics(p in distribution(6), q in distribution(6), r in distribution(6)) {
        for f in [hellinger, jsd] {
            let (pq, qp) = (f(&p, &q).unwrap(), f(&q, &p).unwrap());
            prop_assert!((0.0..=1.0).contains(&pq));
            prop_assert!((pq - qp).abs() <= 1e-12);
            prop_assert!(f(&p, &p).unwrap().abs() <= 1e-12);
            let via = f(&p, &r).unwrap() + f(&r, &q).unwrap();
            prop_assert!(pq <= via + 1e-9, "triangle: {pq} > {via}");
        }
    }

    #[test]
    fn prefix_sums_match_naive(d in matrix(20)) {
        let sums = SpanSums::new(&d);
        for i in 1..=d.z() {
            for j in i..=d.z() {
                prop_assert!((sums.pair_score(i, j) - pair_score(&d, i, j).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cky_ignores_shift_and_scale(d in matrix(10), c in 0.1..5.0f64, k in 0.5..4.0f64) {
        let (t, chart) = cky_decode(&d).unwrap();
        prop_assert!(t.is_well_formed());
        prop_assert_eq!(t.num_leaves(), d.z());
        prop_assert_eq!(t.spans().len(), d.z() - 1);
        let shifted = DistanceMatrix::from_upper(d.z(), |x, y| d.get(x, y) + c);
        let scaled = DistanceMatrix::from_upper(d.z(), |x, y| d.get(x, y) * k);
        let (ts, cs) = cky_decode(&shifted).unwrap();
        prop_assert_eq!(&ts, &t);
        prop_assert!((cs.total_cost() - chart.total_cost() - (d.z() - 1) as f64 * c).abs() < 1e-9);
        prop_assert_eq!(cky_decode(&scaled).unwrap().0, t);
    }

    #[test]
    fn archive_bytes_round_trip(a in archive()) {
        let bytes = a.to_bytes().unwrap();
        prop_assert_eq!(AttentionArchive::from_bytes(&bytes).unwrap(), a.clone());
        let reader = ArchiveReader::new(Cursor::new(&bytes)).unwrap();
        prop_assert_eq!(reader.header().clone(), a.header());
        let streamed: Vec<SentenceAttention> = reader.collect::<Result<_, _>>().unwrap();
        prop_assert_eq!(streamed, a.sentences);
    }

    #[test]
    fn precision_and_recall_swap(p in spanset(), g in spanset()) {
        prop_assume!(!p.is_empty() && !g.is_empty());
        let (a, b) = (sentence_f1(&p, &g), sentence_f1(&g, &p));
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
        prop_assert_eq!(a.f1, b.f1);
    }

    #[test]
    fn corpus_f1_ignores_order(fs in prop::collection::vec((0.0..=1.0f64, any::<bool>()), 1..20), rot in 0usize..20) {
        let scores: Vec<SentenceScore> = fs
            .iter()
            .map(|&(f1, skipped)| SentenceScore { precision: f1, recall: f1, f1, skipped })
            .collect();
        let mut moved = scores.clone();
        moved.rotate_left(rot % scores.len());
        moved.reverse();
        match (corpus_f1(&scores), corpus_f1(&moved)) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn adding_a_predicted_span_never_lowers_recall(p in spanset(), extra in (1..8usize, 0..4usize)) {
        let mut gold = SpanSet::new();
        for (n, s) in p.iter().enumerate() {
            gold.insert_labeled(*s, if n % 2 == 0 { "NP" } else { "VP" });
        }
        gold.insert_labeled(Span::new(extra.0, extra.0 + extra.1 + 1), "NP");
        let before = label_recall(std::slice::from_ref(&p), std::slice::from_ref(&gold), &["NP", "VP"]).unwrap();
        let mut grown = p.clone();
        grown.insert(Span::new(extra.0, extra.0 + extra.1 + 1));
        let after = label_recall(&[grown], &[gold], &["NP", "VP"]).unwrap();
        for l in ["NP", "VP"] {
            prop_assert!(after.labels[l].matched >= before.labels[l].matched);
        }
    }

    #[test]
    fn greedy_acceptances_strictly_improve(vals in prop::collection::vec(0u8..5, 1..40), n in 1usize..9) {
        // Set value depends on which positions are present.
        let score = |heads: &[HeadId]| {
            let key: BTreeSet<usize> = heads.iter().map(|h| h.head).collect();
            let idx = key.iter().fold(0usize, |acc, &h| acc * 7 + h) % vals.len();
            vals[idx] as f64 / 4.0
        };
        let pool = HeadPool::from_scores((1..=n).map(|i| (HeadId::new(0, 1, i), 1.0 / i as f64))).sorted();
        let sel = select_greedy(&pool, &score).unwrap();
        let accepted: Vec<f64> = sel.trace.iter().filter(|t| t.accepted).map(|t| t.score).collect();
        prop_assert!(accepted.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(accepted.first().is_none_or(|&s| s > 0.0));
        prop_assert!(sel.chosen.windows(2).all(|w| w[0].head < w[1].head));
        prop_assert_eq!(sel.degenerate, accepted.is_empty());
    }

    #[test]
    fn top_one_is_single(vals in prop::collection::vec(0.0..1.0f64, 1..12)) {
        let pool = HeadPool::from_scores(vals.iter().enumerate().map(|(i, &v)| (HeadId::new(0, 1 + i / 4, 1 + i % 4), v))).sorted();
        let top = select_topk(&pool, 1, &|_: &[HeadId]| 0.0).unwrap();
        prop_assert_eq!(top.chosen, select_single(&pool).unwrap().chosen);
    }
}
