//! Bracketed treebank reading and writing, punctuation filtering, and gold
//! span extraction.
//!
//! Trees are read in the flattened Penn Treebank style, one tree per line:
//! `(S (NP (DT the) (NN cat)) (VP (VBD sat)))`. A node whose only child is a
//! bare token is a preterminal and becomes a [`LabeledTree::Leaf`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::BinaryTree;

/// Label emitted for every node of an induced (unlabeled) tree.
pub const DUMMY_LABEL: &str = "X";

/// Penn Treebank punctuation tags removed by default.
pub const DEFAULT_PUNCTUATION_TAGS: &[&str] = &["''", "``", ".", ",", ":", "-LRB-", "-RRB-"];

/// Tag of PTB empty elements (traces, null complementizers).
pub const EMPTY_ELEMENT_TAG: &str = "-NONE-";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreebankError {
    #[error("empty input")]
    Empty,
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("tree has {leaves} leaves but the sentence has {words} words")]
    LeafCountMismatch { leaves: usize, words: usize },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: Box<TreebankError>,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

/// A gold constituency tree with labels and POS-tagged terminals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabeledTree {
    Node { label: String, children: Vec<LabeledTree> },
    Leaf { tag: String, word: String },
}

impl LabeledTree {
    pub fn label(&self) -> &str {
        match self {
            LabeledTree::Node { label, .. } => label,
            LabeledTree::Leaf { tag, .. } => tag,
        }
    }

    pub fn words(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_words(&mut out);
        out
    }

    fn collect_words<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            LabeledTree::Leaf { word, .. } => out.push(word),
            LabeledTree::Node { children, .. } => {
                for c in children {
                    c.collect_words(out);
                }
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            LabeledTree::Leaf { .. } => 1,
            LabeledTree::Node { children, .. } => children.iter().map(|c| c.num_leaves()).sum(),
        }
    }

    /// Every internal node as a labeled span (1-based, inclusive), including
    /// trivial ones. Unary chains yield one span carrying several labels.
    pub fn spans(&self) -> SpanSet {
        let mut set = SpanSet::default();
        self.collect_spans(1, &mut set);
        set
    }

    fn collect_spans(&self, start: usize, set: &mut SpanSet) -> usize {
        match self {
            LabeledTree::Leaf { .. } => 1,
            LabeledTree::Node { label, children } => {
                let mut width = 0;
                for c in children {
                    width += c.collect_spans(start + width, set);
                }
                if width > 0 {
                    set.insert_labeled(Span::new(start, start + width - 1), label);
                }
                width
            }
        }
    }
}

impl fmt::Display for LabeledTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabeledTree::Leaf { tag, word } => write!(f, "({tag} {word})"),
            LabeledTree::Node { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// A word sequence after preprocessing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: usize,
    pub words: Vec<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Constituent span over 1-based inclusive word positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(1 <= start && start <= end);
        Span { start, end }
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    /// Width-1 spans and the whole-sentence span carry no information.
    pub fn is_trivial(&self, z: usize) -> bool {
        self.start == self.end || (self.start == 1 && self.end == z)
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// A set of spans, each with zero or more constituent labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpanSet {
    spans: BTreeMap<Span, BTreeSet<String>>,
}

impl SpanSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, span: Span) {
        self.spans.entry(span).or_default();
    }

    pub fn insert_labeled(&mut self, span: Span, label: &str) {
        self.spans.entry(span).or_default().insert(label.to_string());
    }

    pub fn contains(&self, span: &Span) -> bool {
        self.spans.contains_key(span)
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Span> {
        self.spans.keys()
    }

    pub fn labeled(&self) -> impl Iterator<Item = (&Span, &BTreeSet<String>)> {
        self.spans.iter()
    }

    pub fn labels_of(&self, span: &Span) -> Option<&BTreeSet<String>> {
        self.spans.get(span)
    }

    pub fn intersection_count(&self, other: &SpanSet) -> usize {
        self.iter().filter(|s| other.contains(s)).count()
    }

    /// Drops (i,i) spans and the (1,z) span.
    pub fn without_trivial(mut self, z: usize) -> Self {
        self.spans.retain(|s, _| !s.is_trivial(z));
        self
    }
}

impl FromIterator<Span> for SpanSet {
    fn from_iter<I: IntoIterator<Item = Span>>(iter: I) -> Self {
        let mut set = SpanSet::new();
        for s in iter {
            set.insert(s);
        }
        set
    }
}

/// Controls which terminals are removed and how labels are normalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub punctuation_tags: Vec<String>,
    pub remove_punctuation: bool,
    pub remove_empty_elements: bool,
    /// `NP-SBJ-1` becomes `NP`, `NP=2` becomes `NP`.
    pub strip_function_tags: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            punctuation_tags: DEFAULT_PUNCTUATION_TAGS.iter().map(|s| s.to_string()).collect(),
            remove_punctuation: true,
            remove_empty_elements: true,
            strip_function_tags: true,
        }
    }
}

impl PreprocessConfig {
    fn drops(&self, tag: &str) -> bool {
        (self.remove_empty_elements && tag == EMPTY_ELEMENT_TAG)
            || (self.remove_punctuation && self.punctuation_tags.iter().any(|t| t == tag))
    }
}

/// A preprocessed treebank entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldSentence {
    pub sentence: Sentence,
    /// Non-trivial gold spans with their labels.
    pub spans: SpanSet,
    /// True when nothing was left after filtering.
    pub skipped: bool,
}

pub fn parse_bracketed(text: &str) -> Result<LabeledTree, TreebankError> {
    if text.trim().is_empty() {
        return Err(TreebankError::Empty);
    }
    check_balance(text)?;
    let mut p = Parser { src: text, pos: 0 };
    p.skip_ws();
    let mut tree = p.node()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error("trailing input after tree"));
    }
    // PTB files wrap every tree in an unlabeled root: `( (S ...) )`.
    loop {
        match tree {
            LabeledTree::Node {
                ref label,
                ref mut children,
            } if label.is_empty() && children.len() == 1 => {
                tree = children.pop().unwrap();
            }
            _ => break,
        }
    }
    Ok(tree)
}

/// Reports the innermost unclosed `(` or the first unmatched `)`.
fn check_balance(text: &str) -> Result<(), TreebankError> {
    let mut open = Vec::new();
    for (offset, b) in text.bytes().enumerate() {
        match b {
            b'(' => open.push(offset),
            b')' if open.pop().is_none() => {
                return Err(TreebankError::Parse {
                    offset,
                    message: "unmatched ')'".into(),
                })
            }
            _ => {}
        }
    }
    match open.pop() {
        Some(offset) => Err(TreebankError::Parse {
            offset,
            message: "unclosed bracket".into(),
        }),
        None => Ok(()),
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn error(&self, message: &str) -> TreebankError {
        TreebankError::Parse {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn token(&mut self) -> &str {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() || b == b'(' || b == b')' {
                break;
            }
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn node(&mut self) -> Result<LabeledTree, TreebankError> {
        let open = self.pos;
        if self.peek() != Some(b'(') {
            return Err(self.error("expected '('"));
        }
        self.pos += 1;
        self.skip_ws();
        let label = self.token().to_string();
        let mut children = Vec::new();
        let mut word: Option<String> = None;
        loop {
            self.skip_ws();
            match self.peek() {
                None => {
                    return Err(TreebankError::Parse {
                        offset: open,
                        message: "unclosed bracket".into(),
                    })
                }
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                Some(b'(') => {
                    if word.is_some() {
                        return Err(self.error("subtree after terminal word"));
                    }
                    children.push(self.node()?);
                }
                Some(_) => {
                    if word.is_some() || !children.is_empty() {
                        return Err(self.error("unexpected bare token"));
                    }
                    word = Some(self.token().to_string());
                }
            }
        }
        match word {
            Some(word) => Ok(LabeledTree::Leaf { tag: label, word }),
            None if children.is_empty() => Err(TreebankError::Parse {
                offset: open,
                message: "node without children".into(),
            }),
            None => Ok(LabeledTree::Node { label, children }),
        }
    }
}

/// Reads one tree per non-blank line.
pub fn read_treebank<R: BufRead>(reader: R) -> Result<Vec<LabeledTree>, TreebankError> {
    let mut trees = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TreebankError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let tree = parse_bracketed(&line).map_err(|e| TreebankError::Line {
            line: i + 1,
            source: Box::new(e),
        })?;
        trees.push(tree);
    }
    Ok(trees)
}

fn normalize_label(label: &str) -> &str {
    if label.starts_with('-') {
        return label;
    }
    let end = label.find(['-', '=']).unwrap_or(label.len());
    &label[..end]
}

/// Removes filtered terminals and any constituent left without children.
/// Returns `None` when the whole tree is filtered away.
pub fn filter_tree(tree: &LabeledTree, config: &PreprocessConfig) -> Option<LabeledTree> {
    match tree {
        LabeledTree::Leaf { tag, .. } if config.drops(tag) => None,
        LabeledTree::Leaf { .. } => Some(tree.clone()),
        LabeledTree::Node { label, children } => {
            let children: Vec<_> = children.iter().filter_map(|c| filter_tree(c, config)).collect();
            if children.is_empty() {
                return None;
            }
            let label = if config.strip_function_tags {
                normalize_label(label).to_string()
            } else {
                label.clone()
            };
            Some(LabeledTree::Node { label, children })
        }
    }
}

pub fn preprocess(tree: &LabeledTree, id: usize, config: &PreprocessConfig) -> GoldSentence {
    match filter_tree(tree, config) {
        None => GoldSentence {
            sentence: Sentence { id, words: Vec::new() },
            spans: SpanSet::new(),
            skipped: true,
        },
        Some(t) => {
            let words: Vec<String> = t.words().into_iter().map(String::from).collect();
            let z = words.len();
            GoldSentence {
                spans: t.spans().without_trivial(z),
                sentence: Sentence { id, words },
                skipped: false,
            }
        }
    }
}

/// Preprocesses a whole split; sentence ids are positions in `trees`.
pub fn preprocess_all(trees: &[LabeledTree], config: &PreprocessConfig) -> Vec<GoldSentence> {
    trees
        .iter()
        .enumerate()
        .map(|(i, t)| preprocess(t, i, config))
        .collect()
}

/// Renders an induced tree with [`DUMMY_LABEL`] on every node.
pub fn write_bracketed(tree: &BinaryTree, words: &[String]) -> Result<String, TreebankError> {
    let leaves = tree.num_leaves();
    if leaves != words.len() {
        return Err(TreebankError::LeafCountMismatch {
            leaves,
            words: words.len(),
        });
    }
    let mut out = String::new();
    render(tree, words, &mut out);
    Ok(out)
}

fn render(tree: &BinaryTree, words: &[String], out: &mut String) {
    match tree {
        BinaryTree::Leaf(pos) => {
            out.push('(');
            out.push_str(DUMMY_LABEL);
            out.push(' ');
            out.push_str(&words[pos - 1]);
            out.push(')');
        }
        BinaryTree::Node(left, right) => {
            out.push('(');
            out.push_str(DUMMY_LABEL);
            out.push(' ');
            render(left, words, out);
            out.push(' ');
            render(right, words, out);
            out.push(')');
        }
    }
}

/// Non-trivial spans of an induced tree.
pub fn binary_spans(tree: &BinaryTree) -> SpanSet {
    let z = tree.num_leaves();
    tree.spans().into_iter().collect::<SpanSet>().without_trivial(z)
}
