//! The ATNA attention archive: word-level attention maps of every head of
//! one model over one treebank split.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "ATNA"            4 bytes magic
//! version           u32 (= 1)
//! model_id length   u16, followed by that many UTF-8 bytes
//! layers            u32
//! heads             u32
//! sentence count    u32
//! per sentence:
//!   sentence id     u32
//!   z               u32
//!   layers * heads matrices, layer-major then head, each z * z f32 row-major
//! ```
//!
//! Row `x` of the matrix for head `(m, n)` is the attention distribution of
//! word `x`; every row must be a probability distribution.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"ATNA";
pub const FORMAT_VERSION: u32 = 1;
/// Allowed deviation of a row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-3;

/// Layers, heads and rows in messages count from 1.
#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: not an ATNA archive")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload while reading {0}")]
    Truncated(String),
    #[error("trailing bytes after the last sentence")]
    TrailingBytes,
    #[error("model id is not valid UTF-8")]
    InvalidModelId,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in sentence {sentence} head ({layer},{head}) row {row}")]
    NonFinite {
        sentence: u32,
        layer: usize,
        head: usize,
        row: usize,
    },
    #[error("negative value in sentence {sentence} head ({layer},{head}) row {row}")]
    Negative {
        sentence: u32,
        layer: usize,
        head: usize,
        row: usize,
    },
    #[error("row sum {sum} out of tolerance in sentence {sentence} head ({layer},{head}) row {row}")]
    RowSum {
        sentence: u32,
        layer: usize,
        head: usize,
        row: usize,
        sum: f64,
    },
    #[error("{0} out of range")]
    OutOfRange(String),
    #[error("archives disagree: {0}")]
    Misaligned(String),
}

impl ArchiveError {
    fn truncated_or(err: io::Error, what: &str) -> Self {
        if err.kind() == io::ErrorKind::UnexpectedEof {
            ArchiveError::Truncated(what.to_string())
        } else {
            ArchiveError::Io(err)
        }
    }
}

/// Identifies one attention head: model index `p` (0-based position in the
/// list of loaded archives), layer `m` and head `n` (both 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeadId {
    pub model: usize,
    pub layer: usize,
    pub head: usize,
}

impl HeadId {
    pub fn new(model: usize, layer: usize, head: usize) -> Self {
        HeadId { model, layer, head }
    }
}

impl std::fmt::Display for HeadId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.model, self.layer, self.head)
    }
}

/// Borrowed `z x z` attention matrix of one head.
#[derive(Debug, Clone, Copy)]
pub struct HeadMatrix<'a> {
    data: &'a [f32],
    z: usize,
}

impl<'a> HeadMatrix<'a> {
    pub fn new(data: &'a [f32], z: usize) -> Self {
        assert_eq!(data.len(), z * z);
        HeadMatrix { data, z }
    }

    pub fn z(&self) -> usize {
        self.z
    }

    pub fn row(&self, x: usize) -> &'a [f32] {
        &self.data[x * self.z..(x + 1) * self.z]
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[x * self.z + y]
    }

    pub fn as_slice(&self) -> &'a [f32] {
        self.data
    }
}

/// All heads' attention maps for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceAttention {
    pub id: u32,
    pub z: usize,
    /// `layers * heads` matrices in layer-major order.
    pub data: Vec<f32>,
}

impl SentenceAttention {
    pub fn matrix(&self, heads: usize, layer: usize, head: usize) -> HeadMatrix<'_> {
        let zz = self.z * self.z;
        let offset = ((layer - 1) * heads + (head - 1)) * zz;
        HeadMatrix::new(&self.data[offset..offset + zz], self.z)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub version: u32,
    pub model_id: String,
    pub num_layers: usize,
    pub num_heads: usize,
    pub num_sentences: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionArchive {
    pub model_id: String,
    pub num_layers: usize,
    pub num_heads: usize,
    pub sentences: Vec<SentenceAttention>,
}

impl AttentionArchive {
    pub fn header(&self) -> ArchiveHeader {
        ArchiveHeader {
            version: FORMAT_VERSION,
            model_id: self.model_id.clone(),
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            num_sentences: self.sentences.len(),
        }
    }

    pub fn num_head_maps(&self) -> usize {
        self.num_layers * self.num_heads
    }

    /// Every violation of the format invariants, in file order.
    pub fn violations(&self) -> Vec<ArchiveError> {
        let mut out = Vec::new();
        if let Err(e) = check_dims(self.num_layers, self.num_heads) {
            out.push(e);
            return out;
        }
        if self.model_id.len() > u16::MAX as usize {
            out.push(ArchiveError::Shape("model id longer than 65535 bytes".into()));
        }
        for s in &self.sentences {
            if let Err(e) = check_sentence_shape(s, self.num_head_maps()) {
                out.push(e);
                continue;
            }
            collect_row_violations(s, self.num_heads, &mut out);
        }
        out
    }

    pub fn validate(&self) -> Result<(), ArchiveError> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Matrix of `head` for the sentence at position `sentence_index`.
    pub fn head_distributions(&self, head: HeadId, sentence_index: usize) -> Result<HeadMatrix<'_>, ArchiveError> {
        if head.layer < 1 || head.layer > self.num_layers || head.head < 1 || head.head > self.num_heads {
            return Err(ArchiveError::OutOfRange(format!(
                "head (layer {}, head {}) for archive with {} layers and {} heads",
                head.layer, head.head, self.num_layers, self.num_heads
            )));
        }
        let sentence = self.sentences.get(sentence_index).ok_or_else(|| {
            ArchiveError::OutOfRange(format!(
                "sentence index {sentence_index} for archive with {} sentences",
                self.sentences.len()
            ))
        })?;
        Ok(sentence.matrix(self.num_heads, head.layer, head.head))
    }

    /// Position of each sentence id.
    pub fn index_by_id(&self) -> BTreeMap<u32, usize> {
        self.sentences.iter().enumerate().map(|(i, s)| (s.id, i)).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ArchiveError> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    /// Validates, then writes the archive.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), ArchiveError> {
        self.validate()?;
        write_header(w, &self.header())?;
        for s in &self.sentences {
            write_sentence(w, s)?;
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArchiveError> {
        read_from(bytes)
    }
}

fn check_dims(layers: usize, heads: usize) -> Result<(), ArchiveError> {
    if layers == 0 || heads == 0 {
        return Err(ArchiveError::Shape(format!(
            "archive must have at least one layer and head, found {layers} x {heads}"
        )));
    }
    Ok(())
}

fn check_sentence_shape(s: &SentenceAttention, maps: usize) -> Result<(), ArchiveError> {
    if s.z == 0 {
        return Err(ArchiveError::Shape(format!("sentence {} has zero words", s.id)));
    }
    let expected = maps * s.z * s.z;
    if s.data.len() != expected {
        return Err(ArchiveError::Shape(format!(
            "sentence {} holds {} values, expected {expected}",
            s.id,
            s.data.len()
        )));
    }
    Ok(())
}

fn collect_row_violations(s: &SentenceAttention, heads: usize, out: &mut Vec<ArchiveError>) {
    let z = s.z;
    for (map, chunk) in s.data.chunks_exact(z * z).enumerate() {
        let layer = map / heads + 1;
        let head = map % heads + 1;
        for (r, values) in chunk.chunks_exact(z).enumerate() {
            let row = r + 1;
            if values.iter().any(|v| !v.is_finite()) {
                out.push(ArchiveError::NonFinite {
                    sentence: s.id,
                    layer,
                    head,
                    row,
                });
            } else if values.iter().any(|&v| v < 0.0) {
                out.push(ArchiveError::Negative {
                    sentence: s.id,
                    layer,
                    head,
                    row,
                });
            } else {
                let sum: f64 = values.iter().map(|&v| v as f64).sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    out.push(ArchiveError::RowSum {
                        sentence: s.id,
                        layer,
                        head,
                        row,
                        sum,
                    });
                }
            }
        }
    }
}

fn write_header<W: Write>(w: &mut W, h: &ArchiveHeader) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(h.version)?;
    w.write_u16::<LittleEndian>(h.model_id.len() as u16)?;
    w.write_all(h.model_id.as_bytes())?;
    w.write_u32::<LittleEndian>(h.num_layers as u32)?;
    w.write_u32::<LittleEndian>(h.num_heads as u32)?;
    w.write_u32::<LittleEndian>(h.num_sentences as u32)
}

fn write_sentence<W: Write>(w: &mut W, s: &SentenceAttention) -> io::Result<()> {
    w.write_u32::<LittleEndian>(s.id)?;
    w.write_u32::<LittleEndian>(s.z as u32)?;
    for &v in &s.data {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

/// Sentence-at-a-time reader. Each yielded sentence is validated unless the
/// reader was opened with [`ArchiveReader::unchecked`].
pub struct ArchiveReader<R: Read> {
    inner: R,
    header: ArchiveHeader,
    remaining: usize,
    check_rows: bool,
    finished: bool,
}

impl<R: Read> ArchiveReader<R> {
    pub fn new(inner: R) -> Result<Self, ArchiveError> {
        Self::open(inner, true)
    }

    /// Checks structure only; row contents are left for [`AttentionArchive::violations`].
    pub fn unchecked(inner: R) -> Result<Self, ArchiveError> {
        Self::open(inner, false)
    }

    fn open(mut inner: R, check_rows: bool) -> Result<Self, ArchiveError> {
        let mut magic = [0u8; 4];
        inner.read_exact(&mut magic).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => ArchiveError::BadMagic,
            _ => ArchiveError::Io(e),
        })?;
        if &magic != MAGIC {
            return Err(ArchiveError::BadMagic);
        }
        let version = read_u32(&mut inner, "version")?;
        if version != FORMAT_VERSION {
            return Err(ArchiveError::UnsupportedVersion(version));
        }
        let id_len = inner
            .read_u16::<LittleEndian>()
            .map_err(|e| ArchiveError::truncated_or(e, "model id length"))?;
        let mut id = vec![0u8; id_len as usize];
        inner
            .read_exact(&mut id)
            .map_err(|e| ArchiveError::truncated_or(e, "model id"))?;
        let model_id = String::from_utf8(id).map_err(|_| ArchiveError::InvalidModelId)?;
        let num_layers = read_u32(&mut inner, "layer count")? as usize;
        let num_heads = read_u32(&mut inner, "head count")? as usize;
        let num_sentences = read_u32(&mut inner, "sentence count")? as usize;
        check_dims(num_layers, num_heads)?;
        Ok(ArchiveReader {
            inner,
            header: ArchiveHeader {
                version,
                model_id,
                num_layers,
                num_heads,
                num_sentences,
            },
            remaining: num_sentences,
            check_rows,
            finished: false,
        })
    }

    pub fn header(&self) -> &ArchiveHeader {
        &self.header
    }

    fn read_sentence(&mut self) -> Result<SentenceAttention, ArchiveError> {
        let id = read_u32(&mut self.inner, "sentence id")?;
        let z = read_u32(&mut self.inner, "sentence length")? as usize;
        if z == 0 {
            return Err(ArchiveError::Shape(format!("sentence {id} has zero words")));
        }
        let count = self.header.num_layers * self.header.num_heads * z * z;
        let mut data = vec![0f32; count];
        self.inner
            .read_f32_into::<LittleEndian>(&mut data)
            .map_err(|e| ArchiveError::truncated_or(e, &format!("matrices of sentence {id}")))?;
        let s = SentenceAttention { id, z, data };
        if self.check_rows {
            let mut violations = Vec::new();
            collect_row_violations(&s, self.header.num_heads, &mut violations);
            if let Some(e) = violations.into_iter().next() {
                return Err(e);
            }
        }
        Ok(s)
    }

    fn check_eof(&mut self) -> Result<(), ArchiveError> {
        let mut byte = [0u8; 1];
        match self.inner.read(&mut byte)? {
            0 => Ok(()),
            _ => Err(ArchiveError::TrailingBytes),
        }
    }

    /// Reads the remaining sentences into a whole archive.
    pub fn into_archive(self) -> Result<AttentionArchive, ArchiveError> {
        let header = self.header.clone();
        let sentences = self.collect::<Result<Vec<_>, _>>()?;
        Ok(AttentionArchive {
            model_id: header.model_id,
            num_layers: header.num_layers,
            num_heads: header.num_heads,
            sentences,
        })
    }
}

impl<R: Read> Iterator for ArchiveReader<R> {
    type Item = Result<SentenceAttention, ArchiveError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        if self.remaining == 0 {
            self.finished = true;
            return match self.check_eof() {
                Ok(()) => None,
                Err(e) => Some(Err(e)),
            };
        }
        self.remaining -= 1;
        let item = self.read_sentence();
        if item.is_err() {
            self.finished = true;
        }
        Some(item)
    }
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32, ArchiveError> {
    r.read_u32::<LittleEndian>()
        .map_err(|e| ArchiveError::truncated_or(e, what))
}

/// Whole-buffer decoding. Parses the fixed layout directly from the slice.
fn read_from(bytes: &[u8]) -> Result<AttentionArchive, ArchiveError> {
    let mut cur = SliceCursor { bytes, pos: 0 };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(ArchiveError::BadMagic);
    }
    cur.pos = 4;
    let version = cur.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(ArchiveError::UnsupportedVersion(version));
    }
    let id_len = cur.take(2, "model id length")?;
    let id_len = u16::from_le_bytes([id_len[0], id_len[1]]) as usize;
    let model_id = std::str::from_utf8(cur.take(id_len, "model id")?)
        .map_err(|_| ArchiveError::InvalidModelId)?
        .to_string();
    let num_layers = cur.u32("layer count")? as usize;
    let num_heads = cur.u32("head count")? as usize;
    let num_sentences = cur.u32("sentence count")? as usize;
    check_dims(num_layers, num_heads)?;
    let mut sentences = Vec::with_capacity(num_sentences.min(1 << 16));
    for _ in 0..num_sentences {
        let id = cur.u32("sentence id")?;
        let z = cur.u32("sentence length")? as usize;
        if z == 0 {
            return Err(ArchiveError::Shape(format!("sentence {id} has zero words")));
        }
        let count = num_layers * num_heads * z * z;
        let raw = cur.take(count * 4, &format!("matrices of sentence {id}"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        sentences.push(SentenceAttention { id, z, data });
    }
    if cur.pos != bytes.len() {
        return Err(ArchiveError::TrailingBytes);
    }
    let archive = AttentionArchive {
        model_id,
        num_layers,
        num_heads,
        sentences,
    };
    archive.validate()?;
    Ok(archive)
}

struct SliceCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> SliceCursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ArchiveError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| ArchiveError::Truncated(what.to_string()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, ArchiveError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<AttentionArchive, ArchiveError> {
    let bytes = std::fs::read(path)?;
    AttentionArchive::from_bytes(&bytes)
}

pub fn open_archive_stream(path: impl AsRef<Path>) -> Result<ArchiveReader<BufReader<File>>, ArchiveError> {
    ArchiveReader::new(BufReader::new(File::open(path)?))
}

pub fn write_archive(archive: &AttentionArchive, path: impl AsRef<Path>) -> Result<(), ArchiveError> {
    let bytes = archive.to_bytes()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Several archives over the same split must agree on sentence ids and
/// lengths, and carry distinct model ids.
pub fn check_alignment(archives: &[AttentionArchive]) -> Result<(), ArchiveError> {
    let Some(first) = archives.first() else {
        return Ok(());
    };
    for (p, other) in archives.iter().enumerate().skip(1) {
        if archives[..p].iter().any(|a| a.model_id == other.model_id) {
            return Err(ArchiveError::Misaligned(format!(
                "model id {:?} appears more than once",
                other.model_id
            )));
        }
        if other.sentences.len() != first.sentences.len() {
            return Err(ArchiveError::Misaligned(format!(
                "{} has {} sentences, {} has {}",
                first.model_id,
                first.sentences.len(),
                other.model_id,
                other.sentences.len()
            )));
        }
        for (a, b) in first.sentences.iter().zip(&other.sentences) {
            if a.id != b.id || a.z != b.z {
                return Err(ArchiveError::Misaligned(format!(
                    "sentence {} (z={}) in {} vs sentence {} (z={}) in {}",
                    a.id, a.z, first.model_id, b.id, b.z, other.model_id
                )));
            }
        }
    }
    Ok(())
}

/// Optional JSON sidecar describing how an archive was dumped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Provenance {
    pub checkpoint: String,
    pub aggregation_policy: String,
    pub special_token_policy: String,
    pub dump_date: String,
    pub skipped_sentences: Vec<u32>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// `model.atna` pairs with `model.atna.json`.
pub fn sidecar_path(archive: &Path) -> PathBuf {
    let mut name = archive.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn read_sidecar(archive: &Path) -> Option<Result<Provenance, String>> {
    let path = sidecar_path(archive);
    let text = std::fs::read_to_string(&path).ok()?;
    Some(serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display())))
}
