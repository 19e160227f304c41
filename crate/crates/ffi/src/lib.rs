//! C interface to attnparse.
//!
//! Archives are opaque handles created by `ap_archive_open` or
//! `ap_archive_from_bytes` and released with `ap_archive_free`. Every
//! fallible call returns an [`ApStatus`]; on failure the message is
//! available from `ap_last_error` on the same thread. Strings handed out by
//! the library must be released with `ap_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use attnparse::archive::{read_archive, ArchiveError, AttentionArchive, HeadId, HeadMatrix};
use attnparse::cli::evaluate_corpora;
use attnparse::distance::tree_to_distance;
use attnparse::ensemble::{ensemble_parse, EnsembleOptions};
use attnparse::eval::{EmptyGoldPolicy, DEFAULT_LABELS};
use attnparse::scoring::{decode_head, Measure};
use attnparse::treebank::{preprocess_all, read_treebank, write_bracketed, PreprocessConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidArchive = 4,
    OutOfRange = 5,
    Parse = 6,
    Evaluation = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApMeasure {
    Hellinger = 0,
    JensenShannon = 1,
}

impl From<ApMeasure> for Measure {
    fn from(m: ApMeasure) -> Self {
        match m {
            ApMeasure::Hellinger => Measure::Hellinger,
            ApMeasure::JensenShannon => Measure::JensenShannon,
        }
    }
}

/// A head: `archive` indexes the array passed alongside; `layer` and
/// `head` count from 1.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApHead {
    pub archive: u32,
    pub layer: u32,
    pub head: u32,
}

/// Corpus-level evaluation summary.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ApEvaluation {
    pub corpus_f1: f64,
    pub sentences: usize,
    pub scored: usize,
    pub skipped: usize,
}

/// Opaque archive handle.
pub struct ApArchive {
    inner: AttentionArchive,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (ApStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ApStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ApStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ApStatus::Panic
        }
    }
}

fn archive_failure(e: ArchiveError) -> Failure {
    match e {
        ArchiveError::Io(_) => (ApStatus::Io, e.to_string()),
        ArchiveError::OutOfRange(_) => (ApStatus::OutOfRange, e.to_string()),
        _ => (ApStatus::InvalidArchive, e.to_string()),
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((ApStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (ApStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a>(p: *const ApArchive) -> Result<&'a AttentionArchive, Failure> {
    p.as_ref()
        .map(|a| &a.inner)
        .ok_or((ApStatus::NullPointer, "archive handle is null".into()))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err((ApStatus::NullPointer, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s).expect("no interior nul").into_raw()
}

/// Words of a sentence: caller-supplied, or `w1 .. wz` when `words` is null.
unsafe fn words_for(words: *const *const c_char, count: usize, z: usize) -> Result<Vec<String>, Failure> {
    if words.is_null() {
        return Ok((1..=z).map(|i| format!("w{i}")).collect());
    }
    if count != z {
        return Err((
            ApStatus::OutOfRange,
            format!("{count} words given for a sentence of {z}"),
        ));
    }
    (0..count)
        .map(|i| text(*words.add(i), "word").map(String::from))
        .collect()
}

fn head_matrix(a: &AttentionArchive, sentence: usize, layer: u32, head: u32) -> Result<HeadMatrix<'_>, Failure> {
    a.head_distributions(HeadId::new(0, layer as usize, head as usize), sentence)
        .map_err(archive_failure)
}

/// Last error message on this thread, or null. Valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn ap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ap_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Reads and validates an archive file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ap_archive_open(path: *const c_char, out: *mut *mut ApArchive) -> ApStatus {
    guard(|| {
        let path = text(path, "path")?;
        let inner = read_archive(path).map_err(|e| {
            let (status, msg) = archive_failure(e);
            (status, format!("{path}: {msg}"))
        })?;
        put(out, Box::into_raw(Box::new(ApArchive { inner })), "out")
    })
}

/// Parses and validates an archive held in memory.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ap_archive_from_bytes(data: *const u8, len: usize, out: *mut *mut ApArchive) -> ApStatus {
    guard(|| {
        if data.is_null() {
            return Err((ApStatus::NullPointer, "data is null".into()));
        }
        let bytes = std::slice::from_raw_parts(data, len);
        let inner = AttentionArchive::from_bytes(bytes).map_err(archive_failure)?;
        put(out, Box::into_raw(Box::new(ApArchive { inner })), "out")
    })
}

/// Releases an archive handle. Null is ignored.
///
/// # Safety
/// `archive` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ap_archive_free(archive: *mut ApArchive) {
    if !archive.is_null() {
        drop(Box::from_raw(archive));
    }
}

/// Number of layers, or 0 for a null handle.
///
/// # Safety
/// `archive` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ap_archive_num_layers(archive: *const ApArchive) -> usize {
    archive.as_ref().map_or(0, |a| a.inner.num_layers)
}

/// Heads per layer, or 0 for a null handle.
///
/// # Safety
/// `archive` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ap_archive_num_heads(archive: *const ApArchive) -> usize {
    archive.as_ref().map_or(0, |a| a.inner.num_heads)
}

/// Number of sentences, or 0 for a null handle.
///
/// # Safety
/// `archive` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ap_archive_num_sentences(archive: *const ApArchive) -> usize {
    archive.as_ref().map_or(0, |a| a.inner.sentences.len())
}

/// Word count of the sentence at `index`.
///
/// # Safety
/// `archive` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ap_archive_sentence_length(
    archive: *const ApArchive,
    index: usize,
    out: *mut usize,
) -> ApStatus {
    guard(|| {
        let a = handle(archive)?;
        let s = a.sentences.get(index).ok_or_else(|| {
            (
                ApStatus::OutOfRange,
                format!("sentence index {index} of {}", a.sentences.len()),
            )
        })?;
        put(out, s.z, "out")
    })
}

/// Model id into `buf` (nul-terminated). `needed` receives the required
/// size including the terminator, also when the buffer is too small.
///
/// # Safety
/// `archive` must be a live handle; `buf` must hold `cap` bytes or be null
/// with `cap == 0`; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn ap_archive_model_id(
    archive: *const ApArchive,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> ApStatus {
    guard(|| {
        let id = handle(archive)?.model_id.as_bytes();
        if !needed.is_null() {
            needed.write(id.len() + 1);
        }
        if cap < id.len() + 1 || buf.is_null() {
            return Err((
                ApStatus::BufferTooSmall,
                format!("model id needs {} bytes", id.len() + 1),
            ));
        }
        ptr::copy_nonoverlapping(id.as_ptr().cast(), buf, id.len());
        buf.add(id.len()).write(0);
        Ok(())
    })
}

/// Decodes one head on one sentence into a bracketed tree. `words` may be
/// null, in which case leaves are named `w1 .. wz`. The result is released
/// with `ap_string_free`.
///
/// # Safety
/// `archive` must be a live handle; `words` must be null or hold
/// `word_count` nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ap_decode_head(
    archive: *const ApArchive,
    sentence: usize,
    layer: u32,
    head: u32,
    measure: ApMeasure,
    words: *const *const c_char,
    word_count: usize,
    out: *mut *mut c_char,
) -> ApStatus {
    guard(|| {
        let a = handle(archive)?;
        let maps = head_matrix(a, sentence, layer, head)?;
        let words = words_for(words, word_count, maps.z())?;
        let tree = decode_head(maps, measure.into()).map_err(|e| (ApStatus::InvalidArchive, e.to_string()))?;
        let s = write_bracketed(&tree, &words).map_err(|e| (ApStatus::Parse, e.to_string()))?;
        put(out, owned_string(s), "out")
    })
}

/// Syntactic distance vector (`z - 1` values) of one head's decoded tree.
/// `len` receives the vector length, also when `cap` is too small.
///
/// # Safety
/// `archive` must be a live handle; `buf` must hold `cap` doubles or be
/// null with `cap == 0`; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ap_head_distances(
    archive: *const ApArchive,
    sentence: usize,
    layer: u32,
    head: u32,
    measure: ApMeasure,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> ApStatus {
    guard(|| {
        let a = handle(archive)?;
        let maps = head_matrix(a, sentence, layer, head)?;
        let tree = decode_head(maps, measure.into()).map_err(|e| (ApStatus::InvalidArchive, e.to_string()))?;
        let d = tree_to_distance(&tree);
        put(len, d.len(), "len")?;
        if cap < d.len() || (buf.is_null() && !d.is_empty()) {
            return Err((
                ApStatus::BufferTooSmall,
                format!("distance vector needs {} values", d.len()),
            ));
        }
        ptr::copy_nonoverlapping(d.0.as_ptr(), buf, d.len());
        Ok(())
    })
}

/// Ensemble parse of sentence `sentence` (an index, aligned across
/// archives) with the given heads.
///
/// # Safety
/// `archives` must hold `archive_count` live handles, `heads` must hold
/// `head_count` entries, `words` as for `ap_decode_head`, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ap_ensemble_parse(
    archives: *const *const ApArchive,
    archive_count: usize,
    heads: *const ApHead,
    head_count: usize,
    sentence: usize,
    measure: ApMeasure,
    rank_normalize: bool,
    words: *const *const c_char,
    word_count: usize,
    out: *mut *mut c_char,
) -> ApStatus {
    guard(|| {
        if archives.is_null() || heads.is_null() {
            return Err((ApStatus::NullPointer, "archives or heads is null".into()));
        }
        if head_count == 0 {
            return Err((ApStatus::OutOfRange, "no heads given".into()));
        }
        let handles = std::slice::from_raw_parts(archives, archive_count);
        let heads = std::slice::from_raw_parts(heads, head_count);
        let maps = heads
            .iter()
            .map(|h| {
                let p = *handles.get(h.archive as usize).ok_or_else(|| {
                    (
                        ApStatus::OutOfRange,
                        format!("archive index {} of {archive_count}", h.archive),
                    )
                })?;
                head_matrix(handle(p)?, sentence, h.layer, h.head)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let words = words_for(words, word_count, maps[0].z())?;
        let opts = EnsembleOptions {
            measure: measure.into(),
            rank_normalize,
        };
        let tree = ensemble_parse(&maps, opts).map_err(|e| (ApStatus::InvalidArchive, e.to_string()))?;
        let s = write_bracketed(&tree, &words).map_err(|e| (ApStatus::Parse, e.to_string()))?;
        put(out, owned_string(s), "out")
    })
}

/// Scores predicted trees (one bracketed tree per line) against a gold
/// treebank in bracketed form, with default preprocessing. Sentences with
/// no gold spans are skipped.
///
/// # Safety
/// `pred` and `gold` must be nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ap_evaluate(pred: *const c_char, gold: *const c_char, out: *mut ApEvaluation) -> ApStatus {
    guard(|| {
        let pred = text(pred, "pred")?;
        let gold = text(gold, "gold")?;
        let trees = read_treebank(gold.as_bytes()).map_err(|e| (ApStatus::Parse, format!("gold: {e}")))?;
        let pre = PreprocessConfig::default();
        let gold = preprocess_all(&trees, &pre);
        let lines: Vec<String> = pred
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(String::from)
            .collect();
        let report = evaluate_corpora(&lines, &gold, DEFAULT_LABELS, EmptyGoldPolicy::Exclude, &pre)
            .map_err(|e| (ApStatus::Evaluation, e.message))?;
        put(
            out,
            ApEvaluation {
                corpus_f1: report.corpus_f1,
                sentences: report.sentences,
                scored: report.scored,
                skipped: report.skipped_empty_gold + report.skipped_empty_after_filtering,
            },
            "out",
        )
    })
}
