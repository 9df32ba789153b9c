//! C ABI for the adaptive-k selection engine.
//!
//! Objects cross the boundary as opaque handles (`AkCorpus`, `AkProfile`,
//! `AkSelection`) that the caller releases with the matching `*_free`
//! function. Every fallible call returns an [`AkStatus`]; on failure the
//! message is available from [`ak_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use adaptive_k::embed::read_cache;
use adaptive_k::metrics::{context_recall, diff_k, token_reduction};
use adaptive_k::selection::largest_gap;
use adaptive_k::{
    build_profile, cosine_scores, ingest_corpus, AdaptiveParams, Corpus, EmbeddingMatrix, Error, Query, Selection,
    SimilarityProfile, Strategy, WhitespaceTokenizer,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    EmptyCorpus = 5,
    MissingLabels = 6,
    DimensionMismatch = 7,
    Panic = 99,
}

/// A loaded corpus.
pub struct AkCorpus {
    inner: Corpus,
}

/// Similarity scores of one query against a corpus, sorted.
pub struct AkProfile {
    inner: SimilarityProfile,
}

/// A retrieved chunk set.
pub struct AkSelection {
    inner: Selection,
    ids: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> AkStatus {
    match err {
        Error::Parse { .. } | Error::DuplicateId { .. } | Error::Json(_) => AkStatus::Parse,
        Error::Io { .. } | Error::Cache { .. } | Error::Backend { .. } => AkStatus::Io,
        Error::EmptyCorpus => AkStatus::EmptyCorpus,
        Error::MissingLabels { .. } | Error::NoRelevantChunks => AkStatus::MissingLabels,
        Error::DimensionMismatch { .. } => AkStatus::DimensionMismatch,
        _ => AkStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (AkStatus, String)>) -> AkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AkStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AkStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (AkStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (AkStatus, String) {
    (AkStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (AkStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (AkStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], (AkStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (AkStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (AkStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ak_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ak_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a line-delimited JSON chunk file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ak_corpus_load(path: *const c_char, out: *mut *mut AkCorpus) -> AkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = ingest_corpus(Path::new(path), &WhitespaceTokenizer).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(AkCorpus { inner }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be null or a handle from [`ak_corpus_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ak_corpus_free(corpus: *mut AkCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of chunks; 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ak_corpus_len(corpus: *const AkCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.inner.len())
}

/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ak_corpus_total_tokens(corpus: *const AkCorpus) -> u64 {
    corpus.as_ref().map_or(0, |c| c.inner.total_tokens())
}

/// Builds a profile from `n` scores given in corpus order.
///
/// # Safety
/// `scores` must point to `n` doubles; `corpus` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ak_profile_from_scores(
    corpus: *const AkCorpus,
    scores: *const f64,
    n: usize,
    out: *mut *mut AkProfile,
) -> AkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let corpus = &handle(corpus, "corpus")?.inner;
        let scores = slice_arg(scores, n, "scores")?;
        if n != corpus.len() {
            return Err((
                AkStatus::InvalidArgument,
                format!("{n} scores for {} chunks", corpus.len()),
            ));
        }
        let ids: Vec<&str> = corpus.ids().collect();
        let inner = build_profile(scores, &ids).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(AkProfile { inner }));
        Ok(())
    })
}

/// Scores `query` (length `dim`) against the corpus rows stored in the
/// embedding cache at `cache_path`.
///
/// # Safety
/// `query` must point to `dim` floats; pointers must be valid as documented
/// for [`ak_profile_from_scores`].
#[no_mangle]
pub unsafe extern "C" fn ak_profile_from_cache(
    corpus: *const AkCorpus,
    cache_path: *const c_char,
    query: *const f32,
    dim: usize,
    out: *mut *mut AkProfile,
) -> AkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let corpus = &handle(corpus, "corpus")?.inner;
        let path = str_arg(cache_path, "cache_path")?;
        let query = slice_arg(query, dim, "query")?;
        let ids: Vec<&str> = corpus.ids().collect();
        let matrix = read_cache(Path::new(path)).and_then(|m| m.select(&ids)).map_err(lib_err)?;
        let scores = cosine_scores(query, &matrix).map_err(lib_err)?;
        let inner = build_profile(&scores, matrix.ids()).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(AkProfile { inner }));
        Ok(())
    })
}

/// # Safety
/// `profile` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ak_profile_free(profile: *mut AkProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Writes the descending scores into `out` (capacity `cap`); returns the
/// profile length regardless of `cap`.
///
/// # Safety
/// `out` must point to `cap` writable doubles (may be null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn ak_profile_sorted_scores(profile: *const AkProfile, out: *mut f64, cap: usize) -> usize {
    let Some(p) = profile.as_ref() else { return 0 };
    let s = p.inner.sorted_scores();
    if !out.is_null() {
        ptr::copy_nonoverlapping(s.as_ptr(), out, s.len().min(cap));
    }
    s.len()
}

/// Applies a strategy spec such as `adaptive`, `adaptive:B=5,frac=0.9`,
/// `fixedk:10`, `fixedtok:5000`, `full`, `zeroshot` or
/// `selfroute:budget=5000,oracle=label-heuristic`. `query_id` may be null.
///
/// # Safety
/// String arguments must be NUL-terminated; handles must be live.
#[no_mangle]
pub unsafe extern "C" fn ak_select(
    profile: *const AkProfile,
    corpus: *const AkCorpus,
    strategy: *const c_char,
    query_id: *const c_char,
    out: *mut *mut AkSelection,
) -> AkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let profile = &handle(profile, "profile")?.inner;
        let corpus = &handle(corpus, "corpus")?.inner;
        let strategy: Strategy = str_arg(strategy, "strategy")?.parse().map_err(lib_err)?;
        let id = if query_id.is_null() {
            "query"
        } else {
            str_arg(query_id, "query_id")?
        };
        let query = Query {
            id: id.to_string(),
            text: String::new(),
            answers: None,
        };
        let inner = strategy.select(profile, corpus, &query).map_err(lib_err)?;
        let ids = inner
            .selected_ids
            .iter()
            .map(|s| CString::new(s.as_str()).unwrap_or_default())
            .collect();
        *out = Box::into_raw(Box::new(AkSelection { inner, ids }));
        Ok(())
    })
}

/// # Safety
/// `selection` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ak_selection_free(selection: *mut AkSelection) {
    if !selection.is_null() {
        drop(Box::from_raw(selection));
    }
}

/// # Safety
/// `selection` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ak_selection_len(selection: *const AkSelection) -> usize {
    selection.as_ref().map_or(0, |s| s.inner.len())
}

/// Cutoff position; -1 for an empty selection or a null handle.
///
/// # Safety
/// `selection` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ak_selection_cutoff_k(selection: *const AkSelection) -> i64 {
    selection.as_ref().map_or(-1, |s| s.inner.cutoff_k)
}

/// # Safety
/// `selection` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ak_selection_tokens(selection: *const AkSelection) -> u64 {
    selection.as_ref().map_or(0, |s| s.inner.selected_tokens)
}

/// Gap position and size; `AK_STATUS_INVALID_ARGUMENT` for non-adaptive
/// selections.
///
/// # Safety
/// `selection` must be live; out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn ak_selection_gap(
    selection: *const AkSelection,
    gap_index: *mut usize,
    gap_value: *mut f64,
) -> AkStatus {
    guard(|| {
        let s = &handle(selection, "selection")?.inner;
        let (Some(i), Some(v)) = (s.gap_index, s.gap_value) else {
            return Err((AkStatus::InvalidArgument, format!("`{}` has no gap", s.strategy)));
        };
        *out_arg(gap_index, "gap_index")? = i;
        *out_arg(gap_value, "gap_value")? = v;
        Ok(())
    })
}

/// Id of the `i`-th selected chunk, or null when out of range. Owned by the
/// selection.
///
/// # Safety
/// `selection` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ak_selection_id(selection: *const AkSelection, i: usize) -> *const c_char {
    selection
        .as_ref()
        .and_then(|s| s.ids.get(i))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ak_context_recall(
    selection: *const AkSelection,
    corpus: *const AkCorpus,
    out: *mut f64,
) -> AkStatus {
    guard(|| {
        let s = &handle(selection, "selection")?.inner;
        let c = &handle(corpus, "corpus")?.inner;
        *out_arg(out, "out")? = context_recall(s, c).map_err(lib_err)?;
        Ok(())
    })
}

/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ak_diff_k(
    selection: *const AkSelection,
    profile: *const AkProfile,
    corpus: *const AkCorpus,
    out: *mut u64,
) -> AkStatus {
    guard(|| {
        let s = &handle(selection, "selection")?.inner;
        let p = &handle(profile, "profile")?.inner;
        let c = &handle(corpus, "corpus")?.inner;
        *out_arg(out, "out")? = diff_k(s, p, c).map_err(lib_err)?;
        Ok(())
    })
}

/// Adaptive cutoff on an already sorted (descending) score array, without
/// any corpus. Writes the gap position and the number of chunks to keep
/// (gap position + 1 + buffer, capped at `n`).
///
/// # Safety
/// `sorted_desc` must point to `n` doubles; out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn ak_adaptive_cutoff(
    sorted_desc: *const f64,
    n: usize,
    buffer: usize,
    search_fraction: f64,
    gap_index: *mut usize,
    keep: *mut usize,
) -> AkStatus {
    guard(|| {
        let scores = slice_arg(sorted_desc, n, "sorted_desc")?;
        let params = AdaptiveParams {
            buffer,
            search_fraction,
        };
        params.validate().map_err(lib_err)?;
        if scores.iter().any(|s| s.is_nan()) {
            return Err((AkStatus::InvalidArgument, "NaN score".into()));
        }
        if scores.windows(2).any(|w| w[0] < w[1]) {
            return Err((AkStatus::InvalidArgument, "scores are not sorted descending".into()));
        }
        let gi = match n {
            0 => return Err(lib_err(Error::EmptyCorpus)),
            1 => 0,
            _ => largest_gap(scores, &params).0,
        };
        *out_arg(gap_index, "gap_index")? = gi;
        *out_arg(keep, "keep")? = (gi + 1).saturating_add(buffer).min(n);
        Ok(())
    })
}

/// Cosine similarity of `query` against `n` row-major rows of length `dim`.
///
/// # Safety
/// `query` must hold `dim` floats, `rows` `n * dim` floats and `out` room
/// for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ak_cosine_scores(
    query: *const f32,
    rows: *const f32,
    n: usize,
    dim: usize,
    out: *mut f64,
) -> AkStatus {
    guard(|| {
        let query = slice_arg(query, dim, "query")?;
        let total = n
            .checked_mul(dim)
            .ok_or_else(|| (AkStatus::InvalidArgument, "n * dim overflows".to_string()))?;
        let data = slice_arg(rows, total, "rows")?.to_vec();
        if n == 0 {
            return Ok(());
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let ids = (0..n).map(|i| i.to_string()).collect();
        let matrix = EmbeddingMatrix::new("ffi", dim, ids, data).map_err(lib_err)?;
        let scores = cosine_scores(query, &matrix).map_err(lib_err)?;
        ptr::copy_nonoverlapping(scores.as_ptr(), out, n);
        Ok(())
    })
}

/// Percentage of the full context saved by sending `n_input` tokens.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ak_token_reduction(n_input: f64, n_full: f64, out: *mut f64) -> AkStatus {
    guard(|| {
        *out_arg(out, "out")? = token_reduction(n_input, n_full).map_err(lib_err)?;
        Ok(())
    })
}
