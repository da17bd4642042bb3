//! C ABI over the `domforge` library.
//!
//! Every fallible function returns a [`DfStatus`] and writes its result
//! through an out-pointer. On failure the message is available from
//! [`df_last_error`] on the same thread. Strings returned through `char **`
//! out-pointers are owned by the caller and released with [`df_string_free`];
//! handles are released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use domforge::carbon::{co2_emissions, CarbonParams};
use domforge::corpus::{corpus_stats, dedupe, ingest_jsonl, Corpus, IngestOptions, Paragraph, Source};
use domforge::evalkit::{cross_entropy, error_rate_reduction, relative_loss_reduction, weighted_f1};
use domforge::mlm::{mask_sequence, MaskingConfig};
use domforge::selection::{diversity_score, select, SelectionKind, SelectionStrategy, TaskReference};
use domforge::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    DataError = 4,
    IoError = 5,
    Panic = 6,
}

/// Opaque paragraph corpus.
pub struct DfCorpus(Corpus);

/// Opaque similarity reference built from downstream-task examples.
pub struct DfTaskReference(TaskReference);

/// Masking parameters for [`df_mask_tokens`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DfMaskingOptions {
    pub mask_probability: f64,
    pub replace_mask_fraction: f64,
    pub replace_random_fraction: f64,
    pub keep_fraction: f64,
    pub mask_token_id: u32,
    pub vocab_size: u32,
    pub seed: u64,
    /// Selects the generator stream, so each sequence masks independently.
    pub sequence_index: u64,
    /// Ids never selected for masking; may be null when `n_special_ids` is 0.
    pub special_ids: *const u32,
    pub n_special_ids: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(DfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) => DfStatus::InvalidArgument,
            Error::Io { .. } | Error::Stream(_) => DfStatus::IoError,
            _ => DfStatus::DataError,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DfStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&format!("panic: {msg}"));
            DfStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DfStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(DfStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(DfStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn write_out<T>(out: *mut T, value: T) {
    ptr::write(out, value);
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(DfStatus::DataError, "output contains a NUL byte".into()))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next `df_*` call on the same thread.
#[no_mangle]
pub extern "C" fn df_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn df_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from a `df_*` function of this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn df_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses paragraph JSONL. Bad lines are skipped and counted in
/// `rejected_lines` (nullable); `source_default` may be null for "other".
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_corpus_from_jsonl(
    jsonl: *const c_char,
    source_default: *const c_char,
    out: *mut *mut DfCorpus,
    rejected_lines: *mut usize,
) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(jsonl, "jsonl")?;
        let source: Source = if source_default.is_null() {
            Source::Other
        } else {
            str_arg(source_default, "source_default")?.parse()?
        };
        let ingested = ingest_jsonl(text.as_bytes(), &IngestOptions::new(source))?;
        if !rejected_lines.is_null() {
            write_out(rejected_lines, ingested.errors.len());
        }
        write_out(out, Box::into_raw(Box::new(DfCorpus(ingested.corpus))));
        Ok(())
    })
}

/// Number of paragraphs; 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_corpus_len(corpus: *const DfCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// Canonical JSONL of the corpus.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_corpus_to_jsonl(corpus: *const DfCorpus, out: *mut *mut c_char) -> DfStatus {
    guard(|| {
        let c = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = String::from_utf8(c.0.to_jsonl_bytes()).map_err(|e| Failure(DfStatus::InvalidUtf8, e.to_string()))?;
        write_out(out, into_c_string(s)?);
        Ok(())
    })
}

/// New corpus without normalized-text duplicates; `removed` is nullable.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_corpus_dedupe(
    corpus: *const DfCorpus,
    out: *mut *mut DfCorpus,
    removed: *mut usize,
) -> DfStatus {
    guard(|| {
        let c = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (kept, n) = dedupe(&c.0);
        if !removed.is_null() {
            write_out(removed, n);
        }
        write_out(out, Box::into_raw(Box::new(DfCorpus(kept))));
        Ok(())
    })
}

/// Per-source paragraph counts and word-count quantiles as JSON.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_corpus_stats_json(corpus: *const DfCorpus, out: *mut *mut c_char) -> DfStatus {
    guard(|| {
        let c = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let stats = corpus_stats(&c.0)?;
        let json = serde_json::to_string(&stats).map_err(Error::from)?;
        write_out(out, into_c_string(json)?);
        Ok(())
    })
}

/// # Safety
/// `corpus` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn df_corpus_free(corpus: *mut DfCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Builds a task reference from JSONL examples with a "text" field.
///
/// # Safety
/// `jsonl` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_task_reference_from_jsonl(
    jsonl: *const c_char,
    vocab_size: usize,
    out: *mut *mut DfTaskReference,
) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(jsonl, "jsonl")?;
        let mut texts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| Failure(DfStatus::DataError, format!("line {}: {e}", i + 1)))?;
            let t = v
                .get("text")
                .and_then(|t| t.as_str())
                .ok_or_else(|| Failure(DfStatus::DataError, format!("line {}: missing \"text\"", i + 1)))?;
            texts.push(t.to_string());
        }
        let task = TaskReference::from_texts(texts.iter().map(String::as_str), vocab_size)?;
        write_out(out, Box::into_raw(Box::new(DfTaskReference(task))));
        Ok(())
    })
}

/// # Safety
/// `task` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn df_task_reference_free(task: *mut DfTaskReference) {
    if !task.is_null() {
        drop(Box::from_raw(task));
    }
}

/// Runs a selection strategy ("full", "sim", "div", "div_plus_sim").
/// `scores_jsonl` receives one score record per paragraph; `selected`
/// (nullable) receives the kept paragraphs. `task` may be null for "full"
/// and "div".
///
/// # Safety
/// Handles must be live; `strategy` NUL-terminated; `scores_jsonl` writable.
#[no_mangle]
pub unsafe extern "C" fn df_select_json(
    corpus: *const DfCorpus,
    strategy: *const c_char,
    keep_fraction: f64,
    task: *const DfTaskReference,
    scores_jsonl: *mut *mut c_char,
    selected: *mut *mut DfCorpus,
) -> DfStatus {
    guard(|| {
        let c = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        if scores_jsonl.is_null() {
            return Err(null("scores_jsonl"));
        }
        let kind: SelectionKind = str_arg(strategy, "strategy")?.parse()?;
        let strategy = SelectionStrategy::new(kind, keep_fraction)?;
        let result = select(&c.0, strategy, task.as_ref().map(|t| &t.0))?;
        let mut buf = Vec::new();
        result.write_scores_jsonl(&mut buf)?;
        let s = String::from_utf8(buf).map_err(|e| Failure(DfStatus::DataError, e.to_string()))?;
        write_out(scores_jsonl, into_c_string(s)?);
        if !selected.is_null() {
            write_out(selected, Box::into_raw(Box::new(DfCorpus(result.apply(&c.0)))));
        }
        Ok(())
    })
}

/// Type-token ratio plus entropy (bits) of a text.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_diversity_score(text: *const c_char, out: *mut f64) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = Paragraph::new("ffi", Source::Other, str_arg(text, "text")?)
            .map_err(|e| Failure(DfStatus::DataError, e.to_string()))?;
        write_out(out, diversity_score(&p)?);
        Ok(())
    })
}

/// Support-weighted F1 over integer class labels.
///
/// # Safety
/// Both arrays must hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_weighted_f1(y_true: *const u32, y_pred: *const u32, n: usize, out: *mut f64) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let t = slice_arg(y_true, n, "y_true")?;
        let p = slice_arg(y_pred, n, "y_pred")?;
        write_out(out, weighted_f1(t, p)?);
        Ok(())
    })
}

/// Mean cross-entropy (nats) of `n` row-major distributions over `k`
/// classes. `clamped` (nullable) receives how many true-class
/// probabilities were raised to `epsilon`.
///
/// # Safety
/// `probabilities` must hold `n * k` values and `y_true` `n`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_cross_entropy(
    probabilities: *const f64,
    n: usize,
    k: usize,
    y_true: *const usize,
    epsilon: f64,
    out: *mut f64,
    clamped: *mut usize,
) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        let len = n.checked_mul(k).ok_or_else(|| invalid("n * k overflows"))?;
        let flat = slice_arg(probabilities, len, "probabilities")?;
        let rows: Vec<Vec<f64>> = flat.chunks(k).map(<[f64]>::to_vec).collect();
        let ce = cross_entropy(&rows, slice_arg(y_true, n, "y_true")?, epsilon)?;
        write_out(out, ce.value);
        if !clamped.is_null() {
            write_out(clamped, ce.clamped);
        }
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_error_rate_reduction(baseline_f1: f64, model_f1: f64, out: *mut f64) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, error_rate_reduction(baseline_f1, model_f1)?);
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_relative_loss_reduction(baseline_loss: f64, model_loss: f64, out: *mut f64) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, relative_loss_reduction(baseline_loss, model_loss)?);
        Ok(())
    })
}

/// Grams CO2e for power (kW) × hours × grid intensity (g/kWh).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_co2_emissions(
    power_kw: f64,
    hours: f64,
    grid_intensity_g_per_kwh: f64,
    out: *mut f64,
) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, co2_emissions(&CarbonParams::new(power_kw, hours, grid_intensity_g_per_kwh))?);
        Ok(())
    })
}

/// Masks `n` token ids. `out_ids` receives the corrupted sequence and
/// `out_labels` the original id at predicted positions and -100 elsewhere.
///
/// # Safety
/// `ids`, `out_ids` and `out_labels` must hold `n` elements; `opts` must be
/// valid, with `special_ids` holding `n_special_ids` elements.
#[no_mangle]
pub unsafe extern "C" fn df_mask_tokens(
    ids: *const u32,
    n: usize,
    opts: *const DfMaskingOptions,
    out_ids: *mut u32,
    out_labels: *mut i64,
) -> DfStatus {
    guard(|| {
        let o = opts.as_ref().ok_or_else(|| null("opts"))?;
        if n > 0 && (out_ids.is_null() || out_labels.is_null()) {
            return Err(null("output buffer"));
        }
        let cfg = MaskingConfig {
            mask_probability: o.mask_probability,
            replace_mask_fraction: o.replace_mask_fraction,
            replace_random_fraction: o.replace_random_fraction,
            keep_fraction: o.keep_fraction,
            special_token_ids: slice_arg(o.special_ids, o.n_special_ids, "special_ids")?.iter().copied().collect(),
            mask_token_id: o.mask_token_id,
            vocab_size: o.vocab_size,
            seed: o.seed,
        };
        let batch = mask_sequence(slice_arg(ids, n, "ids")?, &cfg, o.sequence_index)?;
        if n > 0 {
            ptr::copy_nonoverlapping(batch.input_ids.as_ptr(), out_ids, n);
            ptr::copy_nonoverlapping(batch.labels.as_ptr(), out_labels, n);
        }
        Ok(())
    })
}
