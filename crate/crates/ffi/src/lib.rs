//! C ABI over the `nlgp` library.
//!
//! Objects cross the boundary as opaque handles created by a `*_load`
//! function and released by the matching `*_free`. Every fallible call
//! returns an [`NlgpStatus`]; on failure a description is available from
//! [`nlgp_last_error`] on the same thread. Strings and token buffers handed
//! out by the library are owned by the caller and go back through
//! [`nlgp_string_free`] / [`nlgp_tokens_free`]. Panics never unwind into C:
//! they are reported as [`NlgpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nlgp::docmap::EntityDocMapping;
use nlgp::inject::inject_script;
use nlgp::metrics::{bleu, iou, lex_code, MetricError};
use nlgp::pipeline::{load_config, run_stage, PipelineError, Stage};
use nlgp::predictor::{
    assemble_prompt, beam_search, detokenize, DecoderConfig, NgramModel, PredictError, DEFAULT_MAX_CONTEXT,
};
use nlgp::script::{ScriptDoc, CELL, SPECIAL_TOKENS};
use nlgp::tokenizer::{TokenId, Tokenizer, TokenizerError};
use thiserror::Error;

/// Result of every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlgpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Format = 5,
    Backend = 6,
    StageFailed = 7,
    Panic = 8,
}

#[derive(Debug, Error)]
enum FfiError {
    #[error("argument `{0}` is null")]
    Null(&'static str),
    #[error("argument `{0}` is not valid UTF-8")]
    Utf8(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Backend(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl FfiError {
    fn status(&self) -> NlgpStatus {
        match self {
            FfiError::Null(_) => NlgpStatus::NullPointer,
            FfiError::Utf8(_) => NlgpStatus::InvalidUtf8,
            FfiError::Invalid(_) => NlgpStatus::InvalidArgument,
            FfiError::Io(_) => NlgpStatus::Io,
            FfiError::Format(_) => NlgpStatus::Format,
            FfiError::Backend(_) => NlgpStatus::Backend,
            FfiError::Pipeline(e) => match e {
                PipelineError::ConfigInvalid(_) => NlgpStatus::InvalidArgument,
                PipelineError::MissingInput { .. } => NlgpStatus::Io,
                PipelineError::BadInput { .. } => NlgpStatus::Format,
                PipelineError::StageFailure { .. } => NlgpStatus::StageFailed,
            },
        }
    }
}

impl From<TokenizerError> for FfiError {
    fn from(e: TokenizerError) -> Self {
        match e {
            TokenizerError::Io { .. } => FfiError::Io(e.to_string()),
            TokenizerError::UnknownTokenId(_) => FfiError::Invalid(e.to_string()),
            _ => FfiError::Format(e.to_string()),
        }
    }
}

impl From<PredictError> for FfiError {
    fn from(e: PredictError) -> Self {
        match e {
            PredictError::IntentEmpty | PredictError::InvalidConfig(_) => FfiError::Invalid(e.to_string()),
            PredictError::Format(_) | PredictError::MissingSpecial(_) => FfiError::Format(e.to_string()),
            _ => FfiError::Backend(e.to_string()),
        }
    }
}

impl From<MetricError> for FfiError {
    fn from(e: MetricError) -> Self {
        FfiError::Invalid(e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs were replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Run `f`, translating errors and panics into a status and the
/// thread-local error message.
fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> NlgpStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NlgpStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(e.to_string());
            e.status()
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| payload.downcast_ref::<&str>().copied())
                .unwrap_or("unknown panic");
            set_last_error(format!("internal panic: {msg}"));
            NlgpStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, FfiError> {
    if p.is_null() {
        return Err(FfiError::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| FfiError::Utf8(name))
}

unsafe fn handle<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, FfiError> {
    p.as_ref().ok_or(FfiError::Null(name))
}

unsafe fn put<T>(out: *mut T, value: T, name: &'static str) -> Result<(), FfiError> {
    if out.is_null() {
        return Err(FfiError::Null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String, name: &'static str) -> Result<(), FfiError> {
    let c = CString::new(s).map_err(|_| FfiError::Format("result contains a NUL byte".into()))?;
    if out.is_null() {
        return Err(FfiError::Null(name));
    }
    out.write(c.into_raw());
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nlgp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a
/// successful one. Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn nlgp_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nlgp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `ids`/`len` must be NULL/0 or a buffer returned by [`nlgp_tokenizer_encode`]
/// and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nlgp_tokens_free(ids: *mut u32, len: usize) {
    if !ids.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(ids, len)));
    }
}

/// Byte-level BPE tokenizer with the pipeline's special tokens.
pub struct NlgpTokenizer(Tokenizer);

/// Callable-entity to docstring-title mapping.
pub struct NlgpMapping(EntityDocMapping);

/// Trained n-gram next-token model.
pub struct NlgpModel(NgramModel);

/// Load `merges.txt` plus `vocab.txt` or `vocab.json` from `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nlgp_tokenizer_load(dir: *const c_char, out: *mut *mut NlgpTokenizer) -> NlgpStatus {
    guard(|| {
        let dir = text(dir, "dir")?;
        let tok = Tokenizer::load_dir(Path::new(dir), &SPECIAL_TOKENS)?;
        put(out, Box::into_raw(Box::new(NlgpTokenizer(tok))), "out")
    })
}

/// # Safety
/// `tok` must be NULL or a live handle from [`nlgp_tokenizer_load`].
#[no_mangle]
pub unsafe extern "C" fn nlgp_tokenizer_free(tok: *mut NlgpTokenizer) {
    if !tok.is_null() {
        drop(Box::from_raw(tok));
    }
}

/// Vocabulary size, or 0 for a NULL handle.
///
/// # Safety
/// `tok` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nlgp_tokenizer_vocab_size(tok: *const NlgpTokenizer) -> usize {
    tok.as_ref().map_or(0, |t| t.0.vocab_size())
}

/// Encode `text`; the id buffer goes to `out_ids`/`out_len` and is released
/// with [`nlgp_tokens_free`].
///
/// # Safety
/// `tok` must be a live handle, `text` NUL-terminated, outputs writable.
#[no_mangle]
pub unsafe extern "C" fn nlgp_tokenizer_encode(
    tok: *const NlgpTokenizer,
    text_in: *const c_char,
    out_ids: *mut *mut u32,
    out_len: *mut usize,
) -> NlgpStatus {
    guard(|| {
        let tok = handle(tok, "tok")?;
        let ids = tok.0.encode(text(text_in, "text")?).into_boxed_slice();
        if out_ids.is_null() || out_len.is_null() {
            return Err(FfiError::Null("out_ids/out_len"));
        }
        out_len.write(ids.len());
        out_ids.write(Box::into_raw(ids).cast());
        Ok(())
    })
}

/// Decode `len` ids into a newly allocated string.
///
/// # Safety
/// `ids` must point to `len` readable ids (or be NULL with `len == 0`).
#[no_mangle]
pub unsafe extern "C" fn nlgp_tokenizer_decode(
    tok: *const NlgpTokenizer,
    ids: *const u32,
    len: usize,
    out_text: *mut *mut c_char,
) -> NlgpStatus {
    guard(|| {
        let tok = handle(tok, "tok")?;
        let ids: &[TokenId] = if len == 0 {
            &[]
        } else if ids.is_null() {
            return Err(FfiError::Null("ids"));
        } else {
            std::slice::from_raw_parts(ids, len)
        };
        let s = tok.0.decode(ids)?;
        put_string(out_text, s, "out_text")
    })
}

/// Load a JSONL mapping file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nlgp_mapping_load(path: *const c_char, out: *mut *mut NlgpMapping) -> NlgpStatus {
    guard(|| {
        let path = text(path, "path")?;
        let m = EntityDocMapping::load(Path::new(path)).map_err(|e| match e {
            nlgp::docmap::DocmapError::Io(io) => FfiError::Io(format!("{path}: {io}")),
            other => FfiError::Format(other.to_string()),
        })?;
        put(out, Box::into_raw(Box::new(NlgpMapping(m))), "out")
    })
}

/// # Safety
/// `mapping` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nlgp_mapping_free(mapping: *mut NlgpMapping) {
    if !mapping.is_null() {
        drop(Box::from_raw(mapping));
    }
}

/// Number of entries, or 0 for a NULL handle.
///
/// # Safety
/// `mapping` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nlgp_mapping_len(mapping: *const NlgpMapping) -> usize {
    mapping.as_ref().map_or(0, |m| m.0.len())
}

/// Insert docstring comments above a random `rate` share of the resolvable
/// call sites of `source`. With `strip_comments` nonzero, existing comments
/// are removed first. `out_injected` (optional) receives the comment count.
///
/// # Safety
/// Handles live, strings NUL-terminated, `out_text` writable.
#[no_mangle]
pub unsafe extern "C" fn nlgp_inject(
    mapping: *const NlgpMapping,
    source: *const c_char,
    rate: f64,
    seed: u64,
    strip_comments: bool,
    out_text: *mut *mut c_char,
    out_injected: *mut usize,
) -> NlgpStatus {
    guard(|| {
        let mapping = handle(mapping, "mapping")?;
        if !(0.0..=1.0).contains(&rate) {
            return Err(FfiError::Invalid(format!("rate must be in [0, 1], got {rate}")));
        }
        let doc = ScriptDoc::from_source(text(source, "source")?);
        let (out, report) = inject_script(&doc, &mapping.0, rate, seed, strip_comments);
        if !out_injected.is_null() {
            out_injected.write(report.injected);
        }
        put_string(out_text, out.render_plain(), "out_text")
    })
}

/// Lexical tokens of `code`, joined by single spaces.
///
/// # Safety
/// `code` NUL-terminated, `out_text` writable.
#[no_mangle]
pub unsafe extern "C" fn nlgp_lex_code(code: *const c_char, out_text: *mut *mut c_char) -> NlgpStatus {
    guard(|| put_string(out_text, lex_code(text(code, "code")?).join(" "), "out_text"))
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NlgpPairScore {
    pub bleu: f64,
    pub bleu_smoothed: f64,
    pub iou: f64,
}

/// BLEU (plain and smoothed) and IoU of a prediction against a reference.
///
/// # Safety
/// Strings NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nlgp_score_pair(
    prediction: *const c_char,
    reference: *const c_char,
    out: *mut NlgpPairScore,
) -> NlgpStatus {
    guard(|| {
        let p = lex_code(text(prediction, "prediction")?);
        let r = lex_code(text(reference, "reference")?);
        let b = bleu(&p, &r)?;
        let score = NlgpPairScore {
            bleu: b.raw,
            bleu_smoothed: b.smoothed,
            iou: iou(&p, &r)?,
        };
        put(out, score, "out")
    })
}

/// Load an n-gram model written by the `train-lm` stage.
///
/// # Safety
/// `path` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nlgp_model_load(path: *const c_char, out: *mut *mut NlgpModel) -> NlgpStatus {
    guard(|| {
        let path = text(path, "path")?;
        let raw = std::fs::read_to_string(path).map_err(|e| FfiError::Io(format!("{path}: {e}")))?;
        let model = NgramModel::from_json(&raw)?;
        put(out, Box::into_raw(Box::new(NlgpModel(model))), "out")
    })
}

/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nlgp_model_free(model: *mut NlgpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NlgpDecodeOptions {
    pub beam_width: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub max_context: usize,
}

#[no_mangle]
pub extern "C" fn nlgp_decode_options_default() -> NlgpDecodeOptions {
    let d = DecoderConfig::new(0);
    NlgpDecodeOptions {
        beam_width: d.beam_width,
        min_tokens: d.min_tokens,
        max_tokens: d.max_tokens,
        max_context: DEFAULT_MAX_CONTEXT,
    }
}

/// Predict the code following `context` for the intent comment `intent`
/// (indented by `intent_prefix`, which may be NULL). Writes the best
/// prediction and, if `out_score` is non-NULL, its log-probability.
///
/// # Safety
/// Handles live, strings NUL-terminated, `opts` NULL or readable,
/// `out_text` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn nlgp_predict(
    model: *const NlgpModel,
    tok: *const NlgpTokenizer,
    context: *const c_char,
    intent: *const c_char,
    intent_prefix: *const c_char,
    opts: *const NlgpDecodeOptions,
    out_text: *mut *mut c_char,
    out_score: *mut f64,
) -> NlgpStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let tok = handle(tok, "tok")?;
        let prefix = if intent_prefix.is_null() { "" } else { text(intent_prefix, "intent_prefix")? };
        let opts = opts.as_ref().copied().unwrap_or_else(|| nlgp_decode_options_default());
        let stop = tok.0.special_id(CELL).ok_or(PredictError::MissingSpecial(CELL))?;
        if nlgp::predictor::LanguageModel::vocab_size(&model.0) != tok.0.vocab_size() {
            return Err(FfiError::Invalid("model and tokenizer vocabularies differ".into()));
        }
        let cfg = DecoderConfig {
            beam_width: opts.beam_width,
            min_tokens: opts.min_tokens,
            max_tokens: opts.max_tokens,
            stop_token: stop,
        };
        let prompt = assemble_prompt(text(context, "context")?, text(intent, "intent")?, prefix, &tok.0, opts.max_context)?;
        let best = beam_search(&model.0, &prompt.tokens(), &cfg)?.remove(0);
        if !out_score.is_null() {
            out_score.write(best.score);
        }
        put_string(out_text, detokenize(&tok.0, &best.tokens)?, "out_text")
    })
}

/// Run one pipeline stage (named as on the command line, e.g. `bench-mine`)
/// with the configuration file at `config_path`.
///
/// # Safety
/// Strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn nlgp_run_stage(config_path: *const c_char, stage: *const c_char) -> NlgpStatus {
    guard(|| {
        let config_path = text(config_path, "config_path")?;
        let name = text(stage, "stage")?;
        let stage = Stage::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| FfiError::Invalid(format!("unknown stage {name:?}")))?;
        let cfg = load_config(Some(Path::new(config_path)), &[])?;
        run_stage(stage, &cfg)?;
        Ok(())
    })
}
