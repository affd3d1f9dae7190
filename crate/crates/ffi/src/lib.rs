//! C ABI over the `llm-ensemble` core.
//!
//! Conventions:
//! - Every fallible function returns an [`LleStatus`]; results go through out-pointers.
//! - On failure the message is kept per thread; read it with [`lle_last_error_message`].
//! - Registries and predictors are opaque handles released by their `_free` function.
//! - Strings returned by the library are borrowed; callers never free them.
//! - Panics never cross the boundary; they surface as `LLE_STATUS_PANIC`.
//!
//! The header `include/llm_ensemble.h` is generated from this file at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use llm_ensemble::costing::{self, TokenMode};
use llm_ensemble::predictor::{Checkpoint, EmbeddingStore, Encoder, EncoderKind, PredictorHead};
use llm_ensemble::selector::{self, Candidate};
use llm_ensemble::{Error, Registry};

/// Largest knapsack table, in cells, accepted by [`lle_knapsack`].
const MAX_DP_CELLS: u128 = 1 << 28;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LleStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Validation = 5,
    DimensionMismatch = 6,
    Infeasible = 7,
    NotFound = 8,
    Utf8 = 9,
    Panic = 10,
    Other = 11,
}

/// Token counting rule used by the cost functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LleTokenMode {
    CharsRatio = 0,
    Whitespace = 1,
}

impl From<LleTokenMode> for TokenMode {
    fn from(m: LleTokenMode) -> Self {
        match m {
            LleTokenMode::CharsRatio => TokenMode::CharsRatio,
            LleTokenMode::Whitespace => TokenMode::Whitespace,
        }
    }
}

/// Opaque model registry.
pub struct LleRegistry {
    inner: Registry,
    names: Vec<CString>,
}

/// Opaque quality predictor: a trained head plus its query encoder.
pub struct LlePredictor {
    head: PredictorHead,
    encoder: Encoder,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: LleStatus,
    message: String,
}

impl Failure {
    fn new(status: LleStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn null(what: &str) -> Self {
        Self::new(LleStatus::NullPointer, format!("`{what}` is null"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => LleStatus::Io,
            Error::Parse { .. } | Error::Dataset { .. } | Error::Checkpoint(_) => LleStatus::Parse,
            Error::InvalidModel { .. } | Error::InvalidConfig(_) | Error::UnknownModel(_) => LleStatus::Validation,
            Error::InvalidArgument(_) => LleStatus::InvalidArgument,
            Error::DimensionMismatch { .. } => LleStatus::DimensionMismatch,
            Error::InfeasibleBudget { .. } => LleStatus::Infeasible,
            Error::MissingEmbedding(_) => LleStatus::NotFound,
            _ => LleStatus::Other,
        };
        Self::new(status, e.to_string())
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".to_string()
    }
}

/// Runs `body`, converting errors and panics into a status plus last-error message.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> LleStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => LleStatus::Ok,
        Ok(Err(f)) => {
            set_last_error(f.message);
            f.status
        }
        Err(payload) => {
            set_last_error(format!("panic: {}", panic_message(payload.as_ref())));
            LleStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure::new(LleStatus::Utf8, format!("`{what}` is not UTF-8: {e}")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_out<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn registry_arg<'a>(p: *const LleRegistry) -> Result<&'a LleRegistry, Failure> {
    p.as_ref().ok_or_else(|| Failure::null("registry"))
}

fn model_arg(reg: &Registry, index: usize) -> Result<&llm_ensemble::ModelSpec, Failure> {
    reg.get(index).ok_or_else(|| {
        Failure::new(LleStatus::InvalidArgument, format!("model index {index} out of range (len {})", reg.len()))
    })
}

fn wrap_registry(inner: Registry) -> Box<LleRegistry> {
    let names = inner.names().map(|n| CString::new(n.replace('\0', " ")).unwrap_or_default()).collect();
    Box::new(LleRegistry { inner, names })
}

/// Message for the last failed call on this thread, or NULL if it succeeded.
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn lle_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lle_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a registry TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lle_registry_load(path: *const c_char, out: *mut *mut LleRegistry) -> LleStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        *out = Box::into_raw(wrap_registry(llm_ensemble::load_registry(path)?));
        Ok(())
    })
}

/// Parses and validates a registry from TOML source text.
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lle_registry_from_toml(source: *const c_char, out: *mut *mut LleRegistry) -> LleStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let source = str_arg(source, "source")?;
        *out = Box::into_raw(wrap_registry(Registry::from_toml_str(source)?));
        Ok(())
    })
}

/// Releases a registry. NULL is ignored.
///
/// # Safety
/// `reg` must come from a registry constructor and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lle_registry_free(reg: *mut LleRegistry) {
    if !reg.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(reg))));
    }
}

/// Number of models, or 0 for NULL.
///
/// # Safety
/// `reg` must be NULL or a live registry handle.
#[no_mangle]
pub unsafe extern "C" fn lle_registry_len(reg: *const LleRegistry) -> usize {
    reg.as_ref().map_or(0, |r| r.inner.len())
}

/// Name of model `index`, owned by the registry, or NULL when out of range.
///
/// # Safety
/// `reg` must be NULL or a live registry handle.
#[no_mangle]
pub unsafe extern "C" fn lle_registry_model_name(reg: *const LleRegistry, index: usize) -> *const c_char {
    reg.as_ref().and_then(|r| r.names.get(index)).map_or(ptr::null(), |c| c.as_ptr())
}

/// FLOPs per token of model `index` at context length `n_ctx`.
///
/// # Safety
/// `reg` must be a live registry handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lle_per_token_cost(
    reg: *const LleRegistry,
    index: usize,
    n_ctx: u64,
    out: *mut f64,
) -> LleStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let reg = registry_arg(reg)?;
        *out = costing::per_token_cost(model_arg(&reg.inner, index)?, n_ctx);
        Ok(())
    })
}

/// Total FLOPs of sending `text` to model `index`, tokens clamped to its context.
///
/// # Safety
/// `reg` must be a live registry handle; `text` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lle_query_cost(
    reg: *const LleRegistry,
    index: usize,
    text: *const c_char,
    mode: LleTokenMode,
    out: *mut f64,
) -> LleStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let reg = registry_arg(reg)?;
        let text = str_arg(text, "text")?;
        *out = costing::query_cost(model_arg(&reg.inner, index)?, text, mode.into());
        Ok(())
    })
}

/// Costs of `text` for every model, in registry order. `out_len` must equal
/// the registry length.
///
/// # Safety
/// `reg` must be a live registry handle; `text` NUL-terminated; `out` must
/// hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lle_query_costs(
    reg: *const LleRegistry,
    text: *const c_char,
    mode: LleTokenMode,
    out: *mut f64,
    out_len: usize,
) -> LleStatus {
    guard(|| {
        let reg = registry_arg(reg)?;
        let text = str_arg(text, "text")?;
        if out_len != reg.inner.len() {
            return Err(
                Error::DimensionMismatch { what: "cost output", expected: reg.inner.len(), found: out_len }.into()
            );
        }
        let out = slice_out(out, out_len, "out")?;
        let ctx = costing::build_query_context(&reg.inner, "", text, mode.into());
        out.copy_from_slice(&ctx.costs);
        Ok(())
    })
}

/// Chooses the subset of `n` candidates maximizing shifted quality with total
/// cost at most `epsilon`, quantizing costs onto `grid` units.
///
/// `out_mask[i]` is set to 1 for selected candidates and 0 otherwise. When no
/// candidate fits, the mask is all zero, totals are 0 and the status is
/// `LLE_STATUS_INFEASIBLE`. `out_total_cost` and `out_total_target` may be NULL.
///
/// # Safety
/// `qualities` and `costs` must hold `n` doubles; `out_mask` must hold `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn lle_select(
    qualities: *const f64,
    costs: *const f64,
    n: usize,
    epsilon: f64,
    grid: usize,
    out_mask: *mut u8,
    out_total_cost: *mut f64,
    out_total_target: *mut f64,
) -> LleStatus {
    guard(|| {
        let qualities = slice_arg(qualities, n, "qualities")?;
        let costs = slice_arg(costs, n, "costs")?;
        let mask = slice_out(out_mask, n, "out_mask")?;
        mask.fill(0);
        let candidates: Vec<Candidate> =
            (0..n).map(|i| Candidate { model_index: i, quality: qualities[i], cost: costs[i] }).collect();
        let result = selector::select(&candidates, epsilon, grid)?;
        for &i in &result.selected {
            mask[i] = 1;
        }
        if let Some(c) = out_total_cost.as_mut() {
            *c = result.total_cost;
        }
        if let Some(t) = out_total_target.as_mut() {
            *t = result.total_target_score;
        }
        if result.infeasible {
            return Err(Error::InfeasibleBudget { epsilon }.into());
        }
        Ok(())
    })
}

/// Exact 0/1 knapsack over integer costs. Sets `out_mask[i]` to 1 for chosen
/// items. Items are only taken when they strictly improve the total profit.
///
/// # Safety
/// `costs` and `profits` must hold `n` values; `out_mask` must hold `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn lle_knapsack(
    costs: *const u64,
    profits: *const f64,
    n: usize,
    capacity: u64,
    out_mask: *mut u8,
) -> LleStatus {
    guard(|| {
        let costs = slice_arg(costs, n, "costs")?;
        let profits = slice_arg(profits, n, "profits")?;
        let mask = slice_out(out_mask, n, "out_mask")?;
        mask.fill(0);
        let cells = (n as u128 + 1) * (capacity as u128 + 1);
        if cells > MAX_DP_CELLS {
            return Err(Failure::new(
                LleStatus::InvalidArgument,
                format!("knapsack table of {cells} cells exceeds the limit of {MAX_DP_CELLS}"),
            ));
        }
        if let Some(i) = profits.iter().position(|p| !p.is_finite()) {
            return Err(Failure::new(LleStatus::InvalidArgument, format!("profit {i} is not finite")));
        }
        let items: Vec<(u64, f64)> = costs.iter().copied().zip(profits.iter().copied()).collect();
        for i in selector::knapsack(&items, capacity) {
            mask[i] = 1;
        }
        Ok(())
    })
}

/// Loads a predictor checkpoint. Heads trained on precomputed embeddings need
/// `embeddings` (a JSON-lines store); for hashed n-gram heads it may be NULL.
///
/// # Safety
/// `checkpoint` must be NUL-terminated; `embeddings` NULL or NUL-terminated;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lle_predictor_load(
    checkpoint: *const c_char,
    embeddings: *const c_char,
    out: *mut *mut LlePredictor,
) -> LleStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let ckpt = Checkpoint::load(str_arg(checkpoint, "checkpoint")?)?;
        let d = ckpt.head.dims().d;
        let encoder = if embeddings.is_null() {
            match ckpt.encoder {
                EncoderKind::HashedNgram { seed } => Encoder::HashedNgram { dim: d, seed },
                EncoderKind::File => {
                    return Err(Failure::new(
                        LleStatus::InvalidArgument,
                        "checkpoint expects precomputed embeddings but `embeddings` is null",
                    ))
                }
            }
        } else {
            let store = EmbeddingStore::load(str_arg(embeddings, "embeddings")?)?;
            if store.dim() != d {
                return Err(
                    Error::DimensionMismatch { what: "embedding store", expected: d, found: store.dim() }.into()
                );
            }
            Encoder::File(store)
        };
        *out = Box::into_raw(Box::new(LlePredictor { head: ckpt.head, encoder }));
        Ok(())
    })
}

/// Releases a predictor. NULL is ignored.
///
/// # Safety
/// `pred` must come from [`lle_predictor_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lle_predictor_free(pred: *mut LlePredictor) {
    if !pred.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(pred))));
    }
}

/// Number of quality outputs, or 0 for NULL.
///
/// # Safety
/// `pred` must be NULL or a live predictor handle.
#[no_mangle]
pub unsafe extern "C" fn lle_predictor_n_models(pred: *const LlePredictor) -> usize {
    pred.as_ref().map_or(0, |p| p.head.dims().n_models)
}

/// Predicted quality for every model. `query_id` keys the embedding store and
/// may be NULL for hashed n-gram heads. `out_len` must equal
/// [`lle_predictor_n_models`].
///
/// # Safety
/// `pred` must be a live handle; `query_id` NULL or NUL-terminated; `text`
/// NUL-terminated; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lle_predictor_predict(
    pred: *const LlePredictor,
    query_id: *const c_char,
    text: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> LleStatus {
    guard(|| {
        let pred = pred.as_ref().ok_or_else(|| Failure::null("predictor"))?;
        let text = str_arg(text, "text")?;
        let query_id = if query_id.is_null() { "" } else { str_arg(query_id, "query_id")? };
        let n = pred.head.dims().n_models;
        if out_len != n {
            return Err(Error::DimensionMismatch { what: "prediction output", expected: n, found: out_len }.into());
        }
        let out = slice_out(out, out_len, "out")?;
        let e = pred.encoder.embed_checked(query_id, text, pred.head.dims().d)?;
        out.copy_from_slice(&pred.head.predict(&e.vector)?);
        Ok(())
    })
}
