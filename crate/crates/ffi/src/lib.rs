//! C ABI for loading a knowledge graph and scoring entity relatedness with
//! the link-overlap, tf-idf and trained-network measures.
//!
//! Every fallible call returns a [`DsrmStatus`] and writes its result through
//! an out-pointer. On failure, [`dsrm_last_error_message`] describes the
//! error for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dsrm::dsrm::{load_checkpoint, DsrmEmbeddings};
use dsrm::kg::{load_kg, EntityId, KnowledgeGraph};
use dsrm::relatedness::{build_tfidf, ngd_relatedness, vsp_relatedness, Relatedness, TfIdfModel};
use dsrm::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsrmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidGraph = 5,
    UnknownEntity = 6,
    InvalidInput = 7,
    NonFinite = 8,
    Checkpoint = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Loaded knowledge graph.
pub struct DsrmKg {
    kg: KnowledgeGraph,
}

/// tf-idf vectors of every entity of a graph.
pub struct DsrmTfIdf {
    model: TfIdfModel,
}

/// Trained network applied to every entity of a graph.
pub struct DsrmModel {
    embeddings: DsrmEmbeddings,
    output_dim: usize,
    gamma: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(DsrmStatus, String);

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let status = match &err {
            Error::Io { .. } => DsrmStatus::Io,
            Error::Parse { .. } => DsrmStatus::Parse,
            Error::DuplicateEntity(_) | Error::DanglingReference(_) => DsrmStatus::InvalidGraph,
            Error::UnknownEntity(_) => DsrmStatus::UnknownEntity,
            Error::NonFinite(_) => DsrmStatus::NonFinite,
            Error::Checkpoint(_) => DsrmStatus::Checkpoint,
            Error::InvalidEntityId(_)
            | Error::InvalidInput(_)
            | Error::InvalidConfig(_)
            | Error::DimensionMismatch { .. } => DsrmStatus::InvalidInput,
        };
        Failure(status, err.to_string())
    }
}

fn set_last_error(message: Option<String>) {
    let message = message.map(|m| CString::new(m.replace('\0', " ")).expect("nul bytes removed"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
}

fn guard<F>(body: F) -> DsrmStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error(None);
            DsrmStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(Some(message));
            status
        }
        Err(_) => {
            set_last_error(Some("internal panic".into()));
            DsrmStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DsrmStatus::NullArgument, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller passes a nul-terminated string that outlives the call.
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| Failure(DsrmStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn id_arg(ptr: *const c_char, what: &str) -> Result<EntityId, Failure> {
    Ok(EntityId::new(unsafe { str_arg(ptr, what) }?)?)
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: non-null handles come from the matching constructor.
    unsafe { ptr.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    // SAFETY: checked non-null; caller provides writable storage.
    unsafe { out.write(value) };
    Ok(())
}

/// Message of the last failed call on this thread, or NULL after a
/// successful one. Valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn dsrm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |m| m.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn dsrm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a `kg.jsonl` file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsrm_kg_load(path: *const c_char, out: *mut *mut DsrmKg) -> DsrmStatus {
    guard(|| {
        let path = unsafe { str_arg(path, "path") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let kg = load_kg(path)?;
        unsafe { write_out(out, Box::into_raw(Box::new(DsrmKg { kg }))) }
    })
}

/// # Safety
/// `kg` must be NULL or a handle from [`dsrm_kg_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dsrm_kg_free(kg: *mut DsrmKg) {
    if !kg.is_null() {
        // SAFETY: handle was created by Box::into_raw in dsrm_kg_load.
        drop(unsafe { Box::from_raw(kg) });
    }
}

/// Number of entities, 0 for a NULL handle.
///
/// # Safety
/// `kg` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsrm_kg_len(kg: *const DsrmKg) -> usize {
    unsafe { kg.as_ref() }.map_or(0, |h| h.kg.len())
}

/// Link-overlap relatedness of two entities.
///
/// # Safety
/// `kg` must be a live handle, `a` and `b` nul-terminated ids, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsrm_ngd(
    kg: *const DsrmKg,
    a: *const c_char,
    b: *const c_char,
    out: *mut f64,
) -> DsrmStatus {
    guard(|| {
        let kg = unsafe { handle(kg, "kg") }?;
        let (a, b) = unsafe { (id_arg(a, "a")?, id_arg(b, "b")?) };
        let score = ngd_relatedness(&kg.kg, &a, &b)?;
        unsafe { write_out(out, score) }
    })
}

/// Builds tf-idf vectors for every entity of `kg`. The result does not
/// borrow `kg`.
///
/// # Safety
/// `kg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dsrm_tfidf_build(kg: *const DsrmKg, out: *mut *mut DsrmTfIdf) -> DsrmStatus {
    guard(|| {
        let kg = unsafe { handle(kg, "kg") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let model = build_tfidf(&kg.kg)?;
        unsafe { write_out(out, Box::into_raw(Box::new(DsrmTfIdf { model }))) }
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`dsrm_tfidf_build`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dsrm_tfidf_free(model: *mut DsrmTfIdf) {
    if !model.is_null() {
        // SAFETY: handle was created by Box::into_raw in dsrm_tfidf_build.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Cosine of the tf-idf vectors of two entities.
///
/// # Safety
/// `model` must be a live handle, `a` and `b` nul-terminated ids, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn dsrm_vsp(
    model: *const DsrmTfIdf,
    a: *const c_char,
    b: *const c_char,
    out: *mut f64,
) -> DsrmStatus {
    guard(|| {
        let model = unsafe { handle(model, "model") }?;
        let (a, b) = unsafe { (id_arg(a, "a")?, id_arg(b, "b")?) };
        let score = vsp_relatedness(&model.model, &a, &b)?;
        unsafe { write_out(out, score) }
    })
}

/// Loads a trained checkpoint and embeds every entity of `kg`. The result
/// does not borrow `kg`.
///
/// # Safety
/// `kg` must be a live handle, `checkpoint` a nul-terminated path and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn dsrm_model_load(
    kg: *const DsrmKg,
    checkpoint: *const c_char,
    out: *mut *mut DsrmModel,
) -> DsrmStatus {
    guard(|| {
        let kg = unsafe { handle(kg, "kg") }?;
        let path = unsafe { str_arg(checkpoint, "checkpoint") }?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ckpt = load_checkpoint(path)?;
        let embeddings = DsrmEmbeddings::compute(&kg.kg, &ckpt.params)?;
        let model = DsrmModel {
            embeddings,
            output_dim: ckpt.params.sizes().output,
            gamma: ckpt.gamma,
        };
        unsafe { write_out(out, Box::into_raw(Box::new(model))) }
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`dsrm_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dsrm_model_free(model: *mut DsrmModel) {
    if !model.is_null() {
        // SAFETY: handle was created by Box::into_raw in dsrm_model_load.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Width of the entity embeddings, 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsrm_model_output_dim(model: *const DsrmModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.output_dim)
}

/// Smoothing factor stored with the checkpoint, NaN for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dsrm_model_gamma(model: *const DsrmModel) -> f64 {
    unsafe { model.as_ref() }.map_or(f64::NAN, |m| m.gamma)
}

/// Network relatedness of two entities: embedding cosine clamped to [0, 1].
///
/// # Safety
/// `model` must be a live handle, `a` and `b` nul-terminated ids, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn dsrm_model_relatedness(
    model: *const DsrmModel,
    a: *const c_char,
    b: *const c_char,
    out: *mut f64,
) -> DsrmStatus {
    guard(|| {
        let model = unsafe { handle(model, "model") }?;
        let (a, b) = unsafe { (id_arg(a, "a")?, id_arg(b, "b")?) };
        let score = model.embeddings.relatedness(&a, &b)?;
        unsafe { write_out(out, score) }
    })
}

/// Copies the embedding of `id` into `buf`, which must hold at least
/// [`dsrm_model_output_dim`] values; `len` is its capacity.
///
/// # Safety
/// `model` must be a live handle, `id` a nul-terminated id and `buf` valid
/// for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dsrm_model_embedding(
    model: *const DsrmModel,
    id: *const c_char,
    buf: *mut f64,
    len: usize,
) -> DsrmStatus {
    guard(|| {
        let model = unsafe { handle(model, "model") }?;
        let id = unsafe { id_arg(id, "id") }?;
        let vector = model.embeddings.vector(&id)?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < vector.len() {
            return Err(Failure(
                DsrmStatus::BufferTooSmall,
                format!("buffer holds {len} values, embedding has {}", vector.len()),
            ));
        }
        // SAFETY: buf is valid for len >= vector.len() writes.
        unsafe { std::ptr::copy_nonoverlapping(vector.as_ptr(), buf, vector.len()) };
        Ok(())
    })
}
