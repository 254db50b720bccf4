//! C ABI over the knowledge store.
//!
//! Every function returns a [`CapeStatus`]; on failure a message is kept per
//! thread and read back with [`cape_last_error_message`]. Strings handed out
//! by the library are released with [`cape_string_free`], stores with
//! [`cape_store_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::io::Cursor;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use capekg_core::config::RetrievalConfig;
use capekg_core::edit::{load_edits, EditInput};
use capekg_core::graph::{BaseGraph, KnowledgeStore, Layer};
use capekg_core::oracle::MockFixtures;
use capekg_core::reasoner::run_chain;
use capekg_core::session::{lexicon_for_store, mock_session};
use capekg_core::symbol::Interner;
use capekg_core::{Error, OracleError};

/// Opaque store handle.
pub struct CapeStore {
    store: KnowledgeStore,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapeStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    UnknownCase = 4,
    DuplicateCase = 5,
    EditRejected = 6,
    NotFound = 7,
    BufferTooSmall = 8,
    Io = 9,
    OracleUnavailable = 10,
    Internal = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapeLayer {
    Base = 0,
    Overlay = 1,
}

impl From<Layer> for CapeLayer {
    fn from(l: Layer) -> Self {
        match l {
            Layer::Base => CapeLayer::Base,
            Layer::Overlay => CapeLayer::Overlay,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> CapeStatus {
    match err {
        Error::Parse { .. } | Error::Json(_) | Error::Schema { .. } => CapeStatus::Parse,
        Error::UnknownCase(_) => CapeStatus::UnknownCase,
        Error::DuplicateCase(_) => CapeStatus::DuplicateCase,
        Error::EmptySymbol
        | Error::CaseMismatch { .. }
        | Error::SeqOutOfOrder { .. }
        | Error::ExtractionFailed(_) => CapeStatus::EditRejected,
        Error::Io { .. } => CapeStatus::Io,
        Error::Oracle(OracleError::Unavailable(_)) => CapeStatus::OracleUnavailable,
        _ => CapeStatus::Internal,
    }
}

struct Fail(CapeStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type FfiResult<T> = Result<T, Fail>;

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> CapeStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CapeStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CapeStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Fail(CapeStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CapeStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

fn null_arg(name: &str) -> Fail {
    Fail(CapeStatus::NullArgument, format!("`{name}` is null"))
}

fn into_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(CapeStatus::Internal, "output contains NUL".to_string()))
}

fn new_store(base: BaseGraph) -> *mut CapeStore {
    Box::into_raw(Box::new(CapeStore {
        store: KnowledgeStore::new(Arc::new(base)),
    }))
}

/// Builds a store from facts JSONL text (`{"s","r","o"}` per line).
///
/// # Safety
/// `facts_jsonl` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cape_store_from_facts_jsonl(facts_jsonl: *const c_char, out: *mut *mut CapeStore) -> CapeStatus {
    guard(|| {
        let text = str_arg(facts_jsonl, "facts_jsonl")?;
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let base = BaseGraph::from_jsonl(Arc::new(Interner::new()), Cursor::new(text.as_bytes()))?;
        *out = new_store(base);
        Ok(())
    })
}

/// Builds a store from a facts JSONL file.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cape_store_from_facts_file(path: *const c_char, out: *mut *mut CapeStore) -> CapeStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let file = std::fs::File::open(path).map_err(|e| Fail(CapeStatus::Io, format!("{path}: {e}")))?;
        let base = BaseGraph::from_jsonl(Arc::new(Interner::new()), std::io::BufReader::new(file))?;
        *out = new_store(base);
        Ok(())
    })
}

/// Releases a store. Null is ignored.
///
/// # Safety
/// `store` must come from a `cape_store_from_*` call and not be used again.
#[no_mangle]
pub unsafe extern "C" fn cape_store_free(store: *mut CapeStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// # Safety
/// `store` must be null or a live handle.
unsafe fn store_mut<'a>(store: *mut CapeStore) -> FfiResult<&'a mut CapeStore> {
    store.as_mut().ok_or_else(|| null_arg("store"))
}

/// # Safety
/// `store` must be null or a live handle.
unsafe fn store_ref<'a>(store: *const CapeStore) -> FfiResult<&'a CapeStore> {
    store.as_ref().ok_or_else(|| null_arg("store"))
}

/// Creates an empty overlay for `case_id`.
///
/// # Safety
/// Pointers must be valid; `store` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cape_create_overlay(store: *mut CapeStore, case_id: *const c_char) -> CapeStatus {
    guard(|| {
        let h = store_mut(store)?;
        h.store.create_overlay(str_arg(case_id, "case_id")?)?;
        Ok(())
    })
}

/// Applies `(s, r) -> o_new` to the case's overlay, creating it if needed.
///
/// # Safety
/// Pointers must be valid; `store` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cape_apply_edit(
    store: *mut CapeStore,
    case_id: *const c_char,
    s: *const c_char,
    r: *const c_char,
    o_new: *const c_char,
) -> CapeStatus {
    guard(|| {
        let h = store_mut(store)?;
        let input = EditInput::structured(
            str_arg(case_id, "case_id")?,
            str_arg(s, "s")?,
            str_arg(r, "r")?,
            str_arg(o_new, "o_new")?,
        );
        h.store.submit(&input, None, RetrievalConfig::default().tau)?;
        Ok(())
    })
}

/// Applies a structured edits JSONL file. `applied` (nullable) receives the
/// number of edits applied before any failure.
///
/// # Safety
/// Pointers must be valid; `store` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cape_apply_edits_file(
    store: *mut CapeStore,
    path: *const c_char,
    applied: *mut usize,
) -> CapeStatus {
    guard(|| {
        let h = store_mut(store)?;
        let inputs = load_edits(Path::new(str_arg(path, "path")?))?;
        let mut n = 0usize;
        let result = inputs.iter().try_for_each(|e| {
            if matches!(e, EditInput::Text { .. }) {
                return Err(Fail(
                    CapeStatus::EditRejected,
                    "free-text edit statements are not supported here".to_string(),
                ));
            }
            h.store.submit(e, None, RetrievalConfig::default().tau)?;
            n += 1;
            Ok(())
        });
        if !applied.is_null() {
            *applied = n;
        }
        result
    })
}

/// Resolves `(s, r)` under `case_id`, writing the object as a NUL-terminated
/// string into `buf`. `needed` (nullable) receives the object's byte length
/// without the terminator; `provenance` (nullable) the answering layer.
/// Returns `BufferTooSmall` when `buf_len <= *needed`.
///
/// # Safety
/// Pointers must be valid; `buf` must hold `buf_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cape_resolve(
    store: *const CapeStore,
    case_id: *const c_char,
    s: *const c_char,
    r: *const c_char,
    buf: *mut c_char,
    buf_len: usize,
    needed: *mut usize,
    provenance: *mut CapeLayer,
) -> CapeStatus {
    guard(|| {
        let h = store_ref(store)?;
        let case_id = str_arg(case_id, "case_id")?;
        let (s, r) = (str_arg(s, "s")?, str_arg(r, "r")?);
        let view = h.store.view(case_id)?;
        let symbols = h.store.symbols();
        let not_found = || Fail(CapeStatus::NotFound, format!("no object for ({s}, {r})"));
        let (Some(ss), Some(rs)) = (symbols.lookup(s), symbols.lookup(r)) else {
            return Err(not_found());
        };
        let res = view.resolve(ss, rs).ok_or_else(not_found)?;
        let text = symbols.text(res.object);
        let bytes = text.as_bytes();
        if !needed.is_null() {
            *needed = bytes.len();
        }
        if !provenance.is_null() {
            *provenance = res.provenance.into();
        }
        if buf.is_null() || buf_len <= bytes.len() {
            return Err(Fail(
                CapeStatus::BufferTooSmall,
                format!("buffer needs {} bytes", bytes.len() + 1),
            ));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
        *buf.add(bytes.len()) = 0;
        Ok(())
    })
}

/// Answers `question` under `case_id` with deterministic mock oracles and
/// returns the answer and hop trace as JSON in `out_json` (free with
/// [`cape_string_free`]). `fixtures_path` (nullable) names a mock fixtures
/// JSONL file supplying decompositions and scripted LLM replies.
///
/// # Safety
/// Pointers must be valid; `store` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cape_query_json(
    store: *const CapeStore,
    case_id: *const c_char,
    question: *const c_char,
    fixtures_path: *const c_char,
    out_json: *mut *mut c_char,
) -> CapeStatus {
    guard(|| {
        let h = store_ref(store)?;
        let case_id = str_arg(case_id, "case_id")?;
        let question = str_arg(question, "question")?;
        if out_json.is_null() {
            return Err(null_arg("out_json"));
        }
        let fixtures = if fixtures_path.is_null() {
            MockFixtures::default()
        } else {
            MockFixtures::load(Path::new(str_arg(fixtures_path, "fixtures_path")?))?
        };
        let view = h.store.view(case_id)?;
        let surface = h.store.impact_surface(case_id)?;
        let session = mock_session(&fixtures, lexicon_for_store(&h.store), Vec::new());
        let decomp = session.decomposer.decompose(question, &session.oracles)?;
        let answer = run_chain(&decomp, &view, &surface, &session.oracles, &RetrievalConfig::default())?;
        let record = answer.to_record(view.symbols());
        let json = serde_json::json!({
            "case_id": case_id,
            "question": question,
            "final_answer": record.final_answer,
            "hops": record.hops,
        });
        *out_json = into_c_string(json.to_string())?;
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn cape_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the calling thread's most recent failure, or null. Valid
/// until the next library call on this thread.
#[no_mangle]
pub extern "C" fn cape_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cape_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
