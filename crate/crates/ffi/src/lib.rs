// SPDX-License-Identifier: Apache-2.0

//! C ABI over the chipforge core.
//!
//! Every function returns a [`CfStatus`]. On failure a message is kept per
//! thread and can be read with [`cf_last_error`]. Strings handed out by the
//! library are owned by the caller and must be released with
//! [`cf_string_free`]. Structured values cross the boundary as JSON.

use chipforge::desc::validate_description;
use chipforge::dse::{self, AIModelGraph, DesignConfig};
use chipforge::library::{CodeLibrary, LibraryConfig, LibraryError};
use chipforge::metrics::pass_at_k;
use chipforge::validator::{inject_noise, DEFAULT_ALPHABET};
use chipforge::{hdl, Ppa, PpaSource};
use serde_json::json;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// Argument outside the function's mathematical domain.
    Domain = 4,
    NotFound = 5,
    Io = 6,
    /// Malformed JSON or a description that fails schema checks.
    Schema = 7,
    Panic = 99,
}

/// Opaque code-library handle.
pub struct CfLibrary {
    lib: CodeLibrary,
    config: LibraryConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CfStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: CfStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> CfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(CfStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(CfStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().map_or_else(
        || fail(CfStatus::NullPointer, format!("{what} is null")),
        Ok,
    )
}

unsafe fn lib_arg<'a>(p: *mut CfLibrary) -> FfiResult<&'a mut CfLibrary> {
    out_arg(p, "library handle")
}

fn give_string(s: String, out: &mut *mut c_char) -> FfiResult<()> {
    let c = CString::new(s)
        .or_else(|_| fail(CfStatus::InvalidArgument, "result contains a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

fn library_failure(e: LibraryError) -> Failure {
    let status = match e {
        LibraryError::InvalidConfig(_) => CfStatus::InvalidArgument,
        LibraryError::UnknownKey(_) => CfStatus::NotFound,
        LibraryError::Persistence(_) => CfStatus::Io,
        LibraryError::Corrupt { .. } => CfStatus::Schema,
    };
    Failure(status, e.to_string())
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Unbiased pass@k for `n` generations with `c` successes.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_pass_at_k(n: u64, c: u64, k: u64, out: *mut f64) -> CfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = pass_at_k(n, c, k).map_err(|e| Failure(CfStatus::Domain, e.to_string()))?;
        Ok(())
    })
}

/// Creates an empty in-memory code library with default thresholds.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_library_new(
    embedding_dim: usize,
    out: *mut *mut CfLibrary,
) -> CfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if embedding_dim == 0 {
            return fail(CfStatus::InvalidArgument, "embedding_dim must be positive");
        }
        let config = LibraryConfig {
            embedding_dim,
            ..Default::default()
        };
        *out = Box::into_raw(Box::new(CfLibrary {
            lib: CodeLibrary::in_memory(embedding_dim),
            config,
        }));
        Ok(())
    })
}

/// Opens (or starts) a JSON-lines library file. Changes persist on insert,
/// update and [`cf_library_save`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_library_open(
    path: *const c_char,
    embedding_dim: usize,
    out: *mut *mut CfLibrary,
) -> CfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        if embedding_dim == 0 {
            return fail(CfStatus::InvalidArgument, "embedding_dim must be positive");
        }
        let lib = CodeLibrary::open(path, embedding_dim).map_err(library_failure)?;
        let config = LibraryConfig {
            embedding_dim,
            ..Default::default()
        };
        *out = Box::into_raw(Box::new(CfLibrary { lib, config }));
        Ok(())
    })
}

/// Releases a library handle. Null is ignored.
///
/// # Safety
/// `lib` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cf_library_free(lib: *mut CfLibrary) {
    if !lib.is_null() {
        drop(Box::from_raw(lib));
    }
}

/// Replaces the retrieval and weight-update parameters.
///
/// # Safety
/// `lib` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cf_library_configure(
    lib: *mut CfLibrary,
    t_sim: f64,
    t_w: f64,
    t_h: f64,
    alpha: f64,
    beta: f64,
) -> CfStatus {
    guard(|| {
        let lib = lib_arg(lib)?;
        let config = LibraryConfig {
            t_sim,
            t_w,
            t_h,
            alpha,
            beta,
            embedding_dim: lib.config.embedding_dim,
        };
        config.check().map_err(library_failure)?;
        lib.config = config;
        Ok(())
    })
}

/// Number of entries.
///
/// # Safety
/// `lib` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_library_len(lib: *const CfLibrary, out: *mut usize) -> CfStatus {
    guard(|| {
        let lib = lib
            .as_ref()
            .map_or_else(|| fail(CfStatus::NullPointer, "library handle is null"), Ok)?;
        *out_arg(out, "out")? = lib.lib.len();
        Ok(())
    })
}

/// Adds validated code at the initial weight.
///
/// # Safety
/// `lib` must be a live handle; `key` and `code` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn cf_library_insert(
    lib: *mut CfLibrary,
    key: *const c_char,
    code: *const c_char,
    power_mw: f64,
    clk_mhz: f64,
    area_mm2: f64,
) -> CfStatus {
    guard(|| {
        let lib = lib_arg(lib)?;
        let key = str_arg(key, "key")?;
        let code = str_arg(code, "code")?;
        if key.trim().is_empty() {
            return fail(CfStatus::InvalidArgument, "key is empty");
        }
        let ppa = Ppa::new(power_mw, clk_mhz, area_mm2, PpaSource::Real);
        lib.lib
            .insert(key, code, ppa, &lib.config)
            .map_err(library_failure)?;
        Ok(())
    })
}

/// Looks `query` up and writes the decision as JSON:
/// `{"outcome": "retrieve"|"generate", "reason": ..., "key", "similarity",
/// "weight", "code"}` with the last four null for an empty library.
///
/// # Safety
/// `lib` must be a live handle, `query` a NUL-terminated string and
/// `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_library_retrieve(
    lib: *const CfLibrary,
    query: *const c_char,
    out_json: *mut *mut c_char,
) -> CfStatus {
    guard(|| {
        let lib = lib
            .as_ref()
            .map_or_else(|| fail(CfStatus::NullPointer, "library handle is null"), Ok)?;
        let query = str_arg(query, "query")?;
        let out = out_arg(out_json, "out_json")?;
        let d = lib.lib.retrieve(query, &lib.config);
        let (key, sim, weight, code) = match &d.best {
            Some((e, s)) => (json!(e.key), json!(s), json!(e.weight), json!(e.code)),
            None => (json!(null), json!(null), json!(null), json!(null)),
        };
        let v = json!({
            "outcome": d.outcome,
            "reason": d.reason,
            "key": key,
            "similarity": sim,
            "weight": weight,
            "code": code,
        });
        give_string(v.to_string(), out)
    })
}

/// Records one simulation outcome for `key`, then collects entries whose
/// weight fell below `t_h`.
///
/// # Safety
/// `lib` must be a live handle and `key` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cf_library_update(
    lib: *mut CfLibrary,
    key: *const c_char,
    passed: bool,
) -> CfStatus {
    guard(|| {
        let lib = lib_arg(lib)?;
        let key = str_arg(key, "key")?;
        let cfg = lib.config.clone();
        lib.lib
            .update_weights(&[(key.to_string(), passed)], &cfg)
            .map_err(library_failure)?;
        Ok(())
    })
}

/// Current weight of `key`.
///
/// # Safety
/// `lib` must be a live handle, `key` a NUL-terminated string and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_library_weight(
    lib: *const CfLibrary,
    key: *const c_char,
    out: *mut f64,
) -> CfStatus {
    guard(|| {
        let lib = lib
            .as_ref()
            .map_or_else(|| fail(CfStatus::NullPointer, "library handle is null"), Ok)?;
        let key = str_arg(key, "key")?;
        let out = out_arg(out, "out")?;
        match lib.lib.get(key) {
            Some(e) => {
                *out = e.weight;
                Ok(())
            }
            None => fail(
                CfStatus::NotFound,
                format!("unknown code-library key {key:?}"),
            ),
        }
    })
}

/// Writes the library to its file; a no-op for in-memory libraries.
///
/// # Safety
/// `lib` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cf_library_save(lib: *const CfLibrary) -> CfStatus {
    guard(|| {
        let lib = lib
            .as_ref()
            .map_or_else(|| fail(CfStatus::NullPointer, "library handle is null"), Ok)?;
        lib.lib.save().map_err(library_failure)
    })
}

/// Checks a module description and writes it back in canonical JSON.
///
/// # Safety
/// `raw_json` must be a NUL-terminated string and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_validate_description(
    raw_json: *const c_char,
    out_json: *mut *mut c_char,
) -> CfStatus {
    guard(|| {
        let raw = str_arg(raw_json, "raw_json")?;
        let out = out_arg(out_json, "out_json")?;
        let desc =
            validate_description(raw).map_err(|e| Failure(CfStatus::Schema, e.to_string()))?;
        give_string(desc.to_json(), out)
    })
}

/// Evaluates one configuration against a model graph with the analytical
/// cost model. Inputs and output are JSON.
///
/// # Safety
/// `graph_json` and `config_json` must be NUL-terminated strings and
/// `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_dse_evaluate(
    graph_json: *const c_char,
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> CfStatus {
    guard(|| {
        let graph: AIModelGraph = serde_json::from_str(str_arg(graph_json, "graph_json")?)
            .map_err(|e| Failure(CfStatus::Schema, format!("graph: {e}")))?;
        let config: DesignConfig = serde_json::from_str(str_arg(config_json, "config_json")?)
            .map_err(|e| Failure(CfStatus::Schema, format!("config: {e}")))?;
        let out = out_arg(out_json, "out_json")?;
        if config.size_sa.0 == 0
            || config.size_sa.1 == 0
            || config.n_sa == 0
            || config.n_act == 0
            || config.bw == 0
        {
            return fail(
                CfStatus::InvalidArgument,
                "configuration values must be positive",
            );
        }
        let eval = dse::evaluate(&config, &graph);
        give_string(serde_json::to_string(&eval).expect("serializable"), out)
    })
}

/// Whitespace-delimited token count used for noise budgets.
///
/// # Safety
/// `code` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_token_count(code: *const c_char, out: *mut usize) -> CfStatus {
    guard(|| {
        let code = str_arg(code, "code")?;
        *out_arg(out, "out")? = hdl::token_count(code);
        Ok(())
    })
}

/// Inserts `floor(pct * code_tokens / 100)` symbols from the default
/// alphabet into the first fenced code section of `prompt`.
///
/// # Safety
/// `prompt` must be a NUL-terminated string; `out_prompt` and
/// `out_inserted` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cf_inject_noise(
    prompt: *const c_char,
    code_tokens: usize,
    pct: f64,
    seed: u64,
    out_prompt: *mut *mut c_char,
    out_inserted: *mut usize,
) -> CfStatus {
    guard(|| {
        let prompt = str_arg(prompt, "prompt")?;
        let out = out_arg(out_prompt, "out_prompt")?;
        let inserted = out_arg(out_inserted, "out_inserted")?;
        if !(0.0..=100.0).contains(&pct) {
            return fail(
                CfStatus::Domain,
                format!("noise percentage {pct} outside [0, 100]"),
            );
        }
        let alphabet: Vec<String> = DEFAULT_ALPHABET.iter().map(|s| s.to_string()).collect();
        let (noisy, n) = inject_noise(prompt, code_tokens, pct, &alphabet, seed);
        give_string(noisy, out)?;
        *inserted = n;
        Ok(())
    })
}
