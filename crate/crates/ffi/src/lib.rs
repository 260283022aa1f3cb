//! C interface to the tutor engine.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Strings returned through out-parameters are
//! heap allocated and released with [`ts_string_free`]. Every function
//! returns a [`TsStatus`]; on failure [`ts_last_error`] describes the
//! problem for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use tutorsim::generators::{generate, ProblemSpec};
use tutorsim::graph::{load_graph, BehaviorGraph, GraphCursor, GraphError};
use tutorsim::matcher::MatcherSpec;
use tutorsim::model::{ProblemState, Sai};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    IllegalApply = 4,
    NoDemo = 5,
    Generate = 6,
    Panic = 7,
}

/// A loaded behavior graph.
pub struct TsGraph(Arc<BehaviorGraph>);

/// A position within a behavior graph.
pub struct TsCursor(GraphCursor);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

type FfiResult<T> = Result<T, (TsStatus, String)>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> TsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TsStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TsStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err((TsStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (TsStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or((TsStatus::NullArgument, format!("{what} is null")))
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes removed")
        .into_raw()
}

fn parse_sai(json: &str) -> FfiResult<Sai> {
    Sai::parse(json).map_err(|e| (TsStatus::Parse, e.to_string()))
}

/// Message for the last failed call on this thread; empty after a
/// successful call. Owned by the library and valid until the next call.
#[no_mangle]
pub extern "C" fn ts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn ts_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a behavior-graph JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_graph_load(json: *const c_char, out_graph: *mut *mut TsGraph) -> TsStatus {
    guard(|| {
        let slot = out(out_graph, "out_graph")?;
        let g = load_graph(text(json, "json")?).map_err(|e| (TsStatus::Parse, e.to_string()))?;
        *slot = Box::into_raw(Box::new(TsGraph(Arc::new(g))));
        Ok(())
    })
}

/// Generates a graph from a problem spec, e.g.
/// `{"domain_id":"fraction_arithmetic","seed":1,"params":{"kind":"multiply"}}`.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_graph_generate(spec_json: *const c_char, out_graph: *mut *mut TsGraph) -> TsStatus {
    guard(|| {
        let slot = out(out_graph, "out_graph")?;
        let spec: ProblemSpec =
            serde_json::from_str(text(spec_json, "spec_json")?).map_err(|e| (TsStatus::Parse, e.to_string()))?;
        let g = generate(&spec).map_err(|e| (TsStatus::Generate, e.to_string()))?;
        *slot = Box::into_raw(Box::new(TsGraph(Arc::new(g))));
        Ok(())
    })
}

/// Serializes a graph to its canonical JSON document.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_graph_to_json(graph: *const TsGraph, out_json: *mut *mut c_char) -> TsStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        let g = graph.as_ref().ok_or((TsStatus::NullArgument, "graph is null".into()))?;
        *slot = c_string(g.0.to_json());
        Ok(())
    })
}

/// # Safety
/// `graph` must come from this library, or be null. Cursors created from
/// it stay valid.
#[no_mangle]
pub unsafe extern "C" fn ts_graph_free(graph: *mut TsGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Creates a cursor at the graph's start state.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_cursor_new(graph: *const TsGraph, out_cursor: *mut *mut TsCursor) -> TsStatus {
    guard(|| {
        let slot = out(out_cursor, "out_cursor")?;
        let g = graph.as_ref().ok_or((TsStatus::NullArgument, "graph is null".into()))?;
        *slot = Box::into_raw(Box::new(TsCursor(GraphCursor::new(g.0.clone()))));
        Ok(())
    })
}

/// # Safety
/// `cursor` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn ts_cursor_free(cursor: *mut TsCursor) {
    if !cursor.is_null() {
        drop(Box::from_raw(cursor));
    }
}

/// Canonical JSON of the current problem state.
///
/// # Safety
/// `cursor` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_cursor_state_json(cursor: *const TsCursor, out_json: *mut *mut c_char) -> TsStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        let c = cursor
            .as_ref()
            .ok_or((TsStatus::NullArgument, "cursor is null".into()))?;
        *slot = c_string(c.0.state().to_canonical_json());
        Ok(())
    })
}

/// Grades an action without changing the cursor. `out_reward` receives 1
/// or -1.
///
/// # Safety
/// `cursor` must be a live handle; `sai_json` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ts_cursor_check(
    cursor: *const TsCursor,
    sai_json: *const c_char,
    out_reward: *mut i32,
) -> TsStatus {
    guard(|| {
        let slot = out(out_reward, "out_reward")?;
        let c = cursor
            .as_ref()
            .ok_or((TsStatus::NullArgument, "cursor is null".into()))?;
        let sai = parse_sai(text(sai_json, "sai_json")?)?;
        *slot = c.0.check(&sai).reward.value() as i32;
        Ok(())
    })
}

/// Grades an action and, when correct, advances the cursor. An incorrect
/// action leaves the cursor unchanged and still returns `Ok` with reward -1.
///
/// # Safety
/// `cursor` must be a live handle; `sai_json` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ts_cursor_apply(
    cursor: *mut TsCursor,
    sai_json: *const c_char,
    out_reward: *mut i32,
) -> TsStatus {
    guard(|| {
        let slot = out(out_reward, "out_reward")?;
        let c = cursor
            .as_mut()
            .ok_or((TsStatus::NullArgument, "cursor is null".into()))?;
        let sai = parse_sai(text(sai_json, "sai_json")?)?;
        let grade = c.0.check(&sai);
        if grade.is_correct() {
            c.0.apply(&sai).map_err(|e| (TsStatus::IllegalApply, e.to_string()))?;
        }
        *slot = grade.reward.value() as i32;
        Ok(())
    })
}

/// The canonical demonstration for the current state as action JSON.
///
/// # Safety
/// `cursor` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_cursor_get_demo(cursor: *const TsCursor, out_json: *mut *mut c_char) -> TsStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        let c = cursor
            .as_ref()
            .ok_or((TsStatus::NullArgument, "cursor is null".into()))?;
        let sai = c.0.get_demo().map_err(|e| match e {
            GraphError::NoDemoAvailable => (TsStatus::NoDemo, e.to_string()),
            e => (TsStatus::IllegalApply, e.to_string()),
        })?;
        *slot = c_string(serde_json::to_string(&sai).expect("sai serializes"));
        Ok(())
    })
}

/// # Safety
/// `cursor` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_cursor_is_done(cursor: *const TsCursor, out_done: *mut bool) -> TsStatus {
    guard(|| {
        let slot = out(out_done, "out_done")?;
        let c = cursor
            .as_ref()
            .ok_or((TsStatus::NullArgument, "cursor is null".into()))?;
        *slot = c.0.is_done();
        Ok(())
    })
}

/// Tests `input` against a matcher spec given as JSON. `state_json` may be
/// null; otherwise placeholders resolve against that state.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_matches(
    matcher_json: *const c_char,
    input: *const c_char,
    state_json: *const c_char,
    out_match: *mut bool,
) -> TsStatus {
    guard(|| {
        let slot = out(out_match, "out_match")?;
        let spec: MatcherSpec =
            serde_json::from_str(text(matcher_json, "matcher_json")?).map_err(|e| (TsStatus::Parse, e.to_string()))?;
        spec.validate().map_err(|e| (TsStatus::Parse, e.to_string()))?;
        let input = text(input, "input")?;
        *slot = if state_json.is_null() {
            spec.matches(input)
        } else {
            let state = ProblemState::from_json(text(state_json, "state_json")?)
                .map_err(|e| (TsStatus::Parse, e.to_string()))?;
            spec.matches_in(&state, input)
        };
        Ok(())
    })
}
