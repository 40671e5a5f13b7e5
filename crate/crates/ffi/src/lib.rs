//! C ABI over the workbench. A session is an opaque handle; arguments and
//! results cross the boundary as NUL-terminated UTF-8 JSON. Every function
//! returns a status code, and the message for the last failure on the
//! calling thread is available from `pd_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use powerdesk::orchestrator::{Orchestrator, Transcript};
use powerdesk::session::{load_session, new_session_id, save_session, AgentContext};
use powerdesk::tools::{default_registry, ToolEnv, ToolError};
use serde_json::{json, Value};

/// Status codes returned by every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    /// The tool name is not registered.
    UnknownTool = 4,
    /// Arguments failed the tool's schema.
    InvalidArguments = 5,
    /// The tool ran but its result did not pass validation; the result
    /// document is still written.
    ToolFailed = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque session: the agent context, its transcript and an orchestrator.
pub struct PdSession {
    orchestrator: Orchestrator,
    ctx: AgentContext,
    transcript: Transcript,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

type Outcome = Result<(), (PdStatus, String)>;

/// Runs `f` with panics caught and the error slot maintained.
fn guarded(f: impl FnOnce() -> Outcome) -> PdStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PdStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PdStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PdStatus, String)> {
    if p.is_null() {
        return Err((PdStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (PdStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn session_mut<'a>(s: *mut PdSession) -> Result<&'a mut PdSession, (PdStatus, String)> {
    s.as_mut().ok_or((PdStatus::NullArgument, "session is null".into()))
}

unsafe fn write_out(out: *mut *mut c_char, v: &Value) -> Outcome {
    if out.is_null() {
        return Err((PdStatus::NullArgument, "output pointer is null".into()));
    }
    let s = CString::new(v.to_string()).map_err(|e| (PdStatus::Panic, e.to_string()))?;
    *out = s.into_raw();
    Ok(())
}

fn new_session(ctx: AgentContext) -> *mut PdSession {
    Box::into_raw(Box::new(PdSession {
        orchestrator: Orchestrator::deterministic(default_registry(ToolEnv {
            parallel_sweeps: true,
            ..Default::default()
        })),
        ctx,
        transcript: Transcript::default(),
    }))
}

/// Creates an empty session. Free it with `pd_session_free`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn pd_session_new(out: *mut *mut PdSession) -> PdStatus {
    guarded(|| {
        if out.is_null() {
            return Err((PdStatus::NullArgument, "output pointer is null".into()));
        }
        *out = new_session(AgentContext::new(new_session_id()));
        Ok(())
    })
}

/// Loads a session saved with `pd_session_save`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pd_session_load(path: *const c_char, out: *mut *mut PdSession) -> PdStatus {
    guarded(|| {
        let path = read_str(path, "path")?;
        if out.is_null() {
            return Err((PdStatus::NullArgument, "output pointer is null".into()));
        }
        let ctx = load_session(Path::new(path)).map_err(|e| (PdStatus::Io, e.to_string()))?;
        *out = new_session(ctx);
        Ok(())
    })
}

/// Writes the session to `path` as JSON.
///
/// # Safety
/// `session` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pd_session_save(session: *mut PdSession, path: *const c_char) -> PdStatus {
    guarded(|| {
        let s = session_mut(session)?;
        let path = read_str(path, "path")?;
        save_session(&s.ctx, Path::new(path)).map_err(|e| (PdStatus::Io, e.to_string()))
    })
}

/// Releases a session. Null is ignored.
///
/// # Safety
/// `session` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pd_session_free(session: *mut PdSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Runs one tool with JSON arguments and writes the result document to
/// `out_json`. Free the string with `pd_string_free`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pd_invoke(
    session: *mut PdSession,
    tool: *const c_char,
    args_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PdStatus {
    guarded(|| {
        let s = session_mut(session)?;
        let tool = read_str(tool, "tool")?;
        let args: Value = if args_json.is_null() {
            json!({})
        } else {
            serde_json::from_str(read_str(args_json, "arguments")?)
                .map_err(|e| (PdStatus::InvalidJson, format!("arguments: {e}")))?
        };
        let registry = &s.orchestrator.registry;
        let result = registry.invoke(tool, &args, &mut s.ctx).map_err(|e| match e {
            ToolError::UnknownTool(_) => (PdStatus::UnknownTool, e.to_string()),
            other => (PdStatus::InvalidArguments, other.to_string()),
        })?;
        let doc = serde_json::to_value(&result).map_err(|e| (PdStatus::Panic, e.to_string()))?;
        write_out(out_json, &doc)?;
        if result.ok {
            Ok(())
        } else {
            let msg = result.payload["error"]
                .as_str()
                .or_else(|| result.payload["clarification"].as_str())
                .unwrap_or("tool failed");
            Err((PdStatus::ToolFailed, msg.to_string()))
        }
    })
}

/// Handles one conversational turn and writes
/// `{response, provenance, agent, workflow, results}` to `out_json`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pd_chat(session: *mut PdSession, utterance: *const c_char, out_json: *mut *mut c_char) -> PdStatus {
    guarded(|| {
        let s = session_mut(session)?;
        let utterance = read_str(utterance, "utterance")?;
        let reply = s.orchestrator.handle_turn(utterance, &mut s.ctx, &mut s.transcript);
        let doc = json!({
            "response": reply.response,
            "provenance": reply.provenance,
            "agent": reply.agent,
            "workflow": reply.workflow,
            "results": reply.results,
        });
        write_out(out_json, &doc)
    })
}

/// Writes the session summary (case, version, freshness) to `out_json`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_session_summary(session: *mut PdSession, out_json: *mut *mut c_char) -> PdStatus {
    guarded(|| {
        let s = session_mut(session)?;
        let doc = serde_json::to_value(s.ctx.summary()).map_err(|e| (PdStatus::Panic, e.to_string()))?;
        write_out(out_json, &doc)
    })
}

/// Tool declarations as a JSON array.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_tool_catalog(session: *mut PdSession, out_json: *mut *mut c_char) -> PdStatus {
    guarded(|| {
        let s = session_mut(session)?;
        write_out(out_json, &Value::Array(s.orchestrator.registry.declarations()))
    })
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn pd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn pd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
