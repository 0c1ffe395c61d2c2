//! C ABI over the testbed.
//!
//! A `ManetTestbed*` is an opaque handle owned by the caller and released
//! with `manet_testbed_free`. Functions return a `ManetStatus`; on failure
//! `manet_last_error` describes the error on the calling thread. Strings
//! returned by the library must be released with `manet_string_free`.
//!
//! A handle must not be used from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use manet_core::adversary::AttackBook;
use manet_core::api::{dispatch, Reply, Verb};
use manet_core::registry::{NodeRecord, Registry, RegistryError};
use manet_core::testbed::{Testbed, TestbedConfig, TestbedError};
use manet_core::topology::GenParams;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManetStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Malformed input: bad address, bad JSON, bad parameters.
    Invalid = 3,
    UnknownNode = 4,
    /// Duplicate node name, address, attack name or scenario playback.
    Duplicate = 5,
    /// A remote command holds the testbed.
    Busy = 6,
    OutOfRange = 7,
    StaleScenario = 8,
    RejectedTopology = 9,
    /// Infeasible parameters or generation exhausted.
    Generation = 10,
    ParseError = 11,
    /// Unknown scenario, attack, flow, or nothing to report.
    NotFound = 12,
    CommandFailed = 13,
    NodeInUse = 14,
    Backend = 15,
    /// A bug in the library; the handle should be dropped.
    Internal = 99,
}

/// Opaque testbed handle.
pub struct ManetTestbed {
    inner: Testbed,
}

/// Summary of a finished ping.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ManetPingResult {
    pub transmitted: u32,
    pub received: u32,
    pub loss_pct: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &TestbedError) -> ManetStatus {
    match e.kind() {
        "Busy" => ManetStatus::Busy,
        "UnknownNode" => ManetStatus::UnknownNode,
        "DuplicateName" | "DuplicateAddress" | "DuplicateAttack" | "AlreadyPlaying" => ManetStatus::Duplicate,
        "OutOfRange" => ManetStatus::OutOfRange,
        "StaleScenario" => ManetStatus::StaleScenario,
        "RejectedTopology" => ManetStatus::RejectedTopology,
        "Infeasible" | "GenerationExhausted" => ManetStatus::Generation,
        "ParseError" => ManetStatus::ParseError,
        "UnknownScenario" | "UnknownAttack" | "UnknownFlow" | "NotPlaying" | "NotExecuting" | "NoTopology" => {
            ManetStatus::NotFound
        }
        "CommandFailed" => ManetStatus::CommandFailed,
        "NodeInUse" => ManetStatus::NodeInUse,
        "BackendError" => ManetStatus::Backend,
        _ => ManetStatus::Invalid,
    }
}

struct Fail(ManetStatus, String);

impl From<TestbedError> for Fail {
    fn from(e: TestbedError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<RegistryError> for Fail {
    fn from(e: RegistryError) -> Self {
        TestbedError::from(e).into()
    }
}

/// Runs `f`, converting failures and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ManetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ManetStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal error");
            ManetStatus::Internal
        }
    }
}

unsafe fn handle<'a>(tb: *mut ManetTestbed) -> Result<&'a mut Testbed, Fail> {
    // SAFETY: the caller passes a handle from `manet_testbed_new` that is not
    // aliased for the duration of the call.
    unsafe { tb.as_mut() }
        .map(|h| &mut h.inner)
        .ok_or_else(|| Fail(ManetStatus::NullArgument, "testbed handle is NULL".into()))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(Fail(ManetStatus::NullArgument, format!("{what} is NULL")));
    }
    // SAFETY: non-NULL and, per the API contract, NUL-terminated.
    unsafe { CStr::from_ptr(s) }
        .to_str()
        .map_err(|_| Fail(ManetStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn out_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

unsafe fn write<T>(out: *mut T, value: T) {
    if !out.is_null() {
        // SAFETY: caller-supplied output pointer, checked for NULL.
        unsafe { out.write(value) };
    }
}

/// Creates an empty testbed on the simulated backend.
#[no_mangle]
pub extern "C" fn manet_testbed_new() -> *mut ManetTestbed {
    Box::into_raw(Box::new(ManetTestbed { inner: Testbed::default() }))
}

/// Creates a testbed whose nodes come from registry-file text. Returns NULL
/// on error; see `manet_last_error`.
///
/// # Safety
/// `registry_text` must be NULL or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn manet_testbed_from_registry(registry_text: *const c_char) -> *mut ManetTestbed {
    let mut out = ptr::null_mut();
    guard(|| {
        let registry = Registry::load(unsafe { text(registry_text, "registry text") }?)?;
        let tb = Testbed::with_registry(TestbedConfig::default(), registry);
        out = Box::into_raw(Box::new(ManetTestbed { inner: tb }));
        Ok(())
    });
    out
}

/// # Safety
/// `tb` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn manet_testbed_free(tb: *mut ManetTestbed) {
    if !tb.is_null() {
        // SAFETY: handle created by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(tb) });
    }
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn manet_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: produced by CString::into_raw in this library.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Message of the last failed call on this thread; empty after success.
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn manet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Current virtual time in microseconds; 0 for a NULL handle.
///
/// # Safety
/// `tb` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn manet_now(tb: *const ManetTestbed) -> u64 {
    // SAFETY: see above.
    unsafe { tb.as_ref() }.map_or(0, |h| h.inner.now())
}

/// Appends a node; its index is written to `out_index` if non-NULL.
///
/// # Safety
/// `tb` must be a live handle; string arguments NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn manet_add_node(
    tb: *mut ManetTestbed,
    name: *const c_char,
    wired_ip: *const c_char,
    wired_mac: *const c_char,
    wireless_ip: *const c_char,
    wireless_mac: *const c_char,
    out_index: *mut usize,
) -> ManetStatus {
    guard(|| unsafe {
        let tb = handle(tb)?;
        let rec = NodeRecord::parse(
            text(name, "name")?,
            text(wired_ip, "wired_ip")?,
            text(wired_mac, "wired_mac")?,
            text(wireless_ip, "wireless_ip")?,
            text(wireless_mac, "wireless_mac")?,
        )?;
        write(out_index, tb.add_node(rec)?);
        Ok(())
    })
}

/// # Safety
/// `tb` must be a live handle; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn manet_remove_node(tb: *mut ManetTestbed, name: *const c_char) -> ManetStatus {
    guard(|| unsafe {
        handle(tb)?.remove_node(text(name, "name")?)?;
        Ok(())
    })
}

/// Generates and stores a scenario of `count` topologies.
///
/// # Safety
/// `tb` must be a live handle; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn manet_build_scenario(
    tb: *mut ManetTestbed,
    name: *const c_char,
    nodes: usize,
    density: u8,
    max_degree: usize,
    seed: u64,
    count: u32,
) -> ManetStatus {
    guard(|| unsafe {
        let params = GenParams::new(nodes, density, max_degree, seed);
        handle(tb)?.build_scenario(text(name, "name")?, params, count)?;
        Ok(())
    })
}

/// Stores a scenario given in scenario-file form.
///
/// # Safety
/// `tb` must be a live handle; `scenario_text` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn manet_load_scenario(tb: *mut ManetTestbed, scenario_text: *const c_char) -> ManetStatus {
    guard(|| unsafe {
        handle(tb)?.load_scenario(text(scenario_text, "scenario text")?)?;
        Ok(())
    })
}

/// Scenario in file form, or NULL on error.
///
/// # Safety
/// `tb` must be a live handle; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn manet_save_scenario(tb: *mut ManetTestbed, name: *const c_char) -> *mut c_char {
    let mut out = ptr::null_mut();
    guard(|| unsafe {
        out = out_string(handle(tb)?.save_scenario(text(name, "name")?)?);
        Ok(())
    });
    out
}

/// # Safety
/// `tb` must be a live handle; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn manet_apply_topology(
    tb: *mut ManetTestbed,
    name: *const c_char,
    seq: u32,
    force: bool,
) -> ManetStatus {
    guard(|| unsafe {
        handle(tb)?.apply_topology(text(name, "name")?, seq, force)?;
        Ok(())
    })
}

/// Starts automatic playback of topologies `from..=to`.
///
/// # Safety
/// `tb` must be a live handle; `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn manet_play(tb: *mut ManetTestbed, name: *const c_char, from: u32, to: u32) -> ManetStatus {
    guard(|| unsafe {
        handle(tb)?.play(text(name, "name")?, from, to)?;
        Ok(())
    })
}

/// Advances the virtual clock by `delta_us`.
///
/// # Safety
/// `tb` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn manet_tick(tb: *mut ManetTestbed, delta_us: u64) -> ManetStatus {
    guard(|| unsafe {
        handle(tb)?.tick(delta_us)?;
        Ok(())
    })
}

/// Pings `dst` from `src`; the summary goes to `out` if non-NULL.
///
/// # Safety
/// `tb` must be a live handle; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn manet_ping(
    tb: *mut ManetTestbed,
    src: *const c_char,
    dst: *const c_char,
    count: u32,
    timeout_ms: u64,
    out: *mut ManetPingResult,
) -> ManetStatus {
    guard(|| unsafe {
        let r = handle(tb)?.ping(text(src, "src")?, text(dst, "dst")?, count, timeout_ms)?;
        write(out, ManetPingResult { transmitted: r.transmitted, received: r.received, loss_pct: r.loss_pct });
        Ok(())
    })
}

/// Launches an attack written as one attack-file line
/// (`name target PROTO Kind [loss normal cycles]`).
///
/// # Safety
/// `tb` must be a live handle; `line` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn manet_launch_attack(
    tb: *mut ManetTestbed,
    line: *const c_char,
    out_id: *mut u64,
) -> ManetStatus {
    guard(|| unsafe {
        let tb = handle(tb)?;
        let book = AttackBook::from_text(text(line, "attack line")?).map_err(TestbedError::from)?;
        let [spec] = book.specs() else {
            return Err(Fail(ManetStatus::Invalid, "expected exactly one attack line".into()));
        };
        write(out_id, tb.launch_attack(spec.clone())?);
        Ok(())
    })
}

/// # Safety
/// `tb` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn manet_stop_attack(tb: *mut ManetTestbed, id: u64) -> ManetStatus {
    guard(|| unsafe {
        handle(tb)?.stop_attack(id)?;
        Ok(())
    })
}

/// Runs a simulated-backend command. The exit status and output are written
/// even when the command fails (`MANET_STATUS_COMMAND_FAILED`); free the
/// output with `manet_string_free`.
///
/// # Safety
/// `tb` must be a live handle; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn manet_exec(
    tb: *mut ManetTestbed,
    node: *const c_char,
    command: *const c_char,
    out_exit_code: *mut i32,
    out_output: *mut *mut c_char,
) -> ManetStatus {
    guard(|| unsafe {
        let res = handle(tb)?.remote_exec(text(node, "node")?, text(command, "command")?);
        let (code, output) = match &res {
            Ok(o) => (o.exit_code, o.output.clone()),
            Err(TestbedError::CommandFailed { exit_code, output }) => (*exit_code, output.clone()),
            Err(_) => return res.map(drop).map_err(Fail::from),
        };
        write(out_exit_code, code);
        write(out_output, out_string(output));
        res.map(drop).map_err(Fail::from)
    })
}

/// The whole event trace, one event per line.
///
/// # Safety
/// `tb` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn manet_trace(tb: *const ManetTestbed) -> *mut c_char {
    // SAFETY: see above.
    unsafe { tb.as_ref() }.map_or(ptr::null_mut(), |h| out_string(h.inner.trace().render()))
}

/// DOT of the applied topology, or NULL if none has been applied.
///
/// # Safety
/// `tb` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn manet_current_dot(tb: *const ManetTestbed) -> *mut c_char {
    // SAFETY: see above.
    unsafe { tb.as_ref() }.and_then(|h| h.inner.current_dot()).map_or(ptr::null_mut(), out_string)
}

/// Runs any control-API command given as JSON (`{"verb": "...", ...}`) and
/// returns the reply: JSON, or plain text for DOT, scenario files and the
/// trace. On error returns NULL with the status in `out_status`.
///
/// # Safety
/// `tb` must be a live handle; `command_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn manet_dispatch(
    tb: *mut ManetTestbed,
    command_json: *const c_char,
    out_status: *mut ManetStatus,
) -> *mut c_char {
    let mut out = ptr::null_mut();
    let status = guard(|| unsafe {
        let tb = handle(tb)?;
        let verb: Verb = serde_json::from_str(text(command_json, "command")?)
            .map_err(|e| Fail(ManetStatus::Invalid, e.to_string()))?;
        out = out_string(match dispatch(tb, verb)? {
            Reply::Json(v) => v.to_string(),
            Reply::Text(t) => t,
        });
        Ok(())
    });
    unsafe { write(out_status, status) };
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_internal() {
        let st = guard(|| panic!("boom"));
        assert_eq!(st, ManetStatus::Internal);
        let msg = unsafe { CStr::from_ptr(manet_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "internal error");
        assert_eq!(guard(|| Ok(())), ManetStatus::Ok);
        assert!(unsafe { CStr::from_ptr(manet_last_error()) }.is_empty());
    }

    #[test]
    fn error_kinds_map_to_codes() {
        assert_eq!(status_of(&TestbedError::NoTopology), ManetStatus::NotFound);
        assert_eq!(status_of(&TestbedError::Invalid("x".into())), ManetStatus::Invalid);
        let busy = TestbedError::Busy { node: "a".into(), command: "sleep 1".into() };
        assert_eq!(status_of(&busy), ManetStatus::Busy);
    }
}
