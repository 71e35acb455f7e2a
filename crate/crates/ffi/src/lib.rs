//! C ABI over `dnmap`.
//!
//! Objects are opaque and owned by the caller once returned; free them with
//! the matching `*_free` function. Every fallible call returns a
//! [`DnmapStatus`]; on failure the message is available from
//! [`dnmap_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dnmap::characterization::{full_report, CheckConfig, Verdict};
use dnmap::forward::{dn_disk, dn_mesh_operator, parse_off, SurfaceMesh};
use dnmap::io::{operator_from_json, to_json_string};
use dnmap::operator::winding_number;
use dnmap::topology::{topology_of, TopologyConfig};
use dnmap::{BoundaryFunction, BoundaryOperator, Error, GridSpec, C64};

/// Result of a call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DnmapStatus {
    Ok = 0,
    NullPointer = 1,
    /// Malformed or inconsistent input.
    InvalidInput = 2,
    /// The computation broke down (rank ambiguity, ill-conditioned winding...).
    Numerical = 3,
    /// An internal panic was caught.
    Panic = 4,
}

/// Opaque boundary operator.
pub struct DnmapOperator(BoundaryOperator);

/// Opaque triangle mesh.
pub struct DnmapMesh(SurfaceMesh);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DnmapTopology {
    pub handle_rank: usize,
    pub euler_characteristic: i64,
    pub genus: usize,
    pub gap_ratio: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DnmapStatus {
    if e.is_input_error() {
        DnmapStatus::InvalidInput
    } else {
        DnmapStatus::Numerical
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (DnmapStatus, String)>) -> DnmapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DnmapStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DnmapStatus::Panic
        }
    }
}

fn lib(e: Error) -> (DnmapStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DnmapStatus, String) {
    (DnmapStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DnmapStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DnmapStatus::InvalidInput, format!("{what} is not UTF-8")))
}

fn into_c_string(s: String) -> Result<*mut c_char, (DnmapStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (DnmapStatus::InvalidInput, "string contains NUL".into()))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dnmap_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Operator of the unit disk truncated to `modes` modes.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dnmap_operator_disk(modes: usize, out: *mut *mut DnmapOperator) -> DnmapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = GridSpec::unit_circle(modes).map_err(lib)?;
        *out = Box::into_raw(Box::new(DnmapOperator(dn_disk(g))));
        Ok(())
    })
}

/// Parses an operator from JSON text with an inline matrix.
///
/// # Safety
/// `json` must be null or a NUL-terminated string; `out` null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn dnmap_operator_from_json(json: *const c_char, out: *mut *mut DnmapOperator) -> DnmapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(json, "json")?;
        let op = operator_from_json(text, None).map_err(lib)?;
        *out = Box::into_raw(Box::new(DnmapOperator(op)));
        Ok(())
    })
}

/// Serializes an operator (matrix inline). Free the result with
/// [`dnmap_string_free`].
///
/// # Safety
/// `op` must be null or a live handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dnmap_operator_to_json(op: *const DnmapOperator, out: *mut *mut c_char) -> DnmapStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = into_c_string(to_json_string(&op.0, None).map_err(lib)?)?;
        Ok(())
    })
}

/// Number of modes `N` of an operator, or 0 for a null handle.
///
/// # Safety
/// `op` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dnmap_operator_modes(op: *const DnmapOperator) -> usize {
    op.as_ref().map_or(0, |o| o.0.grid().modes)
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dnmap_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `op` must be null or a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dnmap_operator_free(op: *mut DnmapOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// # Safety
/// `mesh` must be null or a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dnmap_mesh_free(mesh: *mut DnmapMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Handle rank, Euler characteristic and genus. `discretized != 0` selects
/// the gap-based threshold meant for finite-element operators.
///
/// # Safety
/// `op` must be null or a live handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dnmap_topology(op: *const DnmapOperator, discretized: i32, out: *mut DnmapTopology) -> DnmapStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let cfg = if discretized != 0 { TopologyConfig::discretized() } else { TopologyConfig::default() };
        let t = topology_of(&op.0, &cfg).map_err(lib)?;
        *out = DnmapTopology {
            handle_rank: t.handle_rank,
            euler_characteristic: t.euler_characteristic,
            genus: t.genus,
            gap_ratio: t.gap_ratio,
        };
        Ok(())
    })
}

/// Runs all characterization checks with default tolerances. `verdict`
/// receives 0 (pass), 1 (fail) or 2 (undecided); `report`, if not null,
/// receives the JSON report, to be freed with [`dnmap_string_free`].
///
/// # Safety
/// `op` must be null or a live handle; `verdict` null or valid for writes;
/// `report` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dnmap_check(
    op: *const DnmapOperator,
    seed: u64,
    verdict: *mut i32,
    report: *mut *mut c_char,
) -> DnmapStatus {
    guard(|| {
        let op = op.as_ref().ok_or_else(|| null("op"))?;
        let verdict = verdict.as_mut().ok_or_else(|| null("verdict"))?;
        let cfg = CheckConfig {
            seed,
            ..CheckConfig::default()
        };
        let r = full_report(&op.0, &cfg);
        *verdict = match r.verdict {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Uncertain => 2,
        };
        if !report.is_null() {
            *report = into_c_string(to_json_string(&r, None).map_err(lib)?)?;
        }
        Ok(())
    })
}

/// Winding number about `z` of the curve with Fourier coefficients
/// `coeffs` (interleaved re, im; `2(2N + 1)` doubles for modes `-N..=N`) on
/// the unit circle.
///
/// # Safety
/// `coeffs` must be null or valid for `2(2 modes + 1)` reads; `out` null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dnmap_winding_number(
    coeffs: *const f64,
    modes: usize,
    z_re: f64,
    z_im: f64,
    out: *mut i64,
) -> DnmapStatus {
    guard(|| {
        if coeffs.is_null() {
            return Err(null("coeffs"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let g = GridSpec::unit_circle(modes).map_err(lib)?;
        let raw = std::slice::from_raw_parts(coeffs, 2 * g.size());
        let c: Vec<C64> = raw.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect();
        let eta = BoundaryFunction::from_coeffs(g, c).map_err(lib)?;
        *out = winding_number(&eta, C64::new(z_re, z_im)).map_err(lib)?.value;
        Ok(())
    })
}

/// Parses an ASCII OFF mesh.
///
/// # Safety
/// `text` must be null or a NUL-terminated string; `out` null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn dnmap_mesh_from_off(text: *const c_char, out: *mut *mut DnmapMesh) -> DnmapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(text, "text")?;
        let (v, t) = parse_off(text).map_err(lib)?;
        let mesh = SurfaceMesh::new(v, t, None).map_err(lib)?;
        *out = Box::into_raw(Box::new(DnmapMesh(mesh)));
        Ok(())
    })
}

/// Finite-element operator of a mesh, projected to `modes` modes.
///
/// # Safety
/// `mesh` must be null or a live handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dnmap_dn_from_mesh(mesh: *const DnmapMesh, modes: usize, out: *mut *mut DnmapOperator) -> DnmapStatus {
    guard(|| {
        let mesh = mesh.as_ref().ok_or_else(|| null("mesh"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let g = GridSpec::unit_circle(modes).map_err(lib)?;
        let op = dn_mesh_operator(&mesh.0, g).map_err(lib)?;
        *out = Box::into_raw(Box::new(DnmapOperator(op)));
        Ok(())
    })
}
