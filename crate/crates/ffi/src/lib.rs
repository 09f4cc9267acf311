//! C ABI over the `hibem` solver.
//!
//! Objects are handed out as opaque pointers and released with the matching
//! `*_free` function. Every fallible call returns a [`HibemStatus`]; the
//! message of the most recent failure on the calling thread is available
//! through [`hibem_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hibem::adaptivity::AdaptiveTrace;
use hibem::config::RunConfig;
use hibem::experiment;
use hibem::geometry::BoundaryGeometry;
use hibem::mesh::{Element, MultiPatchMesh};
use hibem::Error;

/// Result codes of all fallible functions.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HibemStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    NumericalError = 4,
    IoError = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Boundary geometry (opaque).
pub struct HibemGeometry(BoundaryGeometry);

/// Admissible hierarchical mesh (opaque).
pub struct HibemMesh(MultiPatchMesh);

/// Result of an experiment run (opaque).
pub struct HibemTrace {
    trace: AdaptiveTrace,
    csv: String,
}

/// An active element: cell `(i1, i2)` of level `level` on patch `patch`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HibemElement {
    pub patch: usize,
    pub level: usize,
    pub i1: usize,
    pub i2: usize,
}

/// One iteration of a run; `energy_error` is NaN when unavailable.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HibemTraceRow {
    pub ell: usize,
    pub num_elements: usize,
    pub dofs: usize,
    pub estimator: f64,
    pub energy_error: f64,
    pub num_marked: usize,
    pub seconds: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> HibemStatus {
    match e {
        _ if e.is_numerical() => HibemStatus::NumericalError,
        Error::Config(_) | Error::Json(_) => HibemStatus::ConfigError,
        Error::Io(_) => HibemStatus::IoError,
        _ => HibemStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), HibemStatus>) -> HibemStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HibemStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            HibemStatus::Panic
        }
    }
}

fn lift<T>(r: hibem::Result<T>) -> Result<T, HibemStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn null() -> HibemStatus {
    set_error("null pointer argument");
    HibemStatus::NullPointer
}

/// # Safety
/// `p` must be null or point to a live object of type `T`.
unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, HibemStatus> {
    p.as_ref().ok_or_else(null)
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn string<'a>(p: *const c_char) -> Result<&'a str, HibemStatus> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string is not valid UTF-8");
        HibemStatus::InvalidArgument
    })
}

/// # Safety
/// `out` must be null or valid for one write.
unsafe fn store<T>(out: *mut T, value: T) -> Result<(), HibemStatus> {
    if out.is_null() {
        return Err(null());
    }
    out.write(value);
    Ok(())
}

/// Copies `text` NUL-terminated into `buf` of capacity `len`; `needed`
/// receives the capacity required, terminator included. Leaves the last
/// error untouched.
///
/// # Safety
/// `buf` must be valid for `len` bytes when non-null; `needed` null or valid.
unsafe fn copy_out(text: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), HibemStatus> {
    let bytes = text.as_bytes();
    if !needed.is_null() {
        needed.write(bytes.len() + 1);
    }
    if buf.is_null() || len < bytes.len() + 1 {
        return Err(HibemStatus::BufferTooSmall);
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
    *buf.add(bytes.len()) = 0;
    Ok(())
}

/// Message of the last failure on this thread, NUL-terminated. `needed`
/// receives the required capacity; `BufferTooSmall` is returned and nothing
/// is written when `len` is short of it.
///
/// # Safety
/// `buf` must be valid for `len` bytes when non-null; `needed` null or valid.
#[no_mangle]
pub unsafe extern "C" fn hibem_last_error_message(buf: *mut c_char, len: usize, needed: *mut usize) -> HibemStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    guard(|| copy_out(&msg, buf, len, needed))
}

/// Geometry by fixture name (`cube`, `quarter_pipe`) or JSON file path.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hibem_geometry_new(name: *const c_char, out: *mut *mut HibemGeometry) -> HibemStatus {
    guard(|| {
        let g = lift(BoundaryGeometry::by_name(string(name)?))?;
        store(out, Box::into_raw(Box::new(HibemGeometry(g))))
    })
}

/// Geometry from a JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hibem_geometry_from_json(json: *const c_char, out: *mut *mut HibemGeometry) -> HibemStatus {
    guard(|| {
        let g = lift(BoundaryGeometry::from_json(string(json)?))?;
        store(out, Box::into_raw(Box::new(HibemGeometry(g))))
    })
}

/// # Safety
/// `geom` must be null or a handle from `hibem_geometry_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hibem_geometry_free(geom: *mut HibemGeometry) {
    if !geom.is_null() {
        drop(Box::from_raw(geom));
    }
}

/// # Safety
/// `geom` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hibem_geometry_num_patches(geom: *const HibemGeometry, out: *mut usize) -> HibemStatus {
    guard(|| store(out, deref(geom)?.0.num_patches()))
}

/// Point `gamma_patch(u, v)` written to `out[0..3]`.
///
/// # Safety
/// `geom` must be a live handle; `out` valid for three writes.
#[no_mangle]
pub unsafe extern "C" fn hibem_geometry_eval(
    geom: *const HibemGeometry,
    patch: usize,
    u: f64,
    v: f64,
    out: *mut f64,
) -> HibemStatus {
    guard(|| {
        let g = &deref(geom)?.0;
        if patch >= g.num_patches() || !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            set_error(format!("no parameter point ({u}, {v}) on patch {patch}"));
            return Err(HibemStatus::InvalidArgument);
        }
        if out.is_null() {
            return Err(null());
        }
        let x = g.eval(patch, [u, v]);
        for (k, c) in x.iter().enumerate() {
            out.add(k).write(*c);
        }
        Ok(())
    })
}

/// Initial mesh of polynomial degree `p` on `geom`.
///
/// # Safety
/// `geom` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hibem_mesh_initial(geom: *const HibemGeometry, p: usize, out: *mut *mut HibemMesh) -> HibemStatus {
    guard(|| {
        let m = lift(deref(geom)?.0.initial_mesh(p))?;
        store(out, Box::into_raw(Box::new(HibemMesh(m))))
    })
}

/// # Safety
/// `mesh` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hibem_mesh_uniform_refine(mesh: *const HibemMesh, out: *mut *mut HibemMesh) -> HibemStatus {
    guard(|| {
        let m = deref(mesh)?.0.uniform_refine();
        store(out, Box::into_raw(Box::new(HibemMesh(m))))
    })
}

/// Refinement with closure of the active elements with the given indices.
///
/// # Safety
/// `mesh` must be a live handle; `marked` valid for `n` reads when `n > 0`;
/// `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hibem_mesh_refine(
    mesh: *const HibemMesh,
    marked: *const usize,
    n: usize,
    out: *mut *mut HibemMesh,
) -> HibemStatus {
    guard(|| {
        let m = &deref(mesh)?.0;
        let idx: &[usize] = if n == 0 {
            &[]
        } else if marked.is_null() {
            return Err(null());
        } else {
            std::slice::from_raw_parts(marked, n)
        };
        let els = m.elements();
        let mut chosen = Vec::with_capacity(idx.len());
        for &i in idx {
            match els.get(i) {
                Some(e) => chosen.push(*e),
                None => {
                    set_error(format!("element index {i} out of range for {} elements", els.len()));
                    return Err(HibemStatus::InvalidArgument);
                }
            }
        }
        let r = lift(m.refine(&chosen))?;
        store(out, Box::into_raw(Box::new(HibemMesh(r))))
    })
}

/// # Safety
/// `mesh` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hibem_mesh_num_elements(mesh: *const HibemMesh, out: *mut usize) -> HibemStatus {
    guard(|| store(out, deref(mesh)?.0.num_elements()))
}

/// # Safety
/// `mesh` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hibem_mesh_element(mesh: *const HibemMesh, index: usize, out: *mut HibemElement) -> HibemStatus {
    guard(|| {
        let m = &deref(mesh)?.0;
        let Some(e) = m.elements().get(index) else {
            set_error(format!("element index {index} out of range for {} elements", m.num_elements()));
            return Err(HibemStatus::InvalidArgument);
        };
        let Element { patch, level, i1, i2 } = *e;
        store(out, HibemElement { patch, level, i1, i2 })
    })
}

/// # Safety
/// `mesh` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hibem_mesh_is_admissible(mesh: *const HibemMesh, out: *mut bool) -> HibemStatus {
    guard(|| store(out, deref(mesh)?.0.is_admissible()))
}

/// # Safety
/// `mesh` must be null or a handle from `hibem_mesh_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hibem_mesh_free(mesh: *mut HibemMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Runs an experiment described by a JSON run configuration (the same
/// document the command line accepts; `{}` selects all defaults).
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hibem_run(config_json: *const c_char, out: *mut *mut HibemTrace) -> HibemStatus {
    guard(|| {
        let cfg = lift(RunConfig::from_json(string(config_json)?))?;
        let r = lift(experiment::run(&cfg, |_| {}))?;
        store(out, Box::into_raw(Box::new(HibemTrace { trace: r.trace, csv: r.csv })))
    })
}

/// # Safety
/// `trace` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hibem_trace_num_rows(trace: *const HibemTrace, out: *mut usize) -> HibemStatus {
    guard(|| store(out, deref(trace)?.trace.rows.len()))
}

/// # Safety
/// `trace` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hibem_trace_row(trace: *const HibemTrace, index: usize, out: *mut HibemTraceRow) -> HibemStatus {
    guard(|| {
        let rows = &deref(trace)?.trace.rows;
        let Some(r) = rows.get(index) else {
            set_error(format!("row {index} out of range for {} rows", rows.len()));
            return Err(HibemStatus::InvalidArgument);
        };
        store(
            out,
            HibemTraceRow {
                ell: r.ell,
                num_elements: r.num_elements,
                dofs: r.dofs,
                estimator: r.estimator,
                energy_error: r.energy_error.unwrap_or(f64::NAN),
                num_marked: r.num_marked,
                seconds: r.seconds,
            },
        )
    })
}

/// Least-squares estimator rate over the last `window` rows.
///
/// # Safety
/// `trace` must be a live handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hibem_trace_estimator_rate(trace: *const HibemTrace, window: usize, out: *mut f64) -> HibemStatus {
    guard(|| {
        let rate = lift(deref(trace)?.trace.estimator_rate(window))?;
        store(out, rate)
    })
}

/// The run's CSV text, with the buffer protocol of
/// `hibem_last_error_message`.
///
/// # Safety
/// `trace` must be a live handle; `buf` valid for `len` bytes when non-null;
/// `needed` null or valid.
#[no_mangle]
pub unsafe extern "C" fn hibem_trace_csv(
    trace: *const HibemTrace,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> HibemStatus {
    guard(|| {
        copy_out(&deref(trace)?.csv, buf, len, needed).inspect_err(|_| set_error(format!("CSV does not fit in {len} bytes")))
    })
}

/// # Safety
/// `trace` must be null or a handle from `hibem_run` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hibem_trace_free(trace: *mut HibemTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}
