//! C ABI for the degentaxis simulator.
//!
//! Every function returns a [`DgtStatus`]; out-parameters are written only on
//! `Ok`. Handles are opaque and must be released with the matching `_free`.
//! `dgt_last_error_message` returns a thread-local description of the most
//! recent failure on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use degentaxis::config::{parse_config, RunConfig};
use degentaxis::dualnorm::dual_norm;
use degentaxis::error::Error;
use degentaxis::grid::{integrate, make_grid, Field};
use degentaxis::model::{Params, State};
use degentaxis::scenarios::{initial_state, make_initial_data};
use degentaxis::snapshot;
use degentaxis::stepper::step_adaptive;

/// Status codes returned by every API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    RuntimeError = 4,
    IoError = 5,
    Utf8Error = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> DgtStatus {
    match err {
        Error::Config(_) | Error::Snapshot(_) => DgtStatus::ParseError,
        Error::Io(_) => DgtStatus::IoError,
        Error::Grid(_) | Error::Params(_) | Error::Regime { .. } | Error::Scenario(_) => {
            DgtStatus::InvalidArgument
        }
        _ => DgtStatus::RuntimeError,
    }
}

fn fail(err: &Error) -> DgtStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Parsed run configuration (opaque).
pub struct DgtConfig {
    inner: RunConfig,
}

/// A live simulation (opaque): parameters plus the evolving state.
pub struct DgtSim {
    params: Params,
    state: State,
    total_clipped: f64,
}

unsafe fn c_str<'a>(ptr: *const c_char) -> Result<&'a str, DgtStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(DgtStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        DgtStatus::Utf8Error
    })
}

/// Version of the underlying crate, as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dgt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last error observed on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dgt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parse a configuration text. On success writes a handle to `out`.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgt_config_parse(
    text: *const c_char,
    out: *mut *mut DgtConfig,
) -> DgtStatus {
    if out.is_null() {
        set_error("null output pointer");
        return DgtStatus::NullPointer;
    }
    let text = match c_str(text) {
        Ok(t) => t,
        Err(s) => return s,
    };
    match parse_config(text) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(DgtConfig { inner }));
            DgtStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// # Safety
/// `cfg` must come from `dgt_config_parse` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dgt_config_free(cfg: *mut DgtConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Build a simulation from a configuration: grid, initial data and the
/// regularizing shift.
///
/// # Safety
/// `cfg` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgt_sim_new(cfg: *const DgtConfig, out: *mut *mut DgtSim) -> DgtStatus {
    if cfg.is_null() || out.is_null() {
        set_error("null handle");
        return DgtStatus::NullPointer;
    }
    let cfg = &(*cfg).inner;
    let build = || -> Result<DgtSim, Error> {
        let grid = cfg.build_grid()?;
        let (u0, v0, _k) = make_initial_data(&grid, &cfg.initial)?;
        let state = initial_state(&u0, &v0, &cfg.params)?;
        Ok(DgtSim {
            params: cfg.params.clone(),
            state,
            total_clipped: 0.0,
        })
    };
    match build() {
        Ok(sim) => {
            *out = Box::into_raw(Box::new(sim));
            DgtStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// # Safety
/// `sim` must come from `dgt_sim_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dgt_sim_free(sim: *mut DgtSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// # Safety
/// `sim` must be a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn dgt_sim_time(sim: *const DgtSim) -> f64 {
    if sim.is_null() {
        return f64::NAN;
    }
    (*sim).state.t
}

/// # Safety
/// `sim` must be a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn dgt_sim_cell_count(sim: *const DgtSim) -> usize {
    if sim.is_null() {
        return 0;
    }
    (*sim).state.grid().n_cells()
}

/// One adaptive step at the current stable step size.
///
/// # Safety
/// `sim` must be a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn dgt_sim_step(sim: *mut DgtSim) -> DgtStatus {
    if sim.is_null() {
        set_error("null handle");
        return DgtStatus::NullPointer;
    }
    let sim = &mut *sim;
    match step_adaptive(&sim.state, &sim.params) {
        Ok((next, report)) => {
            sim.state = next;
            sim.total_clipped += report.mass_clipped;
            DgtStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Advance until the simulation clock reaches `t_target`.
///
/// # Safety
/// `sim` must be a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn dgt_sim_advance(sim: *mut DgtSim, t_target: f64) -> DgtStatus {
    if sim.is_null() {
        set_error("null handle");
        return DgtStatus::NullPointer;
    }
    if !t_target.is_finite() {
        set_error("t_target must be finite");
        return DgtStatus::InvalidArgument;
    }
    let sim = &mut *sim;
    let eps = 1e-12 * t_target.abs().max(1.0);
    while sim.state.t < t_target - eps {
        let dt_stable = degentaxis::stepper::stable_dt(&sim.state, &sim.params);
        let dt = dt_stable.min(t_target - sim.state.t);
        match degentaxis::stepper::step(&sim.state, &sim.params, dt) {
            Ok((next, report)) => {
                sim.state = next;
                sim.total_clipped += report.mass_clipped;
            }
            Err(e) => return fail(&e),
        }
    }
    DgtStatus::Ok
}

unsafe fn copy_field(field: &Field, buf: *mut f64, len: usize) -> DgtStatus {
    if buf.is_null() {
        set_error("null buffer");
        return DgtStatus::NullPointer;
    }
    let values = field.values();
    if len != values.len() {
        set_error(&format!(
            "buffer holds {len} values, field needs {}",
            values.len()
        ));
        return DgtStatus::InvalidArgument;
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    DgtStatus::Ok
}

/// Copy the density field into `buf` (row-major, x fastest).
///
/// # Safety
/// `sim` must be live; `buf` must hold `dgt_sim_cell_count(sim)` doubles.
#[no_mangle]
pub unsafe extern "C" fn dgt_sim_copy_u(
    sim: *const DgtSim,
    buf: *mut f64,
    len: usize,
) -> DgtStatus {
    if sim.is_null() {
        set_error("null handle");
        return DgtStatus::NullPointer;
    }
    copy_field(&(*sim).state.u, buf, len)
}

/// Copy the nutrient field into `buf` (row-major, x fastest).
///
/// # Safety
/// `sim` must be live; `buf` must hold `dgt_sim_cell_count(sim)` doubles.
#[no_mangle]
pub unsafe extern "C" fn dgt_sim_copy_v(
    sim: *const DgtSim,
    buf: *mut f64,
    len: usize,
) -> DgtStatus {
    if sim.is_null() {
        set_error("null handle");
        return DgtStatus::NullPointer;
    }
    copy_field(&(*sim).state.v, buf, len)
}

/// ∫u over the domain.
///
/// # Safety
/// `sim` must be a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn dgt_sim_mass_u(sim: *const DgtSim) -> f64 {
    if sim.is_null() {
        return f64::NAN;
    }
    integrate(&(*sim).state.u)
}

/// ∫v over the domain.
///
/// # Safety
/// `sim` must be a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn dgt_sim_mass_v(sim: *const DgtSim) -> f64 {
    if sim.is_null() {
        return f64::NAN;
    }
    integrate(&(*sim).state.v)
}

/// Total |negative u| mass zeroed so far by the clip policy.
///
/// # Safety
/// `sim` must be a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn dgt_sim_clipped_mass(sim: *const DgtSim) -> f64 {
    if sim.is_null() {
        return f64::NAN;
    }
    (*sim).total_clipped
}

/// Write the current state as a DEGTAX1 snapshot file.
///
/// # Safety
/// `sim` must be live and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dgt_sim_save_snapshot(
    sim: *const DgtSim,
    path: *const c_char,
) -> DgtStatus {
    if sim.is_null() {
        set_error("null handle");
        return DgtStatus::NullPointer;
    }
    let path = match c_str(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match snapshot::save_state(Path::new(path), &(*sim).state) {
        Ok(()) => DgtStatus::Ok,
        Err(e) => fail(&e),
    }
}

/// (W¹,∞)*-norm of a raw cell field on a freshly described grid.
/// `cells` and `extents` must point to `dim` entries; `values` to the
/// product of the cell counts.
///
/// # Safety
/// All pointers must be valid for the lengths implied by `dim` and `cells`.
#[no_mangle]
pub unsafe extern "C" fn dgt_dual_norm(
    dim: u32,
    cells: *const usize,
    extents: *const f64,
    values: *const f64,
    n_values: usize,
    out_value: *mut f64,
) -> DgtStatus {
    if cells.is_null() || extents.is_null() || values.is_null() || out_value.is_null() {
        set_error("null pointer argument");
        return DgtStatus::NullPointer;
    }
    if !(1..=3).contains(&dim) {
        set_error("dim must be 1, 2 or 3");
        return DgtStatus::InvalidArgument;
    }
    let dim = dim as usize;
    let cells = std::slice::from_raw_parts(cells, dim);
    let extents = std::slice::from_raw_parts(extents, dim);
    let grid = match make_grid(dim, cells, extents) {
        Ok(g) => g,
        Err(e) => return fail(&e),
    };
    if n_values != grid.n_cells() {
        set_error(&format!(
            "expected {} values for this grid, got {n_values}",
            grid.n_cells()
        ));
        return DgtStatus::InvalidArgument;
    }
    let values = std::slice::from_raw_parts(values, n_values).to_vec();
    let field = match Field::new(&grid, values) {
        Ok(f) => f,
        Err(e) => return fail(&e),
    };
    match dual_norm(&field) {
        Ok(sol) => {
            *out_value = sol.value;
            DgtStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// (W¹,∞)*-distance between the u fields of two DEGTAX1 snapshots.
///
/// # Safety
/// Paths must be valid NUL-terminated strings; `out_value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgt_snapshot_dual_distance(
    path_a: *const c_char,
    path_b: *const c_char,
    out_value: *mut f64,
) -> DgtStatus {
    if out_value.is_null() {
        set_error("null output pointer");
        return DgtStatus::NullPointer;
    }
    let (a, b) = match (c_str(path_a), c_str(path_b)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    let load = |p: &str| snapshot::load_state(Path::new(p));
    let (sa, sb) = match (load(a), load(b)) {
        (Ok(sa), Ok(sb)) => (sa, sb),
        (Err(e), _) | (_, Err(e)) => return fail(&e),
    };
    if sa.grid() != sb.grid() {
        set_error("snapshots live on different grids");
        return DgtStatus::InvalidArgument;
    }
    let diff = sa.u.zip_with(&sb.u, |x, y| x - y);
    match dual_norm(&diff) {
        Ok(sol) => {
            *out_value = sol.value;
            DgtStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn cfg_handle(text: &str) -> *mut DgtConfig {
        let c = CString::new(text).unwrap();
        let mut out: *mut DgtConfig = ptr::null_mut();
        let status = unsafe { dgt_config_parse(c.as_ptr(), &mut out) };
        assert_eq!(status, DgtStatus::Ok);
        out
    }

    #[test]
    fn version_is_static() {
        let v = unsafe { CStr::from_ptr(dgt_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn parse_errors_surface_message() {
        let c = CString::new("[params]\nchii = 1\n").unwrap();
        let mut out: *mut DgtConfig = ptr::null_mut();
        let status = unsafe { dgt_config_parse(c.as_ptr(), &mut out) };
        assert_eq!(status, DgtStatus::ParseError);
        let msg = unsafe { CStr::from_ptr(dgt_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("chii"));
    }

    #[test]
    fn sim_lifecycle_and_logistic_step() {
        let cfg = cfg_handle(
            "[grid]\ndim = 1\ncells = 8\nextents = 1.0\n\
             [initial]\nu0 = constant\nv0 = constant\nu0_floor = 0.0\n\
             [params]\ndt_max = 1e-4\n",
        );
        let mut sim: *mut DgtSim = ptr::null_mut();
        unsafe {
            assert_eq!(dgt_sim_new(cfg, &mut sim), DgtStatus::Ok);
            assert_eq!(dgt_sim_cell_count(sim), 8);
            assert_eq!(dgt_sim_time(sim), 0.0);
            let m0 = dgt_sim_mass_u(sim);
            assert!((m0 - 1.0).abs() < 1e-12);

            assert_eq!(dgt_sim_advance(sim, 1.0), DgtStatus::Ok);
            assert!((dgt_sim_time(sim) - 1.0).abs() < 1e-9);
            let mut u = vec![0.0; 8];
            assert_eq!(dgt_sim_copy_u(sim, u.as_mut_ptr(), 8), DgtStatus::Ok);
            let e2 = (-2.0f64).exp();
            let v_exact = 2.0 * e2 / (1.0 + e2);
            assert!((u[0] - (2.0 - v_exact)).abs() < 1e-3, "u = {}", u[0]);

            assert_eq!(
                dgt_sim_copy_u(sim, u.as_mut_ptr(), 5),
                DgtStatus::InvalidArgument
            );
            dgt_sim_free(sim);
            dgt_config_free(cfg);
        }
    }

    #[test]
    fn dual_norm_constant_field() {
        let cells = [4usize, 4];
        let extents = [1.0f64, 1.0];
        let values = [2.0f64; 16];
        let mut out = 0.0f64;
        let status = unsafe {
            dgt_dual_norm(
                2,
                cells.as_ptr(),
                extents.as_ptr(),
                values.as_ptr(),
                16,
                &mut out,
            )
        };
        assert_eq!(status, DgtStatus::Ok);
        assert!((out - 2.0).abs() < 1e-10);

        let status = unsafe {
            dgt_dual_norm(
                2,
                cells.as_ptr(),
                extents.as_ptr(),
                values.as_ptr(),
                15,
                &mut out,
            )
        };
        assert_eq!(status, DgtStatus::InvalidArgument);
    }

    #[test]
    fn snapshot_roundtrip_through_ffi() {
        let dir = std::env::temp_dir().join(format!("dgt-ffi-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.snap");
        let cpath = CString::new(path.to_str().unwrap()).unwrap();

        let cfg = cfg_handle("[grid]\ndim = 1\ncells = 8\nextents = 1.0\n");
        let mut sim: *mut DgtSim = ptr::null_mut();
        unsafe {
            assert_eq!(dgt_sim_new(cfg, &mut sim), DgtStatus::Ok);
            assert_eq!(dgt_sim_save_snapshot(sim, cpath.as_ptr()), DgtStatus::Ok);
            let mut dist = -1.0f64;
            assert_eq!(
                dgt_snapshot_dual_distance(cpath.as_ptr(), cpath.as_ptr(), &mut dist),
                DgtStatus::Ok
            );
            assert_eq!(dist, 0.0);
            dgt_sim_free(sim);
            dgt_config_free(cfg);
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
