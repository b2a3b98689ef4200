//! C ABI over `bidb`: opaque head and score-matrix handles, integer status
//! codes and a per-thread last-error message.
//!
//! Every function returns a [`BidbStatus`] except the accessors that cannot
//! fail. Handles are created by `*_load`/`*_fuse` and released with the
//! matching `*_free`; passing a freed or foreign pointer is undefined.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use bidb::metrics::cmc;
use bidb::nn::{Head, IdentityHead};
use bidb::scoring::{fuse, ScoreMatrix};
use bidb::Error;

/// Status codes. Data and numeric codes match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BidbStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, wrong buffer length or index out of range.
    InvalidArgument = 2,
    /// Malformed input, dimension mismatch or I/O failure.
    Data = 3,
    /// Non-finite values, degenerate vectors, undefined metrics.
    Numeric = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

/// Trained identity head.
pub struct BidbHead {
    head: IdentityHead,
}

/// Probe x gallery score matrix with optional ground truth.
pub struct BidbMatrix {
    matrix: ScoreMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: BidbStatus, message: impl Into<String>) -> BidbStatus {
    set_error(message.into());
    status
}

fn from_error(e: Error) -> BidbStatus {
    let status = if e.exit_code() == 4 {
        BidbStatus::Numeric
    } else {
        BidbStatus::Data
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> BidbStatus) -> BidbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(BidbStatus::Internal, "panic in bidb"),
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, BidbStatus> {
    if path.is_null() {
        return Err(fail(BidbStatus::InvalidArgument, "path is null"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(BidbStatus::InvalidArgument, "path is not UTF-8"))
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(BidbStatus::InvalidArgument, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bidb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf`, truncated
/// and NUL-terminated. Returns the full message length in bytes, excluding
/// the terminator; 0 when no error has been recorded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn bidb_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Loads an identity head from a `BIDH` file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bidb_head_load(path: *const c_char, out: *mut *mut BidbHead) -> BidbStatus {
    guard(|| {
        non_null!(out);
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match Head::load(path).and_then(Head::into_identity) {
            Ok(head) => {
                *out = Box::into_raw(Box::new(BidbHead { head }));
                BidbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `head` must be null or a handle from [`bidb_head_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bidb_head_free(head: *mut BidbHead) {
    if !head.is_null() {
        drop(Box::from_raw(head));
    }
}

/// Input feature width; 0 for a null handle.
///
/// # Safety
/// `head` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bidb_head_input_dim(head: *const BidbHead) -> usize {
    head.as_ref().map_or(0, |h| h.head.input_dim())
}

/// Embedding width; 0 for a null handle.
///
/// # Safety
/// `head` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bidb_head_embedding_dim(head: *const BidbHead) -> usize {
    head.as_ref().map_or(0, |h| h.head.embedding_dim())
}

/// Embeds `frames` row-major feature vectors into `out`, which must hold
/// exactly `frames * embedding_dim` values.
///
/// # Safety
/// `features` must point to `frames * input_dim` readable doubles and `out`
/// to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bidb_head_embed(
    head: *const BidbHead,
    features: *const f64,
    frames: usize,
    out: *mut f64,
    out_len: usize,
) -> BidbStatus {
    guard(|| {
        non_null!(head, features, out);
        let h = &(*head).head;
        if frames == 0 {
            return fail(BidbStatus::InvalidArgument, "frames must be at least 1");
        }
        if out_len != frames * h.embedding_dim() {
            return fail(
                BidbStatus::InvalidArgument,
                format!("out_len must be {}", frames * h.embedding_dim()),
            );
        }
        let x = std::slice::from_raw_parts(features, frames * h.input_dim());
        match h.embed_batch(x, frames) {
            Ok(e) => {
                std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(&e);
                BidbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Cosine similarity of two `len`-vectors, clamped to [-1, 1].
///
/// # Safety
/// `a` and `b` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bidb_cosine(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> BidbStatus {
    guard(|| {
        non_null!(a, b, out);
        let (a, b) = (
            std::slice::from_raw_parts(a, len),
            std::slice::from_raw_parts(b, len),
        );
        match bidb::domain::cosine(a, b) {
            Ok(c) => {
                *out = c;
                BidbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Loads a score matrix: `.bids` as binary, anything else as CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bidb_matrix_load(path: *const c_char, out: *mut *mut BidbMatrix) -> BidbStatus {
    guard(|| {
        non_null!(out);
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match ScoreMatrix::load(path) {
            Ok(matrix) => {
                *out = Box::into_raw(Box::new(BidbMatrix { matrix }));
                BidbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Writes a score matrix: `.bids` as binary, anything else as CSV.
///
/// # Safety
/// `matrix` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bidb_matrix_save(matrix: *const BidbMatrix, path: *const c_char) -> BidbStatus {
    guard(|| {
        non_null!(matrix);
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let m = &(*matrix).matrix;
        let r = if path.extension().is_some_and(|e| e == "bids") {
            m.save_bids(path)
        } else {
            m.save_csv(path)
        };
        match r {
            Ok(()) => BidbStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `matrix` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bidb_matrix_free(matrix: *mut BidbMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Number of probe rows; 0 for a null handle.
///
/// # Safety
/// `matrix` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bidb_matrix_probes(matrix: *const BidbMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.matrix.probes())
}

/// Number of gallery columns; 0 for a null handle.
///
/// # Safety
/// `matrix` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bidb_matrix_gallery(matrix: *const BidbMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.matrix.gallery_len())
}

/// Number of mated probes; 0 without ground truth.
///
/// # Safety
/// `matrix` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bidb_matrix_mated(matrix: *const BidbMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.matrix.mated_count())
}

/// Score of probe row `probe` against gallery column `gallery`, both in
/// sorted-id order.
///
/// # Safety
/// `matrix` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bidb_matrix_score(
    matrix: *const BidbMatrix,
    probe: usize,
    gallery: usize,
    out: *mut f64,
) -> BidbStatus {
    guard(|| {
        non_null!(matrix, out);
        let m = &(*matrix).matrix;
        if probe >= m.probes() || gallery >= m.gallery_len() {
            return fail(
                BidbStatus::InvalidArgument,
                format!("({probe}, {gallery}) outside {}x{}", m.probes(), m.gallery_len()),
            );
        }
        *out = m.score(probe, gallery);
        BidbStatus::Ok
    })
}

/// Averages two matrices over identical probe and gallery ids.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bidb_matrix_fuse(
    a: *const BidbMatrix,
    b: *const BidbMatrix,
    out: *mut *mut BidbMatrix,
) -> BidbStatus {
    guard(|| {
        non_null!(a, b, out);
        match fuse(&(*a).matrix, &(*b).matrix) {
            Ok(matrix) => {
                *out = Box::into_raw(Box::new(BidbMatrix { matrix }));
                BidbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// CMC hit rates at ranks `1..=len` into `out`. Ranks past the gallery
/// size repeat the final value of 1.
///
/// # Safety
/// `matrix` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bidb_matrix_cmc(matrix: *const BidbMatrix, out: *mut f64, len: usize) -> BidbStatus {
    guard(|| {
        non_null!(matrix, out);
        match cmc(&(*matrix).matrix) {
            Ok(curve) => {
                let out = std::slice::from_raw_parts_mut(out, len);
                for (r, slot) in out.iter_mut().enumerate() {
                    *slot = curve.at(r + 1);
                }
                BidbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
