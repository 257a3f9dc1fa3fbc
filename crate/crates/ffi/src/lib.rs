//! C ABI over the reident toolkit.
//!
//! Conventions:
//! * every fallible function returns a [`ReidentStatus`]; results go through
//!   out-pointers, which are only written on success
//! * on failure, [`reident_last_error`] returns a message for the calling
//!   thread until the next failing call
//! * handles (`ReidentGallery`, `ReidentHead`, `ReidentIndex`) are opaque and
//!   released with their `*_free` function; strings returned by the library
//!   are released with [`reident_string_free`]
//! * panics never cross the boundary; they surface as `REIDENT_STATUS_PANIC`

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use reident::head::{load_head, HeadModel};
use reident::reid::{build_index, load_index, save_index, Index, SearchQuery, DEFAULT_LIMIT};
use reident::{Error, Gallery};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReidentStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    DimensionMismatch = 5,
    ZeroNormVector = 6,
    InvalidArgument = 7,
    BadQuery = 8,
    UnknownTrack = 9,
    MissingTrackId = 10,
    MissingQuality = 11,
    Other = 12,
    Panic = 13,
}

pub struct ReidentGallery(Gallery);
pub struct ReidentHead(HeadModel);
pub struct ReidentIndex(Index);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ReidentStatus {
    match e {
        Error::Io { .. } => ReidentStatus::Io,
        Error::Parse { .. } | Error::DuplicateId(_) | Error::EmptyGallery => ReidentStatus::Parse,
        Error::DimensionMismatch { .. } => ReidentStatus::DimensionMismatch,
        Error::ZeroNormVector(_) => ReidentStatus::ZeroNormVector,
        Error::InvalidArgument(_) => ReidentStatus::InvalidArgument,
        Error::BadQuery(_) => ReidentStatus::BadQuery,
        Error::UnknownTrack(_) => ReidentStatus::UnknownTrack,
        Error::MissingTrackId(_) => ReidentStatus::MissingTrackId,
        Error::MissingQuality(_) => ReidentStatus::MissingQuality,
        _ => ReidentStatus::Other,
    }
}

struct Failure(ReidentStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ReidentStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ReidentStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ReidentStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ReidentStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ReidentStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f32, len: usize, what: &str) -> Result<&'a [f32], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(ReidentStatus::Other, "string contains a nul byte".into()))
}

/// Message of the last failure on this thread, or null. Owned by the
/// library; valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn reident_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn reident_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `(cos(a, b) + 1) / 2` of two `len`-element vectors.
///
/// # Safety
/// `a` and `b` must point to `len` readable floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reident_match_score(a: *const f32, b: *const f32, len: usize, out: *mut f64) -> ReidentStatus {
    guard(|| {
        let (a, b) = (slice_arg(a, len, "a")?, slice_arg(b, len, "b")?);
        write_out(out, reident::match_score(a, b)?, "out")
    })
}

/// Loads a gallery; `.egal` files are binary, anything else JSONL.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reident_gallery_load(path: *const c_char, out: *mut *mut ReidentGallery) -> ReidentStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let g = reident::format::load_gallery_auto(Path::new(path))?;
        write_out(out, Box::into_raw(Box::new(ReidentGallery(g))), "out")
    })
}

/// Number of records; 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live gallery handle.
#[no_mangle]
pub unsafe extern "C" fn reident_gallery_len(g: *const ReidentGallery) -> usize {
    g.as_ref().map_or(0, |g| g.0.len())
}

/// Vector dimension; 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live gallery handle.
#[no_mangle]
pub unsafe extern "C" fn reident_gallery_dimension(g: *const ReidentGallery) -> usize {
    g.as_ref().map_or(0, |g| g.0.dimension())
}

/// # Safety
/// `g` must be null or a gallery handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn reident_gallery_free(g: *mut ReidentGallery) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Loads a head file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reident_head_load(path: *const c_char, out: *mut *mut ReidentHead) -> ReidentStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let h = load_head(Path::new(path))?;
        write_out(out, Box::into_raw(Box::new(ReidentHead(h))), "out")
    })
}

/// # Safety
/// `h` must be null or a live head handle.
#[no_mangle]
pub unsafe extern "C" fn reident_head_class_count(h: *const ReidentHead) -> usize {
    h.as_ref().map_or(0, |h| h.0.class_count())
}

/// # Safety
/// `h` must be null or a live head handle.
#[no_mangle]
pub unsafe extern "C" fn reident_head_dimension(h: *const ReidentHead) -> usize {
    h.as_ref().map_or(0, |h| h.0.dimension())
}

/// Label of class `k` as a new string (free with `reident_string_free`).
///
/// # Safety
/// `h` must be a live head handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reident_head_label(h: *const ReidentHead, k: usize, out: *mut *mut c_char) -> ReidentStatus {
    guard(|| {
        let h = ref_arg(h, "head")?;
        let label = h.0.labels().get(k).ok_or_else(|| {
            Failure(
                ReidentStatus::InvalidArgument,
                format!("class {k} out of range for {} classes", h.0.class_count()),
            )
        })?;
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, into_c_string(label.clone())?, "out")
    })
}

/// Rank-1 class index and score of `x`.
///
/// # Safety
/// `h` must be a live head handle, `x` must point to `len` floats and the
/// out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn reident_head_predict(
    h: *const ReidentHead,
    x: *const f32,
    len: usize,
    out_class: *mut usize,
    out_score: *mut f64,
) -> ReidentStatus {
    guard(|| {
        let h = ref_arg(h, "head")?;
        let x = slice_arg(x, len, "x")?;
        if out_class.is_null() || out_score.is_null() {
            return Err(null("output"));
        }
        let p = h.0.predict(x)?;
        write_out(out_class, p.class_index, "out_class")?;
        write_out(out_score, p.score, "out_score")
    })
}

/// # Safety
/// `h` must be null or a head handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn reident_head_free(h: *mut ReidentHead) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Builds a re-identification index of a video gallery.
///
/// # Safety
/// `g` and `h` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reident_index_build(
    g: *const ReidentGallery,
    h: *const ReidentHead,
    out: *mut *mut ReidentIndex,
) -> ReidentStatus {
    guard(|| {
        let (g, h) = (ref_arg(g, "gallery")?, ref_arg(h, "head")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let idx = build_index(&g.0, &h.0)?;
        write_out(out, Box::into_raw(Box::new(ReidentIndex(idx))), "out")
    })
}

/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reident_index_load(path: *const c_char, out: *mut *mut ReidentIndex) -> ReidentStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let idx = load_index(Path::new(path))?;
        write_out(out, Box::into_raw(Box::new(ReidentIndex(idx))), "out")
    })
}

/// Writes the index atomically (temporary file, then rename).
///
/// # Safety
/// `idx` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn reident_index_save(idx: *const ReidentIndex, path: *const c_char) -> ReidentStatus {
    guard(|| {
        let idx = ref_arg(idx, "index")?;
        save_index(&idx.0, Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `idx` must be null or a live index handle.
#[no_mangle]
pub unsafe extern "C" fn reident_index_track_count(idx: *const ReidentIndex) -> usize {
    idx.as_ref().map_or(0, |i| i.0.tracks.len())
}

#[derive(serde::Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct QueryJson {
    make: Option<String>,
    model: Option<String>,
    color: Option<String>,
    min_score: Option<f64>,
    limit: Option<usize>,
}

/// Runs a search given as JSON (`{"make", "model", "color", "minScore",
/// "limit"}`, all optional but one filter required) and returns the result
/// as a new JSON string.
///
/// # Safety
/// `idx` must be a live handle, `query_json` a nul-terminated string and
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn reident_index_search_json(
    idx: *const ReidentIndex,
    query_json: *const c_char,
    out_json: *mut *mut c_char,
) -> ReidentStatus {
    guard(|| {
        let idx = ref_arg(idx, "index")?;
        let text = str_arg(query_json, "query_json")?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let q: QueryJson =
            serde_json::from_str(text).map_err(|e| Failure(ReidentStatus::BadQuery, format!("bad query: {e}")))?;
        let query = SearchQuery {
            make: q.make,
            model: q.model,
            color: q.color,
            min_score: q.min_score.unwrap_or(0.0),
            limit: q.limit.unwrap_or(DEFAULT_LIMIT),
        };
        let result = idx.0.search(&query)?;
        let json = serde_json::to_string(&result).map_err(|e| Failure(ReidentStatus::Other, e.to_string()))?;
        write_out(out_json, into_c_string(json)?, "out_json")
    })
}

/// Member detections of a track, ordered by frame, as a new JSON string.
///
/// # Safety
/// `idx` must be a live handle, `track_id` a nul-terminated string and
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn reident_index_track_json(
    idx: *const ReidentIndex,
    track_id: *const c_char,
    out_json: *mut *mut c_char,
) -> ReidentStatus {
    guard(|| {
        let idx = ref_arg(idx, "index")?;
        let track = str_arg(track_id, "track_id")?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let detail = idx.0.track_detail(track)?;
        let json = serde_json::to_string(&detail).map_err(|e| Failure(ReidentStatus::Other, e.to_string()))?;
        write_out(out_json, into_c_string(json)?, "out_json")
    })
}

/// # Safety
/// `idx` must be null or an index handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn reident_index_free(idx: *mut ReidentIndex) {
    if !idx.is_null() {
        drop(Box::from_raw(idx));
    }
}
