//! C ABI over the `textedit` models.
//!
//! Models and images are opaque heap handles released with their `*_free` function. Every
//! fallible call returns a [`TeStatus`]; on failure a description is available from
//! [`te_last_error`] on the same thread until the next failing call. Panics never cross the
//! boundary: they are caught and reported as `TE_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use textedit::checkpoint::load_checkpoint;
use textedit::generator::{EditModel, Readout};
use textedit::image::Image;
use textedit::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeStatus {
    Ok = 0,
    /// A required pointer was null or a string was not UTF-8.
    NullOrInvalidArgument = 1,
    /// Input rejected by validation (bad shape, unknown kind, out-of-range index, ...).
    Validation = 2,
    /// File could not be read or written.
    Io = 3,
    /// Malformed checkpoint, image or JSON.
    Format = 4,
    /// Numerical or backend failure while running.
    Runtime = 5,
    /// A caller-provided buffer is too small.
    BufferTooSmall = 6,
    /// Internal panic; the handle involved should be treated as unusable.
    Panic = 7,
}

/// How branch outputs are combined.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeReadout {
    Fusion = 0,
    Argmax = 1,
}

/// Opaque loaded model.
pub struct TeModel {
    model: EditModel,
    kind: CString,
}

/// Opaque RGB image with values in [0, 1].
pub struct TeImage {
    image: Image,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> TeStatus {
    match e {
        Error::Io { .. } => TeStatus::Io,
        Error::Format(_) | Error::Image(_) | Error::Json(_) => TeStatus::Format,
        Error::NonFinite(_) | Error::Tensor(_) => TeStatus::Runtime,
        _ if e.is_validation() => TeStatus::Validation,
        _ => TeStatus::Runtime,
    }
}

struct Fail(TeStatus);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        set_error(e.to_string());
        Fail(status_of(&e))
    }
}

fn fail(status: TeStatus, msg: impl Into<String>) -> Fail {
    set_error(msg);
    Fail(status)
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TeStatus::Ok,
        Ok(Err(Fail(s))) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TeStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(fail(
            TeStatus::NullOrInvalidArgument,
            format!("{what} is null"),
        ));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        fail(
            TeStatus::NullOrInvalidArgument,
            format!("{what} is not UTF-8"),
        )
    })
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| fail(TeStatus::NullOrInvalidArgument, format!("{what} is null")))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(fail(
            TeStatus::NullOrInvalidArgument,
            format!("{what} is null"),
        ))
    } else {
        Ok(())
    }
}

/// Message for the most recent failure on this thread, or an empty string. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn te_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn te_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint. On success `*out` owns a model to release with `te_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn te_model_load(path: *const c_char, out: *mut *mut TeModel) -> TeStatus {
    guard(|| {
        out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let (model, _) = load_checkpoint(path)?;
        let kind = CString::new(model.kind().as_str()).expect("static names have no nul");
        *out = Box::into_raw(Box::new(TeModel { model, kind }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from `te_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn te_model_free(model: *mut TeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Model kind (`bucket`, `e2e` or `filterbank`), valid while the model lives.
///
/// # Safety
/// `model` must be a live model handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn te_model_kind(model: *const TeModel, out: *mut *const c_char) -> TeStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ref_arg(model, "model")?.kind.as_ptr();
        Ok(())
    })
}

/// Number of buckets or filters (1 for the end-to-end model).
///
/// # Safety
/// `model` must be a live model handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn te_model_branches(model: *const TeModel, out: *mut usize) -> TeStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ref_arg(model, "model")?.model.branches();
        Ok(())
    })
}

/// Builds an image from tightly packed 8-bit RGB rows (`width * height * 3` bytes).
///
/// # Safety
/// `data` must point to at least `len` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn te_image_from_rgb8(
    data: *const u8,
    len: usize,
    width: usize,
    height: usize,
    out: *mut *mut TeImage,
) -> TeStatus {
    guard(|| {
        out_arg(out, "out")?;
        if data.is_null() {
            return Err(fail(TeStatus::NullOrInvalidArgument, "data is null"));
        }
        let need = width.checked_mul(height).and_then(|n| n.checked_mul(3));
        if need != Some(len) {
            return Err(fail(
                TeStatus::Validation,
                format!("{width}x{height} RGB needs {need:?} bytes, got {len}"),
            ));
        }
        let bytes = std::slice::from_raw_parts(data, len);
        let image = Image::from_rgb8(width, height, bytes)?;
        *out = Box::into_raw(Box::new(TeImage { image }));
        Ok(())
    })
}

/// Reads a PNG or JPEG file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn te_image_load(path: *const c_char, out: *mut *mut TeImage) -> TeStatus {
    guard(|| {
        out_arg(out, "out")?;
        let image = Image::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(TeImage { image }));
        Ok(())
    })
}

/// Writes PNG or JPEG, chosen by the file extension.
///
/// # Safety
/// `image` must be a live image handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn te_image_save(image: *const TeImage, path: *const c_char) -> TeStatus {
    guard(|| {
        let image = ref_arg(image, "image")?;
        image.image.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Width and height in pixels.
///
/// # Safety
/// `image` must be a live image handle; `width` and `height` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn te_image_size(
    image: *const TeImage,
    width: *mut usize,
    height: *mut usize,
) -> TeStatus {
    guard(|| {
        out_arg(width, "width")?;
        out_arg(height, "height")?;
        let (h, w) = ref_arg(image, "image")?.image.dims();
        *width = w;
        *height = h;
        Ok(())
    })
}

/// Copies the image as packed 8-bit RGB into `buf`, which must hold `width * height * 3`
/// bytes.
///
/// # Safety
/// `image` must be a live image handle and `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn te_image_to_rgb8(
    image: *const TeImage,
    buf: *mut u8,
    len: usize,
) -> TeStatus {
    guard(|| {
        out_arg(buf, "buf")?;
        let bytes = ref_arg(image, "image")?.image.to_rgb8();
        if len < bytes.len() {
            return Err(fail(
                TeStatus::BufferTooSmall,
                format!("buffer holds {len} bytes, image needs {}", bytes.len()),
            ));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        Ok(())
    })
}

/// Releases an image. Null is ignored.
///
/// # Safety
/// `image` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn te_image_free(image: *mut TeImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Edits `image` following `text`. The result keeps the input's size.
///
/// When `weights` is non-null the branch weights are written there; `weights_len` must be at
/// least `te_model_branches`. Pass null and 0 to skip them.
///
/// # Safety
/// Handles must be live, `text` NUL-terminated, `out` valid, and `weights` (if non-null)
/// must point to `weights_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn te_edit(
    model: *const TeModel,
    image: *const TeImage,
    text: *const c_char,
    readout: TeReadout,
    out: *mut *mut TeImage,
    weights: *mut f64,
    weights_len: usize,
) -> TeStatus {
    guard(|| {
        out_arg(out, "out")?;
        let model = ref_arg(model, "model")?;
        let image = ref_arg(image, "image")?;
        let text = str_arg(text, "text")?;
        let mode = match readout {
            TeReadout::Fusion => Readout::Fusion,
            TeReadout::Argmax => Readout::Argmax,
        };
        if !weights.is_null() && weights_len < model.model.branches() {
            return Err(fail(
                TeStatus::BufferTooSmall,
                format!(
                    "weights holds {weights_len}, model has {} branches",
                    model.model.branches()
                ),
            ));
        }
        let result = model.model.edit(&image.image, text, mode, None)?;
        if !weights.is_null() {
            let w = result.weights.unwrap_or_else(|| vec![1.0]);
            ptr::copy_nonoverlapping(w.as_ptr(), weights, w.len().min(weights_len));
        }
        *out = Box::into_raw(Box::new(TeImage {
            image: result.image,
        }));
        Ok(())
    })
}

/// Output of filter `k` alone (filter-bank models only).
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn te_probe(
    model: *const TeModel,
    image: *const TeImage,
    k: usize,
    out: *mut *mut TeImage,
) -> TeStatus {
    guard(|| {
        out_arg(out, "out")?;
        let model = ref_arg(model, "model")?;
        let image = ref_arg(image, "image")?;
        let probed = model.model.probe(&image.image, k)?;
        *out = Box::into_raw(Box::new(TeImage { image: probed }));
        Ok(())
    })
}
