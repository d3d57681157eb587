//! C ABI over `riskgrad`.
//!
//! Every function returns an [`RgStatus`]; on failure a message is available
//! from [`rg_last_error`] on the calling thread. Strings handed out by this
//! library must be released with [`rg_string_free`], models with
//! [`rg_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use riskgrad::corpus::{build_input, featurize, CategoryVocab, FeaturizerConfig};
use riskgrad::refine::{build_textgrad, effort_of, EffortLevel, GradientTemplate, RiskThresholds};
use riskgrad::risk_model::{
    kl_beta, load_checkpoint, RejectionPosterior, RiskDistribution, RiskModel,
};
use riskgrad::specfun;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidInput = 4,
    Shape = 5,
    Domain = 6,
    Unsupported = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgEffort {
    Minor = 0,
    Mild = 1,
    Critical = 2,
}

impl From<EffortLevel> for RgEffort {
    fn from(e: EffortLevel) -> Self {
        match e {
            EffortLevel::Minor => Self::Minor,
            EffortLevel::Mild => Self::Mild,
            EffortLevel::Critical => Self::Critical,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgThresholds {
    pub tau: f64,
    pub tau_low: f64,
    pub tau_high: f64,
}

impl From<RgThresholds> for RiskThresholds {
    fn from(t: RgThresholds) -> Self {
        Self {
            tau: t.tau,
            tau_low: t.tau_low,
            tau_high: t.tau_high,
        }
    }
}

/// Opaque handle to a loaded checkpoint.
pub struct RgModel {
    model: RiskModel,
    featurizer: Option<FeaturizerConfig>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(RgStatus, String);

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> RgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            RgStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            RgStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(RgStatus::NullArgument, format!("{what} is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RgStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out(values: &[f64], out: *mut f64, out_len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    if out_len != values.len() {
        return Err(Failure(
            RgStatus::Shape,
            format!(
                "output buffer holds {out_len} values, need {}",
                values.len()
            ),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|_| {
        Failure(
            RgStatus::InvalidInput,
            "string contains an interior NUL".into(),
        )
    })
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn rg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn rg_thresholds_default() -> RgThresholds {
    let t = RiskThresholds::default();
    RgThresholds {
        tau: t.tau,
        tau_low: t.tau_low,
        tau_high: t.tau_high,
    }
}

/// Loads a JSON checkpoint into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_model_load(path: *const c_char, out: *mut *mut RgModel) -> RgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let ckpt =
            load_checkpoint(Path::new(path)).map_err(|e| Failure(RgStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(RgModel {
            model: ckpt.model,
            featurizer: ckpt.featurizer,
        }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from [`rg_model_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rg_model_free(model: *mut RgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of risk categories, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_model_categories(model: *const RgModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.categories)
}

/// Feature dimension, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_model_input_dim(model: *const RgModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.input_dim)
}

/// Risk vector for a precomputed feature vector. `out_len` must equal
/// [`rg_model_categories`].
///
/// # Safety
/// `features` must point to `len` doubles and `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rg_model_score_features(
    model: *const RgModel,
    features: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> RgStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let h = slice_arg(features, len, "features")?;
        let d = m
            .model
            .predict_risk(h)
            .map_err(|e| Failure(RgStatus::Shape, e.to_string()))?;
        write_out(d.as_slice(), out, out_len)
    })
}

/// Featurizes `(prompt, response)` with the checkpoint's featurizer and
/// scores it. Fails with `UNSUPPORTED` for embedding-trained checkpoints.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rg_model_score_text(
    model: *const RgModel,
    prompt: *const c_char,
    response: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> RgStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let prompt = str_arg(prompt, "prompt")?;
        let response = str_arg(response, "response")?;
        let fz = m.featurizer.ok_or_else(|| {
            Failure(
                RgStatus::Unsupported,
                "checkpoint was trained on external embeddings; use rg_model_score_features".into(),
            )
        })?;
        let h = featurize(&build_input(prompt, response), &fz);
        let d = m
            .model
            .predict_risk(h.as_slice())
            .map_err(|e| Failure(RgStatus::Shape, e.to_string()))?;
        write_out(d.as_slice(), out, out_len)
    })
}

/// Effort level of one risk intensity.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_effort_of(
    d: f64,
    thresholds: RgThresholds,
    out: *mut RgEffort,
) -> RgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let t = RiskThresholds::from(thresholds);
        t.validate()
            .map_err(|e| Failure(RgStatus::InvalidInput, e.to_string()))?;
        if !(0.0..=1.0).contains(&d) {
            return Err(Failure(
                RgStatus::InvalidInput,
                format!("risk {d} is outside [0, 1]"),
            ));
        }
        *out = effort_of(d, &t).into();
        Ok(())
    })
}

/// Renders the textual gradient for `risk` with the default template.
/// `names` holds `len` category names. `*out` receives a new string (empty
/// when nothing is risky) to be freed with [`rg_string_free`].
///
/// # Safety
/// `risk` must point to `len` doubles, `names` to `len` NUL-terminated
/// strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_textgrad_render(
    risk: *const f64,
    names: *const *const c_char,
    len: usize,
    thresholds: RgThresholds,
    out: *mut *mut c_char,
) -> RgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let values = slice_arg(risk, len, "risk")?;
        let name_ptrs = slice_arg(names, len, "names")?;
        let names = name_ptrs
            .iter()
            .map(|&p| str_arg(p, "category name").map(str::to_owned))
            .collect::<Result<Vec<_>, _>>()?;
        let vocab = CategoryVocab::new(names)
            .map_err(|e| Failure(RgStatus::InvalidInput, e.to_string()))?;
        let d = RiskDistribution::new(values.to_vec())
            .map_err(|e| Failure(RgStatus::InvalidInput, e.to_string()))?;
        let t = RiskThresholds::from(thresholds);
        t.validate()
            .map_err(|e| Failure(RgStatus::InvalidInput, e.to_string()))?;
        let g = build_textgrad(&d, &vocab, &t, &GradientTemplate::default())
            .map_err(|e| Failure(RgStatus::InvalidInput, e.to_string()))?;
        *out = into_c_string(g.text)?;
        Ok(())
    })
}

/// `KL(Beta(alpha, beta) ‖ Beta(1, 1))`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_kl_beta(alpha: f64, beta: f64, out: *mut f64) -> RgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let post = RejectionPosterior {
            alpha: vec![alpha],
            beta: vec![beta],
        };
        let (kl, _, _) = kl_beta(&post).map_err(|e| Failure(RgStatus::Domain, e.to_string()))?;
        *out = kl;
        Ok(())
    })
}

/// Digamma for `x > 0`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg_digamma(x: f64, out: *mut f64) -> RgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = specfun::digamma(x).map_err(|e| Failure(RgStatus::Domain, e.to_string()))?;
        Ok(())
    })
}
