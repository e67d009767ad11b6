//! C ABI over `mrsdistill`.
//!
//! Datasets and networks cross the boundary as opaque pointers. Every
//! function returns an [`MrsStatus`]; on failure the message is available
//! from [`mrs_last_error`] on the same thread. Panics are caught and
//! reported as `MRS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mrsdistill::analyze::{class_activation_map, Upsample};
use mrsdistill::augment::mix_samples;
use mrsdistill::distill::certain_from_probs;
use mrsdistill::eval::auc_from_scores;
use mrsdistill::nn::{
    load_checkpoint, predict_proba, save_checkpoint, train, Checkpoint, Network, NetworkConfig, TrainConfig,
};
use mrsdistill::spectra::{generate_cohort, load_dataset, save_dataset, Class, CohortConfig, Dataset, Spectrum};
use mrsdistill::Error;

/// Opaque dataset handle.
pub struct MrsDataset(Dataset);

/// Opaque network handle.
pub struct MrsNetwork(Network);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrsStatus {
    Ok = 0,
    NullPointer = 1,
    Argument = 2,
    Config = 3,
    Shape = 4,
    Parse = 5,
    State = 6,
    Divergence = 7,
    Io = 8,
    Panic = 9,
    Other = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MrsStatus {
    match e {
        Error::Config(_) => MrsStatus::Config,
        Error::Argument(_) => MrsStatus::Argument,
        Error::Shape(_) => MrsStatus::Shape,
        Error::Parse { .. } => MrsStatus::Parse,
        Error::State(_) => MrsStatus::State,
        Error::Divergence { .. } => MrsStatus::Divergence,
        Error::Io { .. } => MrsStatus::Io,
        Error::Json(_) => MrsStatus::Config,
        _ => MrsStatus::Other,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MrsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MrsStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            MrsStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MrsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::Argument(format!("{what} is not UTF-8"))))
}

unsafe fn opt_json<T: serde::de::DeserializeOwned + Default>(p: *const c_char, what: &'static str) -> Result<T, Fail> {
    if p.is_null() {
        return Ok(T::default());
    }
    let s = str_arg(p, what)?;
    serde_json::from_str(s).map_err(|e| Fail::Lib(Error::Config(format!("{what}: {e}"))))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Fail> {
    if got < want {
        return Err(Fail::Lib(Error::Shape(format!(
            "{what} holds {got} values, need {want}"
        ))));
    }
    Ok(())
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mrs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Values per spectrum.
#[no_mangle]
pub extern "C" fn mrs_spectrum_len() -> usize {
    mrsdistill::spectra::SPECTRUM_LEN
}

/// Generates a synthetic cohort. `cohort_json` may be NULL for defaults;
/// `seed` replaces the configured seed.
///
/// # Safety
/// `cohort_json` is NULL or a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_dataset_generate(
    cohort_json: *const c_char,
    seed: u64,
    out: *mut *mut MrsDataset,
) -> MrsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let mut cfg: CohortConfig = opt_json(cohort_json, "cohort_json")?;
        cfg.seed = seed;
        cfg.validate()?;
        *out = Box::into_raw(Box::new(MrsDataset(generate_cohort(&cfg)?)));
        Ok(())
    })
}

/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_dataset_load(path: *const c_char, out: *mut *mut MrsDataset) -> MrsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = str_arg(path, "path")?;
        *out = Box::into_raw(Box::new(MrsDataset(load_dataset(path)?)));
        Ok(())
    })
}

/// # Safety
/// `ds` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mrs_dataset_save(ds: *const MrsDataset, path: *const c_char) -> MrsStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or(Fail::Null("ds"))?;
        save_dataset(&ds.0, str_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `ds` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_dataset_len(ds: *const MrsDataset, out: *mut usize) -> MrsStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or(Fail::Null("ds"))?;
        *out_ptr(out, "out")? = ds.0.len();
        Ok(())
    })
}

fn spectrum(ds: &Dataset, index: usize) -> Result<&Spectrum, Fail> {
    ds.spectra.get(index).ok_or_else(|| {
        Fail::Lib(Error::Argument(format!(
            "index {index} out of range for {} spectra",
            ds.len()
        )))
    })
}

/// Copies the values of spectrum `index` into `out` (capacity `out_len`).
///
/// # Safety
/// `ds` is a live handle; `out` points to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mrs_dataset_values(
    ds: *const MrsDataset,
    index: usize,
    out: *mut f64,
    out_len: usize,
) -> MrsStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or(Fail::Null("ds"))?;
        let s = spectrum(&ds.0, index)?;
        check_len(out_len, s.values.len(), "out")?;
        slice_mut(out, out_len, "out")?[..s.values.len()].copy_from_slice(&s.values);
        Ok(())
    })
}

/// Observed label (0 healthy, 1 tumor) and hidden true label (-1 unknown).
///
/// # Safety
/// `ds` is a live handle; both outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_dataset_label(
    ds: *const MrsDataset,
    index: usize,
    label: *mut i32,
    true_label: *mut i32,
) -> MrsStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or(Fail::Null("ds"))?;
        let s = spectrum(&ds.0, index)?;
        *out_ptr(label, "label")? = s.label.index() as i32;
        *out_ptr(true_label, "true_label")? = s.true_label.map_or(-1, |c| c.index() as i32);
        Ok(())
    })
}

/// # Safety
/// `ds` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mrs_dataset_free(ds: *mut MrsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Fresh network; `config_json` may be NULL for the default architecture.
///
/// # Safety
/// `config_json` is NULL or NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_network_new(
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut MrsNetwork,
) -> MrsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg: NetworkConfig = opt_json(config_json, "config_json")?;
        *out = Box::into_raw(Box::new(MrsNetwork(Network::new(cfg, seed)?)));
        Ok(())
    })
}

/// # Safety
/// `path` is NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_network_load(path: *const c_char, out: *mut *mut MrsNetwork) -> MrsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let ck = load_checkpoint(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(MrsNetwork(ck.network)));
        Ok(())
    })
}

/// # Safety
/// `net` is a live handle; `path` is NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mrs_network_save(net: *const MrsNetwork, path: *const c_char) -> MrsStatus {
    guard(|| {
        let net = net.as_ref().ok_or(Fail::Null("net"))?;
        let ck = Checkpoint {
            network: net.0.clone(),
            adam: None,
            log: Vec::new(),
        };
        save_checkpoint(&ck, str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Trains in place on `ds`; `train_json` may be NULL for defaults.
///
/// # Safety
/// `net` and `ds` are live handles; `train_json` is NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mrs_network_train(
    net: *mut MrsNetwork,
    ds: *const MrsDataset,
    train_json: *const c_char,
) -> MrsStatus {
    guard(|| {
        let net = net.as_mut().ok_or(Fail::Null("net"))?;
        let ds = ds.as_ref().ok_or(Fail::Null("ds"))?;
        let cfg: TrainConfig = opt_json(train_json, "train_json")?;
        let outcome = train(net.0.clone(), &ds.0, None, &cfg)?;
        net.0 = outcome.network;
        Ok(())
    })
}

/// Class probabilities for `n` row-major spectra of `len` values each;
/// writes `2 * n` doubles to `out`.
///
/// # Safety
/// `values` holds `n * len` doubles; `out` holds `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mrs_network_predict(
    net: *const MrsNetwork,
    values: *const f64,
    n: usize,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> MrsStatus {
    guard(|| {
        let net = net.as_ref().ok_or(Fail::Null("net"))?;
        let x = slice(values, n * len, "values")?;
        check_len(out_len, 2 * n, "out")?;
        let out = slice_mut(out, out_len, "out")?;
        let spectra: Vec<Spectrum> = x
            .chunks(len.max(1))
            .take(n)
            .map(|v| Spectrum::new(v.to_vec(), "ffi", Class::Healthy))
            .collect();
        for (k, p) in predict_proba(&net.0, &spectra)?.into_iter().enumerate() {
            out[2 * k] = p[0];
            out[2 * k + 1] = p[1];
        }
        Ok(())
    })
}

/// Class activation map of one spectrum: `raw` gets the feature-map-length
/// map, `upsampled` the input-length map. `*raw_written` receives the raw length.
///
/// # Safety
/// Buffers hold the stated number of doubles; `raw_written` is writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn mrs_network_cam(
    net: *const MrsNetwork,
    values: *const f64,
    len: usize,
    class_index: usize,
    raw: *mut f64,
    raw_cap: usize,
    upsampled: *mut f64,
    upsampled_cap: usize,
    raw_written: *mut usize,
) -> MrsStatus {
    guard(|| {
        let net = net.as_ref().ok_or(Fail::Null("net"))?;
        let x = slice(values, len, "values")?;
        let s = Spectrum::new(x.to_vec(), "ffi", Class::Healthy);
        let cam = class_activation_map(&net.0, &s, class_index, Upsample::Nearest)?;
        check_len(raw_cap, cam.raw.len(), "raw")?;
        check_len(upsampled_cap, cam.upsampled.len(), "upsampled")?;
        slice_mut(raw, raw_cap, "raw")?[..cam.raw.len()].copy_from_slice(&cam.raw);
        slice_mut(upsampled, upsampled_cap, "upsampled")?[..cam.upsampled.len()].copy_from_slice(&cam.upsampled);
        *out_ptr(raw_written, "raw_written")? = cam.raw.len();
        Ok(())
    })
}

/// # Safety
/// `net` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mrs_network_free(net: *mut MrsNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Area under the ROC curve; labels are 0 or 1.
///
/// # Safety
/// `scores` and `labels` hold `n` elements; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_auc(scores: *const f64, labels: *const i32, n: usize, out: *mut f64) -> MrsStatus {
    guard(|| {
        let s = slice(scores, n, "scores")?;
        let l = slice(labels, n, "labels")?;
        let classes = l
            .iter()
            .map(|&v| {
                usize::try_from(v)
                    .ok()
                    .and_then(Class::from_index)
                    .ok_or_else(|| Fail::Lib(Error::Argument(format!("label {v} is not 0 or 1"))))
            })
            .collect::<Result<Vec<_>, _>>()?;
        *out_ptr(out, "out")? = auc_from_scores(s, &classes)?;
        Ok(())
    })
}

/// `(1 - alpha) * target + alpha * partner` over `len` values.
///
/// # Safety
/// All three buffers hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mrs_mix(
    target: *const f64,
    partner: *const f64,
    len: usize,
    alpha: f64,
    out: *mut f64,
) -> MrsStatus {
    guard(|| {
        let t = Spectrum::new(slice(target, len, "target")?.to_vec(), "t", Class::Healthy);
        let p = Spectrum::new(slice(partner, len, "partner")?.to_vec(), "p", Class::Healthy);
        let m = mix_samples(&t, &p, alpha)?;
        slice_mut(out, len, "out")?.copy_from_slice(&m.values);
        Ok(())
    })
}

/// Indices of the rows of an `n x 2` probability table whose maximum is at
/// least `theta`. Writes up to `cap` indices and the full count.
///
/// # Safety
/// `probs` holds `2 * n` doubles, `out` holds `cap` elements, `count` is writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_collect_certain(
    probs: *const f64,
    n: usize,
    theta: f64,
    out: *mut usize,
    cap: usize,
    count: *mut usize,
) -> MrsStatus {
    guard(|| {
        let p = slice(probs, 2 * n, "probs")?;
        let rows: Vec<[f64; 2]> = p.chunks(2).map(|r| [r[0], r[1]]).collect();
        let idx = certain_from_probs(&rows, theta);
        let dst = slice_mut(out, cap, "out")?;
        for (d, &i) in dst.iter_mut().zip(&idx) {
            *d = i;
        }
        *out_ptr(count, "count")? = idx.len();
        Ok(())
    })
}
