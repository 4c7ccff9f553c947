//! C ABI over `sgrpo-core`.
//!
//! Every fallible function returns an [`SgrpoStatus`]; on failure a message is
//! available from [`sgrpo_last_error`] on the same thread. Objects are opaque
//! handles created by `*_new`/`*_parse` functions and released with the
//! matching `*_free`. Output pointers are only written on success.

use sgrpo::config::apply_config_text;
use sgrpo::grpo::normalize_advantages;
use sgrpo::metrics::{kendall_tau_b, spearman_rho};
use sgrpo::mgas::{scale_factor, AdvantageSign, MgasParams};
use sgrpo::rewards::{final_reward_with, gaussian_subscore_reward, RewardParams};
use sgrpo::synth::read_corpus;
use sgrpo::train::{MetricsRecord, TrainConfig, Trainer};
use sgrpo::{parse_completion, AspectWeights, Error, ParsedCompletion, SubScoreVector, NUM_ASPECTS};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgrpoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Invalid configuration or argument.
    Config = 3,
    /// Input outside the domain of a formula.
    Domain = 4,
    /// Malformed or misaligned input data.
    Data = 5,
    /// Statistic undefined for the input (e.g. constant column).
    Undefined = 6,
    /// Non-finite values during training.
    NonFinite = 7,
    Io = 8,
    State = 9,
    /// A Rust panic was caught at the boundary.
    Panic = 10,
}

impl From<&Error> for SgrpoStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => SgrpoStatus::Config,
            Error::Domain(_) => SgrpoStatus::Domain,
            Error::Data { .. } | Error::Alignment(_) | Error::LengthMismatch { .. } => SgrpoStatus::Data,
            Error::UndefinedStatistic(_) => SgrpoStatus::Undefined,
            Error::NonFinite { .. } => SgrpoStatus::NonFinite,
            Error::Io(_) => SgrpoStatus::Io,
            Error::State(_) => SgrpoStatus::State,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

struct Failure(SgrpoStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(SgrpoStatus::from(&e), e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn guard<F: FnOnce() -> FfiResult<()>>(f: F) -> SgrpoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgrpoStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SgrpoStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SgrpoStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SgrpoStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> FfiResult<&'a [T]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sgrpo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sgrpo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `exp(-(pred - gt)^2 / (2 sigma^2))`.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_gaussian_reward(pred: f64, gt: f64, sigma: f64, out: *mut f64) -> SgrpoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = gaussian_subscore_reward(pred, gt, sigma)?;
        Ok(())
    })
}

/// Group-normalizes `n` rewards into `out` (population std, zero for
/// near-constant groups).
///
/// # Safety
/// `rewards` and `out` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_normalize_advantages(
    rewards: *const f64,
    n: usize,
    epsilon_std: f64,
    out: *mut f64,
) -> SgrpoStatus {
    guard(|| {
        let r = slice_arg(rewards, n, "rewards")?;
        if n > 0 && out.is_null() {
            return Err(null("out"));
        }
        for (i, a) in normalize_advantages(r, epsilon_std).into_iter().enumerate() {
            *out.add(i) = a;
        }
        Ok(())
    })
}

/// Advantage-scaling parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SgrpoMgasParams {
    pub phi_minus: f64,
    pub phi_plus: f64,
    pub c: f64,
    pub beta: f64,
    /// Non-zero to clamp the factor into `[phi_minus, phi_plus]`.
    pub clamp: i32,
}

impl From<SgrpoMgasParams> for MgasParams {
    fn from(p: SgrpoMgasParams) -> Self {
        MgasParams {
            phi_minus: p.phi_minus,
            phi_plus: p.phi_plus,
            c: p.c,
            beta: p.beta,
            clamp: p.clamp != 0,
        }
    }
}

#[no_mangle]
pub extern "C" fn sgrpo_mgas_default_params() -> SgrpoMgasParams {
    let d = MgasParams::default();
    SgrpoMgasParams {
        phi_minus: d.phi_minus,
        phi_plus: d.phi_plus,
        c: d.c,
        beta: d.beta,
        clamp: d.clamp as i32,
    }
}

/// Scale factor for an advantage of the given sign at agreement `gamma`.
/// Pass null `params` for the defaults.
///
/// # Safety
/// `params` must be null or valid; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_mgas_scale_factor(
    gamma: f64,
    advantage: f64,
    params: *const SgrpoMgasParams,
    out: *mut f64,
) -> SgrpoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p: MgasParams = params.as_ref().map_or_else(MgasParams::default, |p| (*p).into());
        p.validate()?;
        *out = scale_factor(gamma, AdvantageSign::of(advantage), &p)?;
        Ok(())
    })
}

unsafe fn correlation(
    x: *const f64,
    y: *const f64,
    n: usize,
    out: *mut f64,
    f: fn(&[f64], &[f64]) -> sgrpo::Result<f64>,
) -> SgrpoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = f(slice_arg(x, n, "x")?, slice_arg(y, n, "y")?)?;
        Ok(())
    })
}

/// Kendall tau-b of two length-`n` sequences.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_kendall_tau_b(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> SgrpoStatus {
    correlation(x, y, n, out, kendall_tau_b)
}

/// Spearman rho of two length-`n` sequences.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_spearman_rho(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> SgrpoStatus {
    correlation(x, y, n, out, spearman_rho)
}

/// A parsed completion.
pub struct SgrpoCompletion {
    parsed: ParsedCompletion,
}

/// Reward components of one completion.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SgrpoRewardBreakdown {
    pub r_reasoning: f64,
    pub r_format: f64,
    pub per_aspect: [f64; 6],
    pub r_sub_dyn: f64,
    pub r_total: f64,
    pub r_acc: f64,
    pub r_final: f64,
}

/// Parses completion text into a new handle.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_completion_parse(text: *const c_char, out: *mut *mut SgrpoCompletion) -> SgrpoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(text, "text")?;
        *out = Box::into_raw(Box::new(SgrpoCompletion {
            parsed: parse_completion(text),
        }));
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a handle from [`sgrpo_completion_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_completion_free(c: *mut SgrpoCompletion) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// 1 if the completion is well-formed, 0 otherwise (also 0 for null).
///
/// # Safety
/// `c` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_completion_format_valid(c: *const SgrpoCompletion) -> i32 {
    c.as_ref().is_some_and(|c| c.parsed.format_valid) as i32
}

/// Score for aspect `aspect` (0..6). `present` receives 0 when the tag was
/// missing or invalid, in which case `value` is left untouched.
///
/// # Safety
/// `c` must be a live handle; `value` and `present` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_completion_score(
    c: *const SgrpoCompletion,
    aspect: usize,
    value: *mut f64,
    present: *mut i32,
) -> SgrpoStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("completion"))?;
        let (value, present) = (out_arg(value, "value")?, out_arg(present, "present")?);
        if aspect >= NUM_ASPECTS {
            return Err(Failure(SgrpoStatus::Config, format!("aspect index {aspect} out of range")));
        }
        match c.parsed.scores[aspect] {
            Some(v) => {
                *value = v;
                *present = 1;
            }
            None => *present = 0,
        }
        Ok(())
    })
}

/// Rewards the completion against six ground-truth counts. `weights` may be
/// null for unit weights, otherwise it must hold six values.
///
/// # Safety
/// `gt` must point to six counts; `weights` null or six doubles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_completion_reward(
    c: *const SgrpoCompletion,
    gt: *const u32,
    weights: *const f64,
    sigma: f64,
    sigma_total: f64,
    out: *mut SgrpoRewardBreakdown,
) -> SgrpoStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("completion"))?;
        let out = out_arg(out, "out")?;
        let gt: [u32; NUM_ASPECTS] = slice_arg(gt, NUM_ASPECTS, "gt")?.try_into().expect("length 6");
        let w = if weights.is_null() {
            AspectWeights::unit()
        } else {
            AspectWeights::from_weights(slice_arg(weights, NUM_ASPECTS, "weights")?.try_into().expect("length 6"))
        };
        let params = RewardParams { sigma, sigma_total };
        let r = final_reward_with(&c.parsed, &SubScoreVector(gt), &w, &params)?;
        *out = SgrpoRewardBreakdown {
            r_reasoning: r.r_reasoning,
            r_format: r.r_format,
            per_aspect: r.per_aspect,
            r_sub_dyn: r.r_sub_dyn,
            r_total: r.r_total,
            r_acc: r.r_acc,
            r_final: r.r_final,
        };
        Ok(())
    })
}

/// A training run over an in-memory corpus.
pub struct SgrpoTrainer {
    inner: Trainer,
}

/// Summary of one training step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SgrpoStepMetrics {
    pub step: u64,
    pub loss: f64,
    pub mean_reward: f64,
    pub gamma: f64,
    pub kl: f64,
    pub grad_norm: f64,
    pub weights: [f64; 6],
    /// 1 if the aspect weights were refreshed at the end of this step.
    pub weights_refreshed: i32,
}

/// Creates a trainer from `key = value` config text (null for defaults) and
/// a corpus file.
///
/// # Safety
/// `config_text` null or NUL-terminated; `corpus_path` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_trainer_new(
    config_text: *const c_char,
    corpus_path: *const c_char,
    out: *mut *mut SgrpoTrainer,
) -> SgrpoStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = if config_text.is_null() {
            ""
        } else {
            str_arg(config_text, "config_text")?
        };
        let config = apply_config_text(&TrainConfig::default(), text)
            .map_err(|problems| Failure(SgrpoStatus::Config, problems.join("; ")))?;
        let corpus = read_corpus(str_arg(corpus_path, "corpus_path")?)?;
        *out = Box::into_raw(Box::new(SgrpoTrainer {
            inner: Trainer::new(config, corpus)?,
        }));
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a live trainer handle.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_trainer_free(t: *mut SgrpoTrainer) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Runs one step. `out` may be null.
///
/// # Safety
/// `t` must be a live handle; `out` null or valid.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_trainer_step(t: *mut SgrpoTrainer, out: *mut SgrpoStepMetrics) -> SgrpoStatus {
    guard(|| {
        let t = t.as_mut().ok_or_else(|| null("trainer"))?;
        let records = t.inner.step()?;
        let mut m = SgrpoStepMetrics::default();
        for r in &records {
            match r {
                MetricsRecord::Step(s) => {
                    m.step = s.step;
                    m.loss = s.loss;
                    m.mean_reward = s.mean_reward;
                    m.gamma = s.gamma;
                    m.kl = s.kl;
                    m.grad_norm = s.grad_norm;
                    m.weights = s.weights;
                }
                MetricsRecord::Weights(_) => m.weights_refreshed = 1,
            }
        }
        if let Some(out) = out.as_mut() {
            *out = m;
        }
        Ok(())
    })
}

/// Number of completed steps (0 for null).
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_trainer_steps_done(t: *const SgrpoTrainer) -> u64 {
    t.as_ref().map_or(0, |t| t.inner.steps_done())
}

/// Current aspect weights into `out[0..6]`.
///
/// # Safety
/// `t` must be a live handle; `out` must hold six doubles.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_trainer_weights(t: *const SgrpoTrainer, out: *mut f64) -> SgrpoStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("trainer"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::ptr::copy_nonoverlapping(t.inner.weights().w.as_ptr(), out, NUM_ASPECTS);
        Ok(())
    })
}

/// Greedy count predictions for a feature vector of length `dim`.
///
/// # Safety
/// `t` live; `features` must hold `dim` doubles; `out` must hold six counts.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_trainer_predict(
    t: *const SgrpoTrainer,
    features: *const f64,
    dim: usize,
    out: *mut u32,
) -> SgrpoStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("trainer"))?;
        let f = slice_arg(features, dim, "features")?;
        if out.is_null() {
            return Err(null("out"));
        }
        t.inner.theta().check_features(f)?;
        let counts = t.inner.theta().predict_counts(f);
        std::ptr::copy_nonoverlapping(counts.0.as_ptr(), out, NUM_ASPECTS);
        Ok(())
    })
}

/// Writes a checkpoint that the `sgrpo train --resume` command accepts.
///
/// # Safety
/// `t` live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sgrpo_trainer_save_checkpoint(t: *const SgrpoTrainer, path: *const c_char) -> SgrpoStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("trainer"))?;
        t.inner.checkpoint().save(str_arg(path, "path")?)?;
        Ok(())
    })
}
