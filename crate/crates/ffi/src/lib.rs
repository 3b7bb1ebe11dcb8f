//! C interface to `longmem`.
//!
//! Objects cross the boundary as opaque pointers created by `*_new` or
//! `*_from_*` functions and released by the matching `*_free`. Every fallible
//! call returns an [`LmStatus`]; on failure the message is kept per thread and
//! can be read with [`lm_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use longmem::likelihood::{exact_loglik, whittle_loglik, TimeSeries};
use longmem::metrics::DivergenceReport;
use longmem::prior::{log_prior_density, PriorSpec};
use longmem::sampler::{estimate_d, posterior_mean_model, run_chain, Chain, McmcConfig};
use longmem::simulate::{sample_path, SimPlan};
use longmem::spectral::{autocov, eval_f, FexpModel};
use longmem::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Breakdown = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

/// Opaque FEXP model.
pub struct LmModel(FexpModel);
/// Opaque observed series.
pub struct LmSeries(TimeSeries);
/// Opaque prior specification.
pub struct LmPrior(PriorSpec);
/// Opaque sampler output.
pub struct LmChain(Chain);

/// Finite-`n` and limiting divergences between two models.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LmDivergences {
    pub kl_n: f64,
    pub kl_inf: f64,
    pub h_n: f64,
    pub h: f64,
    pub b_n: f64,
    pub b: f64,
    pub ell: f64,
}

/// Sampler settings; see [`lm_mcmc_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmMcmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub step_d: f64,
    pub step_theta: f64,
    pub birth_rate: f64,
    pub seed: u64,
    pub k_max: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LmStatus {
    match e {
        Error::Domain(_) => LmStatus::Domain,
        Error::Breakdown { .. } => LmStatus::Breakdown,
        Error::Quadrature(_) | Error::RejectionBudget(_) | Error::EmptyChain(_) => {
            LmStatus::Numerical
        }
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => LmStatus::Io,
        _ => LmStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard<F: FnOnce() -> Result<(), (LmStatus, String)>>(f: F) -> LmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LmStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside longmem".into());
            LmStatus::Panic
        }
    }
}

fn lift<T>(r: longmem::Result<T>) -> Result<T, (LmStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (LmStatus, String) {
    (LmStatus::NullPointer, format!("{name} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, (LmStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, (LmStatus, String)> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn slice<'a>(
    p: *const f64,
    len: usize,
    name: &str,
) -> Result<&'a [f64], (LmStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(
    p: *mut f64,
    len: usize,
    name: &str,
) -> Result<&'a mut [f64], (LmStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length, or 0 if none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn lm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds `FEXP(d; θ_0..θ_{len-1})`.
///
/// # Safety
/// `theta` must be valid for `len` reads; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_model_new(
    d: f64,
    theta: *const f64,
    len: usize,
    out_model: *mut *mut LmModel,
) -> LmStatus {
    guard(|| {
        let o = out(out_model, "out_model")?;
        let th = slice(theta, len, "theta")?.to_vec();
        let m = lift(FexpModel::new(d, th))?;
        *o = Box::into_raw(Box::new(LmModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lm_model_free(model: *mut LmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Memory parameter `d` of a model.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_model_d(model: *const LmModel, out_d: *mut f64) -> LmStatus {
    guard(|| {
        *out(out_d, "out_d")? = borrow(model, "model")?.0.d();
        Ok(())
    })
}

/// Truncation order `k`; the model holds `k + 1` coefficients.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_model_k(model: *const LmModel, out_k: *mut usize) -> LmStatus {
    guard(|| {
        *out(out_k, "out_k")? = borrow(model, "model")?.0.k();
        Ok(())
    })
}

/// Copies up to `len` coefficients into `theta`.
///
/// # Safety
/// `theta` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn lm_model_theta(
    model: *const LmModel,
    theta: *mut f64,
    len: usize,
) -> LmStatus {
    guard(|| {
        let m = &borrow(model, "model")?.0;
        let dst = slice_mut(theta, len, "theta")?;
        for (d, s) in dst.iter_mut().zip(m.theta()) {
            *d = *s;
        }
        Ok(())
    })
}

/// Spectral density `f(λ)`, `|λ| ≤ π`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_model_eval_f(
    model: *const LmModel,
    lambda: f64,
    out_f: *mut f64,
) -> LmStatus {
    guard(|| {
        let o = out(out_f, "out_f")?;
        *o = lift(eval_f(&borrow(model, "model")?.0, lambda))?;
        Ok(())
    })
}

/// Autocovariances `γ(0..n-1)` into `gamma`.
///
/// # Safety
/// `gamma` must be valid for `n` writes.
#[no_mangle]
pub unsafe extern "C" fn lm_autocov(model: *const LmModel, n: usize, gamma: *mut f64) -> LmStatus {
    guard(|| {
        let m = &borrow(model, "model")?.0;
        let dst = slice_mut(gamma, n, "gamma")?;
        let g = lift(autocov(m, n))?;
        dst.copy_from_slice(g.gamma());
        Ok(())
    })
}

/// # Safety
/// `x` must be valid for `n` reads; `out_series` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_series_new(
    x: *const f64,
    n: usize,
    out_series: *mut *mut LmSeries,
) -> LmStatus {
    guard(|| {
        let o = out(out_series, "out_series")?;
        let s = lift(TimeSeries::new(slice(x, n, "x")?.to_vec()))?;
        *o = Box::into_raw(Box::new(LmSeries(s)));
        Ok(())
    })
}

/// # Safety
/// `series` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lm_series_free(series: *mut LmSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Exact Gaussian log-likelihood.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_exact_loglik(
    series: *const LmSeries,
    model: *const LmModel,
    out_ll: *mut f64,
) -> LmStatus {
    guard(|| {
        let o = out(out_ll, "out_ll")?;
        *o = lift(exact_loglik(
            &borrow(series, "series")?.0,
            &borrow(model, "model")?.0,
        ))?;
        Ok(())
    })
}

/// Whittle log-likelihood without additive constants.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_whittle_loglik(
    series: *const LmSeries,
    model: *const LmModel,
    out_ll: *mut f64,
) -> LmStatus {
    guard(|| {
        let o = out(out_ll, "out_ll")?;
        *o = whittle_loglik(&borrow(series, "series")?.0, &borrow(model, "model")?.0);
        Ok(())
    })
}

/// All divergences of `f` from the reference `f0` at dimension `n`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_divergences(
    f0: *const LmModel,
    f: *const LmModel,
    n: usize,
    out_report: *mut LmDivergences,
) -> LmStatus {
    guard(|| {
        let o = out(out_report, "out_report")?;
        let r = lift(DivergenceReport::compute(
            &borrow(f0, "f0")?.0,
            &borrow(f, "f")?.0,
            n,
        ))?;
        *o = LmDivergences {
            kl_n: r.kl_n,
            kl_inf: r.kl_inf,
            h_n: r.h_n,
            h: r.h,
            b_n: r.b_n,
            b: r.b,
            ell: r.ell,
        };
        Ok(())
    })
}

/// Draws `replicates` exact paths of length `n` into `paths`, replicate-major
/// (`paths[r * n + t]`).
///
/// # Safety
/// `paths` must be valid for `n * replicates` writes.
#[no_mangle]
pub unsafe extern "C" fn lm_simulate(
    model: *const LmModel,
    n: usize,
    replicates: usize,
    seed: u64,
    paths: *mut f64,
) -> LmStatus {
    guard(|| {
        let m = borrow(model, "model")?.0.clone();
        let total = n.checked_mul(replicates).ok_or((
            LmStatus::InvalidArgument,
            "n * replicates overflows".to_string(),
        ))?;
        let dst = slice_mut(paths, total, "paths")?;
        let sim = lift(SimPlan::new(m, n, replicates, seed).and_then(|p| sample_path(&p)))?;
        for (r, p) in sim.paths.iter().enumerate() {
            dst[r * n..(r + 1) * n].copy_from_slice(p.values());
        }
        Ok(())
    })
}

/// Default prior: truncated Gaussian with `t = 0.05`, `β = 1.5`, `L = 4`,
/// `k ~ Poisson(2)`, `τ0 = 1`.
///
/// # Safety
/// `out_prior` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_prior_default(out_prior: *mut *mut LmPrior) -> LmStatus {
    guard(|| {
        *out(out_prior, "out_prior")? = Box::into_raw(Box::new(LmPrior(PriorSpec::default())));
        Ok(())
    })
}

/// Parses the `[prior]` table of a TOML document.
///
/// # Safety
/// `toml` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lm_prior_from_toml(
    toml: *const c_char,
    out_prior: *mut *mut LmPrior,
) -> LmStatus {
    guard(|| {
        let o = out(out_prior, "out_prior")?;
        if toml.is_null() {
            return Err(null("toml"));
        }
        let s = CStr::from_ptr(toml)
            .to_str()
            .map_err(|e| (LmStatus::InvalidArgument, e.to_string()))?;
        *o = Box::into_raw(Box::new(LmPrior(lift(PriorSpec::from_toml_str(s))?)));
        Ok(())
    })
}

/// # Safety
/// `prior` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lm_prior_free(prior: *mut LmPrior) {
    if !prior.is_null() {
        drop(Box::from_raw(prior));
    }
}

/// Log prior density; `-inf` outside the support.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_prior_log_density(
    prior: *const LmPrior,
    model: *const LmModel,
    out_lp: *mut f64,
) -> LmStatus {
    guard(|| {
        *out(out_lp, "out_lp")? =
            log_prior_density(&borrow(prior, "prior")?.0, &borrow(model, "model")?.0);
        Ok(())
    })
}

/// Default sampler settings.
#[no_mangle]
pub extern "C" fn lm_mcmc_default() -> LmMcmcConfig {
    let c = McmcConfig::default();
    LmMcmcConfig {
        iterations: c.iterations,
        burn_in: c.burn_in,
        thin: c.thin,
        step_d: c.step_d,
        step_theta: c.step_theta,
        birth_rate: c.birth_rate,
        seed: c.seed,
        k_max: c.k_max,
    }
}

/// Runs the sampler.
///
/// # Safety
/// Pointers must be valid; `out_chain` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_fit(
    series: *const LmSeries,
    prior: *const LmPrior,
    config: *const LmMcmcConfig,
    out_chain: *mut *mut LmChain,
) -> LmStatus {
    guard(|| {
        let o = out(out_chain, "out_chain")?;
        let c = borrow(config, "config")?;
        let cfg = McmcConfig {
            iterations: c.iterations,
            burn_in: c.burn_in,
            thin: c.thin,
            step_d: c.step_d,
            step_theta: c.step_theta,
            birth_rate: c.birth_rate,
            seed: c.seed,
            k_max: c.k_max,
            ..McmcConfig::default()
        };
        let chain = lift(run_chain(
            &borrow(series, "series")?.0,
            &borrow(prior, "prior")?.0,
            &cfg,
        ))?;
        *o = Box::into_raw(Box::new(LmChain(chain)));
        Ok(())
    })
}

/// # Safety
/// `chain` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lm_chain_free(chain: *mut LmChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Number of retained draws.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_chain_len(chain: *const LmChain, out_len: *mut usize) -> LmStatus {
    guard(|| {
        *out(out_len, "out_len")? = borrow(chain, "chain")?.0.len();
        Ok(())
    })
}

/// Posterior mean of `d`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_chain_estimate_d(chain: *const LmChain, out_d: *mut f64) -> LmStatus {
    guard(|| {
        let o = out(out_d, "out_d")?;
        *o = lift(estimate_d(&borrow(chain, "chain")?.0))?;
        Ok(())
    })
}

/// Posterior-mean model `FEXP(d̂, θ̄)`; free with [`lm_model_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn lm_chain_posterior_mean(
    chain: *const LmChain,
    out_model: *mut *mut LmModel,
) -> LmStatus {
    guard(|| {
        let o = out(out_model, "out_model")?;
        let m = lift(posterior_mean_model(&borrow(chain, "chain")?.0))?;
        *o = Box::into_raw(Box::new(LmModel(m)));
        Ok(())
    })
}
