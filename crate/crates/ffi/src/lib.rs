//! C ABI over `eth-uniqueqma`. Objects are opaque handles created by
//! `*_new`/`*_from_*` functions and released with the matching `*_free`.
//! Every fallible call returns an [`EqStatus`]; on failure the message is
//! available from [`eq_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use eth_uniqueqma::ensemble::{EnsembleConfig, EthParams, FMode, MuMode};
use eth_uniqueqma::experiments::{run_experiment, ExperimentConfig, Output};
use eth_uniqueqma::hamiltonian::{Basis, EnergyWindow, Hamiltonian};
use eth_uniqueqma::linalg::{ComplexMatrix, C64};
use eth_uniqueqma::oracle::{simple_verifier, SubspaceOracle};
use eth_uniqueqma::qpe::{q_weights, sinc_l, QpeConfig};
use eth_uniqueqma::spectral::perron_check;
use eth_uniqueqma::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    CapExceeded = 4,
    Precondition = 5,
    Numerical = 6,
    Io = 7,
    Panic = 8,
}

/// Hamiltonian with a known eigendecomposition.
pub struct EqHamiltonian(Hamiltonian);

/// ETH amplitude data `f_{αβ}`, `μ^i_α`.
pub struct EqEnsemble(EthParams);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct EqPerronResult {
    pub lambda: f64,
    pub lambda_second: f64,
    pub ratio: f64,
    pub restriction_residual: f64,
    /// Number of failed inequalities; 0 when every bound holds.
    pub violations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EqStatus {
    match e {
        Error::DimensionMismatch { .. } => EqStatus::DimensionMismatch,
        Error::CapExceeded { .. } => EqStatus::CapExceeded,
        Error::Precondition(_) | Error::EmptyWindow => EqStatus::Precondition,
        Error::Decomposition(_) | Error::NotHermitian { .. } | Error::WeightAboveOne { .. } => EqStatus::Numerical,
        Error::Io(_) => EqStatus::Io,
        _ => EqStatus::InvalidArgument,
    }
}

struct Fail(EqStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(EqStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EqStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside eth-uniqueqma".into());
            EqStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn check_len(len: usize, expected: usize, what: &str) -> Result<(), Fail> {
    if len != expected {
        return Err(Fail(
            EqStatus::DimensionMismatch,
            format!("{what}: expected length {expected}, got {len}"),
        ));
    }
    Ok(())
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(EqStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `sin(π L x) / (L sin(π x))`.
#[no_mangle]
pub extern "C" fn eq_sinc_l(x: f64, l: usize) -> f64 {
    sinc_l(x, l)
}

/// Builds `V diag(values) V^dagger` with `V` Haar-random from `basis_seed`,
/// or the identity when `random_basis` is false.
///
/// # Safety
/// `values` must point to `n` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eq_hamiltonian_from_spectrum(
    values: *const f64,
    n: usize,
    random_basis: bool,
    basis_seed: u64,
    out: *mut *mut EqHamiltonian,
) -> EqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let values = input(values, n, "values")?;
        let basis = if random_basis {
            Basis::Random { seed: basis_seed }
        } else {
            Basis::Identity
        };
        let h = Hamiltonian::from_spectrum(values, basis)?;
        *out = Box::into_raw(Box::new(EqHamiltonian(h)));
        Ok(())
    })
}

/// # Safety
/// `h` must come from [`eq_hamiltonian_from_spectrum`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn eq_hamiltonian_free(h: *mut EqHamiltonian) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Hilbert-space dimension, or 0 for NULL.
///
/// # Safety
/// `h` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eq_hamiltonian_dim(h: *const EqHamiltonian) -> usize {
    h.as_ref().map_or(0, |h| h.0.dim())
}

/// Copies the ascending eigenvalues into `out[0..len]`; `len` must equal the dimension.
///
/// # Safety
/// `h` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn eq_hamiltonian_eigenvalues(h: *const EqHamiltonian, out: *mut f64, len: usize) -> EqStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        check_len(len, h.0.dim(), "out")?;
        output(out, len, "out")?.copy_from_slice(h.0.eigenvalues());
        Ok(())
    })
}

/// QPE weights `q_α` for grid size `l` and window `[e0 - delta, e0 + delta]`,
/// indexed like the ascending eigenvalues.
///
/// # Safety
/// `h` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn eq_q_weights(
    h: *const EqHamiltonian,
    l: usize,
    e0: f64,
    delta: f64,
    out: *mut f64,
    len: usize,
) -> EqStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        check_len(len, h.0.dim(), "out")?;
        let cfg = QpeConfig::new(l, EnergyWindow::simple(e0, delta)?)?;
        let q = q_weights(&h.0, &cfg)?.q;
        output(out, len, "out")?.copy_from_slice(&q);
        Ok(())
    })
}

/// Ensemble with window dimension `d`, `m` observables and amplitude `f`.
/// `uniform` selects `f_{αβ} = f`; otherwise entries are drawn in `[f, 1]`
/// from `seed`. Diagonal amplitudes are zero.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eq_ensemble_new(
    d: usize,
    m: usize,
    f: f64,
    uniform: bool,
    seed: u64,
    out: *mut *mut EqEnsemble,
) -> EqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = EnsembleConfig {
            d,
            m,
            f,
            f_mode: if uniform { FMode::Uniform } else { FMode::RandomInRange },
            mu_mode: MuMode::Zero,
            seed,
        };
        *out = Box::into_raw(Box::new(EqEnsemble(EthParams::from_config(&cfg)?)));
        Ok(())
    })
}

/// # Safety
/// `e` must come from [`eq_ensemble_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn eq_ensemble_free(e: *mut EqEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Leading eigenpair checks on `M_f = (f_{αβ}^2 / D)`.
///
/// # Safety
/// `e` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eq_perron_check(e: *const EqEnsemble, seed: u64, out: *mut EqPerronResult) -> EqStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("ensemble"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = perron_check(&e.0, seed)?;
        *out = EqPerronResult {
            lambda: r.lambda,
            lambda_second: r.lambda_second,
            ratio: r.ratio,
            restriction_residual: r.restriction_residual,
            violations: r.violations.len(),
        };
        Ok(())
    })
}

/// Acceptance probability of the controlled-reflection verifier. `basis` is
/// an orthonormal `n x k` matrix in row-major order and `witness` a unit
/// vector of length `n`, both as interleaved (re, im) pairs.
///
/// # Safety
/// `basis` must hold `2 n k` doubles, `witness` `2 n` doubles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eq_simple_verifier(
    basis: *const f64,
    n: usize,
    k: usize,
    witness: *const f64,
    out: *mut f64,
) -> EqStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let b = input(basis, 2 * n * k, "basis")?;
        let w = input(witness, 2 * n, "witness")?;
        let pairs = |s: &[f64]| -> Vec<C64> { s.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect() };
        let oracle = SubspaceOracle::new(ComplexMatrix::from_vec(n, k, pairs(b))?)?;
        *out = simple_verifier(&oracle, &pairs(w))?;
        Ok(())
    })
}

/// Runs the experiment described by a JSON config, writing reports under
/// `out_dir` (or the config's `out_dir` when NULL). `passed` receives
/// whether every criterion held; threshold failures still return `Ok`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string, `out_dir` NULL or one,
/// and `passed` writable.
#[no_mangle]
pub unsafe extern "C" fn eq_run_experiment_json(
    config_json: *const c_char,
    out_dir: *const c_char,
    passed: *mut bool,
) -> EqStatus {
    guard(|| {
        let passed = passed.as_mut().ok_or_else(|| null("passed"))?;
        let cfg = ExperimentConfig::from_json(cstr(config_json, "config_json")?)?;
        let dir = if out_dir.is_null() {
            cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("ethqma-out"))
        } else {
            PathBuf::from(cstr(out_dir, "out_dir")?)
        };
        let outcome = run_experiment(&cfg.params()?, cfg.seed, &Output::new(dir)?)?;
        *passed = outcome.passed();
        Ok(())
    })
}
