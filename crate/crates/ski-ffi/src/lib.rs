//! C ABI for the sparse-Kalman estimator: opaque handle, status codes, and
//! callback-driven model definition, so other languages can run the joint
//! state/weight filter with relevance learning over their own dynamics.
//!
//! The generated header lives at `include/ski.h`. Typical usage from C:
//!
//! ```c
//! SkiModelDesc desc = { /* dims, dt, noise, callbacks */ };
//! int32_t status = 0;
//! SkiEstimator *est = ski_estimator_new(&desc, mu0, p0, s0, 0.3, 2.0, &status);
//! ski_estimator_enable_ard(est, 0.1, 5, 1e-8);
//! for (...) { ski_estimator_step(est, u, y); }
//! ski_estimator_weights(est, w_out);
//! ski_estimator_relevances(est, s_out);
//! ski_estimator_free(est);
//! ```
//!
//! An estimator must be used from one thread at a time; distinct estimators
//! are independent.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ski_core::ard::{ard_step, posterior_refresh, ArdEngine};
use ski_core::filters::SrUkf;
use ski_core::matkernels::Mat;
use ski_core::model::{belief_blocks, initial_belief, BasisLibrary, Dims, ParametricModel};

/// Success.
pub const SKI_OK: i32 = 0;
/// A required pointer was null.
pub const SKI_ERR_NULL_POINTER: i32 = -1;
/// A dimension, hyperparameter, or noise specification was invalid.
pub const SKI_ERR_INVALID_ARGUMENT: i32 = -2;
/// The filter update failed (lost positive definiteness or produced
/// non-finite values); the estimator should be discarded.
pub const SKI_ERR_FILTER: i32 = -3;
/// The relevance update or posterior refresh failed.
pub const SKI_ERR_RELEVANCE: i32 = -4;
/// An internal invariant was violated; the estimator should be discarded.
pub const SKI_ERR_INTERNAL: i32 = -5;

/// State transition callback (nullable): reads `x` (`d_x`), `u` (`d_u`)
/// and the evaluated unknown term `f` (`d_f`), writes the next state into
/// `x_next` (`d_x`).
pub type SkiTransitionFn = Option<
    extern "C" fn(x: *const f64, u: *const f64, f: *const f64, x_next: *mut f64, user_data: *mut c_void),
>;

/// Observation callback (nullable): reads `x` (`d_x`), writes the
/// measurement prediction into `y` (`d_y`).
pub type SkiObserveFn = Option<extern "C" fn(x: *const f64, y: *mut f64, user_data: *mut c_void)>;

/// Basis callback (nullable): reads `x` and `u`, writes the basis
/// evaluations into `phi` as a row-major `d_f × d_theta` matrix (column `i`
/// is the i-th candidate basis function).
pub type SkiBasisFn =
    Option<extern "C" fn(x: *const f64, u: *const f64, phi: *mut f64, user_data: *mut c_void)>;

/// Model description handed to [`ski_estimator_new`]. All pointers must
/// stay valid for the duration of the call; the callbacks and `user_data`
/// must stay valid for the estimator's lifetime.
#[repr(C)]
pub struct SkiModelDesc {
    pub d_x: usize,
    pub d_u: usize,
    pub d_y: usize,
    pub d_theta: usize,
    pub d_f: usize,
    /// Discrete step length in seconds.
    pub dt: f64,
    /// Process-noise variance per state, length `d_x`.
    pub q_diag: *const f64,
    /// Measurement-noise variance per channel, length `d_y`.
    pub r_diag: *const f64,
    pub transition: SkiTransitionFn,
    pub observe: SkiObserveFn,
    pub basis: SkiBasisFn,
    pub user_data: *mut c_void,
}

#[derive(Clone, Copy)]
struct Callbacks {
    transition: extern "C" fn(*const f64, *const f64, *const f64, *mut f64, *mut c_void),
    observe: extern "C" fn(*const f64, *mut f64, *mut c_void),
    basis: extern "C" fn(*const f64, *const f64, *mut f64, *mut c_void),
    user_data: *mut c_void,
}

// The estimator is documented single-threaded; the marker exists because
// model closures capture the raw user pointer.
unsafe impl Send for Callbacks {}
unsafe impl Sync for Callbacks {}

/// Opaque estimator handle.
pub struct SkiEstimator {
    model: ParametricModel,
    filter: SrUkf,
    engine: Option<ArdEngine>,
    s0: Vec<f64>,
    poisoned: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(cleaned).unwrap());
}

/// Message of the most recent error on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ski_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ski_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn build_model(desc: &SkiModelDesc) -> Result<ParametricModel, String> {
    let (d_x, d_u, d_y, d_theta, d_f) = (desc.d_x, desc.d_u, desc.d_y, desc.d_theta, desc.d_f);
    let dims = Dims::new(d_x, d_u, d_y, d_theta, d_f).map_err(|e| e.to_string())?;
    let transition = desc.transition.ok_or("transition callback is null")?;
    let observe = desc.observe.ok_or("observe callback is null")?;
    let basis_fn = desc.basis.ok_or("basis callback is null")?;
    if desc.q_diag.is_null() || desc.r_diag.is_null() {
        return Err("noise diagonal pointers are null".into());
    }
    let q_diag = unsafe { std::slice::from_raw_parts(desc.q_diag, d_x) }.to_vec();
    let r_diag = unsafe { std::slice::from_raw_parts(desc.r_diag, d_y) }.to_vec();

    let cb = Callbacks { transition, observe, basis: basis_fn, user_data: desc.user_data };
    let (cb_transition, cb_observe, cb_basis) = (cb, cb, cb);

    let names = (0..d_theta).map(|i| format!("phi{i}")).collect();
    let basis = BasisLibrary::new(names, d_f, move |x, u| {
        let cb = &cb_basis; // capture the whole struct, not its raw fields
        let mut phi = vec![0.0; d_f * d_theta];
        (cb.basis)(x.as_ptr(), u.as_ptr(), phi.as_mut_ptr(), cb.user_data);
        Mat::from_fn(d_f, d_theta, |i, j| phi[i * d_theta + j])
    });

    ParametricModel::new(
        dims,
        basis,
        move |x, u, f| {
            let cb = &cb_transition;
            let mut next = vec![0.0; d_x];
            (cb.transition)(x.as_ptr(), u.as_ptr(), f.as_ptr(), next.as_mut_ptr(), cb.user_data);
            next
        },
        move |x| {
            let cb = &cb_observe;
            let mut y = vec![0.0; d_y];
            (cb.observe)(x.as_ptr(), y.as_mut_ptr(), cb.user_data);
            y
        },
        desc.dt,
        Mat::from_diag(&q_diag),
        Mat::from_diag(&r_diag),
    )
    .map_err(|e| e.to_string())
}

/// Creates an estimator over a caller-defined model.
///
/// `mu0` (`d_x`), `p0_diag` (`d_x`) and `s0_diag` (`d_theta`) give the
/// initial state mean, state variance and weight-prior variance; `alpha`
/// and `beta` are the unscented-transform hyperparameters. On failure the
/// return value is null and `status` (if non-null) carries the error code.
///
/// # Safety
/// `desc` and the array pointers must reference valid memory of the
/// documented lengths; the callbacks must stay callable for the estimator's
/// lifetime.
#[no_mangle]
pub unsafe extern "C" fn ski_estimator_new(
    desc: *const SkiModelDesc,
    mu0: *const f64,
    p0_diag: *const f64,
    s0_diag: *const f64,
    alpha: f64,
    beta: f64,
    status: *mut i32,
) -> *mut SkiEstimator {
    let mut code = SKI_OK;
    let result = catch_unwind(AssertUnwindSafe(|| {
        if desc.is_null() || mu0.is_null() || p0_diag.is_null() || s0_diag.is_null() {
            set_last_error("null pointer argument");
            code = SKI_ERR_NULL_POINTER;
            return std::ptr::null_mut();
        }
        let desc = &*desc;
        let model = match build_model(desc) {
            Ok(m) => m,
            Err(msg) => {
                set_last_error(&msg);
                code = SKI_ERR_INVALID_ARGUMENT;
                return std::ptr::null_mut();
            }
        };
        let mu0 = std::slice::from_raw_parts(mu0, desc.d_x);
        let p0 = Mat::from_diag(std::slice::from_raw_parts(p0_diag, desc.d_x));
        let s0 = std::slice::from_raw_parts(s0_diag, desc.d_theta).to_vec();
        let m0 = vec![0.0; desc.d_theta];
        let belief = match initial_belief(mu0, &p0, &m0, &s0) {
            Ok(b) => b,
            Err(e) => {
                set_last_error(&e.to_string());
                code = SKI_ERR_INVALID_ARGUMENT;
                return std::ptr::null_mut();
            }
        };
        let filter = match SrUkf::new(&model, belief, alpha, beta) {
            Ok(f) => f,
            Err(e) => {
                set_last_error(&e.to_string());
                code = SKI_ERR_INVALID_ARGUMENT;
                return std::ptr::null_mut();
            }
        };
        Box::into_raw(Box::new(SkiEstimator { model, filter, engine: None, s0, poisoned: false }))
    }));
    let ptr = match result {
        Ok(p) => p,
        Err(_) => {
            set_last_error("internal panic during construction");
            code = SKI_ERR_INTERNAL;
            std::ptr::null_mut()
        }
    };
    if !status.is_null() {
        *status = code;
    }
    ptr
}

/// Turns on online relevance learning: after every measurement update the
/// weight-prior variances take `n_hp` gradient steps of rate `eta_hp`
/// (clamped at `variance_floor`) and the posterior is refreshed to match.
///
/// # Safety
/// `est` must be a live pointer from [`ski_estimator_new`].
#[no_mangle]
pub unsafe extern "C" fn ski_estimator_enable_ard(
    est: *mut SkiEstimator,
    eta_hp: f64,
    n_hp: u32,
    variance_floor: f64,
) -> i32 {
    let Some(est) = est.as_mut() else {
        set_last_error("null estimator");
        return SKI_ERR_NULL_POINTER;
    };
    match ArdEngine::new(&est.s0, eta_hp, n_hp as usize, variance_floor) {
        Ok(engine) => {
            est.engine = Some(engine);
            SKI_OK
        }
        Err(e) => {
            set_last_error(&e.to_string());
            SKI_ERR_INVALID_ARGUMENT
        }
    }
}

/// One filter tick: predict with the input applied over the last interval,
/// correct with the new measurement, then (if enabled) update the
/// relevances and refresh the posterior.
///
/// After a non-zero return the estimator is poisoned and further steps are
/// rejected.
///
/// # Safety
/// `est` must be live; `u` and `y` must point to `d_u` and `d_y` readable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn ski_estimator_step(
    est: *mut SkiEstimator,
    u: *const f64,
    y: *const f64,
) -> i32 {
    let Some(est) = est.as_mut() else {
        set_last_error("null estimator");
        return SKI_ERR_NULL_POINTER;
    };
    if est.poisoned {
        set_last_error("estimator poisoned by an earlier failure");
        return SKI_ERR_INVALID_ARGUMENT;
    }
    if (u.is_null() && est.model.dims.d_u > 0) || y.is_null() {
        set_last_error("null input/measurement pointer");
        return SKI_ERR_NULL_POINTER;
    }
    let u = if est.model.dims.d_u > 0 {
        std::slice::from_raw_parts(u, est.model.dims.d_u)
    } else {
        &[]
    };
    let y = std::slice::from_raw_parts(y, est.model.dims.d_y);

    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<(), (i32, String)> {
        est.filter
            .predict(&est.model, u)
            .map_err(|e| (SKI_ERR_FILTER, e.to_string()))?;
        est.filter
            .correct(&est.model, y)
            .map_err(|e| (SKI_ERR_FILTER, e.to_string()))?;
        if let Some(engine) = est.engine.as_mut() {
            let blocks = belief_blocks(&est.filter.belief, &est.model.dims);
            ard_step(engine, &blocks.m, &blocks.s).map_err(|e| (SKI_ERR_RELEVANCE, e.to_string()))?;
            let refreshed = posterior_refresh(
                &est.filter.belief,
                &est.model.dims,
                engine.prior_old(),
                engine.relevances(),
            )
            .map_err(|e| (SKI_ERR_RELEVANCE, e.to_string()))?;
            est.filter.belief = refreshed.belief;
            engine.commit_prior();
        }
        Ok(())
    }));
    match outcome {
        Ok(Ok(())) => SKI_OK,
        Ok(Err((code, msg))) => {
            est.poisoned = true;
            set_last_error(&msg);
            code
        }
        Err(_) => {
            est.poisoned = true;
            set_last_error("internal panic during step");
            SKI_ERR_INTERNAL
        }
    }
}

unsafe fn copy_out(est: *const SkiEstimator, out: *mut f64, pick: impl Fn(&SkiEstimator) -> Vec<f64>) -> i32 {
    let Some(est) = est.as_ref() else {
        set_last_error("null estimator");
        return SKI_ERR_NULL_POINTER;
    };
    if out.is_null() {
        set_last_error("null output pointer");
        return SKI_ERR_NULL_POINTER;
    }
    let values = pick(est);
    std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    SKI_OK
}

/// Copies the current state estimate (`d_x` doubles) into `out`.
///
/// # Safety
/// `est` must be live; `out` must hold `d_x` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ski_estimator_state(est: *const SkiEstimator, out: *mut f64) -> i32 {
    copy_out(est, out, |e| e.filter.belief.xi[..e.model.dims.d_x].to_vec())
}

/// Copies the current basis-weight estimates (`d_theta` doubles) into `out`.
///
/// # Safety
/// `est` must be live; `out` must hold `d_theta` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ski_estimator_weights(est: *const SkiEstimator, out: *mut f64) -> i32 {
    copy_out(est, out, |e| e.filter.belief.xi[e.model.dims.d_x..].to_vec())
}

/// Copies the posterior weight variances (`d_theta` doubles) into `out`.
///
/// # Safety
/// `est` must be live; `out` must hold `d_theta` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ski_estimator_weight_variances(est: *const SkiEstimator, out: *mut f64) -> i32 {
    copy_out(est, out, |e| belief_blocks(&e.filter.belief, &e.model.dims).s.diag())
}

/// Copies the learned per-basis prior variances (`d_theta` doubles, the
/// relevances) into `out`. Without relevance learning these stay at the
/// initial prior.
///
/// # Safety
/// `est` must be live; `out` must hold `d_theta` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ski_estimator_relevances(est: *const SkiEstimator, out: *mut f64) -> i32 {
    copy_out(est, out, |e| match &e.engine {
        Some(engine) => engine.relevances().to_vec(),
        None => e.s0.clone(),
    })
}

/// Releases an estimator. Passing null is a no-op.
///
/// # Safety
/// `est` must be null or a pointer from [`ski_estimator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ski_estimator_free(est: *mut SkiEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}
