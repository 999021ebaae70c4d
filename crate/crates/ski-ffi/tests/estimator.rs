//! Round-trip tests of the C ABI: the roll-dynamics benchmark model wired
//! through extern "C" callbacks, error paths, and output getters.

use std::ffi::{c_void, CStr};
use std::ptr;

use ski_core::scenarios::wingrock::{simulate_wingrock, wingrock_basis, WingRockTruth};
use ski_ffi::*;

const L_GAIN: f64 = 3.0;
const DT: f64 = 0.02;

extern "C" fn transition(x: *const f64, u: *const f64, f: *const f64, out: *mut f64, _user: *mut c_void) {
    unsafe {
        let roll = *x;
        let rate = *x.add(1);
        let aileron = *u;
        let unknown = *f;
        *out = roll + DT * rate;
        *out.add(1) = rate + DT * (L_GAIN * aileron + unknown);
    }
}

extern "C" fn observe(x: *const f64, y: *mut f64, _user: *mut c_void) {
    unsafe {
        *y = *x;
    }
}

extern "C" fn basis(x: *const f64, _u: *const f64, phi: *mut f64, _user: *mut c_void) {
    unsafe {
        let values = wingrock_basis(*x, *x.add(1));
        for (i, v) in values.iter().enumerate() {
            *phi.add(i) = *v;
        }
    }
}

fn wingrock_desc(q: &[f64; 2], r: &[f64; 1]) -> SkiModelDesc {
    SkiModelDesc {
        d_x: 2,
        d_u: 1,
        d_y: 1,
        d_theta: 6,
        d_f: 1,
        dt: DT,
        q_diag: q.as_ptr(),
        r_diag: r.as_ptr(),
        transition: Some(transition),
        observe: Some(observe),
        basis: Some(basis),
        user_data: ptr::null_mut(),
    }
}

#[test]
fn version_is_exposed() {
    let v = unsafe { CStr::from_ptr(ski_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut status = 0;
    let est = unsafe {
        ski_estimator_new(ptr::null(), ptr::null(), ptr::null(), ptr::null(), 0.3, 2.0, &mut status)
    };
    assert!(est.is_null());
    assert_eq!(status, SKI_ERR_NULL_POINTER);
    let msg = unsafe { CStr::from_ptr(ski_last_error_message()) };
    assert!(!msg.to_bytes().is_empty());
}

#[test]
fn invalid_hyperparameters_are_rejected() {
    let q = [1e-4, 1e-4];
    let r = [0.01];
    let desc = wingrock_desc(&q, &r);
    let mu0 = [0.0, 0.0];
    let p0 = [1.0, 1.0];
    let s0 = [5.0; 6];
    let mut status = 0;
    let est = unsafe {
        ski_estimator_new(&desc, mu0.as_ptr(), p0.as_ptr(), s0.as_ptr(), 7.0, 2.0, &mut status)
    };
    assert!(est.is_null());
    assert_eq!(status, SKI_ERR_INVALID_ARGUMENT);
}

#[test]
fn missing_callback_is_rejected() {
    let q = [1e-4, 1e-4];
    let r = [0.01];
    let mut desc = wingrock_desc(&q, &r);
    desc.basis = None;
    let mu0 = [0.0, 0.0];
    let p0 = [1.0, 1.0];
    let s0 = [5.0; 6];
    let mut status = 0;
    let est = unsafe {
        ski_estimator_new(&desc, mu0.as_ptr(), p0.as_ptr(), s0.as_ptr(), 0.3, 2.0, &mut status)
    };
    assert!(est.is_null());
    assert_eq!(status, SKI_ERR_INVALID_ARGUMENT);
}

#[test]
fn estimator_identifies_wingrock_weights_through_the_abi() {
    let truth = WingRockTruth::default();
    let traj = simulate_wingrock(&truth, 4, 15.0, 50.0).unwrap();

    let q = [1e-4, 1e-4];
    let r = [0.01];
    let desc = wingrock_desc(&q, &r);
    let mu0 = [traj.y[(0, 0)], 0.0];
    let p0 = [1.0, 1.0];
    let s0 = [5.0; 6];
    let mut status = -99;
    let est = unsafe {
        ski_estimator_new(&desc, mu0.as_ptr(), p0.as_ptr(), s0.as_ptr(), 0.3, 2.0, &mut status)
    };
    assert_eq!(status, SKI_OK);
    assert!(!est.is_null());
    assert_eq!(unsafe { ski_estimator_enable_ard(est, 0.1, 5, 1e-8) }, SKI_OK);

    for i in 1..traj.len() {
        let u = [traj.u[(i - 1, 0)]];
        let y = [traj.y[(i, 0)]];
        let code = unsafe { ski_estimator_step(est, u.as_ptr(), y.as_ptr()) };
        assert_eq!(code, SKI_OK, "step {i} failed: {:?}", unsafe {
            CStr::from_ptr(ski_last_error_message())
        });
    }

    let mut weights = [0.0; 6];
    let mut variances = [0.0; 6];
    let mut relevances = [0.0; 6];
    let mut state = [0.0; 2];
    unsafe {
        assert_eq!(ski_estimator_weights(est, weights.as_mut_ptr()), SKI_OK);
        assert_eq!(ski_estimator_weight_variances(est, variances.as_mut_ptr()), SKI_OK);
        assert_eq!(ski_estimator_relevances(est, relevances.as_mut_ptr()), SKI_OK);
        assert_eq!(ski_estimator_state(est, state.as_mut_ptr()), SKI_OK);
        ski_estimator_free(est);
    }

    let mean_l1: f64 = weights
        .iter()
        .zip(truth.weights.iter())
        .map(|(w, t)| (w - t).abs())
        .sum::<f64>()
        / 6.0;
    assert!(mean_l1 < 1.0, "identified weights too far off: {mean_l1} ({weights:?})");
    assert!(variances.iter().all(|v| *v > 0.0));
    assert!(relevances.iter().all(|s| *s > 0.0));
    assert!(state.iter().all(|v| v.is_finite()));
}

#[test]
fn steps_after_failure_are_rejected() {
    let q = [1e-4, 1e-4];
    let r = [0.01];
    let desc = wingrock_desc(&q, &r);
    let mu0 = [0.0, 0.0];
    let p0 = [1.0, 1.0];
    let s0 = [5.0; 6];
    let mut status = 0;
    let est = unsafe {
        ski_estimator_new(&desc, mu0.as_ptr(), p0.as_ptr(), s0.as_ptr(), 0.3, 2.0, &mut status)
    };
    assert_eq!(status, SKI_OK);
    // a non-finite measurement cannot break the filter itself, but a wild
    // state certainly breaks the polynomial model: drive it there
    let u = [1e9];
    let y = [1e9];
    let mut poisoned = false;
    for _ in 0..50 {
        let code = unsafe { ski_estimator_step(est, u.as_ptr(), y.as_ptr()) };
        if code != SKI_OK {
            poisoned = true;
            break;
        }
    }
    assert!(poisoned, "absurd inputs must eventually fail the filter");
    let code = unsafe { ski_estimator_step(est, u.as_ptr(), y.as_ptr()) };
    assert_eq!(code, SKI_ERR_INVALID_ARGUMENT, "poisoned estimator must refuse to step");
    unsafe { ski_estimator_free(est) };
}

#[test]
fn free_accepts_null() {
    unsafe { ski_estimator_free(ptr::null_mut()) };
}
