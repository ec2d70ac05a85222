//! C ABI over the streaming PCA laboratory.
//!
//! Design rules of this surface:
//!
//! - **Opaque handles.** Stateful objects ([`InoPcaTrajectory`],
//!   [`InoPcaEstimator`]) cross the boundary as opaque pointers created and
//!   destroyed by paired `*_new`/`*_free` (or `*_solve`/`*_free`) calls.
//!   Handles are not thread-safe; share them across threads only with
//!   external synchronization.
//! - **Status codes, not exceptions.** Every fallible call returns
//!   [`InoPcaStatus`]; `INO_PCA_STATUS_OK` is zero. The message for the most
//!   recent failure on the current thread is available from
//!   [`ino_pca_last_error`].
//! - **Caller-owned buffers.** Functions never hand out pointers into
//!   internal storage (other than the error string, which is valid until the
//!   next failing call on the same thread); results are copied into buffers
//!   the caller provides.
//!
//! All fallible operations are routed through `Result` internally, so no
//! entry point is expected to unwind.

use ino_pca::algorithms::{AlgorithmSpec, Stepper};
use ino_pca::error::Error;
use ino_pca::spiked_model::EstimateState;
use ino_pca::theory_ode::{
    critical_snr, integrate, optimal_rate, steady_state, Branch, OdeParams, RateRule,
};
use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};

/// Result of a fallible call. Values above `OK` describe what went wrong;
/// the thread-local message from `ino_pca_last_error` has the details.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InoPcaStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Arguments were structurally valid but outside the accepted domain
    /// (bad spec string, non-finite number, dimension mismatch, ...).
    InvalidArgument = 2,
    /// The computation started but failed numerically (blowup, divergence).
    NumericalFailure = 3,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 4,
    /// An output buffer was shorter than the data it must receive.
    BufferTooSmall = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: InoPcaStatus, message: &str) -> InoPcaStatus {
    let sanitized: Vec<u8> = message.bytes().filter(|&b| b != 0).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("nul bytes removed");
    });
    status
}

fn fail_with(err: Error) -> InoPcaStatus {
    let status = match err.exit_code() {
        3 => InoPcaStatus::NumericalFailure,
        _ => InoPcaStatus::InvalidArgument,
    };
    fail(status, &err.to_string())
}

/// Returns the message of the most recent failure on the calling thread, or
/// an empty string if there was none. The pointer stays valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn ino_pca_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

// ---------------------------------------------------------------------------
// Closed-form scalars
// ---------------------------------------------------------------------------

/// Smallest signal-to-noise ratio at which a fixed learning rate `tau`
/// sustains a nonzero steady overlap.
#[no_mangle]
pub extern "C" fn ino_pca_critical_snr(tau: f64) -> f64 {
    critical_snr(tau)
}

/// Greedy overlap-velocity-maximizing effective rate at overlap `q` under
/// signal-to-noise ratio `omega`.
#[no_mangle]
pub extern "C" fn ino_pca_optimal_rate(omega: f64, q: f64) -> f64 {
    optimal_rate(omega, q)
}

/// Evaluates the steady state of the coupled overlap/norm flow. On success
/// writes the steady overlap `Q_s`, the steady norm parameter `lambda_s`,
/// and whether the learning branch is active (1) or only the zero-overlap
/// branch exists (0).
///
/// # Safety
/// Output pointers must be valid for writing one value each (or null to
/// skip that output).
#[no_mangle]
pub unsafe extern "C" fn ino_pca_steady_state(
    omega: f64,
    tau: f64,
    out_q_s: *mut f64,
    out_lambda_s: *mut f64,
    out_is_learning: *mut c_int,
) -> InoPcaStatus {
    match steady_state(omega, tau) {
        Ok(s) => {
            if !out_q_s.is_null() {
                *out_q_s = s.q_s();
            }
            if !out_lambda_s.is_null() {
                *out_lambda_s = s.lambda_s;
            }
            if !out_is_learning.is_null() {
                *out_is_learning = c_int::from(s.branch == Branch::Learning);
            }
            InoPcaStatus::Ok
        }
        Err(e) => fail_with(e),
    }
}

// ---------------------------------------------------------------------------
// Moment-flow trajectories
// ---------------------------------------------------------------------------

/// Opaque integrated overlap/norm trajectory. Create with
/// [`ino_pca_ode_solve`], free with [`ino_pca_trajectory_free`].
pub struct InoPcaTrajectory(ino_pca::theory_ode::TheoryTrajectory);

/// Integrates the coupled overlap/norm flow from `(q0, lambda0)` to `t_max`
/// with step `dt`. With `adaptive` nonzero the greedy rate schedule is used
/// and `tau` is ignored. On success `*out` owns a new trajectory handle.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn ino_pca_ode_solve(
    omega: f64,
    tau: f64,
    adaptive: c_int,
    q0: f64,
    lambda0: f64,
    t_max: f64,
    dt: f64,
    out: *mut *mut InoPcaTrajectory,
) -> InoPcaStatus {
    if out.is_null() {
        return fail(InoPcaStatus::NullPointer, "output handle pointer is null");
    }
    let rate = if adaptive != 0 { RateRule::Adaptive } else { RateRule::Fixed(tau) };
    let params = OdeParams { omega, rate, q0, lambda0 };
    match integrate(&params, t_max, dt) {
        Ok(traj) => {
            *out = Box::into_raw(Box::new(InoPcaTrajectory(traj)));
            InoPcaStatus::Ok
        }
        Err(e) => fail_with(e),
    }
}

/// Number of grid points in a trajectory (0 for a null handle).
///
/// # Safety
/// `traj` must be a live handle from [`ino_pca_ode_solve`] or null.
#[no_mangle]
pub unsafe extern "C" fn ino_pca_trajectory_len(traj: *const InoPcaTrajectory) -> usize {
    if traj.is_null() {
        0
    } else {
        (*traj).0.t.len()
    }
}

/// Copies grid point `index` as `(t, Q, lambda)`.
///
/// # Safety
/// `traj` must be a live handle; non-null output pointers must each be valid
/// for one write.
#[no_mangle]
pub unsafe extern "C" fn ino_pca_trajectory_point(
    traj: *const InoPcaTrajectory,
    index: usize,
    out_t: *mut f64,
    out_q: *mut f64,
    out_lambda: *mut f64,
) -> InoPcaStatus {
    if traj.is_null() {
        return fail(InoPcaStatus::NullPointer, "trajectory handle is null");
    }
    let traj = &(*traj).0;
    if index >= traj.t.len() {
        return fail(
            InoPcaStatus::InvalidArgument,
            &format!("index {index} out of range for {} grid points", traj.t.len()),
        );
    }
    if !out_t.is_null() {
        *out_t = traj.t[index];
    }
    if !out_q.is_null() {
        *out_q = traj.q[index];
    }
    if !out_lambda.is_null() {
        *out_lambda = traj.lambda[index];
    }
    InoPcaStatus::Ok
}

/// Evaluates `(Q, lambda)` at time `t` by linear interpolation, clamped to
/// the integrated span.
///
/// # Safety
/// `traj` must be a live handle; non-null output pointers must each be valid
/// for one write.
#[no_mangle]
pub unsafe extern "C" fn ino_pca_trajectory_eval(
    traj: *const InoPcaTrajectory,
    t: f64,
    out_q: *mut f64,
    out_lambda: *mut f64,
) -> InoPcaStatus {
    if traj.is_null() {
        return fail(InoPcaStatus::NullPointer, "trajectory handle is null");
    }
    if !t.is_finite() {
        return fail(InoPcaStatus::InvalidArgument, "evaluation time must be finite");
    }
    let traj = &(*traj).0;
    if !out_q.is_null() {
        *out_q = traj.q_at(t);
    }
    if !out_lambda.is_null() {
        *out_lambda = traj.lambda_at(t);
    }
    InoPcaStatus::Ok
}

/// Frees a trajectory handle (null is a no-op).
///
/// # Safety
/// `traj` must be a handle from [`ino_pca_ode_solve`] that has not been
/// freed, or null.
#[no_mangle]
pub unsafe extern "C" fn ino_pca_trajectory_free(traj: *mut InoPcaTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

// ---------------------------------------------------------------------------
// Streaming estimators
// ---------------------------------------------------------------------------

/// Opaque streaming top-eigenvector estimator: a one-pass update rule plus
/// its current iterate. Create with [`ino_pca_estimator_new`], feed
/// observations with [`ino_pca_estimator_observe`], free with
/// [`ino_pca_estimator_free`].
pub struct InoPcaEstimator {
    stepper: Stepper,
    state: EstimateState,
}

/// Creates a streaming estimator.
///
/// `spec` selects the update rule with the same grammar as the CLI's
/// `--algo` flag — `ino[:TAU]`, `reg[:TAU]`, `oja[:TAU]`, `krasulina[:TAU]`,
/// `ccipca[:AMNESIA]`, `adaoja[:B0]` — with 0.5 as the default rate for the
/// rate-taking rules. The oracle-adaptive rule is rejected here: it reads
/// the planted signal and is only meaningful inside simulations. `init`
/// (length `dim`, `dim >= 2`) seeds the iterate; its norm must be positive.
///
/// # Safety
/// `spec` must be a nul-terminated string, `init` an array of `dim` doubles,
/// `out` valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn ino_pca_estimator_new(
    spec: *const c_char,
    init: *const f64,
    dim: usize,
    out: *mut *mut InoPcaEstimator,
) -> InoPcaStatus {
    if spec.is_null() || init.is_null() || out.is_null() {
        return fail(InoPcaStatus::NullPointer, "spec, init, and out must be non-null");
    }
    let spec = match CStr::from_ptr(spec).to_str() {
        Ok(s) => s,
        Err(_) => return fail(InoPcaStatus::InvalidUtf8, "spec is not valid UTF-8"),
    };
    let algorithm = match AlgorithmSpec::parse(spec, 0.5) {
        Ok(a) => a,
        Err(e) => return fail_with(e),
    };
    if algorithm.is_oracle() {
        return fail(
            InoPcaStatus::InvalidArgument,
            "the oracle-adaptive rule needs the planted signal and cannot run behind the C ABI",
        );
    }
    if dim < 2 {
        return fail(
            InoPcaStatus::InvalidArgument,
            &format!("estimator dimension must be at least 2, got {dim}"),
        );
    }
    let x0 = std::slice::from_raw_parts(init, dim);
    if x0.iter().any(|v| !v.is_finite()) {
        return fail(InoPcaStatus::InvalidArgument, "initial iterate must be finite");
    }
    let state = EstimateState::new(x0.to_vec());
    if !(state.lambda() > 0.0) {
        return fail(
            InoPcaStatus::InvalidArgument,
            "initial iterate must have positive norm",
        );
    }
    let stepper = match Stepper::new(algorithm) {
        Ok(s) => s,
        Err(e) => return fail_with(e),
    };
    *out = Box::into_raw(Box::new(InoPcaEstimator { stepper, state }));
    InoPcaStatus::Ok
}

/// Advances the estimator by one observation of length `len` (must equal the
/// estimator's dimension).
///
/// # Safety
/// `est` must be a live handle, `y` an array of `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ino_pca_estimator_observe(
    est: *mut InoPcaEstimator,
    y: *const f64,
    len: usize,
) -> InoPcaStatus {
    if est.is_null() || y.is_null() {
        return fail(InoPcaStatus::NullPointer, "estimator and observation must be non-null");
    }
    let est = &mut *est;
    if len != est.state.dimension() {
        return fail(
            InoPcaStatus::InvalidArgument,
            &format!(
                "observation length {len} does not match estimator dimension {}",
                est.state.dimension()
            ),
        );
    }
    let y = std::slice::from_raw_parts(y, len);
    // The generative parameters are read only by the oracle rule, which is
    // rejected at construction.
    match est.stepper.step(&mut est.state, y, 0.0, &[]) {
        Ok(()) => InoPcaStatus::Ok,
        Err(e) => fail_with(e),
    }
}

/// Dimension of the estimator's iterate (0 for a null handle).
///
/// # Safety
/// `est` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ino_pca_estimator_dimension(est: *const InoPcaEstimator) -> usize {
    if est.is_null() {
        0
    } else {
        (*est).state.dimension()
    }
}

/// Number of observations consumed so far (0 for a null handle).
///
/// # Safety
/// `est` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ino_pca_estimator_observations(est: *const InoPcaEstimator) -> u64 {
    if est.is_null() {
        0
    } else {
        (*est).state.step_count()
    }
}

/// Current norm parameter λ = ‖x‖/√dim (NaN for a null handle).
///
/// # Safety
/// `est` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ino_pca_estimator_lambda(est: *const InoPcaEstimator) -> f64 {
    if est.is_null() {
        f64::NAN
    } else {
        (*est).state.lambda()
    }
}

/// Copies the current unit-norm component estimate into `out` (capacity
/// `len >= dim`).
///
/// # Safety
/// `est` must be a live handle, `out` an array of at least `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ino_pca_estimator_component(
    est: *const InoPcaEstimator,
    out: *mut f64,
    len: usize,
) -> InoPcaStatus {
    if est.is_null() || out.is_null() {
        return fail(InoPcaStatus::NullPointer, "estimator and buffer must be non-null");
    }
    let est = &*est;
    let x = est.state.x();
    if len < x.len() {
        return fail(
            InoPcaStatus::BufferTooSmall,
            &format!("buffer holds {len} doubles, component needs {}", x.len()),
        );
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return fail(InoPcaStatus::NumericalFailure, "estimate has zero norm");
    }
    let out = std::slice::from_raw_parts_mut(out, x.len());
    for (o, v) in out.iter_mut().zip(x) {
        *o = v / norm;
    }
    InoPcaStatus::Ok
}

/// Frees an estimator handle (null is a no-op).
///
/// # Safety
/// `est` must be a handle from [`ino_pca_estimator_new`] that has not been
/// freed, or null.
#[no_mangle]
pub unsafe extern "C" fn ino_pca_estimator_free(est: *mut InoPcaEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}
