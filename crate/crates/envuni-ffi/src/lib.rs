//! C ABI for the envuni simulator: opaque scenario handles, flat status
//! codes, and plain-old-data results so other languages can bind.
//!
//! Conventions: every function returns an [`EnvuniStatus`]; outputs go
//! through pointers that must be non-null and valid for writes; strings
//! returned by the library are freshly allocated and must be released
//! with [`envuni_string_free`]. On any non-OK status,
//! [`envuni_last_error`] returns a description of what went wrong on the
//! current thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use num_complex::Complex64;

use envuni::born::{born_probabilities, rational_approximation, RationalWeights};
use envuni::envariance::{check_phase_envariance, check_swap_envariance};
use envuni::experiments::{
    concentration_check, frequency_expectation, relative_frequency, sample_runs, ExperimentDesign,
};
use envuni::hilbert::{StateVector, Tolerances};
use envuni::measurement::{build_measurement_state, decompose_branches, BranchDecomposition, MeasurementScenario};
use envuni::scenario::{parse_scenario, ScenarioBody};

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl std::fmt::Display) {
    let rendered = CString::new(message.to_string())
        .unwrap_or_else(|_| CString::new("error message contained a NUL byte").expect("literal"));
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(rendered));
}

/// Status code returned by every envuni FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvuniStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The scenario JSON failed to parse or had the wrong kind.
    InvalidScenario = 3,
    /// Inputs were structurally valid but violated a domain rule
    /// (normalization, unknown label, correlation, …).
    DomainError = 4,
    /// An index argument was out of range.
    IndexOutOfRange = 5,
}

/// An envariance verdict in plain-old-data form.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EnvuniCertificate {
    pub envariant: bool,
    /// Norm of U_E U_S ψ − ψ with the constructed counter-operation.
    pub residual: f64,
    /// ||ψ_β| − |ψ_γ|| for swap checks; NaN for phase checks.
    pub magnitude_gap: f64,
}

/// Frequency statistics of one sampled experiment.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EnvuniFrequencyReport {
    pub observed_f: f64,
    pub expected_f: f64,
    /// √(q(1−q)/n), closed form.
    pub std_dev: f64,
    pub z_score: f64,
    /// Distribution mass within ±3σ of the expectation.
    pub band_mass: f64,
    /// Mass outside the band (maverick branches).
    pub maverick_mass: f64,
}

/// Opaque handle over a parsed measurement scenario, its universe state,
/// and (when the state is of recorded-measurement form) its branch
/// decomposition.
pub struct EnvuniScenario {
    scenario: MeasurementScenario,
    state: StateVector,
    branches: Result<BranchDecomposition, String>,
}

/// Last error message for the current thread, or NULL when the previous
/// call succeeded. The string must be freed with `envuni_string_free`.
#[no_mangle]
pub extern "C" fn envuni_last_error() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(message) => message.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Release a string allocated by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by an envuni function, not
/// yet freed; NULL is accepted and ignored.
#[no_mangle]
pub unsafe extern "C" fn envuni_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, EnvuniStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(EnvuniStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| {
        set_error(format!("invalid UTF-8: {e}"));
        EnvuniStatus::InvalidUtf8
    })
}

/// Parse a `measurement` or `envariance` scenario file and build its
/// universe state. On success writes a handle to `out`; free it with
/// [`envuni_scenario_free`].
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` to writable
/// memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn envuni_scenario_parse(
    json: *const c_char,
    out: *mut *mut EnvuniScenario,
) -> EnvuniStatus {
    if out.is_null() {
        set_error("null output pointer");
        return EnvuniStatus::NullPointer;
    }
    let source = match read_str(json) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let payload = match parse_scenario(source) {
        Ok(ScenarioBody::Measurement(p)) => p,
        Ok(ScenarioBody::Envariance(p)) => p.scenario,
        Ok(other) => {
            set_error(format!(
                "scenario kind `{}` carries no measurement payload",
                other.kind()
            ));
            return EnvuniStatus::InvalidScenario;
        }
        Err(e) => {
            set_error(e);
            return EnvuniStatus::InvalidScenario;
        }
    };
    let tol = Tolerances::default();
    let scenario = match payload.to_scenario(envuni::hilbert::DEFAULT_DIM_CAP, &tol) {
        Ok(s) => s,
        Err(e) => {
            set_error(e);
            return EnvuniStatus::DomainError;
        }
    };
    let state = match payload.explicit_state(&scenario, &tol) {
        Ok(Some(s)) => s,
        Ok(None) => match build_measurement_state(&scenario) {
            Ok(s) => s,
            Err(e) => {
                set_error(e);
                return EnvuniStatus::DomainError;
            }
        },
        Err(e) => {
            set_error(e);
            return EnvuniStatus::DomainError;
        }
    };
    let branches = decompose_branches(&state, scenario.environment(), scenario.system(), &tol)
        .map_err(|e| e.to_string());
    let handle = Box::new(EnvuniScenario {
        scenario,
        state,
        branches,
    });
    *out = Box::into_raw(handle);
    EnvuniStatus::Ok
}

/// Release a scenario handle.
///
/// # Safety
/// `handle` must come from [`envuni_scenario_parse`] and not already be
/// freed; NULL is accepted and ignored.
#[no_mangle]
pub unsafe extern "C" fn envuni_scenario_free(handle: *mut EnvuniScenario) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

unsafe fn borrow<'a>(handle: *const EnvuniScenario) -> Result<&'a EnvuniScenario, EnvuniStatus> {
    handle.as_ref().ok_or_else(|| {
        set_error("null scenario handle");
        EnvuniStatus::NullPointer
    })
}

/// Number of interesting conditions (the mandatory absent condition is
/// not counted).
///
/// # Safety
/// `handle` must be a live scenario handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envuni_scenario_condition_count(
    handle: *const EnvuniScenario,
    out: *mut usize,
) -> EnvuniStatus {
    let scenario = match borrow(handle) {
        Ok(h) => h,
        Err(status) => return status,
    };
    if out.is_null() {
        set_error("null output pointer");
        return EnvuniStatus::NullPointer;
    }
    *out = scenario.scenario.system().interesting_conditions().len();
    EnvuniStatus::Ok
}

/// Label of the interesting condition at `index` (0-based). The returned
/// string must be freed with [`envuni_string_free`].
///
/// # Safety
/// `handle` must be a live scenario handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envuni_scenario_condition(
    handle: *const EnvuniScenario,
    index: usize,
    out: *mut *mut c_char,
) -> EnvuniStatus {
    let scenario = match borrow(handle) {
        Ok(h) => h,
        Err(status) => return status,
    };
    if out.is_null() {
        set_error("null output pointer");
        return EnvuniStatus::NullPointer;
    }
    let conditions = scenario.scenario.system().interesting_conditions();
    let Some(label) = conditions.get(index) else {
        set_error(format!(
            "condition index {index} out of range for {} conditions",
            conditions.len()
        ));
        return EnvuniStatus::IndexOutOfRange;
    };
    match CString::new(label.as_str()) {
        Ok(s) => {
            *out = s.into_raw();
            EnvuniStatus::Ok
        }
        Err(e) => {
            // JSON strings may smuggle a NUL byte into a label.
            set_error(e);
            EnvuniStatus::DomainError
        }
    }
}

/// Complex branch amplitude of one condition in the decomposition of the
/// scenario state. Fails with a domain error when the state is not of
/// recorded-measurement form.
///
/// # Safety
/// `handle` must be a live scenario handle; `condition` a NUL-terminated
/// string; `out_re` and `out_im` writable.
#[no_mangle]
pub unsafe extern "C" fn envuni_scenario_branch_amplitude(
    handle: *const EnvuniScenario,
    condition: *const c_char,
    out_re: *mut f64,
    out_im: *mut f64,
) -> EnvuniStatus {
    let scenario = match borrow(handle) {
        Ok(h) => h,
        Err(status) => return status,
    };
    let label = match read_str(condition) {
        Ok(s) => s,
        Err(status) => return status,
    };
    if out_re.is_null() || out_im.is_null() {
        set_error("null output pointer");
        return EnvuniStatus::NullPointer;
    }
    let decomposition = match &scenario.branches {
        Ok(d) => d,
        Err(message) => {
            set_error(message);
            return EnvuniStatus::DomainError;
        }
    };
    let amplitude = decomposition
        .amplitude_of(label)
        .unwrap_or(Complex64::new(0.0, 0.0));
    *out_re = amplitude.re;
    *out_im = amplitude.im;
    EnvuniStatus::Ok
}

/// Decide swap envariance for a pair of condition labels. The counter
/// operation acts on the scenario's full record side.
///
/// # Safety
/// `handle` must be a live scenario handle; `beta` and `gamma` must be
/// NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envuni_check_swap_envariance(
    handle: *const EnvuniScenario,
    beta: *const c_char,
    gamma: *const c_char,
    out: *mut EnvuniCertificate,
) -> EnvuniStatus {
    let wrapper = match borrow(handle) {
        Ok(h) => h,
        Err(status) => return status,
    };
    let beta = match read_str(beta) {
        Ok(s) => s.to_string(),
        Err(status) => return status,
    };
    let gamma = match read_str(gamma) {
        Ok(s) => s.to_string(),
        Err(status) => return status,
    };
    if out.is_null() {
        set_error("null output pointer");
        return EnvuniStatus::NullPointer;
    }
    let tol = Tolerances::default();
    match check_swap_envariance(
        &wrapper.state,
        wrapper.scenario.system(),
        &wrapper.scenario.record_side(),
        &(beta, gamma),
        &tol,
    ) {
        Ok(cert) => {
            *out = EnvuniCertificate {
                envariant: cert.envariant,
                residual: cert.residual,
                magnitude_gap: cert.magnitude_gap.unwrap_or(f64::NAN),
            };
            EnvuniStatus::Ok
        }
        Err(e) => {
            set_error(e);
            EnvuniStatus::DomainError
        }
    }
}

/// Decide phase envariance for one phase per interesting condition.
///
/// # Safety
/// `handle` must be a live scenario handle; `sigmas` must point to
/// `sigma_count` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envuni_check_phase_envariance(
    handle: *const EnvuniScenario,
    sigmas: *const f64,
    sigma_count: usize,
    out: *mut EnvuniCertificate,
) -> EnvuniStatus {
    let wrapper = match borrow(handle) {
        Ok(h) => h,
        Err(status) => return status,
    };
    if sigmas.is_null() || out.is_null() {
        set_error("null pointer argument");
        return EnvuniStatus::NullPointer;
    }
    let interesting = wrapper.scenario.system().interesting_conditions().len();
    if sigma_count != interesting {
        set_error(format!(
            "got {sigma_count} phases for {interesting} conditions"
        ));
        return EnvuniStatus::DomainError;
    }
    let mut full = vec![0.0f64];
    full.extend_from_slice(std::slice::from_raw_parts(sigmas, sigma_count));
    let tol = Tolerances::default();
    match check_phase_envariance(
        &wrapper.state,
        wrapper.scenario.system(),
        &wrapper.scenario.record_side(),
        &full,
        &tol,
    ) {
        Ok(cert) => {
            *out = EnvuniCertificate {
                envariant: cert.envariant,
                residual: cert.residual,
                magnitude_gap: f64::NAN,
            };
            EnvuniStatus::Ok
        }
        Err(e) => {
            set_error(e);
            EnvuniStatus::DomainError
        }
    }
}

/// Born probabilities m_α/M for integer weights, written as doubles.
///
/// # Safety
/// `counts` must point to `count` u64 values and `out_probabilities` to
/// `count` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn envuni_born_probabilities(
    counts: *const u64,
    count: usize,
    out_probabilities: *mut f64,
) -> EnvuniStatus {
    if counts.is_null() || out_probabilities.is_null() {
        set_error("null pointer argument");
        return EnvuniStatus::NullPointer;
    }
    let counts = std::slice::from_raw_parts(counts, count);
    let weights = match RationalWeights::new(counts.to_vec()) {
        Ok(w) => w,
        Err(e) => {
            set_error(e);
            return EnvuniStatus::DomainError;
        }
    };
    for (i, p) in born_probabilities(&weights).iter().enumerate() {
        *out_probabilities.add(i) = *p.numer() as f64 / *p.denom() as f64;
    }
    EnvuniStatus::Ok
}

/// Best rational weights m/M with M ≤ `max_denominator` for real
/// amplitudes. Dropped conditions come back with count 0; `out_total`
/// receives M and `out_max_error` the worst per-condition error.
///
/// # Safety
/// `amplitudes` must point to `count` doubles; `out_counts` to `count`
/// writable u64; `out_total` and `out_max_error` to writable scalars.
#[no_mangle]
pub unsafe extern "C" fn envuni_rational_approximation(
    amplitudes: *const f64,
    count: usize,
    max_denominator: u64,
    out_counts: *mut u64,
    out_total: *mut u64,
    out_max_error: *mut f64,
) -> EnvuniStatus {
    if amplitudes.is_null() || out_counts.is_null() || out_total.is_null() || out_max_error.is_null()
    {
        set_error("null pointer argument");
        return EnvuniStatus::NullPointer;
    }
    let amplitudes = std::slice::from_raw_parts(amplitudes, count);
    match rational_approximation(amplitudes, max_denominator, &Tolerances::default()) {
        Ok(approx) => {
            for i in 0..count {
                *out_counts.add(i) = 0;
            }
            for (slot, &m) in approx.retained.iter().zip(approx.weights.counts()) {
                *out_counts.add(*slot) = m;
            }
            *out_total = approx.weights.total();
            *out_max_error = approx.max_error;
            EnvuniStatus::Ok
        }
        Err(e) => {
            set_error(e);
            EnvuniStatus::DomainError
        }
    }
}

/// Sample `runs` outcomes with P(m) = ψ(m)² from real amplitudes and
/// report the frequency statistics of the outcome at `target_index`.
/// Deterministic in `seed`.
///
/// # Safety
/// `amplitudes` must point to `count` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn envuni_experiment_run(
    amplitudes: *const f64,
    count: usize,
    runs: usize,
    seed: u64,
    target_index: usize,
    out: *mut EnvuniFrequencyReport,
) -> EnvuniStatus {
    if amplitudes.is_null() || out.is_null() {
        set_error("null pointer argument");
        return EnvuniStatus::NullPointer;
    }
    if target_index >= count {
        set_error(format!(
            "target index {target_index} out of range for {count} outcomes"
        ));
        return EnvuniStatus::IndexOutOfRange;
    }
    let amplitudes = std::slice::from_raw_parts(amplitudes, count);
    let outcomes: Vec<String> = (1..=count).map(|i| i.to_string()).collect();
    let target = outcomes[target_index].clone();
    let amps: Vec<Complex64> = amplitudes
        .iter()
        .map(|&a| Complex64::new(a, 0.0))
        .collect();
    let design = match ExperimentDesign::new(outcomes, amps, runs, seed) {
        Ok(d) => d,
        Err(e) => {
            set_error(e);
            return EnvuniStatus::DomainError;
        }
    };
    let expected = match frequency_expectation(&design, &target) {
        Ok(v) => v,
        Err(e) => {
            set_error(e);
            return EnvuniStatus::DomainError;
        }
    };
    let sequence = sample_runs(&design);
    let observed = match relative_frequency(&sequence, &target) {
        Ok(v) => v,
        Err(e) => {
            set_error(e);
            return EnvuniStatus::DomainError;
        }
    };
    let concentration = match concentration_check(&design, &target) {
        Ok(c) => c,
        Err(e) => {
            set_error(e);
            return EnvuniStatus::DomainError;
        }
    };
    let z_score = if concentration.std > 0.0 {
        (observed - expected) / concentration.std
    } else {
        0.0
    };
    *out = EnvuniFrequencyReport {
        observed_f: observed,
        expected_f: expected,
        std_dev: concentration.std,
        z_score,
        band_mass: concentration.band_mass,
        maverick_mass: concentration.maverick_mass,
    };
    EnvuniStatus::Ok
}
