//! C interface. Every function returns a [`PacStatus`]; on failure the
//! message is kept per thread and read with [`pac_last_error_message`].
//! Matrices are `N×N`, column-major, entry `(j, l)` being agent `l`'s effort
//! (or sensitivity) on project `j`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pa_contracts::cli::{contract_and_policy, run, Command, RunSpec};
use pa_contracts::config::{Config, ContractChoice};
use pa_contracts::first_best::{solve_first_best, FirstBest};
use pa_contracts::model::{FirmModel, LQBenchmark};
use pa_contracts::monte_carlo::{estimate_utilities, Formulation, MCEstimate, SimConfig};
use pa_contracts::second_best::{solve_second_best, SecondBest};
use pa_contracts::verification::{verify_first_best, verify_second_best, VerifyOptions};
use pa_contracts::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    Config = 4,
    Numerical = 5,
    Unsupported = 6,
    BufferTooSmall = 7,
    Io = 8,
    Panic = 99,
}

/// Contract kinds accepted as `uint32_t` arguments.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PacContract {
    FirstBest = 0,
    SecondBest = 1,
    Zero = 2,
}

/// Simulation formulations accepted as `uint32_t` arguments.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PacFormulation {
    Strong = 0,
    Weak = 1,
}

/// Two-agent benchmark; `cost_coeffs` is row-major `[k11, k12, k21, k22]`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacBenchmark {
    pub cost_coeffs: [f64; 4],
    pub sigmas: [f64; 2],
    pub gammas: [f64; 2],
    pub agent_risk_aversions: [f64; 2],
    pub principal_risk_aversion: f64,
    pub horizon: f64,
    pub reservation_utilities: [f64; 2],
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacSimOptions {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PacEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Paths whose exponent had to be clipped; a nonzero count voids the estimate.
    pub clipped: u64,
}

/// Opaque model handle.
pub struct PacModel {
    model: FirmModel,
}

/// Opaque first-best solution handle.
pub struct PacFirstBest {
    inner: FirstBest,
}

/// Opaque second-best solution handle.
pub struct PacSecondBest {
    inner: SecondBest,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> PacStatus {
    match e {
        Error::InvalidModel(_) | Error::NegativeCost { .. } | Error::SingularVolatility { .. } => PacStatus::InvalidModel,
        Error::Config(_) => PacStatus::Config,
        Error::Unsupported(_) => PacStatus::Unsupported,
        Error::Io(_) => PacStatus::Io,
        Error::Unbounded
        | Error::Stagnation { .. }
        | Error::NoEquilibrium { .. }
        | Error::Quadrature { .. }
        | Error::NonFinite { .. } => PacStatus::Numerical,
    }
}

struct Fail(PacStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PacStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PacStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PacStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal panic: {msg}"));
            PacStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(PacStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_into(src: &[f64], out: *mut f64, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < src.len() {
        return Err(Fail(PacStatus::BufferTooSmall, format!("buffer holds {len} values, {} needed", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn set<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = value;
    Ok(())
}

fn piece<T>(v: &[T], k: usize) -> Result<&T, Fail> {
    v.get(k).ok_or_else(|| Fail(PacStatus::InvalidArgument, format!("piece {k} out of range (have {})", v.len())))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Length in bytes of the last error message on this thread, without the
/// terminating NUL; 0 when the last call succeeded.
#[no_mangle]
pub extern "C" fn pac_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes().len()))
}

/// Copies the last error message (NUL-terminated) into `buf`. Returns the
/// number of bytes written excluding the NUL, or -1 if `buf` is too small.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pac_last_error_message(buf: *mut c_char, len: usize) -> isize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        if buf.is_null() || len < bytes.len() + 1 {
            return -1;
        }
        ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, bytes.len());
        *buf.add(bytes.len()) = 0;
        bytes.len() as isize
    })
}

/// Fills `out` with the default benchmark parameters.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pac_benchmark_default(out: *mut PacBenchmark) -> PacStatus {
    guard(|| {
        let b = LQBenchmark::default();
        let k = b.cost_coeffs;
        set(
            out,
            PacBenchmark {
                cost_coeffs: [k[0][0], k[0][1], k[1][0], k[1][1]],
                sigmas: b.sigmas,
                gammas: b.gammas,
                agent_risk_aversions: b.agent_risk_aversions,
                principal_risk_aversion: b.principal_risk_aversion,
                horizon: b.horizon,
                reservation_utilities: b.reservation_utilities,
            },
        )
    })
}

/// Builds the two-agent benchmark model.
///
/// # Safety
/// `params` must be null or valid for reads; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pac_model_benchmark(params: *const PacBenchmark, out: *mut *mut PacModel) -> PacStatus {
    guard(|| {
        let p = as_ref(params, "params")?;
        let c = p.cost_coeffs;
        let b = LQBenchmark {
            cost_coeffs: [[c[0], c[1]], [c[2], c[3]]],
            sigmas: p.sigmas,
            gammas: p.gammas,
            agent_risk_aversions: p.agent_risk_aversions,
            principal_risk_aversion: p.principal_risk_aversion,
            horizon: p.horizon,
            reservation_utilities: p.reservation_utilities,
        };
        write_out(out, PacModel { model: b.to_model()? })
    })
}

/// Builds a model from a TOML document (a `[model]` or `[lq_benchmark]` section).
///
/// # Safety
/// `toml` must be null or a NUL-terminated string; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pac_model_from_toml(toml: *const c_char, out: *mut *mut PacModel) -> PacStatus {
    guard(|| {
        let cfg = Config::from_toml(as_str(toml, "toml")?)?;
        write_out(out, PacModel { model: cfg.firm_model()? })
    })
}

/// # Safety
/// `model` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pac_model_free(model: *mut PacModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn pac_model_n_agents(model: *const PacModel, out: *mut usize) -> PacStatus {
    guard(|| set(out, as_ref(model, "model")?.model.n_agents()))
}

/// # Safety
/// `model` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn pac_first_best_solve(model: *const PacModel, out: *mut *mut PacFirstBest) -> PacStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        write_out(out, PacFirstBest { inner: solve_first_best(&m.model)? })
    })
}

/// # Safety
/// `fb` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pac_first_best_free(fb: *mut PacFirstBest) {
    if !fb.is_null() {
        drop(Box::from_raw(fb));
    }
}

/// # Safety
/// `fb` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn pac_first_best_principal_value(fb: *const PacFirstBest, out: *mut f64) -> PacStatus {
    guard(|| set(out, as_ref(fb, "fb")?.inner.principal_value))
}

/// # Safety
/// `fb` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn pac_first_best_n_pieces(fb: *const PacFirstBest, out: *mut usize) -> PacStatus {
    guard(|| set(out, as_ref(fb, "fb")?.inner.effort.len()))
}

/// Effort on piece `k`, `N×N` column-major.
///
/// # Safety
/// `out` must be null or point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pac_first_best_effort(fb: *const PacFirstBest, k: usize, out: *mut f64, len: usize) -> PacStatus {
    guard(|| copy_into(piece(&as_ref(fb, "fb")?.inner.effort, k)?.matrix().as_slice(), out, len))
}

/// Participation multipliers, length `N`.
///
/// # Safety
/// `out` must be null or point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pac_first_best_multipliers(fb: *const PacFirstBest, out: *mut f64, len: usize) -> PacStatus {
    guard(|| copy_into(as_ref(fb, "fb")?.inner.multipliers.as_slice(), out, len))
}

/// Affine contract `ξ_i = c_i + w_i·X_T`: constants (length `N`) and the
/// coefficient matrix whose column `i` is `w_i` (`N×N`, column-major).
///
/// # Safety
/// `constants` must point to `n_constants` and `coefficients` to
/// `n_coefficients` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pac_first_best_contract(
    fb: *const PacFirstBest,
    constants: *mut f64,
    n_constants: usize,
    coefficients: *mut f64,
    n_coefficients: usize,
) -> PacStatus {
    guard(|| {
        let c = &as_ref(fb, "fb")?.inner.contract;
        copy_into(c.constants.as_slice(), constants, n_constants)?;
        copy_into(c.coefficients.as_slice(), coefficients, n_coefficients)
    })
}

/// # Safety
/// `model` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn pac_second_best_solve(model: *const PacModel, out: *mut *mut PacSecondBest) -> PacStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        write_out(out, PacSecondBest { inner: solve_second_best(&m.model)? })
    })
}

/// # Safety
/// `sb` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pac_second_best_free(sb: *mut PacSecondBest) {
    if !sb.is_null() {
        drop(Box::from_raw(sb));
    }
}

/// # Safety
/// `sb` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn pac_second_best_principal_value(sb: *const PacSecondBest, out: *mut f64) -> PacStatus {
    guard(|| set(out, as_ref(sb, "sb")?.inner.principal_value))
}

/// # Safety
/// `sb` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn pac_second_best_n_pieces(sb: *const PacSecondBest, out: *mut usize) -> PacStatus {
    guard(|| set(out, as_ref(sb, "sb")?.inner.z.len()))
}

/// Whether every optimal sensitivity passed its local optimality certificate.
///
/// # Safety
/// `sb` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn pac_second_best_certified(sb: *const PacSecondBest, out: *mut bool) -> PacStatus {
    guard(|| set(out, as_ref(sb, "sb")?.inner.certificates.iter().all(|c| c.passed)))
}

/// Optimal sensitivities on piece `k`, `N×N` column-major.
///
/// # Safety
/// `out` must be null or point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pac_second_best_z(sb: *const PacSecondBest, k: usize, out: *mut f64, len: usize) -> PacStatus {
    guard(|| copy_into(piece(&as_ref(sb, "sb")?.inner.z, k)?.matrix().as_slice(), out, len))
}

/// Induced effort on piece `k`, `N×N` column-major.
///
/// # Safety
/// `out` must be null or point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pac_second_best_effort(sb: *const PacSecondBest, k: usize, out: *mut f64, len: usize) -> PacStatus {
    guard(|| copy_into(piece(&as_ref(sb, "sb")?.inner.effort, k)?.matrix().as_slice(), out, len))
}

/// Initial continuation values, length `N`.
///
/// # Safety
/// `out` must be null or point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pac_second_best_y0(sb: *const PacSecondBest, out: *mut f64, len: usize) -> PacStatus {
    guard(|| copy_into(as_ref(sb, "sb")?.inner.contract.y0.as_slice(), out, len))
}

/// # Safety
/// `out` must be null or point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pac_second_best_multipliers(sb: *const PacSecondBest, out: *mut f64, len: usize) -> PacStatus {
    guard(|| copy_into(as_ref(sb, "sb")?.inner.multipliers.as_slice(), out, len))
}

fn contract_choice(c: u32) -> Result<ContractChoice, Fail> {
    Ok(match c {
        x if x == PacContract::FirstBest as u32 => ContractChoice::FirstBest,
        x if x == PacContract::SecondBest as u32 => ContractChoice::SecondBest,
        x if x == PacContract::Zero as u32 => ContractChoice::Zero,
        _ => return Err(Fail(PacStatus::InvalidArgument, format!("unknown contract kind {c}"))),
    })
}

fn sim_config(o: &PacSimOptions) -> SimConfig {
    SimConfig { n_paths: o.n_paths, n_steps: o.n_steps, seed: o.seed }
}

fn estimate(e: &MCEstimate) -> PacEstimate {
    PacEstimate { mean: e.mean, std_error: e.std_error, clipped: e.clipped }
}

/// Monte Carlo expected utilities under `contract` and the effort it
/// implements. `agents` receives `N` estimates.
///
/// # Safety
/// `agents` must point to `n_agents` writable estimates, `principal` to one.
#[no_mangle]
pub unsafe extern "C" fn pac_simulate(
    model: *const PacModel,
    contract: u32,
    formulation: u32,
    options: *const PacSimOptions,
    agents: *mut PacEstimate,
    n_agents: usize,
    principal: *mut PacEstimate,
) -> PacStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.model;
        let cfg = sim_config(as_ref(options, "options")?);
        if agents.is_null() {
            return Err(null("agents"));
        }
        if principal.is_null() {
            return Err(null("principal"));
        }
        if n_agents < m.n_agents() {
            return Err(Fail(PacStatus::BufferTooSmall, format!("{} agent estimates needed", m.n_agents())));
        }
        let (c, policy) = contract_and_policy(m, contract_choice(contract)?)?;
        let f = match formulation {
            x if x == PacFormulation::Strong as u32 => Formulation::Strong,
            x if x == PacFormulation::Weak as u32 => Formulation::Weak,
            _ => return Err(Fail(PacStatus::InvalidArgument, format!("unknown formulation {formulation}"))),
        };
        let u = estimate_utilities(m, &c, &policy, &cfg, f)?;
        for (i, e) in u.agents.iter().enumerate() {
            *agents.add(i) = estimate(e);
        }
        *principal = estimate(&u.principal);
        Ok(())
    })
}

/// Participation, Nash, martingale and ordering checks for the first- or
/// second-best contract. `passed` receives the overall verdict.
///
/// # Safety
/// `model`, `options` and `passed` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn pac_verify(
    model: *const PacModel,
    contract: u32,
    options: *const PacSimOptions,
    passed: *mut bool,
) -> PacStatus {
    guard(|| {
        let m = &as_ref(model, "model")?.model;
        let opts = VerifyOptions { cfg: sim_config(as_ref(options, "options")?), ..Default::default() };
        if passed.is_null() {
            return Err(null("passed"));
        }
        let report = match contract_choice(contract)? {
            ContractChoice::SecondBest => verify_second_best(m, &opts)?,
            ContractChoice::FirstBest => verify_first_best(m, &opts)?,
            ContractChoice::Zero => return Err(Fail(PacStatus::InvalidArgument, "only optimal contracts are verified".into())),
        };
        *passed = report.passed();
        Ok(())
    })
}

fn parse_command(name: &str) -> Result<Command, Fail> {
    Ok(match name {
        "first-best" => Command::FirstBest,
        "second-best" => Command::SecondBest,
        "general-fb" => Command::GeneralFb,
        "simulate" => Command::Simulate,
        "verify" => Command::Verify,
        "recruit" => Command::Recruit,
        "compare" => Command::Compare,
        _ => return Err(Fail(PacStatus::InvalidArgument, format!("unknown command `{name}`"))),
    })
}

/// Runs a command-line command on a TOML configuration (null for the default
/// benchmark) and returns the concatenated CSV output in `*out`, to be
/// released with [`pac_string_free`].
///
/// # Safety
/// `command` must be a NUL-terminated string, `toml` null or one, and `out`
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pac_run(command: *const c_char, toml: *const c_char, out: *mut *mut c_char) -> PacStatus {
    guard(|| {
        let command = parse_command(as_str(command, "command")?)?;
        let config = if toml.is_null() { Config::default() } else { Config::from_toml(as_str(toml, "toml")?)? };
        if out.is_null() {
            return Err(null("out"));
        }
        let result = run(&RunSpec { command, config, tol: None, sweep: Vec::new() })?;
        let text: String = result.files.iter().filter(|(n, _)| n.ends_with(".csv")).map(|(_, c)| c.as_str()).collect();
        *out = CString::new(text).map_err(|_| Fail(PacStatus::Io, "output contains NUL".into()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pac_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
