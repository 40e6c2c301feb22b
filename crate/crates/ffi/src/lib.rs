//! C ABI for the seacap simulator, fairness metric, dual update and preset
//! runner.
//!
//! Every fallible entry point returns a [`SeacapStatus`]; on failure the
//! message is available from [`seacap_last_error`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use seacap::constraints::{dual_update, DualMode, DualState};
use seacap::env::{ScenarioConfig, Simulator, VesselCommand};
use seacap::harness::{run_experiment, ExperimentSpec, Preset};
use seacap::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeacapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Domain = 4,
    Contract = 5,
    StateCorruption = 6,
    NonFinite = 7,
    Budget = 8,
    Io = 9,
    Json = 10,
    Panic = 11,
}

impl From<&Error> for SeacapStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config { .. } => SeacapStatus::Config,
            Error::Domain(_) => SeacapStatus::Domain,
            Error::Contract(_) => SeacapStatus::Contract,
            Error::StateCorruption(_) => SeacapStatus::StateCorruption,
            Error::NonFinite(_) => SeacapStatus::NonFinite,
            Error::Budget { .. } => SeacapStatus::Budget,
            Error::Io(_) => SeacapStatus::Io,
            Error::Json(_) => SeacapStatus::Json,
        }
    }
}

/// Opaque simulator handle.
pub struct SeacapSimulator {
    inner: Simulator,
}

/// Final-window summary of a preset run, means across seeds.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SeacapSummary {
    pub reward: f64,
    pub emissions: f64,
    pub emissions_std: f64,
    pub gini: f64,
    pub fuel_variance: f64,
    pub violation_rate: f64,
    pub lambda: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

enum Failure {
    Null(&'static str),
    Utf8(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SeacapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SeacapStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SeacapStatus::NullPointer
        }
        Ok(Err(Failure::Utf8(what))) => {
            set_error(format!("{what} is not valid UTF-8"));
            SeacapStatus::InvalidUtf8
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            SeacapStatus::from(&e)
        }
        Err(_) => {
            set_error("panic inside seacap".into());
            SeacapStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    match (p.is_null(), len) {
        (_, 0) => Ok(&[]),
        (true, _) => Err(Failure::Null(what)),
        (false, _) => Ok(std::slice::from_raw_parts(p, len)),
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

/// Message of the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn seacap_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn seacap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a simulator. `scenario_json` may be null for the built-in
/// desk-scale scenario.
///
/// # Safety
/// `scenario_json` must be null or a NUL-terminated string; `out_sim` must
/// be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seacap_simulator_new(
    scenario_json: *const c_char,
    horizon: usize,
    seed: u64,
    out_sim: *mut *mut SeacapSimulator,
) -> SeacapStatus {
    guard(|| {
        let slot = out(out_sim, "out_sim")?;
        let scenario = if scenario_json.is_null() {
            ScenarioConfig::desk_scale()
        } else {
            ScenarioConfig::from_json_str(text(scenario_json, "scenario_json")?)?
        };
        let inner = Simulator::new(&scenario, horizon, seed)?;
        *slot = Box::into_raw(Box::new(SeacapSimulator { inner }));
        Ok(())
    })
}

/// Releases a simulator. Null is ignored.
///
/// # Safety
/// `sim` must be null or a handle from [`seacap_simulator_new`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn seacap_simulator_free(sim: *mut SeacapSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// # Safety
/// `sim` must be a live handle and `out_n` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seacap_simulator_n_vessels(
    sim: *const SeacapSimulator,
    out_n: *mut usize,
) -> SeacapStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or(Failure::Null("sim"))?;
        *out(out_n, "out_n")? = sim.inner.n_vessels();
        Ok(())
    })
}

/// Starts a new episode with `seed`.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seacap_simulator_reset(
    sim: *mut SeacapSimulator,
    seed: u64,
) -> SeacapStatus {
    guard(|| {
        out(sim, "sim")?.inner.reset(seed)?;
        Ok(())
    })
}

/// Advances one step. `speeds` and `routes` hold one entry per vessel;
/// per-vessel emissions are written to `emissions_out` when it is not null.
///
/// # Safety
/// `sim` must be a live handle; the arrays must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn seacap_simulator_step(
    sim: *mut SeacapSimulator,
    speeds: *const f64,
    routes: *const usize,
    n: usize,
    emissions_out: *mut f64,
) -> SeacapStatus {
    guard(|| {
        let sim = out(sim, "sim")?;
        let speeds = slice(speeds, n, "speeds")?;
        let routes = slice(routes, n, "routes")?;
        let commands: Vec<VesselCommand> = speeds
            .iter()
            .zip(routes)
            .map(|(&speed, &route)| VesselCommand { speed, route })
            .collect();
        let step = sim.inner.step(&commands)?;
        if !emissions_out.is_null() {
            std::slice::from_raw_parts_mut(emissions_out, n)
                .copy_from_slice(&step.metrics.emissions);
        }
        Ok(())
    })
}

/// Cumulative emissions of the current episode.
///
/// # Safety
/// `sim` must be a live handle and `out_value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seacap_simulator_cum_emissions(
    sim: *const SeacapSimulator,
    out_value: *mut f64,
) -> SeacapStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or(Failure::Null("sim"))?;
        *out(out_value, "out_value")? = sim.inner.state().cum_emissions;
        Ok(())
    })
}

/// Whether the episode horizon has been reached.
///
/// # Safety
/// `sim` must be a live handle and `out_done` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seacap_simulator_done(
    sim: *const SeacapSimulator,
    out_done: *mut bool,
) -> SeacapStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or(Failure::Null("sim"))?;
        *out(out_done, "out_done")? = sim.inner.done();
        Ok(())
    })
}

/// Gini coefficient of non-negative burdens.
///
/// # Safety
/// `values` must hold `n` elements and `out_value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seacap_gini(
    values: *const f64,
    n: usize,
    out_value: *mut f64,
) -> SeacapStatus {
    guard(|| {
        let v = slice(values, n, "values")?;
        *out(out_value, "out_value")? = seacap::fairness::gini(v)?;
        Ok(())
    })
}

/// One cap-only dual step: the multiplier grows by
/// `alpha * (cum_emissions - c_max)` while over the cap.
///
/// # Safety
/// `out_lambda` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seacap_dual_update(
    lambda: f64,
    alpha: f64,
    c_max: f64,
    cum_emissions: f64,
    out_lambda: *mut f64,
) -> SeacapStatus {
    guard(|| {
        let slot = out(out_lambda, "out_lambda")?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Domain(format!("lambda {lambda} must be non-negative")).into());
        }
        let state = DualState {
            lambda,
            ..DualState::new(c_max, alpha, DualMode::CapOnly)?
        };
        *slot = dual_update(&state, cum_emissions).lambda;
        Ok(())
    })
}

/// Trains a preset ("A".."D") and writes its metric files to `out_dir`.
/// `episodes` and `horizon` of 0 keep the preset defaults.
///
/// # Safety
/// Strings must be NUL-terminated; `seeds` must hold `n_seeds` elements;
/// `summary_out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn seacap_run_preset(
    preset: *const c_char,
    seeds: *const u64,
    n_seeds: usize,
    episodes: usize,
    horizon: usize,
    out_dir: *const c_char,
    summary_out: *mut SeacapSummary,
) -> SeacapStatus {
    guard(|| {
        let preset = Preset::parse(text(preset, "preset")?)?;
        let mut spec = ExperimentSpec::from_preset(preset);
        spec.output_dir = PathBuf::from(text(out_dir, "out_dir")?);
        if n_seeds > 0 {
            spec.run.seeds = slice(seeds, n_seeds, "seeds")?.to_vec();
        }
        if episodes > 0 {
            spec.run.episodes = episodes;
        }
        if horizon > 0 {
            spec.run.horizon = horizon;
        }
        let scenario = spec.load_scenario()?;
        let s = run_experiment(&spec, &scenario)?.summary;
        if let Some(slot) = summary_out.as_mut() {
            *slot = SeacapSummary {
                reward: s.reward.mean,
                emissions: s.emissions.mean,
                emissions_std: s.emissions.std,
                gini: s.gini.mean,
                fuel_variance: s.fuel_variance.mean,
                violation_rate: s.violation_rate.mean,
                lambda: s.lambda.mean,
            };
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn error_codes_follow_variants() {
        assert_eq!(
            SeacapStatus::from(&Error::Domain("x".into())),
            SeacapStatus::Domain
        );
        assert_eq!(
            SeacapStatus::from(&Error::Budget {
                required: 2,
                limit: 1
            }),
            SeacapStatus::Budget
        );
    }

    #[test]
    fn panics_become_status() {
        assert_eq!(guard(|| panic!("boom")), SeacapStatus::Panic);
        let msg = unsafe { CStr::from_ptr(seacap_last_error()) };
        assert!(msg.to_str().unwrap().contains("panic"));
    }

    #[test]
    fn version_is_terminated() {
        let v = unsafe { CStr::from_ptr(seacap_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn null_pointer_reported() {
        assert_eq!(
            unsafe { seacap_gini(ptr::null(), 3, ptr::null_mut()) },
            SeacapStatus::NullPointer
        );
    }
}
