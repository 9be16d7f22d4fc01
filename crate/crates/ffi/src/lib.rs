//! C interface to `she-core`.
//!
//! Every fallible call returns a [`SheStatus`]; on failure the message is
//! available from [`she_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Panics never
//! cross the boundary: they are reported as `SHE_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use she_core::envs::{Action, EnvConfig, Environment, GridEnv};
use she_core::features::{AudioFeaturizer, FEATURE_DIM};
use she_core::harness::{run_experiment, ExperimentConfig, Trainer};
use she_core::rewards::she_reward;
use she_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SheStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    NonFinite = 5,
    Contract = 6,
    Checkpoint = 7,
    Panic = 8,
}

/// Environment family for [`she_env_new`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SheEnvKind {
    AcousticGrid = 0,
    ChimeWorld = 1,
}

/// Opaque environment handle.
pub struct SheEnv {
    env: GridEnv,
}

/// Opaque training-loop handle.
pub struct SheTrainer {
    trainer: Trainer,
}

/// Per-rollout numbers returned by [`she_trainer_step`]. Fields that do not
/// apply to the method are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SheRolloutMetrics {
    pub rollout: u64,
    pub frames: u64,
    pub episodes: u64,
    pub unique_states: u64,
    pub mean_intrinsic_reward: f64,
    pub module_loss: f64,
    pub discriminator_accuracy: f64,
    pub extrinsic_score: f64,
    pub policy_loss: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> SheStatus {
    match err {
        Error::Shape(_) => SheStatus::InvalidArgument,
        Error::Contract(_) => SheStatus::Contract,
        Error::NonFinite(_) => SheStatus::NonFinite,
        Error::Config(_) | Error::MapLoad(_) => SheStatus::Config,
        Error::Checkpoint(_) => SheStatus::Checkpoint,
        Error::Io(_) | Error::Csv(_) => SheStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), (SheStatus, String)>) -> SheStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SheStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(&msg);
            SheStatus::Panic
        }
    }
}

fn lift<T>(r: she_core::Result<T>) -> Result<T, (SheStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (SheStatus, String) {
    (SheStatus::NullPointer, format!("{what} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SheStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (SheStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread ("" after a success).
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn she_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn she_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes `-ln p` to `out`; `p` must lie in the discriminator's clamp range.
///
/// # Safety
/// `out` must be valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn she_reward_from_prob(p: f64, out: *mut f64) -> SheStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lift(she_reward(p))?;
        Ok(())
    })
}

/// Audio features of `len` samples (2120 for the built-in worlds) written to
/// `out`, which must hold `out_len >= 512` doubles.
///
/// # Safety
/// `samples` must point to `len` doubles and `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn she_featurize_audio(
    samples: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> SheStatus {
    guard(|| {
        if samples.is_null() || out.is_null() {
            return Err(null("samples or out"));
        }
        if out_len < FEATURE_DIM {
            return Err((SheStatus::InvalidArgument, format!("out needs {FEATURE_DIM} slots")));
        }
        let input = std::slice::from_raw_parts(samples, len);
        let feats = lift(AudioFeaturizer::default().featurize(input))?;
        std::slice::from_raw_parts_mut(out, FEATURE_DIM).copy_from_slice(&feats.0);
        Ok(())
    })
}

/// Creates a reset environment.
///
/// # Safety
/// `out` must be valid for a write of one pointer.
#[no_mangle]
pub unsafe extern "C" fn she_env_new(kind: SheEnvKind, seed: u64, out: *mut *mut SheEnv) -> SheStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = match kind {
            SheEnvKind::AcousticGrid => EnvConfig::acoustic_grid(),
            SheEnvKind::ChimeWorld => EnvConfig::chime_world(),
        };
        let mut env = lift(GridEnv::new(cfg, seed))?;
        env.reset();
        *out = Box::into_raw(Box::new(SheEnv { env }));
        Ok(())
    })
}

/// Releases an environment. Null is ignored.
///
/// # Safety
/// `env` must come from [`she_env_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn she_env_free(env: *mut SheEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Number of actions and of (cell, heading) states.
///
/// # Safety
/// `env` must be a live handle; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn she_env_dims(env: *const SheEnv, actions: *mut usize, states: *mut usize) -> SheStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        if !actions.is_null() {
            *actions = env.env.num_actions();
        }
        if !states.is_null() {
            *states = env.env.num_states();
        }
        Ok(())
    })
}

/// Puts the agent back on the start cell; writes the state id.
///
/// # Safety
/// `env` must be a live handle; `state_id` may be null.
#[no_mangle]
pub unsafe extern "C" fn she_env_reset(env: *mut SheEnv, state_id: *mut usize) -> SheStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        env.env.reset();
        if !state_id.is_null() {
            *state_id = env.env.state_id().0;
        }
        Ok(())
    })
}

/// Takes one action. The hidden score is not exposed here.
///
/// # Safety
/// `env` must be a live handle; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn she_env_step(
    env: *mut SheEnv,
    action: usize,
    state_id: *mut usize,
    done: *mut bool,
) -> SheStatus {
    guard(|| {
        let env = env.as_mut().ok_or_else(|| null("env"))?;
        let step = lift(env.env.step(Action(action)))?;
        let agent = step.agent();
        if !state_id.is_null() {
            *state_id = agent.state_id.0;
        }
        if !done.is_null() {
            *done = agent.done;
        }
        Ok(())
    })
}

/// Builds a training loop from TOML config text.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn she_trainer_new(config_toml: *const c_char, seed: u64, out: *mut *mut SheTrainer) -> SheStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = lift(ExperimentConfig::from_toml(c_str(config_toml, "config_toml")?))?;
        let trainer = lift(Trainer::new(&cfg, seed))?;
        *out = Box::into_raw(Box::new(SheTrainer { trainer }));
        Ok(())
    })
}

/// Releases a trainer. Null is ignored.
///
/// # Safety
/// `trainer` must come from [`she_trainer_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn she_trainer_free(trainer: *mut SheTrainer) {
    if !trainer.is_null() {
        drop(Box::from_raw(trainer));
    }
}

/// Runs one collect/update cycle.
///
/// # Safety
/// `trainer` must be a live handle; `out` may be null.
#[no_mangle]
pub unsafe extern "C" fn she_trainer_step(trainer: *mut SheTrainer, out: *mut SheRolloutMetrics) -> SheStatus {
    guard(|| {
        let t = trainer.as_mut().ok_or_else(|| null("trainer"))?;
        let (m, _) = lift(t.trainer.step())?;
        if !out.is_null() {
            *out = SheRolloutMetrics {
                rollout: m.rollout as u64,
                frames: m.frames,
                episodes: m.episodes,
                unique_states: m.unique_states as u64,
                mean_intrinsic_reward: m.mean_intrinsic_reward,
                module_loss: m.module_loss,
                discriminator_accuracy: m.discriminator_accuracy.unwrap_or(f64::NAN),
                extrinsic_score: m.extrinsic_score,
                policy_loss: m.policy_loss.unwrap_or(f64::NAN),
            };
        }
        Ok(())
    })
}

/// Saves the trainer's learned state.
///
/// # Safety
/// `trainer` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn she_trainer_save(trainer: *const SheTrainer, path: *const c_char) -> SheStatus {
    guard(|| {
        let t = trainer.as_ref().ok_or_else(|| null("trainer"))?;
        let path = c_str(path, "path")?;
        lift(t.trainer.to_checkpoint().save(Path::new(path)))
    })
}

/// Restores learned state saved by [`she_trainer_save`].
///
/// # Safety
/// `trainer` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn she_trainer_load(trainer: *mut SheTrainer, path: *const c_char) -> SheStatus {
    guard(|| {
        let t = trainer.as_mut().ok_or_else(|| null("trainer"))?;
        let path = c_str(path, "path")?;
        let ck = lift(she_core::numeric::Checkpoint::load(Path::new(path)))?;
        lift(t.trainer.restore(&ck))
    })
}

/// Same as the `run` command: trains every seed of the config file into `out_dir`.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn she_run_experiment(config_path: *const c_char, out_dir: *const c_char) -> SheStatus {
    guard(|| {
        let cfg = lift(ExperimentConfig::load(Path::new(c_str(config_path, "config_path")?)))?;
        let out = c_str(out_dir, "out_dir")?;
        lift(run_experiment(&cfg, Path::new(out), false)).map(|_| ())
    })
}
