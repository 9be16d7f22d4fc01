#ifndef SHE_H
#define SHE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Environment family for [`she_env_new`].
 */
typedef enum SheEnvKind {
  SHE_ENV_KIND_ACOUSTIC_GRID = 0,
  SHE_ENV_KIND_CHIME_WORLD = 1,
} SheEnvKind;

/*
 Result of every fallible call.
 */
typedef enum SheStatus {
  SHE_STATUS_OK = 0,
  SHE_STATUS_NULL_POINTER = 1,
  SHE_STATUS_INVALID_ARGUMENT = 2,
  SHE_STATUS_CONFIG = 3,
  SHE_STATUS_IO = 4,
  SHE_STATUS_NON_FINITE = 5,
  SHE_STATUS_CONTRACT = 6,
  SHE_STATUS_CHECKPOINT = 7,
  SHE_STATUS_PANIC = 8,
} SheStatus;

/*
 Opaque environment handle.
 */
typedef struct SheEnv SheEnv;

/*
 Opaque training-loop handle.
 */
typedef struct SheTrainer SheTrainer;

/*
 Per-rollout numbers returned by [`she_trainer_step`]. Fields that do not
 apply to the method are NaN.
 */
typedef struct SheRolloutMetrics {
  uint64_t rollout;
  uint64_t frames;
  uint64_t episodes;
  uint64_t unique_states;
  double mean_intrinsic_reward;
  double module_loss;
  double discriminator_accuracy;
  double extrinsic_score;
  double policy_loss;
} SheRolloutMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread ("" after a success).
 The pointer stays valid until the next call on this thread.
 */
const char *she_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *she_version(void);

/*
 Writes `-ln p` to `out`; `p` must lie in the discriminator's clamp range.

 # Safety
 `out` must be valid for a write of one `double`.
 */
enum SheStatus she_reward_from_prob(double p, double *out);

/*
 Audio features of `len` samples (2120 for the built-in worlds) written to
 `out`, which must hold `out_len >= 512` doubles.

 # Safety
 `samples` must point to `len` doubles and `out` to `out_len` doubles.
 */
enum SheStatus she_featurize_audio(const double *samples, size_t len, double *out, size_t out_len);

/*
 Creates a reset environment.

 # Safety
 `out` must be valid for a write of one pointer.
 */
enum SheStatus she_env_new(enum SheEnvKind kind, uint64_t seed, struct SheEnv **out);

/*
 Releases an environment. Null is ignored.

 # Safety
 `env` must come from [`she_env_new`] and not be used afterwards.
 */
void she_env_free(struct SheEnv *env);

/*
 Number of actions and of (cell, heading) states.

 # Safety
 `env` must be a live handle; the out pointers may be null.
 */
enum SheStatus she_env_dims(const struct SheEnv *env, size_t *actions, size_t *states);

/*
 Puts the agent back on the start cell; writes the state id.

 # Safety
 `env` must be a live handle; `state_id` may be null.
 */
enum SheStatus she_env_reset(struct SheEnv *env, size_t *state_id);

/*
 Takes one action. The hidden score is not exposed here.

 # Safety
 `env` must be a live handle; the out pointers may be null.
 */
enum SheStatus she_env_step(struct SheEnv *env, size_t action, size_t *state_id, bool *done);

/*
 Builds a training loop from TOML config text.

 # Safety
 `config_toml` must be a NUL-terminated string; `out` valid for one write.
 */
enum SheStatus she_trainer_new(const char *config_toml, uint64_t seed, struct SheTrainer **out);

/*
 Releases a trainer. Null is ignored.

 # Safety
 `trainer` must come from [`she_trainer_new`] and not be used afterwards.
 */
void she_trainer_free(struct SheTrainer *trainer);

/*
 Runs one collect/update cycle.

 # Safety
 `trainer` must be a live handle; `out` may be null.
 */
enum SheStatus she_trainer_step(struct SheTrainer *trainer, struct SheRolloutMetrics *out);

/*
 Saves the trainer's learned state.

 # Safety
 `trainer` must be a live handle; `path` a NUL-terminated string.
 */
enum SheStatus she_trainer_save(const struct SheTrainer *trainer, const char *path);

/*
 Restores learned state saved by [`she_trainer_save`].

 # Safety
 `trainer` must be a live handle; `path` a NUL-terminated string.
 */
enum SheStatus she_trainer_load(struct SheTrainer *trainer, const char *path);

/*
 Same as the `run` command: trains every seed of the config file into `out_dir`.

 # Safety
 Both arguments must be NUL-terminated strings.
 */
enum SheStatus she_run_experiment(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHE_H */
