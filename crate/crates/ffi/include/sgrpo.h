#ifndef SGRPO_H
#define SGRPO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum SgrpoStatus {
  SGRPO_STATUS_OK = 0,
  SGRPO_STATUS_NULL_POINTER = 1,
  SGRPO_STATUS_INVALID_UTF8 = 2,
  // Invalid configuration or argument.
  SGRPO_STATUS_CONFIG = 3,
  // Input outside the domain of a formula.
  SGRPO_STATUS_DOMAIN = 4,
  // Malformed or misaligned input data.
  SGRPO_STATUS_DATA = 5,
  // Statistic undefined for the input (e.g. constant column).
  SGRPO_STATUS_UNDEFINED = 6,
  // Non-finite values during training.
  SGRPO_STATUS_NON_FINITE = 7,
  SGRPO_STATUS_IO = 8,
  SGRPO_STATUS_STATE = 9,
  // A Rust panic was caught at the boundary.
  SGRPO_STATUS_PANIC = 10,
} SgrpoStatus;

// A parsed completion.
typedef struct SgrpoCompletion SgrpoCompletion;

// A training run over an in-memory corpus.
typedef struct SgrpoTrainer SgrpoTrainer;

// Advantage-scaling parameters.
typedef struct SgrpoMgasParams {
  double phi_minus;
  double phi_plus;
  double c;
  double beta;
  // Non-zero to clamp the factor into `[phi_minus, phi_plus]`.
  int32_t clamp;
} SgrpoMgasParams;

// Reward components of one completion.
typedef struct SgrpoRewardBreakdown {
  double r_reasoning;
  double r_format;
  double per_aspect[6];
  double r_sub_dyn;
  double r_total;
  double r_acc;
  double r_final;
} SgrpoRewardBreakdown;

// Summary of one training step.
typedef struct SgrpoStepMetrics {
  uint64_t step;
  double loss;
  double mean_reward;
  double gamma;
  double kl;
  double grad_norm;
  double weights[6];
  // 1 if the aspect weights were refreshed at the end of this step.
  int32_t weights_refreshed;
} SgrpoStepMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *sgrpo_last_error(void);

// Library version as a static NUL-terminated string.
const char *sgrpo_version(void);

// `exp(-(pred - gt)^2 / (2 sigma^2))`.
//
// # Safety
// `out` must be a valid pointer to a double.
enum SgrpoStatus sgrpo_gaussian_reward(double pred, double gt, double sigma, double *out);

// Group-normalizes `n` rewards into `out` (population std, zero for
// near-constant groups).
//
// # Safety
// `rewards` and `out` must point to `n` doubles.
enum SgrpoStatus sgrpo_normalize_advantages(const double *rewards,
                                            size_t n,
                                            double epsilon_std,
                                            double *out);

struct SgrpoMgasParams sgrpo_mgas_default_params(void);

// Scale factor for an advantage of the given sign at agreement `gamma`.
// Pass null `params` for the defaults.
//
// # Safety
// `params` must be null or valid; `out` must be valid.
enum SgrpoStatus sgrpo_mgas_scale_factor(double gamma,
                                         double advantage,
                                         const struct SgrpoMgasParams *params,
                                         double *out);

// Kendall tau-b of two length-`n` sequences.
//
// # Safety
// `x` and `y` must point to `n` doubles; `out` must be valid.
enum SgrpoStatus sgrpo_kendall_tau_b(const double *x, const double *y, size_t n, double *out);

// Spearman rho of two length-`n` sequences.
//
// # Safety
// `x` and `y` must point to `n` doubles; `out` must be valid.
enum SgrpoStatus sgrpo_spearman_rho(const double *x, const double *y, size_t n, double *out);

// Parses completion text into a new handle.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be valid.
enum SgrpoStatus sgrpo_completion_parse(const char *text, struct SgrpoCompletion **out);

// # Safety
// `c` must be null or a handle from [`sgrpo_completion_parse`] not yet freed.
void sgrpo_completion_free(struct SgrpoCompletion *c);

// 1 if the completion is well-formed, 0 otherwise (also 0 for null).
//
// # Safety
// `c` must be null or a live handle.
int32_t sgrpo_completion_format_valid(const struct SgrpoCompletion *c);

// Score for aspect `aspect` (0..6). `present` receives 0 when the tag was
// missing or invalid, in which case `value` is left untouched.
//
// # Safety
// `c` must be a live handle; `value` and `present` must be valid.
enum SgrpoStatus sgrpo_completion_score(const struct SgrpoCompletion *c,
                                        size_t aspect,
                                        double *value,
                                        int32_t *present);

// Rewards the completion against six ground-truth counts. `weights` may be
// null for unit weights, otherwise it must hold six values.
//
// # Safety
// `gt` must point to six counts; `weights` null or six doubles; `out` valid.
enum SgrpoStatus sgrpo_completion_reward(const struct SgrpoCompletion *c,
                                         const uint32_t *gt,
                                         const double *weights,
                                         double sigma,
                                         double sigma_total,
                                         struct SgrpoRewardBreakdown *out);

// Creates a trainer from `key = value` config text (null for defaults) and
// a corpus file.
//
// # Safety
// `config_text` null or NUL-terminated; `corpus_path` NUL-terminated; `out` valid.
enum SgrpoStatus sgrpo_trainer_new(const char *config_text,
                                   const char *corpus_path,
                                   struct SgrpoTrainer **out);

// # Safety
// `t` must be null or a live trainer handle.
void sgrpo_trainer_free(struct SgrpoTrainer *t);

// Runs one step. `out` may be null.
//
// # Safety
// `t` must be a live handle; `out` null or valid.
enum SgrpoStatus sgrpo_trainer_step(struct SgrpoTrainer *t, struct SgrpoStepMetrics *out);

// Number of completed steps (0 for null).
//
// # Safety
// `t` must be null or a live handle.
uint64_t sgrpo_trainer_steps_done(const struct SgrpoTrainer *t);

// Current aspect weights into `out[0..6]`.
//
// # Safety
// `t` must be a live handle; `out` must hold six doubles.
enum SgrpoStatus sgrpo_trainer_weights(const struct SgrpoTrainer *t, double *out);

// Greedy count predictions for a feature vector of length `dim`.
//
// # Safety
// `t` live; `features` must hold `dim` doubles; `out` must hold six counts.
enum SgrpoStatus sgrpo_trainer_predict(const struct SgrpoTrainer *t,
                                       const double *features,
                                       size_t dim,
                                       uint32_t *out);

// Writes a checkpoint that the `sgrpo train --resume` command accepts.
//
// # Safety
// `t` live; `path` NUL-terminated.
enum SgrpoStatus sgrpo_trainer_save_checkpoint(const struct SgrpoTrainer *t, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SGRPO_H */
