#ifndef RDASIM_H
#define RDASIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Lane codes in [`RdaVehicle::lane`]: main lanes count from 0 at the
// right edge; ramps use these negative codes.
#define RDA_LANE_ONRAMP -1

#define RDA_LANE_OFFRAMP -2

typedef enum RdaStatus {
  RDA_STATUS_OK = 0,
  RDA_STATUS_NULL_POINTER = 1,
  RDA_STATUS_INVALID_ARGUMENT = 2,
  RDA_STATUS_CONFIG = 3,
  RDA_STATUS_RUNTIME_ABORT = 4,
  RDA_STATUS_IO = 5,
  RDA_STATUS_LENGTH_MISMATCH = 6,
  RDA_STATUS_PANIC = 7,
} RdaStatus;

typedef struct RdaModel RdaModel;

typedef struct RdaSimulation RdaSimulation;

typedef struct RdaTransition RdaTransition;

typedef struct RdaVehicle {
  uint64_t id;
  // 0 human, 1 ACC, 2 compromised ACC.
  uint8_t kind;
  uint8_t attack_active;
  int32_t lane;
  double position_m;
  double speed_mps;
  double accel_mps2;
} RdaVehicle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *rda_version(void);

// Copies the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`). Returns the full message length
// in bytes, or 0 when there is no error.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t rda_last_error(char *buf, size_t len);

// Creates a simulation from a scenario document (JSON). A null `config`
// gives the desk defaults.
//
// # Safety
// `config` must be null or a NUL-terminated string; `out` must be valid.
enum RdaStatus rda_simulation_new(const char *config, struct RdaSimulation **out);

// # Safety
// `sim` must be null or a handle from [`rda_simulation_new`], freed once.
void rda_simulation_free(struct RdaSimulation *sim);

// Advances `steps` time steps. Stops early on a runtime abort.
//
// # Safety
// `sim` must be a live handle.
enum RdaStatus rda_simulation_step(struct RdaSimulation *sim, uint64_t steps);

// # Safety
// `sim` must be a live handle and `time` valid.
enum RdaStatus rda_simulation_time(const struct RdaSimulation *sim, double *time);

// Copies up to `cap` vehicles into `buf` and stores the number of
// vehicles on the network in `count` (which may exceed `cap`).
//
// # Safety
// `buf` must point to `cap` writable entries (or be null with `cap == 0`).
enum RdaStatus rda_simulation_vehicles(const struct RdaSimulation *sim,
                                       struct RdaVehicle *buf,
                                       size_t cap,
                                       size_t *count);

// Writes the trajectories recorded so far as CSV.
//
// # Safety
// `sim` must be a live handle; `path` a NUL-terminated string.
enum RdaStatus rda_simulation_write_csv(const struct RdaSimulation *sim, const char *path);

// Average attack cost, USD per km-hour; speeds in m/s.
//
// # Safety
// `out` must be valid.
enum RdaStatus rda_aac(double v_base, double v_att, double throughput, double vot, double *out);

// Loads a detector model written by `rdasim detector train`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid.
enum RdaStatus rda_model_load(const char *path, struct RdaModel **out);

// # Safety
// `model` must be null or a handle from [`rda_model_load`], freed once.
void rda_model_free(struct RdaModel *model);

// # Safety
// `model` must be a live handle and `out` valid.
enum RdaStatus rda_model_threshold(const struct RdaModel *model, double *out);

// Scores a raw speed series (m/s) and reports whether it is flagged
// (`malicious` set to 1) against the model threshold.
//
// # Safety
// `speeds` must point to `n` values; `score` and `malicious` must be valid.
enum RdaStatus rda_model_score(const struct RdaModel *model,
                               const double *speeds,
                               size_t n,
                               double *score,
                               uint8_t *malicious);

// Learns the set of adjacent ID pairs of a benign ID sequence.
//
// # Safety
// `ids` must point to `n` values and `out` be valid.
enum RdaStatus rda_transition_train(const uint32_t *ids, size_t n, struct RdaTransition **out);

// # Safety
// `t` must be null or a handle from [`rda_transition_train`], freed once.
void rda_transition_free(struct RdaTransition *t);

// Writes 1 into `flags[i]` when message `i` forms an unseen pair with its
// predecessor, else 0.
//
// # Safety
// `ids` and `flags` must each point to `n` entries.
enum RdaStatus rda_transition_score(const struct RdaTransition *t,
                                    const uint32_t *ids,
                                    size_t n,
                                    uint8_t *flags);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RDASIM_H */
