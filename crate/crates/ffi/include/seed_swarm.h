#ifndef SEED_SWARM_H
#define SEED_SWARM_H

/* Generated by cbindgen from seed-swarm-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a fallible call.
typedef enum SwarmStatus {
  SWARM_STATUS_OK = 0,
  // A required pointer argument was null.
  SWARM_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  SWARM_STATUS_INVALID_UTF8 = 2,
  // The scenario failed to parse.
  SWARM_STATUS_PARSE_ERROR = 3,
  // The scenario parsed but failed validation.
  SWARM_STATUS_VALIDATION_ERROR = 4,
  // The integrator produced a non-finite value.
  SWARM_STATUS_INTEGRATION_ERROR = 5,
  // The oracle found the problem infeasible or out of bounds.
  SWARM_STATUS_SOLVE_ERROR = 6,
  // An index or buffer size did not match the handle's shape.
  SWARM_STATUS_OUT_OF_RANGE = 7,
} SwarmStatus;

typedef struct SwarmScenario SwarmScenario;

typedef struct SwarmSolution SwarmSolution;

typedef struct SwarmTrajectory SwarmTrajectory;

// Certificate outcomes plus the headline terminal quantities.
typedef struct SwarmCertificates {
  uint8_t consensus_bound;
  uint8_t boundedness_monotone;
  uint8_t hybrid_monotone;
  uint8_t terminal_kkt;
  double terminal_consensus_error;
  double terminal_stationarity;
  double ultimate_bound;
} SwarmCertificates;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread. Valid until the next
// library call on the same thread; never null.
const char *swarm_last_error_message(void);

// Parses and validates a scenario from JSON text.
//
// # Safety
// `json` must point to a NUL-terminated string and `out` to a writable
// pointer slot.
enum SwarmStatus swarm_scenario_from_json(const char *json, struct SwarmScenario **out);

// Loads and validates a scenario file.
//
// # Safety
// `path` must point to a NUL-terminated string and `out` to a writable
// pointer slot.
enum SwarmStatus swarm_scenario_load(const char *path, struct SwarmScenario **out);

// # Safety
// `scenario` must come from a `swarm_scenario_*` constructor; passing null
// is a no-op.
void swarm_scenario_free(struct SwarmScenario *scenario);

// Number of agents, or 0 for a null handle.
//
// # Safety
// `scenario` must be a live handle or null.
uintptr_t swarm_scenario_agent_count(const struct SwarmScenario *scenario);

// State dimension per agent, or 0 for a null handle.
//
// # Safety
// `scenario` must be a live handle or null.
uintptr_t swarm_scenario_dim(const struct SwarmScenario *scenario);

// Constraints carried by one agent, or 0 when out of range.
//
// # Safety
// `scenario` must be a live handle or null.
uintptr_t swarm_scenario_constraint_count(const struct SwarmScenario *scenario, uintptr_t agent);

// Integrates the scenario's hybrid flow over its full horizon.
//
// # Safety
// `scenario` must be a live handle; `out` must point to a writable slot.
enum SwarmStatus swarm_simulate(const struct SwarmScenario *scenario, struct SwarmTrajectory **out);

// # Safety
// `trajectory` must come from `swarm_simulate`; null is a no-op.
void swarm_trajectory_free(struct SwarmTrajectory *trajectory);

// Number of recorded samples, or 0 for a null handle.
//
// # Safety
// `trajectory` must be a live handle or null.
uintptr_t swarm_trajectory_len(const struct SwarmTrajectory *trajectory);

// Time of one sample.
//
// # Safety
// `trajectory` must be a live handle; `out` must be writable.
enum SwarmStatus swarm_trajectory_time(const struct SwarmTrajectory *trajectory,
                                       uintptr_t sample,
                                       double *out);

// Copies one agent's position at one sample into `buffer` (length must
// equal the scenario dimension).
//
// # Safety
// `trajectory` must be a live handle; `buffer` must point to `len` doubles.
enum SwarmStatus swarm_trajectory_position(const struct SwarmTrajectory *trajectory,
                                           uintptr_t sample,
                                           uintptr_t agent,
                                           double *buffer,
                                           uintptr_t len);

// One multiplier at one sample.
//
// # Safety
// `trajectory` must be a live handle; `out` must be writable.
enum SwarmStatus swarm_trajectory_multiplier(const struct SwarmTrajectory *trajectory,
                                             uintptr_t sample,
                                             uintptr_t agent,
                                             uintptr_t constraint,
                                             double *out);

// Solves the centralized problem.
//
// # Safety
// `scenario` must be a live handle; `out` must point to a writable slot.
enum SwarmStatus swarm_solve(const struct SwarmScenario *scenario, struct SwarmSolution **out);

// # Safety
// `solution` must come from `swarm_solve`; null is a no-op.
void swarm_solution_free(struct SwarmSolution *solution);

// Dimension of the optimum, or 0 for a null handle.
//
// # Safety
// `solution` must be a live handle or null.
uintptr_t swarm_solution_dim(const struct SwarmSolution *solution);

// Copies the common optimum into `buffer` (length must equal the dimension).
//
// # Safety
// `solution` must be a live handle; `buffer` must point to `len` doubles.
enum SwarmStatus swarm_solution_optimum(const struct SwarmSolution *solution,
                                        double *buffer,
                                        uintptr_t len);

// Aggregate objective value at the optimum.
//
// # Safety
// `solution` must be a live handle; `out` must be writable.
enum SwarmStatus swarm_solution_objective(const struct SwarmSolution *solution, double *out);

// One oracle multiplier (zero off the active set).
//
// # Safety
// `solution` must be a live handle; `out` must be writable.
enum SwarmStatus swarm_solution_multiplier(const struct SwarmSolution *solution,
                                           uintptr_t agent,
                                           uintptr_t constraint,
                                           double *out);

// 1 when the oracle marked the pair binding, 0 otherwise.
//
// # Safety
// `solution` must be a live handle or null.
uint8_t swarm_solution_is_active(const struct SwarmSolution *solution,
                                 uintptr_t agent,
                                 uintptr_t constraint);

// Simulates, solves, and checks every certificate in one call.
//
// # Safety
// `scenario` must be a live handle; `out` must point to a writable
// `SwarmCertificates`.
enum SwarmStatus swarm_check(const struct SwarmScenario *scenario, struct SwarmCertificates *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEED_SWARM_H */
