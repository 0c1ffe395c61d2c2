#ifndef MANET_H
#define MANET_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum ManetStatus {
  MANET_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  MANET_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  MANET_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed input: bad address, bad JSON, bad parameters.
   */
  MANET_STATUS_INVALID = 3,
  MANET_STATUS_UNKNOWN_NODE = 4,
  /**
   * Duplicate node name, address, attack name or scenario playback.
   */
  MANET_STATUS_DUPLICATE = 5,
  /**
   * A remote command holds the testbed.
   */
  MANET_STATUS_BUSY = 6,
  MANET_STATUS_OUT_OF_RANGE = 7,
  MANET_STATUS_STALE_SCENARIO = 8,
  MANET_STATUS_REJECTED_TOPOLOGY = 9,
  /**
   * Infeasible parameters or generation exhausted.
   */
  MANET_STATUS_GENERATION = 10,
  MANET_STATUS_PARSE_ERROR = 11,
  /**
   * Unknown scenario, attack, flow, or nothing to report.
   */
  MANET_STATUS_NOT_FOUND = 12,
  MANET_STATUS_COMMAND_FAILED = 13,
  MANET_STATUS_NODE_IN_USE = 14,
  MANET_STATUS_BACKEND = 15,
  /**
   * A bug in the library; the handle should be dropped.
   */
  MANET_STATUS_INTERNAL = 99,
} ManetStatus;

/**
 * Opaque testbed handle.
 */
typedef struct ManetTestbed ManetTestbed;

/**
 * Summary of a finished ping.
 */
typedef struct ManetPingResult {
  uint32_t transmitted;
  uint32_t received;
  uint32_t loss_pct;
} ManetPingResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an empty testbed on the simulated backend.
 */
struct ManetTestbed *manet_testbed_new(void);

/**
 * Creates a testbed whose nodes come from registry-file text. Returns NULL
 * on error; see `manet_last_error`.
 *
 * # Safety
 * `registry_text` must be NULL or a NUL-terminated string.
 */
struct ManetTestbed *manet_testbed_from_registry(const char *registry_text);

/**
 * # Safety
 * `tb` must be NULL or a handle not yet freed.
 */
void manet_testbed_free(struct ManetTestbed *tb);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a string from this library, freed once.
 */
void manet_string_free(char *s);

/**
 * Message of the last failed call on this thread; empty after success.
 * Valid until the next call into the library on this thread.
 */
const char *manet_last_error(void);

/**
 * Current virtual time in microseconds; 0 for a NULL handle.
 *
 * # Safety
 * `tb` must be NULL or a live handle.
 */
uint64_t manet_now(const struct ManetTestbed *tb);

/**
 * Appends a node; its index is written to `out_index` if non-NULL.
 *
 * # Safety
 * `tb` must be a live handle; string arguments NUL-terminated.
 */
enum ManetStatus manet_add_node(struct ManetTestbed *tb,
                                const char *name,
                                const char *wired_ip,
                                const char *wired_mac,
                                const char *wireless_ip,
                                const char *wireless_mac,
                                uintptr_t *out_index);

/**
 * # Safety
 * `tb` must be a live handle; `name` NUL-terminated.
 */
enum ManetStatus manet_remove_node(struct ManetTestbed *tb, const char *name);

/**
 * Generates and stores a scenario of `count` topologies.
 *
 * # Safety
 * `tb` must be a live handle; `name` NUL-terminated.
 */
enum ManetStatus manet_build_scenario(struct ManetTestbed *tb,
                                      const char *name,
                                      uintptr_t nodes,
                                      uint8_t density,
                                      uintptr_t max_degree,
                                      uint64_t seed,
                                      uint32_t count);

/**
 * Stores a scenario given in scenario-file form.
 *
 * # Safety
 * `tb` must be a live handle; `scenario_text` NUL-terminated.
 */
enum ManetStatus manet_load_scenario(struct ManetTestbed *tb, const char *scenario_text);

/**
 * Scenario in file form, or NULL on error.
 *
 * # Safety
 * `tb` must be a live handle; `name` NUL-terminated.
 */
char *manet_save_scenario(struct ManetTestbed *tb, const char *name);

/**
 * # Safety
 * `tb` must be a live handle; `name` NUL-terminated.
 */
enum ManetStatus manet_apply_topology(struct ManetTestbed *tb,
                                      const char *name,
                                      uint32_t seq,
                                      bool force);

/**
 * Starts automatic playback of topologies `from..=to`.
 *
 * # Safety
 * `tb` must be a live handle; `name` NUL-terminated.
 */
enum ManetStatus manet_play(struct ManetTestbed *tb, const char *name, uint32_t from, uint32_t to);

/**
 * Advances the virtual clock by `delta_us`.
 *
 * # Safety
 * `tb` must be a live handle.
 */
enum ManetStatus manet_tick(struct ManetTestbed *tb, uint64_t delta_us);

/**
 * Pings `dst` from `src`; the summary goes to `out` if non-NULL.
 *
 * # Safety
 * `tb` must be a live handle; strings NUL-terminated.
 */
enum ManetStatus manet_ping(struct ManetTestbed *tb,
                            const char *src,
                            const char *dst,
                            uint32_t count,
                            uint64_t timeout_ms,
                            struct ManetPingResult *out);

/**
 * Launches an attack written as one attack-file line
 * (`name target PROTO Kind [loss normal cycles]`).
 *
 * # Safety
 * `tb` must be a live handle; `line` NUL-terminated.
 */
enum ManetStatus manet_launch_attack(struct ManetTestbed *tb, const char *line, uint64_t *out_id);

/**
 * # Safety
 * `tb` must be a live handle.
 */
enum ManetStatus manet_stop_attack(struct ManetTestbed *tb, uint64_t id);

/**
 * Runs a simulated-backend command. The exit status and output are written
 * even when the command fails (`MANET_STATUS_COMMAND_FAILED`); free the
 * output with `manet_string_free`.
 *
 * # Safety
 * `tb` must be a live handle; strings NUL-terminated.
 */
enum ManetStatus manet_exec(struct ManetTestbed *tb,
                            const char *node,
                            const char *command,
                            int32_t *out_exit_code,
                            char **out_output);

/**
 * The whole event trace, one event per line.
 *
 * # Safety
 * `tb` must be a live handle.
 */
char *manet_trace(const struct ManetTestbed *tb);

/**
 * DOT of the applied topology, or NULL if none has been applied.
 *
 * # Safety
 * `tb` must be a live handle.
 */
char *manet_current_dot(const struct ManetTestbed *tb);

/**
 * Runs any control-API command given as JSON (`{"verb": "...", ...}`) and
 * returns the reply: JSON, or plain text for DOT, scenario files and the
 * trace. On error returns NULL with the status in `out_status`.
 *
 * # Safety
 * `tb` must be a live handle; `command_json` NUL-terminated.
 */
char *manet_dispatch(struct ManetTestbed *tb,
                     const char *command_json,
                     enum ManetStatus *out_status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MANET_H */
