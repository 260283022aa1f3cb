#ifndef TUTORSIM_H
#define TUTORSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_ARGUMENT = 1,
  TS_STATUS_INVALID_UTF8 = 2,
  TS_STATUS_PARSE = 3,
  TS_STATUS_ILLEGAL_APPLY = 4,
  TS_STATUS_NO_DEMO = 5,
  TS_STATUS_GENERATE = 6,
  TS_STATUS_PANIC = 7,
} TsStatus;

/**
 * A position within a behavior graph.
 */
typedef struct TsCursor TsCursor;

/**
 * A loaded behavior graph.
 */
typedef struct TsGraph TsGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a
 * successful call. Owned by the library and valid until the next call.
 */
const char *ts_last_error(void);

/**
 * # Safety
 * `s` must come from this library, or be null.
 */
void ts_string_free(char *s);

/**
 * Parses a behavior-graph JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum TsStatus ts_graph_load(const char *json, struct TsGraph **out_graph);

/**
 * Generates a graph from a problem spec, e.g.
 * `{"domain_id":"fraction_arithmetic","seed":1,"params":{"kind":"multiply"}}`.
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string; `out` must be writable.
 */
enum TsStatus ts_graph_generate(const char *spec_json, struct TsGraph **out_graph);

/**
 * Serializes a graph to its canonical JSON document.
 *
 * # Safety
 * `graph` must be a live handle; `out` must be writable.
 */
enum TsStatus ts_graph_to_json(const struct TsGraph *graph, char **out_json);

/**
 * # Safety
 * `graph` must come from this library, or be null. Cursors created from
 * it stay valid.
 */
void ts_graph_free(struct TsGraph *graph);

/**
 * Creates a cursor at the graph's start state.
 *
 * # Safety
 * `graph` must be a live handle; `out` must be writable.
 */
enum TsStatus ts_cursor_new(const struct TsGraph *graph, struct TsCursor **out_cursor);

/**
 * # Safety
 * `cursor` must come from this library, or be null.
 */
void ts_cursor_free(struct TsCursor *cursor);

/**
 * Canonical JSON of the current problem state.
 *
 * # Safety
 * `cursor` must be a live handle; `out` must be writable.
 */
enum TsStatus ts_cursor_state_json(const struct TsCursor *cursor, char **out_json);

/**
 * Grades an action without changing the cursor. `out_reward` receives 1
 * or -1.
 *
 * # Safety
 * `cursor` must be a live handle; `sai_json` a NUL-terminated string.
 */
enum TsStatus ts_cursor_check(const struct TsCursor *cursor,
                              const char *sai_json,
                              int32_t *out_reward);

/**
 * Grades an action and, when correct, advances the cursor. An incorrect
 * action leaves the cursor unchanged and still returns `Ok` with reward -1.
 *
 * # Safety
 * `cursor` must be a live handle; `sai_json` a NUL-terminated string.
 */
enum TsStatus ts_cursor_apply(struct TsCursor *cursor, const char *sai_json, int32_t *out_reward);

/**
 * The canonical demonstration for the current state as action JSON.
 *
 * # Safety
 * `cursor` must be a live handle; `out` must be writable.
 */
enum TsStatus ts_cursor_get_demo(const struct TsCursor *cursor, char **out_json);

/**
 * # Safety
 * `cursor` must be a live handle; `out` must be writable.
 */
enum TsStatus ts_cursor_is_done(const struct TsCursor *cursor, bool *out_done);

/**
 * Tests `input` against a matcher spec given as JSON. `state_json` may be
 * null; otherwise placeholders resolve against that state.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum TsStatus ts_matches(const char *matcher_json,
                         const char *input,
                         const char *state_json,
                         bool *out_match);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TUTORSIM_H */
