#ifndef POWERDESK_H
#define POWERDESK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every call.
typedef enum PdStatus {
  PD_STATUS_OK = 0,
  PD_STATUS_NULL_ARGUMENT = 1,
  PD_STATUS_INVALID_UTF8 = 2,
  PD_STATUS_INVALID_JSON = 3,
  // The tool name is not registered.
  PD_STATUS_UNKNOWN_TOOL = 4,
  // Arguments failed the tool's schema.
  PD_STATUS_INVALID_ARGUMENTS = 5,
  // The tool ran but its result did not pass validation; the result
  // document is still written.
  PD_STATUS_TOOL_FAILED = 6,
  PD_STATUS_IO = 7,
  PD_STATUS_PANIC = 8,
} PdStatus;

// Opaque session: the agent context, its transcript and an orchestrator.
typedef struct PdSession PdSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates an empty session. Free it with `pd_session_free`.
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum PdStatus pd_session_new(struct PdSession **out);

// Loads a session saved with `pd_session_save`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PdStatus pd_session_load(const char *path, struct PdSession **out);

// Writes the session to `path` as JSON.
//
// # Safety
// `session` must come from this library; `path` must be NUL-terminated.
enum PdStatus pd_session_save(struct PdSession *session, const char *path);

// Releases a session. Null is ignored.
//
// # Safety
// `session` must come from this library and not be used afterwards.
void pd_session_free(struct PdSession *session);

// Runs one tool with JSON arguments and writes the result document to
// `out_json`. Free the string with `pd_string_free`.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum PdStatus pd_invoke(struct PdSession *session,
                        const char *tool,
                        const char *args_json,
                        char **out_json);

// Handles one conversational turn and writes
// `{response, provenance, agent, workflow, results}` to `out_json`.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum PdStatus pd_chat(struct PdSession *session, const char *utterance, char **out_json);

// Writes the session summary (case, version, freshness) to `out_json`.
//
// # Safety
// Pointers must be valid.
enum PdStatus pd_session_summary(struct PdSession *session, char **out_json);

// Tool declarations as a JSON array.
//
// # Safety
// Pointers must be valid.
enum PdStatus pd_tool_catalog(struct PdSession *session, char **out_json);

// Message for the last failed call on this thread, or null. Valid until
// the next call on the same thread.
const char *pd_last_error(void);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void pd_string_free(char *s);

// Library version, static storage.
const char *pd_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POWERDESK_H */
