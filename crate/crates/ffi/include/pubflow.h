#ifndef PUBFLOW_H
#define PUBFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every call.
typedef enum PubflowStatus {
  PUBFLOW_STATUS_OK = 0,
  // A required pointer was null.
  PUBFLOW_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not UTF-8.
  PUBFLOW_STATUS_INVALID_UTF8 = 2,
  // A JSON argument did not parse or had the wrong shape.
  PUBFLOW_STATUS_INVALID_JSON = 3,
  // Definition XML or archive could not be read.
  PUBFLOW_STATUS_DEFINITION_ERROR = 4,
  // Deployment refused; the detail JSON lists the violations.
  PUBFLOW_STATUS_UNSOUND = 5,
  PUBFLOW_STATUS_ENGINE_ERROR = 6,
  PUBFLOW_STATUS_REPOSITORY_ERROR = 7,
  // A Rust panic was caught at the boundary.
  PUBFLOW_STATUS_PANIC = 8,
} PubflowStatus;

// A parsed process definition.
typedef struct PubflowDefinition PubflowDefinition;

// An open workflow engine rooted at one directory.
typedef struct PubflowEngine PubflowEngine;

// An open object repository rooted at one directory.
typedef struct PubflowRepository PubflowRepository;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Code of the last failure on this thread, or null after a success. Valid
// until the next call on the same thread.
const char *pubflow_last_error_code(void);

// Human-readable message of the last failure, or null.
const char *pubflow_last_error_message(void);

// JSON array of `{code, subject, message}` violations for a refused
// deployment; `[]` for other failures; null after a success.
const char *pubflow_last_error_detail(void);

// Library version as a static string.
const char *pubflow_version(void);

// # Safety
// `s` must come from this library or be null.
void pubflow_string_free(char *s);

// # Safety
// `data` and `len` must be a buffer returned by this library, or null.
void pubflow_bytes_free(uint8_t *data, size_t len);

// Parses definition XML.
//
// # Safety
// `xml` must point to `len` readable bytes; `out` must be writable.
enum PubflowStatus pubflow_definition_parse(const uint8_t *xml,
                                            size_t len,
                                            struct PubflowDefinition **out);

// Soundness report as JSON: `{"sound": bool, "violations": [...]}`.
//
// # Safety
// `def` must be a live handle; `out_json` must be writable.
enum PubflowStatus pubflow_definition_check(const struct PubflowDefinition *def, char **out_json);

// The definition's name, as an owned string.
//
// # Safety
// `def` must be a live handle; `out` must be writable.
enum PubflowStatus pubflow_definition_name(const struct PubflowDefinition *def, char **out);

// # Safety
// `def` must come from [`pubflow_definition_parse`] or be null.
void pubflow_definition_free(struct PubflowDefinition *def);

// Opens (or creates) an engine journal in `dir`. `options_json` may be
// null or `{"directory": {"qa": ["quinn"]}, "roles": [...],
// "snapshotEvery": 1000, "fsync": true}`.
//
// # Safety
// String arguments must be NUL-terminated; `out` must be writable.
enum PubflowStatus pubflow_engine_open(const char *dir,
                                       const char *options_json,
                                       struct PubflowEngine **out);

// Deploys a process archive (zip). Writes the deployment record as JSON.
//
// # Safety
// `archive` must point to `len` bytes; `out_json` must be writable.
enum PubflowStatus pubflow_engine_deploy_archive(const struct PubflowEngine *engine,
                                                 const uint8_t *archive,
                                                 size_t len,
                                                 char **out_json);

// Deploys an already parsed definition.
//
// # Safety
// Handles must be live; `out_json` must be writable.
enum PubflowStatus pubflow_engine_deploy(const struct PubflowEngine *engine,
                                         const struct PubflowDefinition *def,
                                         char **out_json);

// Latest version of every deployed definition, as a JSON array.
//
// # Safety
// `engine` must be live; `out_json` must be writable.
enum PubflowStatus pubflow_engine_latest_definitions(const struct PubflowEngine *engine,
                                                     char **out_json);

// Starts an instance. `variables_json` is null or an object of typed
// values (`{"pid": {"type": "string", "value": "escipub:1"}}`). Writes
// `{"instance": ..., "task": ...}`.
//
// # Safety
// String arguments must be NUL-terminated; `out_json` must be writable.
enum PubflowStatus pubflow_engine_start(const struct PubflowEngine *engine,
                                        const char *definition_id,
                                        const char *initiator,
                                        const char *variables_json,
                                        char **out_json);

// Open tasks of one actor, newest first, as a JSON array.
//
// # Safety
// `actor` must be NUL-terminated; `out_json` must be writable.
enum PubflowStatus pubflow_engine_tasks(const struct PubflowEngine *engine,
                                        const char *actor,
                                        char **out_json);

// Completes a task as `actor`. A null `transition` takes the default one.
// Writes the updated instance as JSON.
//
// # Safety
// String arguments must be NUL-terminated or null where allowed.
enum PubflowStatus pubflow_engine_complete(const struct PubflowEngine *engine,
                                           const char *task_id,
                                           const char *transition,
                                           const char *variables_json,
                                           const char *actor,
                                           char **out_json);

// Administers an instance: `action` is `advance` or `stop`.
//
// # Safety
// String arguments must be NUL-terminated; `out_json` must be writable.
enum PubflowStatus pubflow_engine_admin(const struct PubflowEngine *engine,
                                        const char *instance_id,
                                        const char *action,
                                        const char *admin,
                                        char **out_json);

// # Safety
// `engine` must come from [`pubflow_engine_open`] or be null.
void pubflow_engine_free(struct PubflowEngine *engine);

// Opens (or creates) a repository in `dir` minting PIDs in `namespace`.
// Only `file://` locations resolve for by-reference content.
//
// # Safety
// String arguments must be NUL-terminated; `out` must be writable.
enum PubflowStatus pubflow_repository_open(const char *dir,
                                           const char *namespace_,
                                           bool fsync,
                                           struct PubflowRepository **out);

// Ingests an object document and writes its new PID.
//
// # Safety
// `xml` must point to `len` bytes; strings must be NUL-terminated.
enum PubflowStatus pubflow_repository_ingest(const struct PubflowRepository *repo,
                                             const uint8_t *xml,
                                             size_t len,
                                             const char *format,
                                             const char *log_message,
                                             char **out_pid);

// Adds a datastream. Content is taken from `location` when it is not
// null, otherwise from the `len` bytes at `content`. `props_json` is null
// or `{"label", "mimeType", "formatURI", "versionable", "logMessage", ...}`.
//
// # Safety
// Pointers must be valid for their stated lengths.
enum PubflowStatus pubflow_repository_add_datastream(const struct PubflowRepository *repo,
                                                     const char *pid,
                                                     const char *ds_id,
                                                     const char *props_json,
                                                     const uint8_t *content,
                                                     size_t len,
                                                     const char *location,
                                                     uint32_t *out_version);

// Writes a new version of an existing datastream; arguments as for
// [`pubflow_repository_add_datastream`].
//
// # Safety
// Pointers must be valid for their stated lengths.
enum PubflowStatus pubflow_repository_modify_datastream(const struct PubflowRepository *repo,
                                                        const char *pid,
                                                        const char *ds_id,
                                                        const char *props_json,
                                                        const uint8_t *content,
                                                        size_t len,
                                                        const char *location,
                                                        uint32_t *out_version);

// Content of one datastream version; `version` 0 means the latest. Free
// the buffer with [`pubflow_bytes_free`].
//
// # Safety
// Strings must be NUL-terminated; out pointers must be writable.
enum PubflowStatus pubflow_repository_get_datastream(const struct PubflowRepository *repo,
                                                     const char *pid,
                                                     const char *ds_id,
                                                     uint32_t version,
                                                     uint8_t **out_data,
                                                     size_t *out_len);

// Whole object record (properties, datastream history, DC) as JSON.
//
// # Safety
// `pid` must be NUL-terminated; `out_json` must be writable.
enum PubflowStatus pubflow_repository_get_object(const struct PubflowRepository *repo,
                                                 const char *pid,
                                                 char **out_json);

// Field search. `query_json` is `{"conditions": [{"field", "operator",
// "value"}]}`; writes `{"rows": [...], "complete": bool}`.
//
// # Safety
// `query_json` must be NUL-terminated; `out_json` must be writable.
enum PubflowStatus pubflow_repository_find_objects(const struct PubflowRepository *repo,
                                                   const char *query_json,
                                                   size_t max_results,
                                                   char **out_json);

// # Safety
// `repo` must come from [`pubflow_repository_open`] or be null.
void pubflow_repository_free(struct PubflowRepository *repo);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PUBFLOW_H */
