#ifndef KGAP_H
#define KGAP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define KGAP_API __declspec(dllexport)
#else
#define KGAP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kgap_status {
  KGAP_OK = 0,
  KGAP_INVALID_ARGUMENT,
  KGAP_IO,
  KGAP_MALFORMED_DOCUMENT,
  KGAP_DUPLICATE_ID,
  KGAP_ORPHAN_PARENT,
  KGAP_EMPTY_REGISTRY,
  KGAP_NOT_FOUND,
  KGAP_TRANSPORT,
  KGAP_PROVIDER_REJECTION,
  KGAP_SCHEMA_VIOLATION,
  KGAP_SCRIPT_EXHAUSTED,
  KGAP_EMPTY_CORPUS,
  KGAP_RESPOND_FAILED,
  KGAP_ANALYSIS_FAILED,
  KGAP_STALE_REGISTRY,
  KGAP_EMPTY_RESULTS,
  KGAP_NO_DETECTIONS,
  KGAP_MISALIGNED_IDS,
  KGAP_CORRUPT_EVENT,
  KGAP_STARTUP,
  KGAP_INTERNAL
} kgap_status;

/* Stable error name, e.g. "DuplicateId". */
KGAP_API const char* kgap_status_name(kgap_status status);

/* Message of the last failed call on this thread; "" when none. */
KGAP_API const char* kgap_last_error(void);

/* Frees strings returned through char** out-parameters. */
KGAP_API void kgap_string_free(char* s);

/* Knowledge-component registry. */
typedef struct kgap_registry kgap_registry;

KGAP_API kgap_status kgap_registry_load(const char* path, kgap_registry** out);
KGAP_API kgap_status kgap_registry_parse(const char* json, kgap_registry** out);
KGAP_API void kgap_registry_free(kgap_registry* registry);
KGAP_API size_t kgap_registry_size(const kgap_registry* registry);
/* {"course_id","version","components","max_depth"} */
KGAP_API kgap_status kgap_registry_summary(const kgap_registry* registry, char** out_json);
/* {"id","title","detail","parent_id"}; KGAP_NOT_FOUND for undeclared ids. */
KGAP_API kgap_status kgap_registry_lookup(const kgap_registry* registry, const char* id, char** out_json);
KGAP_API kgap_status kgap_registry_render(const kgap_registry* registry, char** out_text);

/* Chunks and indexes every file in `dir`; returns
   {"documents","chunks","terms","chunk_chars","overlap_chars"}.
   Zero sizes select the defaults. */
KGAP_API kgap_status kgap_ingest_corpus(const char* dir, size_t chunk_chars, size_t overlap_chars,
                                        char** out_json);

/* Model backend. */
typedef struct kgap_provider kgap_provider;

/* HTTP provider from a JSON config {"endpoint","model","api_key_env",
   "timeout_seconds","retry_limit"}; NULL or absent fields read
   QQ_PROVIDER_URL, QQ_MODEL and QQ_API_KEY_VAR. */
KGAP_API kgap_status kgap_provider_from_config(const char* config_json, kgap_provider** out);
/* Scripted provider replaying a JSON array of reply strings in order. */
KGAP_API kgap_status kgap_provider_scripted(const char* replies_json, kgap_provider** out);
/* Scripted provider from the array stored under `section` of a JSON file. */
KGAP_API kgap_status kgap_provider_scripted_file(const char* path, const char* section, kgap_provider** out);
KGAP_API uint64_t kgap_provider_calls(const kgap_provider* provider);
KGAP_API void kgap_provider_free(kgap_provider* provider);

/* Analyzes every transcript in a JSON file of {dialogue_id, messages}.
   With a labels file ({dialogue_id: [kc_id]}) the result carries completeness.
   options_json (nullable): {"min_evidence_chars"}.
   Returns {"reports":[SessionReport], "completeness"?, "per_dialogue"?}. */
KGAP_API kgap_status kgap_analyze_transcripts(const kgap_registry* registry, kgap_provider* analyst,
                                              const char* transcripts_path, const char* labels_path,
                                              const char* options_json, char** out_json);

/* Runs the simulation benchmark over a profiles file.
   options_json (nullable): {"mode":"scripted"|"model", "max_turns", "probing",
   "corpus_dir", "log_path"}. `student` is required in model mode. */
KGAP_API kgap_status kgap_run_benchmark(const kgap_registry* registry, const char* profiles_path,
                                        kgap_provider* tutor, kgap_provider* analyst,
                                        kgap_provider* student, const char* options_json,
                                        char** out_json);

/* Replays an event log and returns the top-n FrequencyReport.
   options_json (nullable): {"n", "since_ms", "until_ms", "format":"json"|"csv"}.
   `registry` (nullable) pins course id and registry version. */
KGAP_API kgap_status kgap_report_from_log(const char* log_path, const kgap_registry* registry,
                                          const char* options_json, char** out);

/* Classroom HTTP service.
   config_json: {"kc_list","corpus","log_path","host","port","workers",
   "instructor_token","static_dir","probing","lecture_minutes"}. */
typedef struct kgap_service kgap_service;

KGAP_API kgap_status kgap_service_create(const char* config_json, kgap_provider* tutor,
                                         kgap_provider* analyst, kgap_service** out);
KGAP_API kgap_status kgap_service_start(kgap_service* service, int* out_port);
KGAP_API void kgap_service_wait(kgap_service* service);
KGAP_API void kgap_service_stop(kgap_service* service);
KGAP_API void kgap_service_free(kgap_service* service);

#ifdef __cplusplus
}
#endif

#endif
