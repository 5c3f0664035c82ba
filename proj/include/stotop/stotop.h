/* C interface to the stotop library: configs and runs behind opaque handles, status codes for errors. */
#ifndef STOTOP_H
#define STOTOP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define STOTOP_API __declspec(dllexport)
#else
#define STOTOP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum stotop_status {
  STOTOP_OK = 0,
  STOTOP_INVALID_INPUT = 1,
  STOTOP_INVALID_STATE = 2,
  STOTOP_SOLVER_FAILURE = 3,
  STOTOP_CONFIGURATION = 4,
  STOTOP_DOMAIN_VOID = 5,
  STOTOP_STEP_REJECTED = 6,
  STOTOP_IO = 7,
  /* Buffer too small; the required size is reported through `needed`. */
  STOTOP_BUFFER_TOO_SMALL = 8,
  STOTOP_INTERNAL = 99
} stotop_status;

typedef struct stotop_config stotop_config;
typedef struct stotop_run stotop_run;

typedef void (*stotop_log_fn)(const char* line, void* user);

/* One convergence row; constraint 1 only (every preset has a single constraint). */
typedef struct stotop_record {
  int64_t iteration;
  double R_hat;
  double C_hat;
  double var_f;
  double grad_norm;
  double vol_frac;
  int inner_iters;
  double wall_ms;
} stotop_record;

typedef struct stotop_validation {
  size_t samples;
  double mean_f;
  double var_f;
  double std_error;
  double R_hat;
  double mean_g;
  double C_hat;
  double satisfaction_rate;
  double volume_fraction;
} stotop_validation;

STOTOP_API const char* stotop_version(void);
/* Message of the last failed call on this thread ("" if none). */
STOTOP_API const char* stotop_last_error(void);
STOTOP_API const char* stotop_status_name(stotop_status status);

STOTOP_API size_t stotop_preset_count(void);
STOTOP_API const char* stotop_preset_name(size_t index);

STOTOP_API stotop_status stotop_config_create(const char* preset, stotop_config** out);
STOTOP_API stotop_status stotop_config_load(const char* path, stotop_config** out);
STOTOP_API stotop_status stotop_config_parse(const char* text, stotop_config** out);
/* Defaults of the preset recorded in a design or checkpoint file. */
STOTOP_API stotop_status stotop_config_from_design(const char* design_path, stotop_config** out);
STOTOP_API stotop_status stotop_config_set(stotop_config* config, const char* key, const char* value);
/* Copies the NUL-terminated value into buf; `needed` (optional) receives the size including the NUL. */
STOTOP_API stotop_status stotop_config_get(const stotop_config* config, const char* key, char* buf, size_t capacity,
                                           size_t* needed);
STOTOP_API stotop_status stotop_config_text(const stotop_config* config, char* buf, size_t capacity, size_t* needed);
STOTOP_API stotop_status stotop_config_validate(const stotop_config* config);
STOTOP_API void stotop_config_destroy(stotop_config* config);

STOTOP_API stotop_status stotop_run_create(const stotop_config* config, stotop_run** out);
STOTOP_API stotop_status stotop_run_resume(const stotop_config* config, const char* checkpoint_path, stotop_run** out);
STOTOP_API stotop_status stotop_run_set_logger(stotop_run* run, stotop_log_fn fn, void* user);
STOTOP_API stotop_status stotop_run_step(stotop_run* run, stotop_record* out);
/* Runs to the iteration budget and writes every artifact to the output directory. */
STOTOP_API stotop_status stotop_run_execute(stotop_run* run);
STOTOP_API int64_t stotop_run_iteration(const stotop_run* run);
STOTOP_API size_t stotop_run_num_variables(const stotop_run* run);
STOTOP_API stotop_status stotop_run_design(const stotop_run* run, double* theta, size_t capacity, size_t* needed);
STOTOP_API stotop_status stotop_run_save_checkpoint(const stotop_run* run, const char* path);
STOTOP_API stotop_status stotop_run_save_design(const stotop_run* run, const char* path);
STOTOP_API void stotop_run_destroy(stotop_run* run);

/* Evaluates a design or checkpoint file on fresh validation samples. A NULL config uses the defaults of the
   design's preset. json_path (optional) receives the full report. */
STOTOP_API stotop_status stotop_validate(const stotop_config* config, const char* design_path, size_t samples,
                                         const char* json_path, stotop_validation* out);
/* Writes density, histogram and (bar designs) bar-table files for a design or checkpoint file. */
STOTOP_API stotop_status stotop_export(const stotop_config* config, const char* design_path, const char* dir);

#ifdef __cplusplus
}
#endif

#endif
