#include "stotop/stotop.h"

#include <cstring>
#include <exception>
#include <memory>
#include <string>

#include "stotop/config.hpp"
#include "stotop/error.hpp"
#include "stotop/io.hpp"
#include "stotop/runner.hpp"

struct stotop_config {
  stotop::RunConfig cfg;
};

struct stotop_run {
  std::unique_ptr<stotop::Runner> runner;
  stotop_log_fn log = nullptr;
  void* user = nullptr;
};

namespace {

thread_local std::string g_last_error;

stotop_status status_of(stotop::ErrorCode c) { return static_cast<stotop_status>(static_cast<int>(c)); }

template <class F>
stotop_status guarded(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const stotop::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return STOTOP_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return STOTOP_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return STOTOP_INTERNAL;
  }
}

stotop_status null_argument(const char* what) {
  g_last_error = std::string(what) + " is NULL";
  return STOTOP_INVALID_INPUT;
}

stotop_status copy_out(const std::string& s, char* buf, std::size_t capacity, std::size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buf || capacity < s.size() + 1) {
    if (buf && capacity > 0) buf[0] = '\0';
    g_last_error = "buffer of " + std::to_string(capacity) + " bytes is too small, need " +
                   std::to_string(s.size() + 1);
    return STOTOP_BUFFER_TOO_SMALL;
  }
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return STOTOP_OK;
}

// Config used for a design file: the caller's, or the defaults of the preset that produced it.
stotop::RunConfig config_for(const stotop_config* config, const stotop::DesignFile& d) {
  stotop::RunConfig c = config ? config->cfg : stotop::preset_config(d.preset);
  stotop::require(c.preset == d.preset, "design was produced by preset '" + d.preset + "' but the config is for '" +
                                            c.preset + "'");
  return c;
}

}  // namespace

extern "C" {

const char* stotop_version(void) { return STOTOP_VERSION_STRING; }

const char* stotop_last_error(void) { return g_last_error.c_str(); }

const char* stotop_status_name(stotop_status s) {
  switch (s) {
    case STOTOP_OK: return "ok";
    case STOTOP_INVALID_INPUT: return "invalid-input";
    case STOTOP_INVALID_STATE: return "invalid-state";
    case STOTOP_SOLVER_FAILURE: return "solver-failure";
    case STOTOP_CONFIGURATION: return "configuration";
    case STOTOP_DOMAIN_VOID: return "domain-void";
    case STOTOP_STEP_REJECTED: return "step-rejected";
    case STOTOP_IO: return "io";
    case STOTOP_BUFFER_TOO_SMALL: return "buffer-too-small";
    case STOTOP_INTERNAL: return "internal";
  }
  return "unknown";
}

size_t stotop_preset_count(void) { return stotop::preset_names().size(); }

const char* stotop_preset_name(size_t index) {
  const auto& names = stotop::preset_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

stotop_status stotop_config_create(const char* preset, stotop_config** out) {
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    *out = new stotop_config{stotop::preset_config(preset ? preset : "example1-beam")};
    return STOTOP_OK;
  });
}

stotop_status stotop_config_load(const char* path, stotop_config** out) {
  if (!out) return null_argument("out");
  if (!path) return null_argument("path");
  *out = nullptr;
  return guarded([&] {
    *out = new stotop_config{stotop::load_config(path)};
    return STOTOP_OK;
  });
}

stotop_status stotop_config_parse(const char* text, stotop_config** out) {
  if (!out) return null_argument("out");
  if (!text) return null_argument("text");
  *out = nullptr;
  return guarded([&] {
    *out = new stotop_config{stotop::parse_config(text)};
    return STOTOP_OK;
  });
}

stotop_status stotop_config_from_design(const char* design_path, stotop_config** out) {
  if (!out) return null_argument("out");
  if (!design_path) return null_argument("design_path");
  *out = nullptr;
  return guarded([&] {
    *out = new stotop_config{stotop::preset_config(stotop::DesignFile::load(design_path).preset)};
    return STOTOP_OK;
  });
}

stotop_status stotop_config_set(stotop_config* config, const char* key, const char* value) {
  if (!config) return null_argument("config");
  if (!key || !value) return null_argument("key or value");
  return guarded([&] {
    if (std::string_view(key) == "preset") {
      // Switching preset resets to that preset's defaults, as in a config file.
      config->cfg = stotop::preset_config(value);
    } else {
      config->cfg.set(key, value);
    }
    return STOTOP_OK;
  });
}

stotop_status stotop_config_get(const stotop_config* config, const char* key, char* buf, size_t capacity,
                                size_t* needed) {
  if (!config) return null_argument("config");
  if (!key) return null_argument("key");
  return guarded([&] { return copy_out(config->cfg.get(key), buf, capacity, needed); });
}

stotop_status stotop_config_text(const stotop_config* config, char* buf, size_t capacity, size_t* needed) {
  if (!config) return null_argument("config");
  return guarded([&] { return copy_out(config->cfg.to_text(), buf, capacity, needed); });
}

stotop_status stotop_config_validate(const stotop_config* config) {
  if (!config) return null_argument("config");
  return guarded([&] {
    config->cfg.validate();
    return STOTOP_OK;
  });
}

void stotop_config_destroy(stotop_config* config) { delete config; }

stotop_status stotop_run_create(const stotop_config* config, stotop_run** out) {
  if (!config) return null_argument("config");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    auto r = std::make_unique<stotop_run>();
    r->runner = std::make_unique<stotop::Runner>(config->cfg);
    *out = r.release();
    return STOTOP_OK;
  });
}

stotop_status stotop_run_resume(const stotop_config* config, const char* checkpoint_path, stotop_run** out) {
  if (!config) return null_argument("config");
  if (!checkpoint_path) return null_argument("checkpoint_path");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    auto r = std::make_unique<stotop_run>();
    r->runner = std::make_unique<stotop::Runner>(config->cfg, stotop::Checkpoint::load(checkpoint_path));
    *out = r.release();
    return STOTOP_OK;
  });
}

stotop_status stotop_run_set_logger(stotop_run* run, stotop_log_fn fn, void* user) {
  if (!run) return null_argument("run");
  run->log = fn;
  run->user = user;
  if (fn)
    run->runner->set_logger([run](const std::string& line) { run->log(line.c_str(), run->user); });
  else
    run->runner->set_logger(nullptr);
  return STOTOP_OK;
}

stotop_status stotop_run_step(stotop_run* run, stotop_record* out) {
  if (!run) return null_argument("run");
  return guarded([&] {
    const auto& r = run->runner->step();
    if (out) {
      out->iteration = r.iteration;
      out->R_hat = r.R_hat;
      out->C_hat = r.C_hat.empty() ? 0.0 : r.C_hat[0];
      out->var_f = r.var_f;
      out->grad_norm = r.grad_norm;
      out->vol_frac = r.vol_frac;
      out->inner_iters = r.inner_iters;
      out->wall_ms = r.wall_ms;
    }
    return STOTOP_OK;
  });
}

stotop_status stotop_run_execute(stotop_run* run) {
  if (!run) return null_argument("run");
  return guarded([&] {
    run->runner->run();
    return STOTOP_OK;
  });
}

int64_t stotop_run_iteration(const stotop_run* run) { return run ? run->runner->iteration() : -1; }

size_t stotop_run_num_variables(const stotop_run* run) { return run ? run->runner->theta().size() : 0; }

stotop_status stotop_run_design(const stotop_run* run, double* theta, size_t capacity, size_t* needed) {
  if (!run) return null_argument("run");
  const auto& t = run->runner->theta();
  if (needed) *needed = t.size();
  if (!theta || capacity < t.size()) {
    g_last_error = "design buffer holds " + std::to_string(capacity) + " values, need " + std::to_string(t.size());
    return STOTOP_BUFFER_TOO_SMALL;
  }
  std::memcpy(theta, t.data(), t.size() * sizeof(double));
  return STOTOP_OK;
}

stotop_status stotop_run_save_checkpoint(const stotop_run* run, const char* path) {
  if (!run) return null_argument("run");
  if (!path) return null_argument("path");
  return guarded([&] {
    run->runner->checkpoint().save(path);
    return STOTOP_OK;
  });
}

stotop_status stotop_run_save_design(const stotop_run* run, const char* path) {
  if (!run) return null_argument("run");
  if (!path) return null_argument("path");
  return guarded([&] {
    stotop::write_text_file(path, run->runner->design().serialize());
    return STOTOP_OK;
  });
}

void stotop_run_destroy(stotop_run* run) { delete run; }

stotop_status stotop_validate(const stotop_config* config, const char* design_path, size_t samples,
                              const char* json_path, stotop_validation* out) {
  if (!design_path) return null_argument("design_path");
  return guarded([&] {
    const auto d = stotop::DesignFile::load(design_path);
    const auto c = config_for(config, d);
    const auto problem = stotop::make_problem(c);
    const std::size_t n = samples > 0 ? samples : c.validation_samples;
    const auto rep = stotop::validate_design(*problem, c, d.theta, d.iteration, n, c.resolved_threads());
    if (json_path) stotop::write_text_file(json_path, rep.to_json() + "\n");
    if (out) {
      out->samples = rep.samples;
      out->mean_f = rep.mean_f;
      out->var_f = rep.var_f;
      out->std_error = rep.std_error;
      out->R_hat = rep.R_hat;
      out->mean_g = rep.mean_g.empty() ? 0.0 : rep.mean_g[0];
      out->C_hat = rep.C_hat.empty() ? 0.0 : rep.C_hat[0];
      out->satisfaction_rate = rep.satisfaction_rate;
      out->volume_fraction = rep.volume_fraction;
    }
    return STOTOP_OK;
  });
}

stotop_status stotop_export(const stotop_config* config, const char* design_path, const char* dir) {
  if (!design_path) return null_argument("design_path");
  if (!dir) return null_argument("dir");
  return guarded([&] {
    const auto d = stotop::DesignFile::load(design_path);
    const auto c = config_for(config, d);
    const auto problem = stotop::make_problem(c);
    stotop::require(d.theta.size() == problem->num_variables(),
                    "design has " + std::to_string(d.theta.size()) + " variables but the problem mesh expects " +
                        std::to_string(problem->num_variables()));
    stotop::export_fields(*problem, d.theta, d.iteration, dir);
    return STOTOP_OK;
  });
}

}  // extern "C"
