// Command-line front end; talks to the library only through the C interface.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "stotop/stotop.h"

namespace {

struct Failure {
  stotop_status status;
};

void check(stotop_status s) {
  if (s != STOTOP_OK) throw Failure{s};
}

struct ConfigHandle {
  stotop_config* p = nullptr;
  ~ConfigHandle() { stotop_config_destroy(p); }
};

struct RunHandle {
  stotop_run* p = nullptr;
  ~RunHandle() { stotop_run_destroy(p); }
};

struct Common {
  std::string config_path;
  std::string preset;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;

  // File or preset first (or the handle's existing config), then --set pairs in order, then the dedicated flags.
  void apply(ConfigHandle& c) const {
    if (!config_path.empty()) {
      stotop_config_destroy(c.p);
      check(stotop_config_load(config_path.c_str(), &c.p));
    }
    if (!preset.empty()) {
      if (c.p) check(stotop_config_set(c.p, "preset", preset.c_str()));
      else check(stotop_config_create(preset.c_str(), &c.p));
    }
    if (!c.p) check(stotop_config_create(nullptr, &c.p));
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::fprintf(stderr, "--set expects key=value, got '%s'\n", kv.c_str());
        throw Failure{STOTOP_CONFIGURATION};
      }
      check(stotop_config_set(c.p, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
    }
    if (seed) check(stotop_config_set(c.p, "uq.seed", std::to_string(*seed).c_str()));
    if (threads) check(stotop_config_set(c.p, "run.threads", std::to_string(*threads).c_str()));
  }
};

void add_common(CLI::App* app, Common& c, bool with_out_dir) {
  app->add_option("--config", c.config_path, "Config file (key = value lines)")->check(CLI::ExistingFile);
  app->add_option("--preset", c.preset, "Start from this preset's defaults");
  app->add_option("--set", c.sets, "Override one key, e.g. --set optimizer.eta=0.05 (repeatable)");
  app->add_option("--seed", c.seed, "Random seed (uq.seed)");
  app->add_option("--threads", c.threads, "Worker threads; overrides STOTOP_THREADS")->check(CLI::PositiveNumber);
  if (with_out_dir) app->add_option("--out", c.out, "Output directory");
}

void print_line(const char* line, void*) {
  std::fputs(line, stderr);
  std::fputc('\n', stderr);
}

int cmd_run(const Common& common, const std::string& resume, bool quiet) {
  ConfigHandle cfg;
  Common c = common;
  // A resumed run reuses the config stored beside its checkpoint unless one is given.
  if (!resume.empty() && c.config_path.empty() && c.preset.empty()) {
    const auto stored = std::filesystem::path(resume).parent_path() / "config.txt";
    if (std::filesystem::exists(stored)) c.config_path = stored.string();
  }
  c.apply(cfg);
  if (!c.out.empty()) check(stotop_config_set(cfg.p, "output.dir", c.out.c_str()));
  check(stotop_config_validate(cfg.p));

  RunHandle run;
  if (resume.empty()) check(stotop_run_create(cfg.p, &run.p));
  else check(stotop_run_resume(cfg.p, resume.c_str(), &run.p));
  if (!quiet) check(stotop_run_set_logger(run.p, print_line, nullptr));
  check(stotop_run_execute(run.p));

  char dir[4096];
  check(stotop_config_get(cfg.p, "output.dir", dir, sizeof dir, nullptr));
  std::printf("finished at iteration %lld; outputs in %s\n", static_cast<long long>(stotop_run_iteration(run.p)), dir);
  return 0;
}

// Base config: --config/--preset, else the config stored beside the design, else the design's preset defaults.
void config_for_design(const Common& common, const std::string& design, ConfigHandle& cfg) {
  Common c = common;
  if (c.config_path.empty() && c.preset.empty()) {
    const auto stored = std::filesystem::path(design).parent_path() / "config.txt";
    if (std::filesystem::exists(stored)) c.config_path = stored.string();
    else check(stotop_config_from_design(design.c_str(), &cfg.p));
  }
  c.apply(cfg);
}

int cmd_validate(const Common& c, const std::string& design, std::size_t samples) {
  ConfigHandle cfg;
  config_for_design(c, design, cfg);
  std::string json;
  if (!c.out.empty()) json = (std::filesystem::path(c.out) / "validation.json").string();
  stotop_validation v{};
  check(stotop_validate(cfg.p, design.c_str(), samples, json.empty() ? nullptr : json.c_str(), &v));
  std::printf("samples            %zu\n", v.samples);
  std::printf("mean f             %.10g\n", v.mean_f);
  std::printf("variance f         %.10g\n", v.var_f);
  std::printf("standard error     %.10g\n", v.std_error);
  std::printf("R_hat              %.10g\n", v.R_hat);
  std::printf("mean g             %.10g\n", v.mean_g);
  std::printf("C_hat              %.10g\n", v.C_hat);
  std::printf("satisfaction rate  %.10g\n", v.satisfaction_rate);
  std::printf("volume fraction    %.10g\n", v.volume_fraction);
  if (!json.empty()) std::printf("report written to %s\n", json.c_str());
  return 0;
}

int cmd_export(const Common& c, const std::string& design) {
  ConfigHandle cfg;
  config_for_design(c, design, cfg);
  const std::string out = c.out.empty() ? "." : c.out;
  check(stotop_export(cfg.p, design.c_str(), out.c_str()));
  std::printf("fields written to %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic-gradient topology optimization under uncertainty"};
  app.set_version_flag("--version", std::string(stotop_version()));
  app.require_subcommand(1);

  Common run_opts, val_opts, exp_opts;
  std::string resume, val_design, exp_design;
  std::size_t samples = 0;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Optimize a design");
  add_common(run, run_opts, true);
  run->add_option("--resume", resume, "Continue from a checkpoint file")->check(CLI::ExistingFile);
  run->add_flag("--quiet", quiet, "No progress lines");

  auto* val = app.add_subcommand("validate", "Evaluate a design on fresh random samples");
  add_common(val, val_opts, true);
  val->add_option("--design", val_design, "Design or checkpoint file")->required()->check(CLI::ExistingFile);
  val->add_option("--samples", samples, "Number of validation samples (default validation.samples)");

  auto* exp = app.add_subcommand("export", "Write density, histogram and bar files for a design");
  add_common(exp, exp_opts, true);
  exp->add_option("--design", exp_design, "Design or checkpoint file")->required()->check(CLI::ExistingFile);

  auto* presets = app.add_subcommand("presets", "List the problem presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_opts, resume, quiet);
    if (*val) return cmd_validate(val_opts, val_design, samples);
    if (*exp) return cmd_export(exp_opts, exp_design);
    if (*presets) {
      for (std::size_t i = 0; i < stotop_preset_count(); ++i) std::printf("%s\n", stotop_preset_name(i));
      return 0;
    }
  } catch (const Failure& f) {
    const char* msg = stotop_last_error();
    std::fprintf(stderr, "stotop: %s%s%s\n", stotop_status_name(f.status), *msg ? ": " : "", msg);
    return static_cast<int>(f.status);
  }
  return 0;
}
