#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "stotop/fem.hpp"
#include "stotop/gcmma.hpp"
#include "stotop/optimizers.hpp"
#include "stotop/problem.hpp"

namespace stotop {

enum class GcmmaConstraintMode { Native, Penalty };

/// Every run setting. Text form is flat `key = value` lines with dotted section names.
struct RunConfig {
  std::string preset = "example1-beam";
  /// Element edge length; 0 picks the preset's desk-scale value.
  double mesh_h = 0.0;
  /// Absolute filter radius for density designs; 0 means 1.5 h.
  double filter_radius = 0.0;
  double simp_penalty = 3.0;
  double simp_emin = 1e-9;
  double projection_nu = 0.0001;
  /// Projection strength schedule, "none", or "auto" (preset and optimizer dependent).
  std::string beta_pr = "auto";
  double volume_fraction = 0.0;
  double initial_density = 0.0;
  double spring = -1.0;
  double objective_scale = 1.0;
  double poisson = 0.3;

  double primitive_mu = 10.0;
  double primitive_beta_ks = -20.0;
  double primitive_lambda_reg = 0.001;
  double primitive_perturbation = 0.005;
  double primitive_beta_h = 0.0;

  OptimizerKind optimizer = OptimizerKind::Adam;
  LearningParams learning;
  GcmmaParams gcmma;
  GcmmaConstraintMode gcmma_constraints = GcmmaConstraintMode::Native;

  std::size_t n = 4;
  double lambda = 0.0;
  double lambda_constraint = -1.0;
  double kappa = 1000.0;
  std::uint64_t seed = 1;
  bool resample = true;
  /// Replace every sample by the midpoint of the random vector.
  bool deterministic = false;

  std::int64_t max_iters = 500;
  std::int64_t log_every = 10;
  std::int64_t snapshot_every = 0;
  std::int64_t checkpoint_every = 50;

  LinearSolverKind solver = LinearSolverKind::Auto;
  double solver_tol = 1e-9;

  std::string output_dir = "stotop_out";
  /// Off writes 0 in the wall_ms column so logs of identical runs compare bitwise.
  bool wall_time = true;
  /// 0 = STOTOP_THREADS or the hardware concurrency.
  int threads = 0;
  std::size_t validation_samples = 1000;

  /// Applies one key; throws Configuration for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  /// Keys in canonical order.
  static const std::vector<std::string>& keys();
  /// Canonical text of every key.
  std::string to_text() const;
  /// FNV-1a over the canonical text of the settings that shape the trajectory.
  std::uint64_t digest() const;
  /// Throws Configuration when the combination is invalid.
  void validate() const;

  double resolved_h() const;
  std::string resolved_schedule() const;
  int resolved_threads() const;
};

const std::vector<std::string>& preset_names();
/// Defaults of a named preset; unknown names throw InvalidInput listing the presets.
RunConfig preset_config(std::string_view name);
/// Preset defaults, then the file's keys in order (a `preset` key is applied first).
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);

std::unique_ptr<Problem> make_problem(const RunConfig& config);

std::uint64_t fnv1a(std::string_view text);

}  // namespace stotop
