#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stotop/config.hpp"
#include "stotop/estimators.hpp"
#include "stotop/gcmma.hpp"
#include "stotop/optimizers.hpp"
#include "stotop/problem.hpp"

namespace stotop {

/// Fans sample evaluations out to worker threads, one workspace per thread;
/// results come back in sample order so every reduction is order-fixed.
class SampleEvaluator {
 public:
  SampleEvaluator(const Problem& problem, int threads);
  int threads() const { return static_cast<int>(workspaces_.size()); }
  std::vector<SampleRecord> evaluate(const PreparedDesign& design, const std::vector<std::vector<double>>& xis,
                                     bool with_gradients);

 private:
  const Problem& problem_;
  std::vector<std::unique_ptr<EvalWorkspace>> workspaces_;
};

struct ConvergenceRecord {
  std::int64_t iteration = 0;
  double R_hat = 0.0;
  std::vector<double> C_hat;
  double var_f = 0.0;
  double grad_norm = 0.0;
  /// Volume fraction of the design after the step.
  double vol_frac = 0.0;
  int inner_iters = 0;
  double wall_ms = 0.0;
  /// Iteration index keying the batch (0 for a fixed batch).
  std::int64_t batch_id = 0;
  double penalized = 0.0;
  double kkt_residual = 0.0;
};

std::string convergence_header(std::size_t num_constraints);
std::string convergence_row(const ConvergenceRecord& r, bool with_wall_time = true);

/// Everything needed to continue a run bitwise: design, optimizer accumulators and the RNG cursor
/// (the counter-based streams make the cursor the iteration index).
struct Checkpoint {
  std::string preset;
  std::uint64_t digest = 0;
  std::int64_t iteration = 0;
  std::vector<double> theta;
  OptimizerState optimizer;
  GcmmaState gcmma;
  double gcmma_scale = 0.0;

  std::string serialize() const;
  static Checkpoint parse(const std::string& text);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

/// Design file: the design vector with the preset and iteration that produced it.
struct DesignFile {
  std::string preset;
  std::int64_t iteration = 0;
  std::vector<double> theta;

  std::string serialize() const;
  /// Accepts design files and checkpoints.
  static DesignFile load(const std::string& path);
};

class Runner {
 public:
  explicit Runner(RunConfig config);
  /// Continues from a checkpoint; the config digest must match.
  Runner(RunConfig config, const Checkpoint& checkpoint);

  /// One outer iteration of the sampling protocol.
  const ConvergenceRecord& step();
  /// Iterates to schedule.max_iters, writing the CSV, snapshots, checkpoints and the final design.
  /// On failure writes failure.json and the last good checkpoint, then rethrows.
  void run();

  std::int64_t iteration() const { return iteration_; }
  const std::vector<double>& theta() const { return theta_; }
  const std::vector<ConvergenceRecord>& records() const { return records_; }
  const Problem& problem() const { return *problem_; }
  const RunConfig& config() const { return config_; }
  Checkpoint checkpoint() const;
  DesignFile design() const;

  /// Output paths below the configured directory.
  std::string output_path(const std::string& name) const;
  void export_design(const std::string& dir) const;
  /// Receives progress lines and warnings.
  void set_logger(std::function<void(const std::string&)> log) { log_ = std::move(log); }

 private:
  std::vector<std::vector<double>> pool_samples(std::span<const std::size_t> indices) const;
  std::vector<double> per_sample_gradient(const SampleRecord& r) const;
  void write_checkpoint() const;

  RunConfig config_;
  std::unique_ptr<Problem> problem_;
  SampleEvaluator evaluator_;
  RobustConfig robust_;
  Box box_;
  std::vector<double> theta_;
  std::int64_t iteration_ = 0;
  OptimizerState opt_;
  GcmmaState gcmma_;
  double gcmma_scale_ = 0.0;
  std::shared_ptr<const PreparedDesign> prepared_;
  std::vector<ConvergenceRecord> records_;
  std::vector<std::vector<double>> pool_;
  std::function<void(const std::string&)> log_;
};

struct ValidationReport {
  std::size_t samples = 0;
  double mean_f = 0.0;
  double var_f = 0.0;
  double std_error = 0.0;
  /// mean_f + lambda var_f.
  double R_hat = 0.0;
  std::vector<double> mean_g;
  std::vector<double> var_g;
  std::vector<double> C_hat;
  /// Fraction of samples with every g_j <= 0.
  double satisfaction_rate = 0.0;
  double volume_fraction = 0.0;

  std::string to_json() const;
};

/// Evaluates a frozen design on fresh samples of the validation stream.
ValidationReport validate_design(const Problem& problem, const RunConfig& config, std::span<const double> theta,
                                 std::int64_t iteration, std::size_t samples, int threads);

/// Density (CSV in 2D, VTK in 3D), histogram and, for bar designs, the bar table.
std::vector<std::string> export_fields(const Problem& problem, std::span<const double> theta, std::int64_t iteration,
                                       const std::string& dir, const std::string& stem = "density");

}  // namespace stotop
