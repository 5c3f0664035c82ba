#pragma once

#include <span>
#include <vector>

namespace stotop {

/// One sample's performance and constraint values with their design gradients.
struct SampleRecord {
  double f = 0.0;
  std::vector<double> g;
  std::vector<double> grad_f;
  std::vector<std::vector<double>> grad_g;
};

struct RobustConfig {
  double lambda = 0.0;
  /// Variance weight of the constraint term; negative means "same as lambda".
  double lambda_constraint = -1.0;
  /// Penalty per constraint; a single entry is broadcast.
  std::vector<double> kappa;

  double constraint_lambda() const { return lambda_constraint < 0.0 ? lambda : lambda_constraint; }
  double kappa_for(std::size_t j) const;
};

/// G = max(0, g)^2.
double constraint_violation(double g);
double constraint_violation_derivative(double g);

/// Sample mean and unbiased (1/(n-1)) variance of a scalar and their design gradients.
struct MomentEstimate {
  double mean = 0.0;
  double variance = 0.0;
  std::vector<double> grad_mean;
  /// (2n/(n-1)) (E[x grad x] - E[x] E[grad x]), the exact gradient of `variance`.
  std::vector<double> grad_variance;
};

/// values[i] with gradients[i]; variance terms require n >= 2 when `with_variance`.
MomentEstimate estimate_moments(std::span<const double> values, std::span<const std::vector<double>> gradients,
                                bool with_variance);

struct StochasticGradientReport {
  std::size_t n = 0;
  MomentEstimate f;
  /// Moments of G_j = max(0, g_j)^2.
  std::vector<MomentEstimate> G;
  /// Moments of the raw g_j.
  std::vector<MomentEstimate> g;
  double R_hat = 0.0;
  std::vector<double> C_hat;
  std::vector<double> grad_R;
  std::vector<std::vector<double>> grad_C;
  /// grad R + sum_j kappa_j grad C_j.
  std::vector<double> h_hat;
  /// R + sum_j kappa_j C_j.
  double penalized = 0.0;
};

/// R = E f + lambda Var f, C_j = E G_j + lambda_c Var G_j, h = grad R + kappa^T grad C.
StochasticGradientReport estimate(std::span<const SampleRecord> records, const RobustConfig& config);

/// Native constraint form E[g_j] + lambda_c Var[g_j] with gradient.
std::pair<std::vector<double>, std::vector<std::vector<double>>> native_constraints(
    const StochasticGradientReport& report, const RobustConfig& config);

}  // namespace stotop
