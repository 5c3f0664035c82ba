#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "stotop/optimizers.hpp"

namespace stotop {

struct GcmmaParams {
  double asyinit = 0.5;
  double asyincr = 1.2;
  double asydecr = 0.7;
  /// Move limit as a fraction of the variable range.
  double move = 0.5;
  /// Fraction of the distance to an asymptote kept free by the move limits.
  double albefa = 0.1;
  double raa0 = 1e-5;
  int max_inner = 30;
  double dual_tolerance = 1e-9;
  /// Cost of the artificial relaxation variables y_i: c y + d y^2 / 2.
  double c = 1000.0;
  double d = 1.0;
  /// Slack allowed when testing conservativeness.
  double conservative_tolerance = 1e-10;

  void validate() const;
};

/// Objective and constraint values (and gradients when requested) at one design.
struct GcmmaEvaluation {
  double f0 = 0.0;
  std::vector<double> fi;
  std::vector<double> df0;
  std::vector<std::vector<double>> dfi;
};

/// Values only are needed for the conservativeness re-evaluation.
using GcmmaEvaluator = std::function<GcmmaEvaluation(std::span<const double> x, bool with_gradients)>;

/// Separable conservative convex approximation around x_k.
struct GcmmaSubproblem {
  std::vector<double> x0, L, U, alpha, beta, range;
  /// p[i][j], q[i][j], r[i] for i = 0 (objective) .. m.
  std::vector<std::vector<double>> p, q;
  std::vector<double> r;
  double c = 1000.0;
  double d = 1.0;

  std::size_t n() const { return x0.size(); }
  std::size_t m() const { return r.size() - 1; }
  double approx(std::size_t i, std::span<const double> x) const;
  std::vector<double> approx_gradient(std::size_t i, std::span<const double> x) const;
};

struct GcmmaAsymptotes {
  std::vector<double> L, U;
};

/// Asymptote update; `history` holds up to two previous iterates (older first) and the previous asymptotes.
GcmmaAsymptotes update_asymptotes(std::int64_t outer_iteration, std::span<const double> x,
                                  std::span<const double> x_prev1, std::span<const double> x_prev2,
                                  const GcmmaAsymptotes& previous, const Box& box, const GcmmaParams& params);

GcmmaSubproblem build_subproblem(std::span<const double> x, const GcmmaEvaluation& eval, const GcmmaAsymptotes& asy,
                                 std::span<const double> raa, const Box& box, const GcmmaParams& params);

struct SubproblemSolution {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> lambda;
  double kkt_residual = 0.0;
  int dual_iterations = 0;
};

SubproblemSolution solve_subproblem(const GcmmaSubproblem& sp, const GcmmaParams& params);

/// Persistent optimizer state between outer iterations.
struct GcmmaState {
  std::int64_t outer = 0;
  std::vector<double> x_prev1, x_prev2;
  GcmmaAsymptotes asymptotes;
};

struct GcmmaStepResult {
  int inner_iterations = 0;
  bool capped = false;
  double kkt_residual = 0.0;
  /// Largest KKT residual over every subproblem solved in this step.
  double max_kkt_residual = 0.0;
  /// Values at the accepted design (same frozen batch).
  GcmmaEvaluation accepted;
};

/// One GCMMA outer iteration from x (overwritten with the accepted design).
/// `at_x` must carry gradients; `evaluate` is called on the same frozen data for candidates.
GcmmaStepResult gcmma_outer_iteration(GcmmaState& state, std::vector<double>& x, const GcmmaEvaluation& at_x,
                                      const GcmmaEvaluator& evaluate, const Box& box, const GcmmaParams& params);

}  // namespace stotop
