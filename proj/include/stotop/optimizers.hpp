#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stotop {

enum class OptimizerKind { Sgd, AdaGrad, Adadelta, Adam, Sag, Svrg, Gcmma };

OptimizerKind parse_optimizer(std::string_view name);
std::string optimizer_name(OptimizerKind kind);

struct LearningParams {
  double eta = 0.01;
  double epsilon = 1e-8;
  double zeta = 0.95;
  double beta_m = 0.9;
  double beta_v = 0.999;
  /// SAG/SVRG sample pool size.
  std::size_t ns = 100;
  /// SVRG inner iterations per anchor.
  std::size_t m_inner = 20;

  void validate(OptimizerKind kind) const;
};

struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t size() const { return lower.size(); }
  void clamp(std::span<double> x) const;
  bool contains(std::span<const double> x) const;
};

/// Accumulators of every SGD-family rule; unused members stay empty.
struct OptimizerState {
  std::int64_t steps = 0;
  std::vector<double> a;        // AdaGrad
  std::vector<double> a_h;      // Adadelta
  std::vector<double> a_theta;  // Adadelta
  std::vector<double> m;        // Adam
  std::vector<double> v;        // Adam
  std::vector<std::vector<double>> table;  // SAG per-sample gradients
  std::vector<double> table_sum;           // SAG running sum
  std::vector<double> anchor;              // SVRG anchor design
  std::vector<double> h_best;              // SVRG full-pool gradient at the anchor
  std::int64_t inner = 0;                  // SVRG steps since the anchor was set
};

/// theta' = clamp(theta - eta h).
void sgd_step(std::span<double> theta, std::span<const double> h, double eta, const Box& box);
/// a += h^2; theta' = clamp(theta - eta h / (sqrt(a) + sqrt(eps))).
void adagrad_step(OptimizerState& s, std::span<double> theta, std::span<const double> h, const LearningParams& p,
                  const Box& box);
/// Accumulate a_h, step with RMS[dtheta] from the previous iteration, then accumulate a_theta.
void adadelta_step(OptimizerState& s, std::span<double> theta, std::span<const double> h, const LearningParams& p,
                   const Box& box);
/// Bias-corrected moments; theta' = clamp(theta - eta m^ / (sqrt(v^) + eps)).
void adam_step(OptimizerState& s, std::span<double> theta, std::span<const double> h, const LearningParams& p,
               const Box& box);

void sag_init(OptimizerState& s, std::size_t ns, std::size_t num_vars);
/// Replaces table entry t (0-based) and updates the running sum.
void sag_update(OptimizerState& s, std::size_t t, std::span<const double> h);
/// theta' = clamp(theta - (eta / N_s) sum_i d_i).
void sag_step(OptimizerState& s, std::span<double> theta, const LearningParams& p, const Box& box);
void sag_step(OptimizerState& s, std::span<double> theta, std::span<const double> h, std::size_t t,
              const LearningParams& p, const Box& box);

void svrg_set_anchor(OptimizerState& s, std::span<const double> anchor, std::span<const double> h_best);
bool svrg_needs_anchor(const OptimizerState& s, const LearningParams& p);
/// theta' = clamp(theta - eta (h(theta) - h(anchor) + h_best)).
void svrg_step(OptimizerState& s, std::span<double> theta, std::span<const double> h_at_theta,
               std::span<const double> h_at_anchor, const LearningParams& p, const Box& box);

}  // namespace stotop
