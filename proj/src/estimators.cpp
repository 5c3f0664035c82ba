#include "stotop/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stotop/error.hpp"

namespace stotop {

double RobustConfig::kappa_for(std::size_t j) const {
  if (kappa.empty()) return 0.0;
  return kappa.size() == 1 ? kappa[0] : kappa.at(j);
}

double constraint_violation(double g) {
  const double p = std::max(0.0, g);
  return p * p;
}

double constraint_violation_derivative(double g) { return 2.0 * std::max(0.0, g); }

MomentEstimate estimate_moments(std::span<const double> values, std::span<const std::vector<double>> gradients,
                                bool with_variance) {
  const std::size_t n = values.size();
  require(n >= 1, "empty sample batch");
  require(gradients.size() == n, "gradient count does not match sample count");
  require(!with_variance || n >= 2, "variance estimates need at least two samples");
  const std::size_t p = gradients[0].size();
  for (const auto& g : gradients) require(g.size() == p, "sample gradients have different lengths");

  MomentEstimate m;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double v : values) m.mean += v;
  m.mean *= inv_n;
  m.grad_mean.assign(p, 0.0);
  for (const auto& g : gradients)
    for (std::size_t k = 0; k < p; ++k) m.grad_mean[k] += g[k];
  for (double& x : m.grad_mean) x *= inv_n;

  m.grad_variance.assign(p, 0.0);
  if (n < 2) return m;
  const double inv_n1 = 1.0 / static_cast<double>(n - 1);
  // Deviations are taken about the first sample so a constant batch gives exactly zero.
  double shift_mean = 0.0;
  for (double v : values) shift_mean += v - values[0];
  shift_mean *= inv_n;
  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) {
    dev[i] = (values[i] - values[0]) - shift_mean;
    m.variance += dev[i] * dev[i];
  }
  m.variance *= inv_n1;
  // Centered form of (2n/(n-1)) (E[x grad x] - E[x] E[grad x]).
  for (std::size_t i = 0; i < n; ++i) {
    const double dv = dev[i];
    if (dv == 0.0) continue;
    for (std::size_t k = 0; k < p; ++k) m.grad_variance[k] += dv * (gradients[i][k] - m.grad_mean[k]);
  }
  for (double& x : m.grad_variance) x *= 2.0 * inv_n1;
  return m;
}

StochasticGradientReport estimate(std::span<const SampleRecord> records, const RobustConfig& config) {
  const std::size_t n = records.size();
  require(n >= 1, "empty sample batch");
  require(config.lambda >= 0.0 && config.constraint_lambda() >= 0.0, "variance weights must be non-negative",
          ErrorCode::Configuration);
  for (double k : config.kappa) require(k >= 0.0, "penalty weights must be non-negative", ErrorCode::Configuration);
  const bool need_var = config.lambda != 0.0 || config.constraint_lambda() != 0.0;
  require(!need_var || n >= 2, "a variance-weighted objective needs a batch of at least two samples",
          ErrorCode::Configuration);
  const std::size_t p = records[0].grad_f.size(), m = records[0].g.size();
  for (const auto& r : records) {
    require(r.grad_f.size() == p && r.g.size() == m && r.grad_g.size() == m, "inconsistent sample records");
    require(std::isfinite(r.f), "non-finite sample objective", ErrorCode::SolverFailure);
    for (const auto& gg : r.grad_g) require(gg.size() == p, "inconsistent constraint gradient length");
  }
  require(config.kappa.size() <= 1 || config.kappa.size() == m, "penalty vector length does not match constraints",
          ErrorCode::Configuration);

  StochasticGradientReport rep;
  rep.n = n;
  std::vector<double> vals(n);
  std::vector<std::vector<double>> grads(n);
  for (std::size_t i = 0; i < n; ++i) {
    vals[i] = records[i].f;
    grads[i] = records[i].grad_f;
  }
  rep.f = estimate_moments(vals, grads, n >= 2);
  rep.R_hat = rep.f.mean + config.lambda * rep.f.variance;
  rep.grad_R.resize(p);
  for (std::size_t k = 0; k < p; ++k) rep.grad_R[k] = rep.f.grad_mean[k] + config.lambda * rep.f.grad_variance[k];

  rep.h_hat = rep.grad_R;
  rep.penalized = rep.R_hat;
  const double lc = config.constraint_lambda();
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      vals[i] = records[i].g[j];
      grads[i] = records[i].grad_g[j];
    }
    rep.g.push_back(estimate_moments(vals, grads, n >= 2));
    for (std::size_t i = 0; i < n; ++i) {
      const double gij = records[i].g[j];
      vals[i] = constraint_violation(gij);
      const double s = constraint_violation_derivative(gij);
      for (double& x : grads[i]) x *= s;
    }
    rep.G.push_back(estimate_moments(vals, grads, n >= 2));
    const auto& G = rep.G.back();
    rep.C_hat.push_back(G.mean + lc * G.variance);
    std::vector<double> gc(p);
    for (std::size_t k = 0; k < p; ++k) gc[k] = G.grad_mean[k] + lc * G.grad_variance[k];
    const double kj = config.kappa_for(j);
    for (std::size_t k = 0; k < p; ++k) rep.h_hat[k] += kj * gc[k];
    rep.penalized += kj * rep.C_hat.back();
    rep.grad_C.push_back(std::move(gc));
  }
  for (double x : rep.h_hat) require(std::isfinite(x), "non-finite stochastic gradient", ErrorCode::SolverFailure);
  return rep;
}

std::pair<std::vector<double>, std::vector<std::vector<double>>> native_constraints(
    const StochasticGradientReport& report, const RobustConfig& config) {
  const double lc = config.constraint_lambda();
  std::vector<double> values;
  std::vector<std::vector<double>> grads;
  for (const auto& g : report.g) {
    values.push_back(g.mean + lc * g.variance);
    std::vector<double> d(g.grad_mean.size());
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = g.grad_mean[k] + lc * g.grad_variance[k];
    grads.push_back(std::move(d));
  }
  return {values, grads};
}

}  // namespace stotop
