#include "stotop/optimizers.hpp"

#include <algorithm>
#include <cmath>

#include "stotop/error.hpp"

namespace stotop {

namespace {

void check_gradient(std::span<const double> h, std::size_t n) {
  require(h.size() == n, "gradient length does not match design length");
  for (double x : h) require(std::isfinite(x), "non-finite gradient entry; step rejected", ErrorCode::StepRejected);
}

void ensure(std::vector<double>& v, std::size_t n) {
  if (v.empty()) v.assign(n, 0.0);
  require(v.size() == n, "optimizer state does not match design length", ErrorCode::InvalidState);
}

}  // namespace

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adagrad") return OptimizerKind::AdaGrad;
  if (name == "adadelta") return OptimizerKind::Adadelta;
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sag") return OptimizerKind::Sag;
  if (name == "svrg") return OptimizerKind::Svrg;
  if (name == "gcmma") return OptimizerKind::Gcmma;
  fail(ErrorCode::Configuration,
       "unknown optimizer '" + std::string(name) + "' (sgd, adagrad, adadelta, adam, sag, svrg, gcmma)");
}

std::string optimizer_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::AdaGrad: return "adagrad";
    case OptimizerKind::Adadelta: return "adadelta";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::Sag: return "sag";
    case OptimizerKind::Svrg: return "svrg";
    case OptimizerKind::Gcmma: return "gcmma";
  }
  return "?";
}

void LearningParams::validate(OptimizerKind kind) const {
  const auto cfg = ErrorCode::Configuration;
  if (kind != OptimizerKind::Adadelta && kind != OptimizerKind::Gcmma)
    require(eta > 0.0 && std::isfinite(eta), "learning rate must be positive", cfg);
  require(epsilon > 0.0, "epsilon must be positive", cfg);
  require(zeta > 0.0 && zeta < 1.0, "Adadelta decay must lie in (0,1)", cfg);
  require(beta_m > 0.0 && beta_m < 1.0 && beta_v > 0.0 && beta_v < 1.0, "Adam decays must lie in (0,1)", cfg);
  if (kind == OptimizerKind::Sag || kind == OptimizerKind::Svrg) require(ns >= 1, "sample pool must be non-empty", cfg);
  if (kind == OptimizerKind::Svrg) require(m_inner >= 1, "SVRG inner iteration count must be positive", cfg);
}

void Box::clamp(std::span<double> x) const {
  require(x.size() == lower.size() && x.size() == upper.size(), "box size does not match design length");
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
}

bool Box::contains(std::span<const double> x) const {
  if (x.size() != lower.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(x[i] >= lower[i] && x[i] <= upper[i])) return false;
  return true;
}

void sgd_step(std::span<double> theta, std::span<const double> h, double eta, const Box& box) {
  check_gradient(h, theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= eta * h[i];
  box.clamp(theta);
}

void adagrad_step(OptimizerState& s, std::span<double> theta, std::span<const double> h, const LearningParams& p,
                  const Box& box) {
  check_gradient(h, theta.size());
  ensure(s.a, theta.size());
  const double se = std::sqrt(p.epsilon);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    s.a[i] += h[i] * h[i];
    theta[i] -= p.eta * h[i] / (std::sqrt(s.a[i]) + se);
  }
  ++s.steps;
  box.clamp(theta);
}

void adadelta_step(OptimizerState& s, std::span<double> theta, std::span<const double> h, const LearningParams& p,
                   const Box& box) {
  check_gradient(h, theta.size());
  ensure(s.a_h, theta.size());
  ensure(s.a_theta, theta.size());
  const double z = p.zeta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    s.a_h[i] = z * s.a_h[i] + (1.0 - z) * h[i] * h[i];
    const double rms_h = std::sqrt(s.a_h[i] + p.epsilon);
    const double rms_dt = std::sqrt(s.a_theta[i] + p.epsilon);
    const double dt = -rms_dt / rms_h * h[i];
    theta[i] += dt;
    s.a_theta[i] = z * s.a_theta[i] + (1.0 - z) * dt * dt;
  }
  ++s.steps;
  box.clamp(theta);
}

void adam_step(OptimizerState& s, std::span<double> theta, std::span<const double> h, const LearningParams& p,
               const Box& box) {
  check_gradient(h, theta.size());
  ensure(s.m, theta.size());
  ensure(s.v, theta.size());
  ++s.steps;
  const double k = static_cast<double>(s.steps);
  const double cm = 1.0 - std::pow(p.beta_m, k), cv = 1.0 - std::pow(p.beta_v, k);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    s.m[i] = p.beta_m * s.m[i] + (1.0 - p.beta_m) * h[i];
    s.v[i] = p.beta_v * s.v[i] + (1.0 - p.beta_v) * h[i] * h[i];
    const double mh = s.m[i] / cm, vh = s.v[i] / cv;
    theta[i] -= p.eta * mh / (std::sqrt(vh) + p.epsilon);
  }
  box.clamp(theta);
}

void sag_init(OptimizerState& s, std::size_t ns, std::size_t num_vars) {
  require(ns >= 1, "sample pool must be non-empty");
  s.table.assign(ns, std::vector<double>(num_vars, 0.0));
  s.table_sum.assign(num_vars, 0.0);
}

void sag_update(OptimizerState& s, std::size_t t, std::span<const double> h) {
  require(!s.table.empty(), "SAG table is not initialised", ErrorCode::InvalidState);
  require(t < s.table.size(), "SAG sample index out of range");
  check_gradient(h, s.table_sum.size());
  auto& d = s.table[t];
  for (std::size_t i = 0; i < d.size(); ++i) {
    s.table_sum[i] += h[i] - d[i];
    d[i] = h[i];
  }
}

void sag_step(OptimizerState& s, std::span<double> theta, const LearningParams& p, const Box& box) {
  require(s.table_sum.size() == theta.size(), "SAG table does not match design length", ErrorCode::InvalidState);
  const double c = p.eta / static_cast<double>(s.table.size());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= c * s.table_sum[i];
  ++s.steps;
  box.clamp(theta);
}

void sag_step(OptimizerState& s, std::span<double> theta, std::span<const double> h, std::size_t t,
              const LearningParams& p, const Box& box) {
  sag_update(s, t, h);
  sag_step(s, theta, p, box);
}

void svrg_set_anchor(OptimizerState& s, std::span<const double> anchor, std::span<const double> h_best) {
  check_gradient(h_best, anchor.size());
  s.anchor.assign(anchor.begin(), anchor.end());
  s.h_best.assign(h_best.begin(), h_best.end());
  s.inner = 0;
}

bool svrg_needs_anchor(const OptimizerState& s, const LearningParams& p) {
  return s.anchor.empty() || s.inner >= static_cast<std::int64_t>(p.m_inner);
}

void svrg_step(OptimizerState& s, std::span<double> theta, std::span<const double> h_at_theta,
               std::span<const double> h_at_anchor, const LearningParams& p, const Box& box) {
  require(!s.anchor.empty() && s.anchor.size() == theta.size(), "SVRG anchor is not set", ErrorCode::InvalidState);
  require(s.inner < static_cast<std::int64_t>(p.m_inner), "SVRG anchor is stale", ErrorCode::InvalidState);
  check_gradient(h_at_theta, theta.size());
  check_gradient(h_at_anchor, theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= p.eta * (h_at_theta[i] - h_at_anchor[i] + s.h_best[i]);
  ++s.inner;
  ++s.steps;
  box.clamp(theta);
}

}  // namespace stotop
