#include "stotop/gcmma.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "stotop/error.hpp"

namespace stotop {

void GcmmaParams::validate() const {
  const auto cfg = ErrorCode::Configuration;
  require(asyinit > 0.0 && asyinit <= 1.0, "gcmma.asyinit must lie in (0,1]", cfg);
  require(asydecr > 0.0 && asydecr < 1.0 && asyincr > 1.0, "gcmma asymptote factors need 0 < asydecr < 1 < asyincr", cfg);
  require(move > 0.0 && move <= 1.0, "gcmma.move must lie in (0,1]", cfg);
  require(albefa > 0.0 && albefa < 1.0, "gcmma.albefa must lie in (0,1)", cfg);
  require(raa0 > 0.0, "gcmma.raa0 must be positive", cfg);
  require(max_inner >= 1, "gcmma.max_inner must be positive", cfg);
  require(dual_tolerance > 0.0, "gcmma.dual_tolerance must be positive", cfg);
  require(c > 0.0 && d > 0.0, "gcmma relaxation costs must be positive", cfg);
  require(conservative_tolerance >= 0.0, "gcmma.conservative_tolerance must be non-negative", cfg);
}

double GcmmaSubproblem::approx(std::size_t i, std::span<const double> x) const {
  double s = r[i];
  for (std::size_t j = 0; j < n(); ++j) s += p[i][j] / (U[j] - x[j]) + q[i][j] / (x[j] - L[j]);
  return s;
}

std::vector<double> GcmmaSubproblem::approx_gradient(std::size_t i, std::span<const double> x) const {
  std::vector<double> g(n());
  for (std::size_t j = 0; j < n(); ++j) {
    const double du = U[j] - x[j], dl = x[j] - L[j];
    g[j] = p[i][j] / (du * du) - q[i][j] / (dl * dl);
  }
  return g;
}

GcmmaAsymptotes update_asymptotes(std::int64_t outer_iteration, std::span<const double> x,
                                  std::span<const double> x_prev1, std::span<const double> x_prev2,
                                  const GcmmaAsymptotes& previous, const Box& box, const GcmmaParams& params) {
  const std::size_t n = x.size();
  require(box.size() == n, "box dimension does not match design");
  GcmmaAsymptotes out{std::vector<double>(n), std::vector<double>(n)};
  const bool fresh = outer_iteration < 2 || x_prev1.size() != n || x_prev2.size() != n || previous.L.size() != n ||
                     previous.U.size() != n;
  for (std::size_t j = 0; j < n; ++j) {
    const double range = box.upper[j] - box.lower[j];
    if (fresh) {
      out.L[j] = x[j] - params.asyinit * range;
      out.U[j] = x[j] + params.asyinit * range;
    } else {
      const double trend = (x[j] - x_prev1[j]) * (x_prev1[j] - x_prev2[j]);
      const double gamma = trend > 0.0 ? params.asyincr : (trend < 0.0 ? params.asydecr : 1.0);
      out.L[j] = x[j] - gamma * (x_prev1[j] - previous.L[j]);
      out.U[j] = x[j] + gamma * (previous.U[j] - x_prev1[j]);
    }
    out.L[j] = std::clamp(out.L[j], x[j] - 10.0 * range, x[j] - 0.01 * range);
    out.U[j] = std::clamp(out.U[j], x[j] + 0.01 * range, x[j] + 10.0 * range);
  }
  return out;
}

GcmmaSubproblem build_subproblem(std::span<const double> x, const GcmmaEvaluation& eval, const GcmmaAsymptotes& asy,
                                 std::span<const double> raa, const Box& box, const GcmmaParams& params) {
  const std::size_t n = x.size();
  const std::size_t m = eval.fi.size();
  require(box.size() == n && asy.L.size() == n && asy.U.size() == n, "subproblem dimension mismatch");
  require(eval.df0.size() == n, "objective gradient dimension mismatch");
  require(eval.dfi.size() == m, "constraint gradient count mismatch");
  for (const auto& g : eval.dfi) require(g.size() == n, "constraint gradient dimension mismatch");
  require(raa.size() == m + 1, "conservativeness parameter count mismatch");

  GcmmaSubproblem sp;
  sp.x0.assign(x.begin(), x.end());
  sp.L = asy.L;
  sp.U = asy.U;
  sp.c = params.c;
  sp.d = params.d;
  sp.alpha.resize(n);
  sp.beta.resize(n);
  sp.range.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    require(sp.L[j] < x[j] && x[j] < sp.U[j], "asymptotes must bracket the expansion point", ErrorCode::InvalidState);
    sp.range[j] = box.upper[j] - box.lower[j];
    require(sp.range[j] > 0.0, "GCMMA needs a non-degenerate box");
    sp.alpha[j] = std::max({box.lower[j], sp.L[j] + params.albefa * (x[j] - sp.L[j]), x[j] - params.move * sp.range[j]});
    sp.beta[j] = std::min({box.upper[j], sp.U[j] - params.albefa * (sp.U[j] - x[j]), x[j] + params.move * sp.range[j]});
  }
  sp.p.assign(m + 1, std::vector<double>(n));
  sp.q.assign(m + 1, std::vector<double>(n));
  sp.r.assign(m + 1, 0.0);
  for (std::size_t i = 0; i <= m; ++i) {
    const auto& df = i == 0 ? eval.df0 : eval.dfi[i - 1];
    const double f = i == 0 ? eval.f0 : eval.fi[i - 1];
    require(std::isfinite(f), "non-finite function value passed to GCMMA", ErrorCode::StepRejected);
    double s = f;
    for (std::size_t j = 0; j < n; ++j) {
      require(std::isfinite(df[j]), "non-finite gradient passed to GCMMA", ErrorCode::StepRejected);
      const double pos = std::max(df[j], 0.0), neg = std::max(-df[j], 0.0);
      const double du = sp.U[j] - x[j], dl = x[j] - sp.L[j];
      const double base = raa[i] / sp.range[j];
      sp.p[i][j] = du * du * (1.001 * pos + 0.001 * neg + base);
      sp.q[i][j] = dl * dl * (0.001 * pos + 1.001 * neg + base);
      s -= sp.p[i][j] / du + sp.q[i][j] / dl;
    }
    sp.r[i] = s;
  }
  return sp;
}

namespace {

/// Primal minimizer of the Lagrangian for fixed multipliers.
struct Primal {
  std::vector<double> x, y, P, Q;
  std::vector<bool> free;
};

Primal primal_of(const GcmmaSubproblem& sp, const std::vector<double>& lambda) {
  const std::size_t n = sp.n(), m = sp.m();
  Primal pr;
  pr.x.resize(n);
  pr.P.resize(n);
  pr.Q.resize(n);
  pr.free.assign(n, false);
  for (std::size_t j = 0; j < n; ++j) {
    double P = sp.p[0][j], Q = sp.q[0][j];
    for (std::size_t i = 0; i < m; ++i) {
      P += lambda[i] * sp.p[i + 1][j];
      Q += lambda[i] * sp.q[i + 1][j];
    }
    pr.P[j] = P;
    pr.Q[j] = Q;
    const double sp_ = std::sqrt(P), sq = std::sqrt(Q);
    const double xs = (sp_ * sp.L[j] + sq * sp.U[j]) / (sp_ + sq);
    pr.x[j] = std::clamp(xs, sp.alpha[j], sp.beta[j]);
    pr.free[j] = xs > sp.alpha[j] && xs < sp.beta[j];
  }
  pr.y.resize(m);
  for (std::size_t i = 0; i < m; ++i) pr.y[i] = std::max(0.0, (lambda[i] - sp.c) / sp.d);
  return pr;
}

std::vector<double> dual_gradient(const GcmmaSubproblem& sp, const Primal& pr) {
  std::vector<double> g(sp.m());
  for (std::size_t i = 0; i < sp.m(); ++i) g[i] = sp.approx(i + 1, pr.x) - pr.y[i];
  return g;
}

double dual_value(const GcmmaSubproblem& sp, const Primal& pr, const std::vector<double>& lambda) {
  double w = sp.r[0];
  for (std::size_t j = 0; j < sp.n(); ++j) w += pr.P[j] / (sp.U[j] - pr.x[j]) + pr.Q[j] / (pr.x[j] - sp.L[j]);
  for (std::size_t i = 0; i < sp.m(); ++i)
    w += lambda[i] * sp.r[i + 1] + sp.c * pr.y[i] + 0.5 * sp.d * pr.y[i] * pr.y[i] - lambda[i] * pr.y[i];
  return w;
}

double kkt_residual(const std::vector<double>& lambda, const std::vector<double>& g) {
  double r = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) r = std::max({r, g[i], std::abs(lambda[i] * g[i])});
  return r;
}

/// Monotone root search of the single-constraint dual gradient.
int bisect_single(const GcmmaSubproblem& sp, std::vector<double>& lambda, double tol) {
  auto grad = [&](double l) {
    std::vector<double> lam{l};
    return dual_gradient(sp, primal_of(sp, lam))[0];
  };
  lambda[0] = 0.0;
  if (grad(0.0) <= 0.0) return 1;
  double lo = 0.0, hi = 1.0;
  int it = 0;
  while (grad(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
    require(++it < 2000, "GCMMA dual bracket failed", ErrorCode::SolverFailure);
  }
  while (hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi && it < 4000) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double g = grad(mid);
    if (std::abs(mid * g) <= 0.01 * tol && g <= 0.01 * tol) {
      lo = hi = mid;
      break;
    }
    (g > 0.0 ? lo : hi) = mid;
    ++it;
  }
  const double glo = grad(lo), ghi = grad(hi);
  const double rlo = std::max(glo, std::abs(lo * glo)), rhi = std::max(ghi, std::abs(hi * ghi));
  lambda[0] = rlo <= rhi ? lo : hi;
  return it;
}

/// Projected Newton ascent on the concave dual.
int newton_dual(const GcmmaSubproblem& sp, std::vector<double>& lambda, double tol, int max_iter) {
  const std::size_t m = sp.m(), n = sp.n();
  Primal pr = primal_of(sp, lambda);
  std::vector<double> g = dual_gradient(sp, pr);
  double W = dual_value(sp, pr, lambda);
  int it = 0;
  for (; it < max_iter; ++it) {
    if (kkt_residual(lambda, g) <= tol) return it;
    std::vector<bool> active(m);
    for (std::size_t i = 0; i < m; ++i) active[i] = lambda[i] <= 0.0 && g[i] <= 0.0;

    // Hessian of W restricted to free multipliers.
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    std::vector<std::vector<double>> J(m, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < m; ++i) J[i] = sp.approx_gradient(i + 1, pr.x);
    for (std::size_t j = 0; j < n; ++j) {
      if (!pr.free[j]) continue;
      const double du = sp.U[j] - pr.x[j], dl = pr.x[j] - sp.L[j];
      const double D = 2.0 * pr.P[j] / (du * du * du) + 2.0 * pr.Q[j] / (dl * dl * dl);
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) H(a, b) -= J[a][j] * J[b][j] / D;
    }
    for (std::size_t i = 0; i < m; ++i)
      if (pr.y[i] > 0.0) H(i, i) -= 1.0 / sp.d;
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    for (std::size_t i = 0; i < m; ++i) H(i, i) -= 1e-10 * scale;

    Eigen::VectorXd dir = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    std::vector<Eigen::Index> freeidx;
    for (std::size_t i = 0; i < m; ++i)
      if (!active[i]) freeidx.push_back(static_cast<Eigen::Index>(i));
    if (freeidx.empty()) return it;
    const auto k = static_cast<Eigen::Index>(freeidx.size());
    Eigen::MatrixXd Hf(k, k);
    Eigen::VectorXd gf(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      gf(a) = g[static_cast<std::size_t>(freeidx[a])];
      for (Eigen::Index b = 0; b < k; ++b) Hf(a, b) = H(freeidx[a], freeidx[b]);
    }
    const Eigen::VectorXd step = (-Hf).ldlt().solve(gf);
    for (Eigen::Index a = 0; a < k; ++a) dir(freeidx[a]) = step(a);

    // Armijo backtracking along the projected arc.
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      std::vector<double> trial(m);
      double lin = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        trial[i] = std::max(0.0, lambda[i] + t * dir(static_cast<Eigen::Index>(i)));
        lin += g[i] * (trial[i] - lambda[i]);
      }
      Primal tp = primal_of(sp, trial);
      const double Wt = dual_value(sp, tp, trial);
      if (Wt >= W + 1e-4 * lin - 1e-15 * std::abs(W)) {
        moved = trial != lambda;
        lambda = std::move(trial);
        pr = std::move(tp);
        W = Wt;
        g = dual_gradient(sp, pr);
        break;
      }
    }
    if (!moved) break;
  }
  return it;
}

}  // namespace

SubproblemSolution solve_subproblem(const GcmmaSubproblem& sp, const GcmmaParams& params) {
  const std::size_t m = sp.m();
  SubproblemSolution sol;
  sol.lambda.assign(m, 0.0);
  if (m > 0) {
    sol.dual_iterations = newton_dual(sp, sol.lambda, params.dual_tolerance, 100);
    Primal pr = primal_of(sp, sol.lambda);
    double res = kkt_residual(sol.lambda, dual_gradient(sp, pr));
    if (res > params.dual_tolerance && m == 1) {
      std::vector<double> lam(1);
      sol.dual_iterations += bisect_single(sp, lam, params.dual_tolerance);
      const double rb = kkt_residual(lam, dual_gradient(sp, primal_of(sp, lam)));
      if (rb < res) {
        sol.lambda = lam;
        res = rb;
      }
    }
    if (res > params.dual_tolerance) {
      std::ostringstream msg;
      msg << "GCMMA dual solve did not converge: KKT residual " << res << " > " << params.dual_tolerance
          << " after " << sol.dual_iterations << " iterations; multipliers";
      for (double l : sol.lambda) msg << ' ' << l;
      fail(ErrorCode::SolverFailure, msg.str());
    }
  }
  Primal pr = primal_of(sp, sol.lambda);
  sol.x = std::move(pr.x);
  sol.y = std::move(pr.y);
  sol.kkt_residual = m > 0 ? kkt_residual(sol.lambda, dual_gradient(sp, primal_of(sp, sol.lambda))) : 0.0;
  return sol;
}

GcmmaStepResult gcmma_outer_iteration(GcmmaState& state, std::vector<double>& x, const GcmmaEvaluation& at_x,
                                      const GcmmaEvaluator& evaluate, const Box& box, const GcmmaParams& params) {
  params.validate();
  const std::size_t n = x.size(), m = at_x.fi.size();
  require(box.size() == n, "box dimension does not match design");
  require(box.contains(x), "GCMMA iterate outside its box", ErrorCode::InvalidState);

  GcmmaAsymptotes asy =
      update_asymptotes(state.outer, x, state.x_prev1, state.x_prev2, state.asymptotes, box, params);

  std::vector<double> raa(m + 1);
  for (std::size_t i = 0; i <= m; ++i) {
    const auto& df = i == 0 ? at_x.df0 : at_x.dfi.at(i - 1);
    require(df.size() == n, "gradient dimension mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::abs(df[j]) * (box.upper[j] - box.lower[j]);
    raa[i] = std::max(params.raa0, 0.1 * s / static_cast<double>(n));
  }

  GcmmaStepResult result;
  SubproblemSolution sol;
  for (int inner = 0;; ++inner) {
    const GcmmaSubproblem sp = build_subproblem(x, at_x, asy, raa, box, params);
    sol = solve_subproblem(sp, params);
    result.max_kkt_residual = std::max(result.max_kkt_residual, sol.kkt_residual);
    result.accepted = evaluate(sol.x, false);
    require(result.accepted.fi.size() == m, "evaluator returned the wrong constraint count");
    result.inner_iterations = inner + 1;

    double wdist = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = sol.x[j] - x[j];
      wdist += (sp.U[j] - sp.L[j]) * dx * dx / ((sp.U[j] - sol.x[j]) * (sol.x[j] - sp.L[j]) * sp.range[j]);
    }
    bool conservative = true;
    for (std::size_t i = 0; i <= m; ++i) {
      const double truth = i == 0 ? result.accepted.f0 : result.accepted.fi[i - 1];
      const double model = sp.approx(i, sol.x);
      if (model + params.conservative_tolerance * (1.0 + std::abs(truth)) >= truth) continue;
      conservative = false;
      if (wdist > 0.0) {
        const double delta = (truth - model) / wdist;
        raa[i] = std::min(1.1 * (raa[i] + delta), 10.0 * raa[i]);
      }
    }
    if (conservative || wdist <= 0.0) break;
    if (inner + 1 >= params.max_inner) {
      result.capped = true;
      break;
    }
  }

  result.kkt_residual = sol.kkt_residual;
  state.x_prev2 = std::move(state.x_prev1);
  state.x_prev1 = x;
  state.asymptotes = std::move(asy);
  ++state.outer;
  x = std::move(sol.x);
  return result;
}

}  // namespace stotop
