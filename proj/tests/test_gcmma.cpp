#include <gtest/gtest.h>

#include <cmath>

#include "stotop/error.hpp"
#include "stotop/gcmma.hpp"
#include "stotop/sampling.hpp"
#include "test_util.hpp"

using namespace stotop;

namespace {

Box unit_box(std::size_t n, double lo = 0.0, double hi = 1.0) {
  return Box{std::vector<double>(n, lo), std::vector<double>(n, hi)};
}

GcmmaEvaluation random_eval(std::size_t n, std::size_t m, std::uint64_t seed) {
  GcmmaEvaluation e;
  e.f0 = 1.3;
  e.df0 = test::random_vector(n, -2.0, 2.0, seed);
  for (std::size_t i = 0; i < m; ++i) {
    e.fi.push_back(-0.2 + 0.1 * static_cast<double>(i));
    e.dfi.push_back(test::random_vector(n, -1.0, 1.0, seed + 1 + i));
  }
  return e;
}

/// Root of the separable stationarity condition by bisection, clipped to [alpha, beta].
double separable_minimizer(double p, double q, double L, double U, double alpha, double beta) {
  auto dphi = [&](double x) { return p / ((U - x) * (U - x)) - q / ((x - L) * (x - L)); };
  if (dphi(alpha) >= 0.0) return alpha;
  if (dphi(beta) <= 0.0) return beta;
  double lo = alpha, hi = beta;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (dphi(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<double> run_gcmma(const GcmmaEvaluator& f, std::vector<double> x, const Box& box, int iters,
                              std::vector<double>* objective = nullptr) {
  GcmmaState state;
  GcmmaParams params;
  for (int k = 0; k < iters; ++k) {
    const GcmmaEvaluation at = f(x, true);
    if (objective) objective->push_back(at.f0);
    gcmma_outer_iteration(state, x, at, f, box, params);
  }
  return x;
}

}  // namespace

TEST(GcmmaAsymptotes, InitialIntervalUsesHalfRange) {
  std::vector<double> x{0.5};
  auto asy = update_asymptotes(0, x, {}, {}, {}, unit_box(1), GcmmaParams{});
  EXPECT_DOUBLE_EQ(asy.L[0], 0.0);
  EXPECT_DOUBLE_EQ(asy.U[0], 1.0);
}

TEST(GcmmaAsymptotes, MonotoneMovesWidenInterval) {
  const Box box = unit_box(1);
  GcmmaAsymptotes prev{{0.1}, {1.1}};
  std::vector<double> x2{0.5}, x1{0.6}, x{0.7};
  auto asy = update_asymptotes(2, x, x1, x2, prev, box, GcmmaParams{});
  EXPECT_NEAR(asy.U[0] - asy.L[0], 1.2 * (prev.U[0] - prev.L[0]), 1e-14);
  EXPECT_LT(asy.L[0], x[0]);
  EXPECT_GT(asy.U[0], x[0]);
}

TEST(GcmmaAsymptotes, OscillatingMovesShrinkInterval) {
  const Box box = unit_box(1);
  GcmmaAsymptotes prev{{0.1}, {1.1}};
  std::vector<double> x2{0.5}, x1{0.6}, x{0.55};
  auto asy = update_asymptotes(2, x, x1, x2, prev, box, GcmmaParams{});
  EXPECT_NEAR(asy.U[0] - asy.L[0], 0.7 * (prev.U[0] - prev.L[0]), 1e-14);
}

TEST(GcmmaAsymptotes, ClampedToStrictInterior) {
  const Box box = unit_box(1);
  GcmmaAsymptotes prev{{0.59999}, {0.60001}};
  std::vector<double> x2{0.5}, x1{0.6}, x{0.7};
  auto asy = update_asymptotes(2, x, x1, x2, prev, box, GcmmaParams{});
  EXPECT_NEAR(asy.L[0], 0.7 - 0.01, 1e-14);
  EXPECT_NEAR(asy.U[0], 0.7 + 0.01, 1e-14);
}

TEST(GcmmaSubproblem, InterpolatesValueAndGradient) {
  const std::size_t n = 7, m = 2;
  const Box box = unit_box(n);
  const auto x = test::random_vector(n, 0.1, 0.9, 3);
  const auto eval = random_eval(n, m, 11);
  const auto asy = update_asymptotes(0, x, {}, {}, {}, box, GcmmaParams{});
  const std::vector<double> raa{0.3, 1e-5, 2.0};
  const auto sp = build_subproblem(x, eval, asy, raa, box, GcmmaParams{});
  for (std::size_t i = 0; i <= m; ++i) {
    const double f = i == 0 ? eval.f0 : eval.fi[i - 1];
    EXPECT_NEAR(sp.approx(i, x), f, 1e-12);
    const auto g = sp.approx_gradient(i, x);
    const auto& ref = i == 0 ? eval.df0 : eval.dfi[i - 1];
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(g[j], ref[j], 1e-12);
  }
}

TEST(GcmmaSubproblem, ApproximationDominatesTaylorModel) {
  const std::size_t n = 5, m = 1;
  const Box box = unit_box(n);
  const auto x = test::random_vector(n, 0.2, 0.8, 5);
  const auto eval = random_eval(n, m, 21);
  const auto asy = update_asymptotes(0, x, {}, {}, {}, box, GcmmaParams{});
  const auto sp = build_subproblem(x, eval, asy, std::vector<double>{1e-5, 1e-5}, box, GcmmaParams{});
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> t(n);
    for (std::size_t j = 0; j < n; ++j) {
      std::uniform_real_distribution<double> d(sp.alpha[j], sp.beta[j]);
      t[j] = d(rng);
    }
    for (std::size_t i = 0; i <= m; ++i) {
      const auto& g = i == 0 ? eval.df0 : eval.dfi[i - 1];
      double taylor = i == 0 ? eval.f0 : eval.fi[i - 1];
      for (std::size_t j = 0; j < n; ++j) taylor += g[j] * (t[j] - x[j]);
      EXPECT_GE(sp.approx(i, t), taylor - 1e-12);
    }
  }
}

TEST(GcmmaSubproblem, RejectsGradientDimensionMismatch) {
  const Box box = unit_box(3);
  std::vector<double> x{0.5, 0.5, 0.5};
  auto eval = random_eval(3, 1, 1);
  eval.dfi[0].pop_back();
  const auto asy = update_asymptotes(0, x, {}, {}, {}, box, GcmmaParams{});
  try {
    build_subproblem(x, eval, asy, std::vector<double>{1e-5, 1e-5}, box, GcmmaParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidInput);
  }
}

TEST(GcmmaSubproblem, UnconstrainedMatchesPerVariableMinimizer) {
  const std::size_t n = 9;
  const Box box = unit_box(n);
  const auto x = test::random_vector(n, 0.1, 0.9, 8);
  auto eval = random_eval(n, 0, 31);
  const auto asy = update_asymptotes(0, x, {}, {}, {}, box, GcmmaParams{});
  const auto sp = build_subproblem(x, eval, asy, std::vector<double>{0.05}, box, GcmmaParams{});
  const auto sol = solve_subproblem(sp, GcmmaParams{});
  for (std::size_t j = 0; j < n; ++j) {
    const double ref = separable_minimizer(sp.p[0][j], sp.q[0][j], sp.L[j], sp.U[j], sp.alpha[j], sp.beta[j]);
    EXPECT_NEAR(sol.x[j], ref, 1e-9);
    EXPECT_GE(sol.x[j], sp.alpha[j]);
    EXPECT_LE(sol.x[j], sp.beta[j]);
  }
}

TEST(GcmmaSubproblem, BindingVolumeConstraintSatisfiesComplementarity) {
  // Compliance-like objective sum c_j / x_j pushes every density up; the volume cap binds.
  const std::size_t n = 20;
  const Box box = unit_box(n, 0.01, 1.0);
  const auto c = test::random_vector(n, 0.5, 2.0, 4);
  std::vector<double> x(n, 0.3);
  GcmmaEvaluation e;
  e.df0.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    e.f0 += c[j] / x[j];
    e.df0[j] = -c[j] / (x[j] * x[j]);
  }
  e.fi = {0.0};
  e.dfi = {std::vector<double>(n, 1.0 / (0.3 * static_cast<double>(n)))};
  const auto asy = update_asymptotes(0, x, {}, {}, {}, box, GcmmaParams{});
  const auto sp = build_subproblem(x, e, asy, std::vector<double>{1e-5, 1e-5}, box, GcmmaParams{});
  const auto sol = solve_subproblem(sp, GcmmaParams{});
  ASSERT_EQ(sol.lambda.size(), 1u);
  EXPECT_GT(sol.lambda[0], 0.0);
  const double g = sp.approx(1, sol.x) - sol.y[0];
  EXPECT_LE(std::abs(sol.lambda[0] * g), 1e-8);
  EXPECT_LE(g, 1e-9);
  EXPECT_LE(sol.kkt_residual, 1e-9);
}

TEST(GcmmaSubproblem, NewtonDualHandlesSeveralConstraints) {
  const std::size_t n = 12, m = 3;
  const Box box = unit_box(n, 0.0, 1.0);
  std::vector<double> x(n, 0.5);
  GcmmaEvaluation e;
  e.f0 = 0.0;
  e.df0.assign(n, -1.0);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> g(n, 0.0);
    for (std::size_t j = i * 4; j < i * 4 + 4; ++j) g[j] = 1.0 + 0.5 * static_cast<double>(i);
    e.fi.push_back(-0.1 * static_cast<double>(i));
    e.dfi.push_back(g);
  }
  const auto asy = update_asymptotes(0, x, {}, {}, {}, box, GcmmaParams{});
  const auto sp = build_subproblem(x, e, asy, std::vector<double>(m + 1, 1e-3), box, GcmmaParams{});
  const auto sol = solve_subproblem(sp, GcmmaParams{});
  EXPECT_LE(sol.kkt_residual, 1e-9);
  for (std::size_t i = 0; i < m; ++i) {
    EXPECT_GE(sol.lambda[i], 0.0);
    EXPECT_LE(sp.approx(i + 1, sol.x) - sol.y[i], 1e-9);
  }
}

TEST(GcmmaLoop, QuadraticConvergesToAnalyticMinimizer) {
  GcmmaEvaluator f = [](std::span<const double> x, bool) {
    GcmmaEvaluation e;
    e.f0 = (x[0] - 2.0) * (x[0] - 2.0);
    e.df0 = {2.0 * (x[0] - 2.0)};
    return e;
  };
  GcmmaState state;
  std::vector<double> x{4.5};
  const Box box{{0.0}, {5.0}};
  int k = 0;
  for (; k < 50 && std::abs(x[0] - 2.0) > 1e-4; ++k) gcmma_outer_iteration(state, x, f(x, true), f, box, GcmmaParams{});
  EXPECT_NEAR(x[0], 2.0, 1e-4);
  EXPECT_LE(k, 50);
}

TEST(GcmmaLoop, ConvexSeparableObjectiveDecreasesMonotonically) {
  const std::size_t n = 6;
  const auto target = test::random_vector(n, -1.0, 3.0, 12);
  GcmmaEvaluator f = [&](std::span<const double> x, bool) {
    GcmmaEvaluation e;
    e.df0.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double d = x[j] - target[j];
      e.f0 += d * d + std::exp(0.5 * x[j]);
      e.df0[j] = 2.0 * d + 0.5 * std::exp(0.5 * x[j]);
    }
    return e;
  };
  std::vector<double> obj;
  run_gcmma(f, std::vector<double>(n, 1.0), unit_box(n, -2.0, 2.0), 30, &obj);
  for (std::size_t k = 1; k < obj.size(); ++k) // Non-increasing up to the conservativeness slack.
    EXPECT_LE(obj[k], obj[k - 1] + 1e-10 * (1.0 + std::abs(obj[k - 1])));
}

TEST(GcmmaLoop, ConstrainedProblemReachesKktPoint) {
  // min x0 + x1 s.t. 1/x0 + 1/x1 <= 2 on [0.1, 5]^2: optimum at (1, 1).
  GcmmaEvaluator f = [](std::span<const double> x, bool) {
    GcmmaEvaluation e;
    e.f0 = x[0] + x[1];
    e.df0 = {1.0, 1.0};
    e.fi = {1.0 / x[0] + 1.0 / x[1] - 2.0};
    e.dfi = {{-1.0 / (x[0] * x[0]), -1.0 / (x[1] * x[1])}};
    return e;
  };
  GcmmaState state;
  std::vector<double> x{3.0, 4.0};
  const Box box{{0.1, 0.1}, {5.0, 5.0}};
  for (int k = 0; k < 60; ++k) {
    const auto r = gcmma_outer_iteration(state, x, f(x, true), f, box, GcmmaParams{});
    EXPECT_LE(r.max_kkt_residual, 1e-8);
  }
  EXPECT_NEAR(x[0], 1.0, 1e-4);
  EXPECT_NEAR(x[1], 1.0, 1e-4);
}

TEST(GcmmaLoop, InnerLoopRestoresConservativeness) {
  // Strongly nonconvex objective: the first approximation is not conservative.
  GcmmaEvaluator f = [](std::span<const double> x, bool) {
    GcmmaEvaluation e;
    e.f0 = -std::cos(6.0 * x[0]) + 0.1 * x[0];
    e.df0 = {6.0 * std::sin(6.0 * x[0]) + 0.1};
    return e;
  };
  GcmmaState state;
  std::vector<double> x{0.3};
  const Box box{{-2.0}, {2.0}};
  int max_inner = 0;
  for (int k = 0; k < 20; ++k) {
    const auto at = f(x, true);
    const auto r = gcmma_outer_iteration(state, x, at, f, box, GcmmaParams{});
    max_inner = std::max(max_inner, r.inner_iterations);
    EXPECT_LE(r.inner_iterations, 30);
    if (!r.capped) EXPECT_LE(r.accepted.f0, at.f0 + 1e-10 * (1.0 + std::abs(at.f0)));
  }
  EXPECT_GT(max_inner, 1);
  EXPECT_NEAR(x[0], 0.0, 2e-2);
}

TEST(GcmmaLoop, LargeBatchTracksExactTrajectory) {
  const RandomVectorSpec spec = RandomVectorSpec::uniform(1, -1.0, 1.0, "xi");
  const RngConfig rng{2024, kTrainingStream};
  auto exact = [](std::span<const double> x, bool) {
    GcmmaEvaluation e;
    e.f0 = (x[0] - 2.0) * (x[0] - 2.0);
    e.df0 = {2.0 * (x[0] - 2.0)};
    return e;
  };
  std::vector<double> xe{4.5}, xs{4.5};
  GcmmaState se, ss;
  const Box box{{0.0}, {5.0}};
  for (int k = 0; k < 5; ++k) {
    const ScenarioBatch batch = draw_batch(spec, 500, rng, k);
    double xi_mean = 0.0;
    for (const auto& s : batch.samples) xi_mean += s[0];
    xi_mean /= static_cast<double>(batch.size());
    GcmmaEvaluator sampled = [xi_mean](std::span<const double> x, bool) {
      GcmmaEvaluation e;
      e.f0 = (x[0] - 2.0) * (x[0] - 2.0) * (1.0 + 0.1 * xi_mean);
      e.df0 = {2.0 * (x[0] - 2.0) * (1.0 + 0.1 * xi_mean)};
      return e;
    };
    gcmma_outer_iteration(se, xe, exact(xe, true), exact, box, GcmmaParams{});
    gcmma_outer_iteration(ss, xs, sampled(xs, true), sampled, box, GcmmaParams{});
    EXPECT_LE(test::relative_error(xs[0], xe[0]), 0.01) << "iterate " << k;
  }
}

TEST(GcmmaLoop, NonFiniteGradientIsRejected) {
  GcmmaEvaluator f = [](std::span<const double>, bool) {
    GcmmaEvaluation e;
    e.f0 = 1.0;
    e.df0 = {std::nan("")};
    return e;
  };
  GcmmaState state;
  std::vector<double> x{0.5};
  try {
    gcmma_outer_iteration(state, x, f(x, true), f, unit_box(1), GcmmaParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StepRejected);
  }
  EXPECT_EQ(x[0], 0.5);
  EXPECT_EQ(state.outer, 0);
}

TEST(GcmmaParamsTest, RejectsInvertedAsymptoteFactors) {
  GcmmaParams p;
  p.asydecr = 1.2;
  EXPECT_THROW(p.validate(), Error);
}
