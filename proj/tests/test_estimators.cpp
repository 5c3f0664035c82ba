#include <gtest/gtest.h>

#include <cmath>

#include "stotop/error.hpp"
#include "stotop/estimators.hpp"
#include "stotop/sampling.hpp"
#include "test_util.hpp"

using namespace stotop;

namespace {

// f = (1 + xi0) sum_k (theta_k - xi_{k+1})^2, g = sum theta_k xi0 - 0.5.
SampleRecord toy(const std::vector<double>& theta, const std::vector<double>& xi) {
  SampleRecord r;
  r.grad_f.resize(theta.size());
  double gsum = 0.0;
  std::vector<double> dg(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double d = theta[k] - xi[k + 1];
    r.f += (1.0 + xi[0]) * d * d;
    r.grad_f[k] = 2.0 * (1.0 + xi[0]) * d;
    gsum += theta[k] * xi[0];
    dg[k] = xi[0];
  }
  r.g = {gsum - 0.5};
  r.grad_g = {dg};
  return r;
}

std::vector<SampleRecord> toy_batch(const std::vector<double>& theta, const ScenarioBatch& b) {
  std::vector<SampleRecord> out;
  for (const auto& xi : b.samples) out.push_back(toy(theta, xi));
  return out;
}

}  // namespace

TEST(ConstraintViolation, Values) {
  EXPECT_EQ(constraint_violation(-0.3), 0.0);
  EXPECT_NEAR(constraint_violation(0.2), 0.04, 1e-17);
  EXPECT_EQ(constraint_violation(0.0), 0.0);
  EXPECT_EQ(constraint_violation_derivative(0.0), 0.0);
  EXPECT_EQ(constraint_violation_derivative(-1.0), 0.0);
  EXPECT_DOUBLE_EQ(constraint_violation_derivative(0.2), 0.4);
}

TEST(EstimateMoments, SmallCases) {
  const std::vector<double> f{1.0, 3.0};
  const std::vector<std::vector<double>> g{{0.0}, {4.0}};
  const auto m = estimate_moments(f, g, true);
  EXPECT_DOUBLE_EQ(m.mean, 2.0);
  EXPECT_DOUBLE_EQ(m.variance, 2.0);
  EXPECT_DOUBLE_EQ(m.grad_mean[0], 2.0);
  EXPECT_DOUBLE_EQ(m.grad_variance[0], 8.0);
  EXPECT_DOUBLE_EQ(m.grad_variance[0], (f[0] - f[1]) * (g[0][0] - g[1][0]));

  const std::vector<double> same(5, 1.7);
  const std::vector<std::vector<double>> gs(5, {0.3, -2.0});
  const auto c = estimate_moments(same, gs, true);
  EXPECT_EQ(c.variance, 0.0);
  EXPECT_EQ(c.grad_variance[0], 0.0);
  EXPECT_EQ(c.grad_variance[1], 0.0);

  const std::vector<double> one{1.0};
  const std::vector<std::vector<double>> g1{{1.0}};
  EXPECT_THROW(estimate_moments(one, g1, true), Error);
  EXPECT_NO_THROW(estimate_moments(one, g1, false));
}

TEST(EstimateMoments, VarianceIsUnbiased) {
  const auto spec = RandomVectorSpec::uniform(1, 0.0, 1.0);
  const int batches = 10000;
  double sum = 0.0;
  for (int k = 0; k < batches; ++k) {
    const auto b = draw_batch(spec, 4, {17, kTrainingStream}, k);
    std::vector<double> v;
    std::vector<std::vector<double>> g;
    for (const auto& x : b.samples) {
      v.push_back(x[0]);
      g.push_back({0.0});
    }
    sum += estimate_moments(v, g, true).variance;
  }
  EXPECT_NEAR(sum / batches, 1.0 / 12.0, 0.02 / 12.0);
}

TEST(EstimateMoments, VarianceGradientMatchesFiniteDifference) {
  const auto spec = RandomVectorSpec::uniform(6, 0.0, 1.0);
  const auto batch = draw_batch(spec, 4, {3, kTrainingStream}, 0);
  const auto theta = test::random_vector(5, 0.0, 1.0, 8);
  auto var = [&](const std::vector<double>& t) {
    std::vector<double> v;
    std::vector<std::vector<double>> g;
    for (const auto& r : toy_batch(t, batch)) {
      v.push_back(r.f);
      g.push_back(r.grad_f);
    }
    return estimate_moments(v, g, true).variance;
  };
  std::vector<double> v;
  std::vector<std::vector<double>> g;
  for (const auto& r : toy_batch(theta, batch)) {
    v.push_back(r.f);
    g.push_back(r.grad_f);
  }
  const auto m = estimate_moments(v, g, true);
  for (std::size_t k = 0; k < theta.size(); ++k)
    EXPECT_LE(test::relative_error(m.grad_variance[k], test::central_difference(var, theta, k, 1e-5)), 1e-6);
}

TEST(Estimate, CombinedGradientBasics) {
  const auto spec = RandomVectorSpec::uniform(4, 0.0, 1.0);
  const auto batch = draw_batch(spec, 4, {4, kTrainingStream}, 1);
  const std::vector<double> theta{0.9, 0.8, 0.7};
  const auto recs = toy_batch(theta, batch);

  const auto plain = estimate(recs, {0.0, -1.0, {0.0}});
  for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(plain.h_hat[k], plain.f.grad_mean[k]);

  const auto k1 = estimate(recs, {0.3, -1.0, {10.0}});
  const auto k2 = estimate(recs, {0.3, -1.0, {20.0}});
  const auto k0 = estimate(recs, {0.3, -1.0, {0.0}});
  for (std::size_t k = 0; k < 3; ++k)
    EXPECT_NEAR(k2.h_hat[k] - k0.h_hat[k], 2.0 * (k1.h_hat[k] - k0.h_hat[k]), 1e-12 * std::abs(k2.h_hat[k]) + 1e-14);

  const std::vector<double> small{0.01, 0.01, 0.01};
  const auto feasible = toy_batch(small, batch);
  const auto a = estimate(feasible, {0.3, -1.0, {1000.0}});
  const auto b = estimate(feasible, {0.3, -1.0, {0.0}});
  EXPECT_EQ(a.C_hat[0], 0.0);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(a.h_hat[k], b.h_hat[k]);
}

TEST(Estimate, FrozenBatchEstimatorsAreDifferentiable) {
  const auto spec = RandomVectorSpec::uniform(5, 0.0, 1.0);
  const auto batch = draw_batch(spec, 4, {5, kTrainingStream}, 2);
  const RobustConfig cfg{0.7, 0.4, {3.0}};
  const auto theta = test::random_vector(4, 0.3, 0.9, 1);
  const auto rep = estimate(toy_batch(theta, batch), cfg);
  ASSERT_GT(rep.C_hat[0], 0.0);
  auto R = [&](const std::vector<double>& t) { return estimate(toy_batch(t, batch), cfg).R_hat; };
  auto C = [&](const std::vector<double>& t) { return estimate(toy_batch(t, batch), cfg).C_hat[0]; };
  auto P = [&](const std::vector<double>& t) { return estimate(toy_batch(t, batch), cfg).penalized; };
  for (std::size_t k = 0; k < theta.size(); ++k) {
    EXPECT_LE(test::relative_error(rep.grad_R[k], test::central_difference(R, theta, k, 1e-5)), 1e-6);
    EXPECT_LE(test::relative_error(rep.grad_C[0][k], test::central_difference(C, theta, k, 1e-5)), 1e-6);
    EXPECT_LE(test::relative_error(rep.h_hat[k], test::central_difference(P, theta, k, 1e-5)), 1e-6);
  }
}

TEST(Estimate, CombinedGradientIsUnbiased) {
  const auto spec = RandomVectorSpec::uniform(4, 0.0, 1.0);
  const std::vector<double> theta{0.6, 0.4, 0.5};
  const RobustConfig cfg{0.5, -1.0, {2.0}};
  const int batches = 10000;
  std::vector<double> sum(3, 0.0), sum2(3, 0.0);
  for (int k = 0; k < batches; ++k) {
    const auto rep = estimate(toy_batch(theta, draw_batch(spec, 4, {6, kTrainingStream}, k)), cfg);
    for (std::size_t c = 0; c < 3; ++c) {
      sum[c] += rep.h_hat[c];
      sum2[c] += rep.h_hat[c] * rep.h_hat[c];
    }
  }
  const auto ref = estimate(toy_batch(theta, draw_batch(spec, 100000, {6, kValidationStream}, 0)), cfg);
  for (std::size_t c = 0; c < 3; ++c) {
    const double mean = sum[c] / batches;
    const double se = std::sqrt((sum2[c] / batches - mean * mean) / batches);
    EXPECT_LE(std::abs(mean - ref.h_hat[c]), 4.0 * se) << c;
  }
}

TEST(Estimate, RejectsSingleSampleWithVariance) {
  const std::vector<SampleRecord> one{toy({0.5}, {0.1, 0.2})};
  try {
    estimate(one, {0.1, -1.0, {1.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Configuration);
  }
  EXPECT_NO_THROW(estimate(one, {0.0, -1.0, {1.0}}));
}

TEST(Estimate, NativeConstraintForm) {
  const auto spec = RandomVectorSpec::uniform(3, 0.0, 1.0);
  const auto recs = toy_batch({0.4, 0.9}, draw_batch(spec, 5, {1, kTrainingStream}, 0));
  const RobustConfig cfg{0.2, -1.0, {1.0}};
  const auto rep = estimate(recs, cfg);
  const auto [vals, grads] = native_constraints(rep, cfg);
  EXPECT_DOUBLE_EQ(vals[0], rep.g[0].mean + 0.2 * rep.g[0].variance);
  EXPECT_EQ(grads[0].size(), 2u);
}
