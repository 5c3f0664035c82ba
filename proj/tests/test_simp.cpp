#include <gtest/gtest.h>

#include <cmath>

#include "stotop/error.hpp"
#include "stotop/fem.hpp"
#include "stotop/simp.hpp"
#include "test_util.hpp"

using namespace stotop;

namespace {

StructuredMesh grid(int nx, int ny, double h = 1.0) {
  const std::vector<int> d{nx, ny};
  return StructuredMesh(d, h);
}

BoundaryConditions cantilever(const StructuredMesh& m) {
  BoundaryConditions bc;
  for (int j = 0; j <= m.dims()[1]; ++j) {
    bc.fixed_dofs.push_back(2 * m.node_index(0, j));
    bc.fixed_dofs.push_back(2 * m.node_index(0, j) + 1);
  }
  bc.loads.push_back({m.node_index(m.dims()[0], 0), {0.0, -1.0, 0.0}});
  return bc;
}

}  // namespace

TEST(DensityFilter, ConstantFieldIsPreserved) {
  const StructuredMesh m = grid(5, 4);
  const DensityFilter f(m, 1.5);
  const std::vector<double> theta(m.num_nodes(), 0.37);
  for (double r : f.apply(theta)) EXPECT_NEAR(r, 0.37, 1e-15);
}

TEST(DensityFilter, RowsAreNormalizedAndNonNegative) {
  const StructuredMesh m = grid(6, 3);
  const DensityFilter f(m, 2.2);
  const auto& W = f.matrix();
  for (Eigen::Index r = 0; r < W.outerSize(); ++r) {
    double sum = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(W, r); it; ++it) {
      EXPECT_GT(it.value(), 0.0);
      sum += it.value();
    }
    EXPECT_NEAR(sum, 1.0, 1e-14);
  }
}

TEST(DensityFilter, SmallRadiusAveragesOwnCorners) {
  const StructuredMesh m = grid(3, 2);
  const DensityFilter f(m, 0.3);
  const auto theta = test::random_vector(m.num_nodes(), 0.0, 1.0, 4);
  const auto rho = f.apply(theta);
  for (std::size_t e = 0; e < m.num_elements(); ++e) {
    double avg = 0.0;
    for (std::size_t n : m.element_nodes(e)) avg += theta[n] / 4.0;
    EXPECT_NEAR(rho[e], avg, 1e-15);
  }
}

TEST(DensityFilter, MatchesDenseBruteForce) {
  const StructuredMesh m = grid(4, 4, 0.5);
  const double r = 0.8;
  const DensityFilter f(m, r);
  const auto theta = test::random_vector(m.num_nodes(), 0.0, 1.0, 9);
  const auto rho = f.apply(theta);
  for (std::size_t e = 0; e < m.num_elements(); ++e) {
    const auto c = m.element_centroid(e);
    double num = 0.0, den = 0.0;
    for (std::size_t n = 0; n < m.num_nodes(); ++n) {
      const auto x = m.node_coord(n);
      const double w = std::max(0.0, r - std::hypot(x[0] - c[0], x[1] - c[1]));
      num += w * theta[n];
      den += w;
    }
    EXPECT_NEAR(rho[e], num / den, 1e-14);
  }
}

TEST(DensityFilter, IsLinear) {
  const StructuredMesh m = grid(5, 3);
  const DensityFilter f(m, 1.5);
  const auto t1 = test::random_vector(m.num_nodes(), 0.0, 1.0, 1);
  const auto t2 = test::random_vector(m.num_nodes(), 0.0, 1.0, 2);
  std::vector<double> mix(t1.size());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 0.3 * t1[i] - 1.7 * t2[i];
  const auto r1 = f.apply(t1), r2 = f.apply(t2), rm = f.apply(mix);
  for (std::size_t e = 0; e < rm.size(); ++e) EXPECT_NEAR(rm[e], 0.3 * r1[e] - 1.7 * r2[e], 1e-12);
}

TEST(DensityFilter, ThreeDimensionalConstantField) {
  const std::vector<int> d{3, 3, 2};
  const StructuredMesh m(d, 0.5);
  const DensityFilter f(m, 0.75);
  const std::vector<double> theta(m.num_nodes(), 0.6);
  for (double r : f.apply(theta)) EXPECT_NEAR(r, 0.6, 1e-15);
}

TEST(DensityFilter, RejectsWrongLength) {
  const StructuredMesh m = grid(2, 2);
  const DensityFilter f(m, 1.5);
  const std::vector<double> theta(3, 0.5);
  EXPECT_THROW(f.apply(theta), Error);
}

TEST(Projection, EndpointsAndSymmetry) {
  for (double beta : {0.5, 5.0, 20.0, 64.0})
    for (double nu : {0.0001, 0.3, 0.5, 0.9}) {
      EXPECT_EQ(project(0.0, {beta, nu}), 0.0);
      EXPECT_DOUBLE_EQ(project(1.0, {beta, nu}), 1.0);
    }
  EXPECT_DOUBLE_EQ(project(0.5, {8.0, 0.5}), 0.5);
}

TEST(Projection, SmallBetaIsNearlyIdentity) {
  // Series: rho_bar = rho + O(beta^2).
  for (double rho = 0.0; rho <= 1.0; rho += 0.05) EXPECT_NEAR(project(rho, {1e-6, 0.3}), rho, 1e-5);
}

TEST(Projection, MonotoneWithExactDerivative) {
  const ProjectionParams p{5.0, 0.0001};
  double prev = -1.0;
  for (double rho = 0.0; rho <= 1.0; rho += 0.01) {
    const double v = project(rho, p);
    EXPECT_GE(v, prev);
    prev = v;
    const double fd = (project(rho + 1e-7, p) - project(rho - 1e-7, p)) / 2e-7;
    EXPECT_NEAR(project_derivative(rho, p), fd, 1e-6 * std::max(1.0, fd));
  }
}

TEST(ProjectionSchedule, StepsAndParsing) {
  const auto s = ProjectionSchedule::parse("0:5, 400:20");
  EXPECT_EQ(s.beta_at(0), 5.0);
  EXPECT_EQ(s.beta_at(399), 5.0);
  EXPECT_EQ(s.beta_at(400), 20.0);
  EXPECT_EQ(s.beta_at(5000), 20.0);
  EXPECT_EQ(ProjectionSchedule::parse(s.to_string()).steps(), s.steps());
  EXPECT_THROW(ProjectionSchedule::parse("0:20,10:5"), Error);
  EXPECT_THROW(ProjectionSchedule::parse("10:5"), Error);
  EXPECT_THROW(ProjectionSchedule::parse("0-5"), Error);
}

TEST(SimpModulus, Endpoints) {
  const SimpParams p{3.0, 1.0, 1e-9};
  EXPECT_DOUBLE_EQ(simp_modulus(1.0, p), 1.0);
  EXPECT_DOUBLE_EQ(simp_modulus(0.0, p), 1e-9);
  EXPECT_DOUBLE_EQ(simp_modulus(0.5, {3.0, 1.0, 0.0}), 0.125);
  double prev = 0.0;
  for (double r = 0.0; r <= 1.0; r += 0.1) {
    EXPECT_GE(simp_modulus(r, p), prev);
    prev = simp_modulus(r, p);
  }
}

TEST(SimpDesign, IdentityPipelineSensitivity) {
  const StructuredMesh m = grid(3, 2);
  SimpDesign design(m, 0.1, {1.0, 1.0, 1e-9});
  const auto theta = test::random_vector(m.num_nodes(), 0.2, 0.9, 3);
  const SimpState s = design.evaluate(theta, std::nullopt);
  const auto dCdE = test::random_vector(m.num_elements(), -1.0, 0.0, 5);
  const auto dth = design.chain_sensitivity(s, dCdE);
  std::vector<double> expect(m.num_nodes(), 0.0);
  for (std::size_t e = 0; e < m.num_elements(); ++e)
    for (std::size_t n : m.element_nodes(e)) expect[n] += 0.25 * dCdE[e] * (1.0 - 1e-9);
  for (std::size_t n = 0; n < expect.size(); ++n) EXPECT_NEAR(dth[n], expect[n], 1e-15);
}

TEST(SimpDesign, UniformFullDesignScalesUniformly) {
  const StructuredMesh m = grid(4, 3);
  SimpDesign design(m, 1.5, {3.0, 1.0, 1e-9});
  const std::vector<double> theta(m.num_nodes(), 1.0);
  const SimpState s = design.evaluate(theta, ProjectionParams{5.0, 0.3});
  for (std::size_t e = 0; e < m.num_elements(); ++e) {
    EXPECT_DOUBLE_EQ(s.drho_bar[e], s.drho_bar[0]);
    EXPECT_DOUBLE_EQ(s.drho_bar[e], project_derivative(1.0, {5.0, 0.3}));
  }
}

TEST(SimpDesign, ComplianceGradientMatchesFiniteDifference) {
  const StructuredMesh m = grid(12, 6);
  SimpDesign design(m, 1.5, {3.0, 1.0, 1e-9});
  FemSystem sys(m, {});
  const BoundaryConditions bc = cantilever(m);
  const ProjectionParams proj{5.0, 0.0001};
  auto C = [&](const std::vector<double>& th) { return sys.solve(design.evaluate(th, proj).moduli, bc).compliance; };
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto theta = test::random_vector(m.num_nodes(), 0.1, 0.9, 100 + trial);
    const SimpState s = design.evaluate(theta, proj);
    const auto sol = sys.solve(s.moduli, bc);
    const auto grad = design.chain_sensitivity(s, compliance_modulus_sensitivity(sol, m));
    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::abs(g));
    for (std::size_t j = 0; j < m.num_nodes(); j += 7) {
      const double fd = test::central_difference(C, theta, j, 1e-4);
      const double err = std::abs(grad[j] - fd) / std::max(std::abs(fd), 1e-3 * gmax);
      worst = std::max(worst, err);
    }
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(SimpDesign, VolumeConstraint) {
  const StructuredMesh m = grid(6, 4);
  SimpDesign design(m, 1.5, {});
  const std::vector<double> ones(m.num_nodes(), 1.0);
  EXPECT_DOUBLE_EQ(design.volume_constraint(design.evaluate(ones, std::nullopt), 0.5).g, 1.0);
  const std::vector<double> half(m.num_nodes(), 0.4);
  EXPECT_NEAR(design.volume_constraint(design.evaluate(half, std::nullopt), 0.4).g, 0.0, 1e-15);

  const ProjectionParams proj{4.0, 0.5};
  const auto theta = test::random_vector(m.num_nodes(), 0.1, 0.9, 77);
  const auto vc = design.volume_constraint(design.evaluate(theta, proj), 0.3);
  auto g = [&](const std::vector<double>& th) { return design.volume_constraint(design.evaluate(th, proj), 0.3).g; };
  for (std::size_t j = 0; j < m.num_nodes(); ++j) {
    const double fd = test::central_difference(g, theta, j, 1e-5);
    EXPECT_LE(std::abs(vc.gradient[j] - fd), 1e-6 * std::max(std::abs(fd), 1e-3)) << j;
  }
}

TEST(SimpDesign, StaleStateIsRejected) {
  const StructuredMesh m = grid(3, 3);
  SimpDesign a(m, 1.5, {});
  SimpDesign b(m, 1.5, {});
  const std::vector<double> theta(m.num_nodes(), 0.5);
  const SimpState s = a.evaluate(theta, std::nullopt);
  const std::vector<double> dCdE(m.num_elements(), -1.0);
  try {
    b.chain_sensitivity(s, dCdE);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidState);
  }
}
