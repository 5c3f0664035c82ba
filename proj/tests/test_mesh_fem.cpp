#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "stotop/error.hpp"
#include "stotop/fem.hpp"
#include "test_util.hpp"

using namespace stotop;

namespace {

BoundaryConditions cantilever_bcs(const StructuredMesh& m, double tip_load) {
  BoundaryConditions bc;
  for (int j = 0; j <= m.dims()[1]; ++j) {
    bc.fixed_dofs.push_back(m.node_index(0, j) * 2);
    bc.fixed_dofs.push_back(m.node_index(0, j) * 2 + 1);
  }
  bc.loads.push_back({m.node_index(m.dims()[0], m.dims()[1] / 2), {0.0, tip_load, 0.0}});
  return bc;
}

}  // namespace

TEST(StructuredMesh, Counts) {
  const std::vector<int> a{1, 1}, b{3, 1}, c{2, 2, 2};
  EXPECT_EQ(build_structured_mesh(a, 1.0).num_nodes(), 4u);
  EXPECT_EQ(build_structured_mesh(a, 1.0).num_elements(), 1u);
  EXPECT_EQ(build_structured_mesh(b, 0.5).num_nodes(), 8u);
  EXPECT_EQ(build_structured_mesh(b, 0.5).num_elements(), 3u);
  EXPECT_EQ(build_structured_mesh(c, 1.0).num_nodes(), 27u);
  EXPECT_EQ(build_structured_mesh(c, 1.0).num_elements(), 8u);
}

TEST(StructuredMesh, RejectsBadInput) {
  const std::vector<int> zero{0, 2}, neg{2, -1}, one_axis{3};
  EXPECT_THROW(build_structured_mesh(zero, 1.0), Error);
  EXPECT_THROW(build_structured_mesh(neg, 1.0), Error);
  EXPECT_THROW(build_structured_mesh(one_axis, 1.0), Error);
  const std::vector<int> ok{2, 2};
  EXPECT_THROW(build_structured_mesh(ok, 0.0), Error);
}

TEST(StructuredMesh, ConnectivityIsCounterClockwise) {
  const std::vector<int> d{3, 2};
  StructuredMesh m(d, 0.5);
  const auto nodes = m.element_nodes(m.element_index(1, 1));
  const auto c0 = m.node_coord(nodes[0]);
  const auto c2 = m.node_coord(nodes[2]);
  EXPECT_DOUBLE_EQ(c0[0], 0.5);
  EXPECT_DOUBLE_EQ(c0[1], 0.5);
  EXPECT_DOUBLE_EQ(c2[0], 1.0);
  EXPECT_DOUBLE_EQ(c2[1], 1.0);
  const auto cen = m.element_centroid(m.element_index(1, 1));
  EXPECT_DOUBLE_EQ(cen[0], 0.75);
}

TEST(ElementStiffness, SymmetricWithRigidBodyNullspace) {
  for (auto kind : {ElementKind::Quad4PlaneStress, ElementKind::Hex8}) {
    const Eigen::MatrixXd k = element_stiffness_template({1.0, 0.3}, 0.7, kind);
    EXPECT_LT((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-14 * k.cwiseAbs().maxCoeff());
    const int d = kind == ElementKind::Hex8 ? 3 : 2;
    for (int c = 0; c < d; ++c) {
      Eigen::VectorXd t = Eigen::VectorXd::Zero(k.rows());
      for (int a = 0; a < k.rows() / d; ++a) t[a * d + c] = 1.0;
      EXPECT_LT((k * t).norm(), 1e-12);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
    const auto& ev = es.eigenvalues();
    const int expected_zero = d == 2 ? 3 : 6;
    int zeros = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      EXPECT_GT(ev[i], -1e-12);
      if (std::abs(ev[i]) < 1e-10 * ev.maxCoeff()) ++zeros;
    }
    EXPECT_EQ(zeros, expected_zero);
  }
}

TEST(ElementStiffness, RejectsPoissonOutOfRange) {
  EXPECT_THROW(element_stiffness_template({1.0, 0.5}, 1.0, ElementKind::Quad4PlaneStress), Error);
  EXPECT_THROW(element_stiffness_template({1.0, -1.0}, 1.0, ElementKind::Hex8), Error);
}

// Uniaxial tension on a 3x2 patch: plane-stress analytic field u_x = sigma x / E, u_y = -nu sigma y / E.
TEST(ElementStiffness, UniaxialPatchTest) {
  const std::vector<int> d{3, 2};
  StructuredMesh m(d, 1.0);
  const double sigma = 2.0, E = 1.0, nu = 0.3;
  BoundaryConditions bc;
  for (int j = 0; j <= 2; ++j) bc.fixed_dofs.push_back(m.node_index(0, j) * 2);
  bc.fixed_dofs.push_back(m.node_index(0, 0) * 2 + 1);
  for (int j = 0; j <= 2; ++j) {
    const double w = (j == 0 || j == 2) ? 0.5 : 1.0;
    bc.loads.push_back({m.node_index(3, j), {sigma * w, 0.0, 0.0}});
  }
  std::vector<double> moduli(m.num_elements(), E);
  const FemSolution sol = solve(m, moduli, bc, {E, nu});
  for (std::size_t n = 0; n < m.num_nodes(); ++n) {
    const auto x = m.node_coord(n);
    EXPECT_NEAR(sol.u[2 * n], sigma * x[0] / E, 1e-10);
    EXPECT_NEAR(sol.u[2 * n + 1], -nu * sigma * x[1] / E, 1e-10);
  }
}

TEST(FemSolve, ZeroLoadGivesZeroField) {
  const std::vector<int> d{4, 3};
  StructuredMesh m(d, 1.0);
  BoundaryConditions bc = cantilever_bcs(m, 0.0);
  std::vector<double> moduli(m.num_elements(), 1.0);
  const FemSolution sol = solve(m, moduli, bc);
  EXPECT_EQ(sol.compliance, 0.0);
  EXPECT_EQ(sol.u.norm(), 0.0);
  for (double s : compliance_modulus_sensitivity(sol, m)) EXPECT_EQ(s, 0.0);
}

TEST(FemSolve, ComplianceScalesInverselyWithModulus) {
  const std::vector<int> d{6, 3};
  StructuredMesh m(d, 1.0);
  BoundaryConditions bc = cantilever_bcs(m, -1.0);
  auto moduli = test::random_vector(m.num_elements(), 0.2, 1.0, 3);
  const double c1 = solve(m, moduli, bc).compliance;
  for (auto& e : moduli) e *= 4.0;
  const double c4 = solve(m, moduli, bc).compliance;
  EXPECT_GT(c1, 0.0);
  EXPECT_NEAR(c4, c1 / 4.0, 1e-12 * c1);
}

// Euler-Bernoulli PL^3/3EI; the Q4 element with shear is within 15%.
TEST(FemSolve, CantileverMatchesBeamTheory) {
  const std::vector<int> d{16, 4};
  StructuredMesh m(d, 1.0);
  BoundaryConditions bc = cantilever_bcs(m, -1.0);
  std::vector<double> moduli(m.num_elements(), 1.0);
  const FemSolution sol = solve(m, moduli, bc, {1.0, 0.3});
  const double L = 16.0, H = 4.0, I = H * H * H / 12.0;
  const double beam = L * L * L / (3.0 * I);
  const double tip = -sol.u[2 * m.node_index(16, 2) + 1];
  EXPECT_NEAR(tip / beam, 1.0, 0.15) << "tip " << tip << " beam " << beam;
}

TEST(FemSolve, SensitivityMatchesFiniteDifference) {
  const std::vector<int> d{6, 3};
  StructuredMesh m(d, 1.0);
  BoundaryConditions bc = cantilever_bcs(m, -1.0);
  bc.loads.push_back({m.node_index(3, 3), {0.4, -0.2, 0.0}});
  FemSystem sys(m, {});
  const auto moduli = test::random_vector(m.num_elements(), 0.1, 1.0, 11);
  const auto sens = compliance_modulus_sensitivity(sys.solve(moduli, bc), m);
  auto C = [&](const std::vector<double>& E) { return sys.solve(E, bc).compliance; };
  for (std::size_t e = 0; e < m.num_elements(); ++e) {
    const double fd = test::central_difference(C, moduli, e, 1e-6 * moduli[e]);
    EXPECT_LT(test::relative_error(sens[e], fd), 1e-5) << "element " << e;
    EXPECT_LE(sens[e], 0.0);
  }
}

TEST(FemSolve, EulerIdentityWithAndWithoutSprings) {
  const std::vector<int> d{5, 4};
  StructuredMesh m(d, 0.5);
  const auto moduli = test::random_vector(m.num_elements(), 0.05, 1.0, 5);
  for (double spring : {0.0, 1e-3}) {
    BoundaryConditions bc = cantilever_bcs(m, -1.0);
    bc.spring = spring;
    const FemSolution sol = solve(m, moduli, bc);
    const auto sens = compliance_modulus_sensitivity(sol, m);
    double s = 0.0;
    for (std::size_t e = 0; e < sens.size(); ++e) s += moduli[e] * sens[e];
    EXPECT_NEAR(s, -sol.compliance + sol.spring_energy, 1e-8 * sol.compliance);
    if (spring == 0.0) EXPECT_EQ(sol.spring_energy, 0.0);
  }
}

TEST(FemSolve, SpringsStiffenTheStructure) {
  const std::vector<int> d{6, 2};
  StructuredMesh m(d, 1.0);
  const auto moduli = test::random_vector(m.num_elements(), 0.1, 1.0, 8);
  BoundaryConditions bc = cantilever_bcs(m, -1.0);
  const double c0 = solve(m, moduli, bc).compliance;
  bc.spring = 1e-3;
  const double c1 = solve(m, moduli, bc).compliance;
  EXPECT_LT(c1, c0);
}

TEST(FemSolve, FreeFloatingBodyIsHeldBySprings) {
  const std::vector<int> d{4, 2};
  StructuredMesh m(d, 1.0);
  std::vector<double> moduli(m.num_elements(), 1.0);
  BoundaryConditions bc;
  bc.loads.push_back({m.node_index(4, 2), {0.0, -1.0, 0.0}});
  bc.loads.push_back({m.node_index(0, 0), {0.0, 1.0, 0.0}});
  EXPECT_THROW(solve(m, moduli, bc), Error);
  bc.spring = 1e-6;
  EXPECT_GT(solve(m, moduli, bc).compliance, 0.0);
}

TEST(FemSolve, DeterministicAndPcgAgreesWithDirect) {
  const std::vector<int> d{3, 3, 4};
  StructuredMesh m(d, 0.25);
  BoundaryConditions bc;
  for (int i = 0; i <= 3; ++i)
    for (int j = 0; j <= 3; ++j)
      for (int c = 0; c < 3; ++c) bc.fixed_dofs.push_back(m.node_index(i, j, 0) * 3 + c);
  bc.loads.push_back({m.node_index(1, 2, 4), {0.2, 0.1, -1.0}});
  const auto moduli = test::random_vector(m.num_elements(), 0.01, 1.0, 21);
  FemSystem direct(m, {}, {LinearSolverKind::Direct});
  FemSystem pcg(m, {}, {LinearSolverKind::Pcg});
  const FemSolution a = direct.solve(moduli, bc);
  const FemSolution b = direct.solve(moduli, bc);
  const FemSolution c = pcg.solve(moduli, bc);
  EXPECT_EQ(a.compliance, b.compliance);
  EXPECT_TRUE((a.u.array() == b.u.array()).all());
  EXPECT_NEAR(c.compliance, a.compliance, 1e-7 * a.compliance);
  EXPECT_GT(c.pcg_iterations, 0);
}

TEST(FemSolve, MismatchedInputsAreRejected) {
  const std::vector<int> d{2, 2};
  StructuredMesh m(d, 1.0);
  BoundaryConditions bc = cantilever_bcs(m, -1.0);
  std::vector<double> wrong(3, 1.0);
  EXPECT_THROW(solve(m, wrong, bc), Error);
  std::vector<double> moduli(m.num_elements(), 1.0);
  const FemSolution sol = solve(m, moduli, bc);
  const std::vector<int> d2{3, 2};
  EXPECT_THROW(compliance_modulus_sensitivity(sol, StructuredMesh(d2, 1.0)), Error);
}
