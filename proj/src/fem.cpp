#include "stotop/fem.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <string>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/CholmodSupport>
#include <Eigen/SparseCholesky>

#include "stotop/error.hpp"

namespace stotop {

namespace {

constexpr std::size_t kAutoDirectDofLimit = 200000;
constexpr double kGauss = 0.57735026918962576451;  // 1/sqrt(3)

Eigen::MatrixXd plane_stress_matrix(const ElasticMaterial& m) {
  Eigen::Matrix3d D;
  const double c = 1.0 / (1.0 - m.nu * m.nu);
  D << 1.0, m.nu, 0.0, m.nu, 1.0, 0.0, 0.0, 0.0, 0.5 * (1.0 - m.nu);
  return c * D;
}

Eigen::MatrixXd solid_matrix(const ElasticMaterial& m) {
  const double lambda = m.nu / ((1.0 + m.nu) * (1.0 - 2.0 * m.nu));
  const double mu = 0.5 / (1.0 + m.nu);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(6, 6);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) D(i, j) = lambda;
    D(i, i) = lambda + 2.0 * mu;
    D(i + 3, i + 3) = mu;
  }
  return D;
}

Eigen::MatrixXd quad4_template(const ElasticMaterial& m, double h) {
  static constexpr double xi_n[4] = {-1, 1, 1, -1};
  static constexpr double eta_n[4] = {-1, -1, 1, 1};
  const Eigen::MatrixXd D = plane_stress_matrix(m);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(8, 8);
  const double jac = 0.5 * h;
  for (double gx : {-kGauss, kGauss}) {
    for (double gy : {-kGauss, kGauss}) {
      Eigen::MatrixXd B = Eigen::MatrixXd::Zero(3, 8);
      for (int a = 0; a < 4; ++a) {
        const double dx = 0.25 * xi_n[a] * (1.0 + eta_n[a] * gy) / jac;
        const double dy = 0.25 * eta_n[a] * (1.0 + xi_n[a] * gx) / jac;
        B(0, 2 * a) = dx;
        B(1, 2 * a + 1) = dy;
        B(2, 2 * a) = dy;
        B(2, 2 * a + 1) = dx;
      }
      k += B.transpose() * D * B * (jac * jac);
    }
  }
  return k;
}

Eigen::MatrixXd hex8_template(const ElasticMaterial& m, double h) {
  static constexpr double xi_n[8] = {-1, 1, 1, -1, -1, 1, 1, -1};
  static constexpr double eta_n[8] = {-1, -1, 1, 1, -1, -1, 1, 1};
  static constexpr double zeta_n[8] = {-1, -1, -1, -1, 1, 1, 1, 1};
  const Eigen::MatrixXd D = solid_matrix(m);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(24, 24);
  const double jac = 0.5 * h;
  for (double gx : {-kGauss, kGauss}) {
    for (double gy : {-kGauss, kGauss}) {
      for (double gz : {-kGauss, kGauss}) {
        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(6, 24);
        for (int a = 0; a < 8; ++a) {
          const double dx = 0.125 * xi_n[a] * (1.0 + eta_n[a] * gy) * (1.0 + zeta_n[a] * gz) / jac;
          const double dy = 0.125 * eta_n[a] * (1.0 + xi_n[a] * gx) * (1.0 + zeta_n[a] * gz) / jac;
          const double dz = 0.125 * zeta_n[a] * (1.0 + xi_n[a] * gx) * (1.0 + eta_n[a] * gy) / jac;
          B(0, 3 * a) = dx;
          B(1, 3 * a + 1) = dy;
          B(2, 3 * a + 2) = dz;
          B(3, 3 * a) = dy;
          B(3, 3 * a + 1) = dx;
          B(4, 3 * a + 1) = dz;
          B(4, 3 * a + 2) = dy;
          B(5, 3 * a) = dz;
          B(5, 3 * a + 2) = dx;
        }
        k += B.transpose() * D * B * (jac * jac * jac);
      }
    }
  }
  return k;
}

}  // namespace

Eigen::MatrixXd element_stiffness_template(const ElasticMaterial& material, double h, ElementKind kind) {
  require(material.nu > -1.0 && material.nu < 0.5, "Poisson ratio must lie in (-1, 0.5)");
  require(material.E0 > 0.0, "Young's modulus must be positive");
  require(h > 0.0, "element edge length must be positive");
  Eigen::MatrixXd k = kind == ElementKind::Hex8 ? hex8_template(material, h) : quad4_template(material, h);
  return 0.5 * (k + k.transpose());
}

// ---------------------------------------------------------------------------

struct FemWorkspace::Impl {
  Eigen::SparseMatrix<double> K;
  Eigen::CholmodSupernodalLLT<Eigen::SparseMatrix<double>, Eigen::Lower> llt;
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                           Eigen::DiagonalPreconditioner<double>>
      cg;
  bool analyzed = false;
  std::vector<char> fixed;
};

FemWorkspace::FemWorkspace(const FemSystem& system) : impl_(std::make_unique<Impl>()) {
  impl_->K = system.pattern_;
  impl_->llt.cholmod().print = 0;
  impl_->fixed.assign(system.mesh_.num_dofs(), 0);
}

FemWorkspace::~FemWorkspace() = default;

FemSystem::FemSystem(StructuredMesh mesh, ElasticMaterial material, SolverOptions options)
    : mesh_(std::move(mesh)), material_(material), options_(options) {
  require(mesh_.num_elements() > 0, "empty mesh");
  k0_ = element_stiffness_template(material_, mesh_.h(),
                                   mesh_.dim() == 2 ? ElementKind::Quad4PlaneStress : ElementKind::Hex8);

  const int dpe = mesh_.dofs_per_element();
  const auto ndof = static_cast<Eigen::Index>(mesh_.num_dofs());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh_.num_elements() * dpe * dpe + mesh_.num_dofs());
  std::vector<std::size_t> dofs(dpe);
  for (std::size_t e = 0; e < mesh_.num_elements(); ++e) {
    mesh_.element_dofs(e, dofs);
    for (int a = 0; a < dpe; ++a)
      for (int b = 0; b < dpe; ++b)
        trips.emplace_back(static_cast<int>(dofs[a]), static_cast<int>(dofs[b]), 0.0);
  }
  for (Eigen::Index i = 0; i < ndof; ++i) trips.emplace_back(static_cast<int>(i), static_cast<int>(i), 0.0);
  pattern_.resize(ndof, ndof);
  pattern_.setFromTriplets(trips.begin(), trips.end());
  pattern_.makeCompressed();

  auto slot = [&](std::size_t row, std::size_t col) {
    const int* outer = pattern_.outerIndexPtr();
    const int* inner = pattern_.innerIndexPtr();
    const int* begin = inner + outer[col];
    const int* end = inner + outer[col + 1];
    const int* it = std::lower_bound(begin, end, static_cast<int>(row));
    return static_cast<int>(it - inner);
  };

  element_slots_.resize(mesh_.num_elements() * dpe * dpe);
  for (std::size_t e = 0; e < mesh_.num_elements(); ++e) {
    mesh_.element_dofs(e, dofs);
    int* s = &element_slots_[e * dpe * dpe];
    for (int a = 0; a < dpe; ++a)
      for (int b = 0; b < dpe; ++b) s[a * dpe + b] = slot(dofs[a], dofs[b]);
  }
  diagonal_slots_.resize(mesh_.num_dofs());
  for (std::size_t i = 0; i < mesh_.num_dofs(); ++i) diagonal_slots_[i] = slot(i, i);
}

bool FemSystem::uses_direct_solver() const {
  switch (options_.kind) {
    case LinearSolverKind::Direct:
      return true;
    case LinearSolverKind::Pcg:
      return false;
    case LinearSolverKind::Auto:
      break;
  }
  return mesh_.num_dofs() <= kAutoDirectDofLimit;
}

void FemSystem::fill_values(std::span<const double> moduli, const BoundaryConditions& bcs,
                            Eigen::SparseMatrix<double>& K) const {
  require(moduli.size() == mesh_.num_elements(), "element modulus count does not match mesh");
  require(bcs.spring >= 0.0, "spring constant must be non-negative");
  std::vector<char> fixed(mesh_.num_dofs(), 0);
  for (std::size_t d : bcs.fixed_dofs) {
    require(d < mesh_.num_dofs(), "fixed dof out of range");
    fixed[d] = 1;
  }
  std::vector<std::size_t> dofs(mesh_.dofs_per_element());
  const int dpe = mesh_.dofs_per_element();
  double* val = K.valuePtr();
  std::fill(val, val + K.nonZeros(), 0.0);
  for (std::size_t e = 0; e < mesh_.num_elements(); ++e) {
    const double E = moduli[e];
    require(std::isfinite(E) && E > 0.0, "element moduli must be positive and finite");
    mesh_.element_dofs(e, dofs);
    const int* s = &element_slots_[e * dpe * dpe];
    for (int a = 0; a < dpe; ++a) {
      if (fixed[dofs[a]]) continue;
      for (int b = 0; b < dpe; ++b) {
        if (fixed[dofs[b]]) continue;
        val[s[a * dpe + b]] += E * k0_(a, b);
      }
    }
  }
  for (std::size_t i = 0; i < mesh_.num_dofs(); ++i) {
    if (fixed[i])
      val[diagonal_slots_[i]] = 1.0;
    else
      val[diagonal_slots_[i]] += bcs.spring;
  }
}

Eigen::SparseMatrix<double> FemSystem::assemble(std::span<const double> moduli, const BoundaryConditions& bcs) const {
  Eigen::SparseMatrix<double> K = pattern_;
  fill_values(moduli, bcs, K);
  return K;
}

Eigen::VectorXd FemSystem::load_vector(const BoundaryConditions& bcs) const {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh_.num_dofs()));
  const auto d = static_cast<std::size_t>(mesh_.dim());
  for (const PointLoad& p : bcs.loads) {
    require(p.node < mesh_.num_nodes(), "load node out of range");
    for (std::size_t c = 0; c < d; ++c) f[static_cast<Eigen::Index>(p.node * d + c)] += p.force[c];
  }
  for (std::size_t dof : bcs.fixed_dofs) f[static_cast<Eigen::Index>(dof)] = 0.0;
  return f;
}

FemSolution FemSystem::solve(std::span<const double> moduli, const BoundaryConditions& bcs, FemWorkspace& ws) const {
  auto& impl = *ws.impl_;
  fill_values(moduli, bcs, impl.K);
  const Eigen::VectorXd f = load_vector(bcs);

  FemSolution sol;
  sol.num_elements = mesh_.num_elements();
  if (f.squaredNorm() == 0.0) {
    sol.u = Eigen::VectorXd::Zero(f.size());
  } else if (uses_direct_solver()) {
    if (!impl.analyzed) {
      // The fill-reducing ordering may call METIS, whose RNG state is process-global.
      static std::mutex analyze_mutex;
      std::lock_guard lock(analyze_mutex);
      impl.llt.analyzePattern(impl.K);
      impl.analyzed = true;
    }
    impl.llt.factorize(impl.K);
    if (impl.llt.info() != Eigen::Success)
      fail(ErrorCode::SolverFailure, "stiffness matrix is not positive definite (Cholesky failed)");
    sol.u = impl.llt.solve(f);
  } else {
    impl.cg.setTolerance(options_.pcg_tolerance);
    impl.cg.setMaxIterations(options_.pcg_max_iter_factor * static_cast<int>(mesh_.num_dofs()));
    impl.cg.compute(impl.K);
    sol.u = impl.cg.solve(f);
    sol.pcg_iterations = static_cast<int>(impl.cg.iterations());
    if (impl.cg.info() != Eigen::Success)
      fail(ErrorCode::SolverFailure,
           "PCG did not converge: relative residual " + std::to_string(impl.cg.error()));
  }
  if (!sol.u.allFinite()) fail(ErrorCode::SolverFailure, "non-finite displacement field");

  sol.compliance = f.dot(sol.u);
  const int dpe = mesh_.dofs_per_element();
  std::vector<std::size_t> dofs(dpe);
  Eigen::VectorXd ue(dpe);
  sol.unit_energies.resize(mesh_.num_elements());
  sol.element_energies.resize(mesh_.num_elements());
  for (std::size_t e = 0; e < mesh_.num_elements(); ++e) {
    mesh_.element_dofs(e, dofs);
    for (int a = 0; a < dpe; ++a) ue[a] = sol.u[static_cast<Eigen::Index>(dofs[a])];
    const double w = ue.dot(k0_ * ue);
    sol.unit_energies[e] = w;
    sol.element_energies[e] = moduli[e] * w;
  }
  if (bcs.spring > 0.0) {
    std::vector<char> fixed(mesh_.num_dofs(), 0);
    for (std::size_t d : bcs.fixed_dofs) fixed[d] = 1;
    double s = 0.0;
    for (std::size_t i = 0; i < mesh_.num_dofs(); ++i)
      if (!fixed[i]) s += sol.u[static_cast<Eigen::Index>(i)] * sol.u[static_cast<Eigen::Index>(i)];
    sol.spring_energy = bcs.spring * s;
  }
  return sol;
}

FemSolution FemSystem::solve(std::span<const double> moduli, const BoundaryConditions& bcs) const {
  FemWorkspace ws(*this);
  return solve(moduli, bcs, ws);
}

std::unique_ptr<FemWorkspace> FemSystem::make_workspace() const { return std::make_unique<FemWorkspace>(*this); }

FemSolution solve(const StructuredMesh& mesh, std::span<const double> element_moduli, const BoundaryConditions& bcs,
                  const ElasticMaterial& material, SolverOptions options) {
  FemSystem system(mesh, material, options);
  return system.solve(element_moduli, bcs);
}

std::vector<double> compliance_modulus_sensitivity(const FemSolution& solution, const StructuredMesh& mesh) {
  require(solution.num_elements == mesh.num_elements() && solution.unit_energies.size() == mesh.num_elements(),
          "solution does not belong to this mesh");
  std::vector<double> d(solution.unit_energies.size());
  for (std::size_t e = 0; e < d.size(); ++e) d[e] = -solution.unit_energies[e];
  return d;
}

}  // namespace stotop
