#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "stotop/mesh.hpp"

namespace stotop {

struct ElasticMaterial {
  double E0 = 1.0;
  double nu = 0.3;
};

enum class ElementKind { Quad4PlaneStress, Hex8 };

/// Unit-modulus element stiffness k0 (so that k_e = E_e * k0), 2x2(x2) Gauss rule.
Eigen::MatrixXd element_stiffness_template(const ElasticMaterial& material, double h, ElementKind kind);

struct PointLoad {
  std::size_t node = 0;
  std::array<double, 3> force{0.0, 0.0, 0.0};
};

struct BoundaryConditions {
  std::vector<std::size_t> fixed_dofs;
  std::vector<PointLoad> loads;
  /// Soft spring added to every free diagonal dof.
  double spring = 0.0;
};

struct FemSolution {
  Eigen::VectorXd u;
  double compliance = 0.0;
  /// u_e^T k_e u_e per element.
  std::vector<double> element_energies;
  /// u_e^T k0 u_e per element; dC/dE_e is its negative.
  std::vector<double> unit_energies;
  /// k_spring * |u_free|^2.
  double spring_energy = 0.0;
  std::size_t num_elements = 0;
  int pcg_iterations = 0;
};

enum class LinearSolverKind { Auto, Direct, Pcg };

struct SolverOptions {
  LinearSolverKind kind = LinearSolverKind::Auto;
  double pcg_tolerance = 1e-9;
  /// PCG iteration cap as a multiple of the dof count.
  int pcg_max_iter_factor = 10;
};

class FemWorkspace;

/// Immutable assembly data for one mesh; safe to share across threads.
class FemSystem {
 public:
  FemSystem(StructuredMesh mesh, ElasticMaterial material, SolverOptions options = {});

  const StructuredMesh& mesh() const { return mesh_; }
  const ElasticMaterial& material() const { return material_; }
  const Eigen::MatrixXd& k0() const { return k0_; }
  const SolverOptions& options() const { return options_; }
  bool uses_direct_solver() const;

  Eigen::SparseMatrix<double> assemble(std::span<const double> moduli, const BoundaryConditions& bcs) const;
  Eigen::VectorXd load_vector(const BoundaryConditions& bcs) const;

  FemSolution solve(std::span<const double> moduli, const BoundaryConditions& bcs, FemWorkspace& ws) const;
  FemSolution solve(std::span<const double> moduli, const BoundaryConditions& bcs) const;

  std::unique_ptr<FemWorkspace> make_workspace() const;

 private:
  friend class FemWorkspace;
  void fill_values(std::span<const double> moduli, const BoundaryConditions& bcs,
                   Eigen::SparseMatrix<double>& K) const;

  StructuredMesh mesh_;
  ElasticMaterial material_;
  SolverOptions options_;
  Eigen::MatrixXd k0_;
  Eigen::SparseMatrix<double> pattern_;
  std::vector<int> element_slots_;  // per element, dpe*dpe value indices into pattern_
  std::vector<int> diagonal_slots_;
};

/// Per-thread scratch: matrix storage and a factorization with cached symbolic analysis.
class FemWorkspace {
 public:
  explicit FemWorkspace(const FemSystem& system);
  ~FemWorkspace();
  FemWorkspace(const FemWorkspace&) = delete;
  FemWorkspace& operator=(const FemWorkspace&) = delete;

 private:
  friend class FemSystem;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot convenience: assembles and solves with a temporary workspace.
FemSolution solve(const StructuredMesh& mesh, std::span<const double> element_moduli, const BoundaryConditions& bcs,
                  const ElasticMaterial& material = {}, SolverOptions options = {});

/// dC/dE_e = -u_e^T k0 u_e.
std::vector<double> compliance_modulus_sensitivity(const FemSolution& solution, const StructuredMesh& mesh);

}  // namespace stotop
