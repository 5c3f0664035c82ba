#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "stotop/mesh.hpp"

namespace stotop {

/// Linear cone filter from nodal variables to element-centroid densities,
/// w_ij = max(0, r - |x_i - x_j|), rows normalized. When no node lies inside
/// the radius the element's own corners are averaged.
class DensityFilter {
 public:
  DensityFilter() = default;
  DensityFilter(const StructuredMesh& mesh, double radius);

  double radius() const { return radius_; }
  std::size_t num_nodes() const { return static_cast<std::size_t>(W_.cols()); }
  std::size_t num_elements() const { return static_cast<std::size_t>(W_.rows()); }
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& matrix() const { return W_; }

  void apply(std::span<const double> theta, std::span<double> rho) const;
  std::vector<double> apply(std::span<const double> theta) const;
  /// d_theta = W^T d_rho.
  void apply_transpose(std::span<const double> d_rho, std::span<double> d_theta) const;

 private:
  double radius_ = 0.0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> W_;
};

struct ProjectionParams {
  double beta = 1.0;
  double nu = 0.5;
};

/// Smoothed Heaviside: (tanh(b nu) + tanh(b (rho - nu))) / (tanh(b nu) + tanh(b (1 - nu))).
double project(double rho, const ProjectionParams& p);
double project_derivative(double rho, const ProjectionParams& p);

/// Step schedule of the projection strength keyed on iteration number.
class ProjectionSchedule {
 public:
  ProjectionSchedule() = default;
  explicit ProjectionSchedule(std::vector<std::pair<int, double>> steps);
  /// Parses "0:5,400:20".
  static ProjectionSchedule parse(std::string_view text);

  double beta_at(int iteration) const;
  const std::vector<std::pair<int, double>>& steps() const { return steps_; }
  std::string to_string() const;

 private:
  std::vector<std::pair<int, double>> steps_;
};

struct SimpParams {
  double beta_simp = 3.0;
  double E0 = 1.0;
  double E_min = 1e-9;
};

/// E = E_min + rho_bar^p (E0 - E_min).
double simp_modulus(double rho_bar, const SimpParams& p);
double simp_modulus_derivative(double rho_bar, const SimpParams& p);

/// Cached forward pass of the density pipeline for one theta.
struct SimpState {
  std::uint64_t owner = 0;
  std::vector<double> theta;
  std::vector<double> rho;
  std::vector<double> rho_bar;
  std::vector<double> drho_bar;  // d rho_bar / d rho
  std::vector<double> moduli;
  std::vector<double> dmoduli;   // dE / d rho_bar
  std::optional<ProjectionParams> projection;
};

struct VolumeConstraint {
  double g = 0.0;
  double volume_fraction = 0.0;
  std::vector<double> gradient;
};

/// theta (nodal) -> filter -> projection -> SIMP modulus on one design mesh.
class SimpDesign {
 public:
  SimpDesign(StructuredMesh design_mesh, double filter_radius, SimpParams params);

  const StructuredMesh& mesh() const { return mesh_; }
  const DensityFilter& filter() const { return filter_; }
  const SimpParams& params() const { return params_; }
  std::size_t num_variables() const { return mesh_.num_nodes(); }
  std::size_t num_elements() const { return mesh_.num_elements(); }

  /// Projection is skipped when `projection` is empty.
  SimpState evaluate(std::span<const double> theta, std::optional<ProjectionParams> projection) const;

  /// dC/dtheta = F^T diag(drho_bar/drho) diag(dE/drho_bar) dC/dE.
  std::vector<double> chain_sensitivity(const SimpState& state, std::span<const double> dC_dE) const;
  /// Same chain without the modulus factor, for quantities defined on rho_bar.
  std::vector<double> density_chain(const SimpState& state, std::span<const double> d_drho_bar) const;

  /// g = sum(rho_bar v) / (f_v V) - 1.
  VolumeConstraint volume_constraint(const SimpState& state, double f_v) const;

 private:
  void check_state(const SimpState& state) const;

  StructuredMesh mesh_;
  DensityFilter filter_;
  SimpParams params_;
  std::uint64_t id_;
};

}  // namespace stotop
