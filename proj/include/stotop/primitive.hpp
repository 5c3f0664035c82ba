#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "stotop/mesh.hpp"

namespace stotop {

/// Rectangle primitive: center, half-lengths and rotation.
struct BarPrimitive {
  double x_c = 0.0;
  double y_c = 0.0;
  double a = 0.0;
  double b = 0.0;
  double alpha = 0.0;
};

inline constexpr int kBarParams = 5;

/// Per-parameter box in the order (x_c, y_c, a, b, alpha).
struct BarBounds {
  std::array<double, kBarParams> lower{0.0, 0.0, 0.0, 0.0, 0.0};
  std::array<double, kBarParams> upper{3.0, 1.0, 3.15, 0.1, 3.14159265358979323846};
};

struct PrimitiveParams {
  double mu = 10.0;
  double beta_ks = -20.0;
  double lambda_reg = 0.001;
  /// Heaviside bandwidth of the ersatz map; non-positive means one element edge.
  double beta_h = 0.0;
  double rho_void = 1e-9;
  /// Amplitude of the uniform geometric perturbation.
  double perturbation = 0.005;
};

/// (x~, y~) in the bar frame.
std::pair<double, double> local_coords(const BarPrimitive& bar, double x, double y);

/// (|x~/a|^mu + |y~/b|^mu)^(1/mu) - 1; +infinity for an empty bar (a or b zero).
double rect_levelset(const BarPrimitive& bar, double x, double y, double mu);

/// (1/beta) ln sum exp(beta phi_r), beta < 0; infinite entries carry no weight.
double ks_aggregate(std::span<const double> phi, double beta_ks);

/// rho_void + (1 - rho_void) (1 - tanh(phi / beta_h)) / 2.
double phi_to_density(double phi, double beta_h, double rho_void);
double phi_to_density_derivative(double phi, double beta_h, double rho_void);

std::vector<BarPrimitive> unpack_bars(std::span<const double> params);
std::vector<double> pack_bars(std::span<const BarPrimitive> bars);

struct RealizedGeometry {
  std::vector<double> params;
  /// 1 where the realized parameter is strictly inside its bounds, 0 where clamped.
  std::vector<double> active;
};

/// params = clamp(theta + perturbation * xi).
RealizedGeometry realize_geometry(std::span<const double> theta, std::span<const double> xi, const BarBounds& bounds,
                                  double perturbation);

/// lambda sum(a^2 + b^2) over the design vector, with its gradient.
std::pair<double, std::vector<double>> regularization(std::span<const double> theta, double lambda_reg);

/// Element densities and their parameter Jacobian for one realized geometry.
struct PrimitiveField {
  std::vector<double> rho;
  /// Row-major num_elements x num_params.
  std::vector<double> drho_dp;
  std::size_t num_params = 0;
};

/// Ersatz density map of a bar assembly on a fixed 2D grid, sampled at element centroids.
/// The KS-aggregated level set is rescaled by its spatial gradient norm before the
/// Heaviside so that the transition width is one bandwidth in physical length.
class PrimitiveDesign {
 public:
  PrimitiveDesign(StructuredMesh mesh, std::size_t num_bars, PrimitiveParams params, BarBounds bounds = {});

  const StructuredMesh& mesh() const { return mesh_; }
  const PrimitiveParams& params() const { return params_; }
  const BarBounds& bounds() const { return bounds_; }
  std::size_t num_bars() const { return num_bars_; }
  std::size_t num_variables() const { return num_bars_ * kBarParams; }
  double beta_h() const { return beta_h_; }

  PrimitiveField evaluate(std::span<const double> realized_params, bool with_jacobian = true) const;
  /// Same map at arbitrary sample points.
  PrimitiveField evaluate_at(std::span<const std::array<double, 2>> points, std::span<const double> realized_params,
                             bool with_jacobian = true) const;

  /// dC/dtheta = active * (drho/dp)^T dC/drho.
  std::vector<double> geometry_sensitivities(const PrimitiveField& field, const RealizedGeometry& geometry,
                                             std::span<const double> dC_drho) const;

  /// Lower/upper box for the full design vector.
  std::pair<std::vector<double>, std::vector<double>> variable_bounds() const;

 private:
  StructuredMesh mesh_;
  std::size_t num_bars_;
  PrimitiveParams params_;
  BarBounds bounds_;
  double beta_h_;
  std::vector<std::array<double, 2>> centroids_;
};

}  // namespace stotop
