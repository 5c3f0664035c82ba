#include "stotop/primitive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dual.hpp"
#include "stotop/error.hpp"

namespace stotop {

namespace {

using D5 = detail::Dual<kBarParams>;

template <class T>
struct BarField {
  T phi;
  T gx;  // spatial gradient of phi
  T gy;
};

template <class T>
T sign_of(const T& x) {
  return T(detail::value_of(x) < 0.0 ? -1.0 : 1.0);
}

// Superellipse level set evaluated in a scaled form: with m = max(u, v) the
// powers of u/m and v/m stay in [0, 1], so nothing overflows near or far from the bar.
template <class T>
BarField<T> bar_field(const T& xc, const T& yc, const T& a, const T& b, const T& alpha, double x, double y, double mu) {
  using std::abs;
  using std::cos;
  using std::pow;
  using std::sin;
  const T c = cos(alpha);
  const T s = sin(alpha);
  const T dx = T(x) - xc;
  const T dy = T(y) - yc;
  const T xt = c * dx + s * dy;
  const T yt = c * dy - s * dx;
  const T u = abs(xt) / a;
  const T v = abs(yt) / b;
  const T m = detail::value_of(u) >= detail::value_of(v) ? u : v;
  if (detail::value_of(m) == 0.0) return {T(-1.0), T(0.0), T(0.0)};
  const T up = u / m;
  const T vp = v / m;
  const T S = pow(up, mu) + pow(vp, mu);
  const T phi = m * pow(S, 1.0 / mu) - 1.0;
  const T k = pow(S, 1.0 / mu - 1.0);
  const T px = k * pow(up, mu - 1.0) * sign_of(xt) / a;
  const T py = k * pow(vp, mu - 1.0) * sign_of(yt) / b;
  return {phi, c * px - s * py, s * px + c * py};
}

bool empty_bar(const double* p) { return !(p[2] > 0.0) || !(p[3] > 0.0); }

// Floor on the normalizing gradient norm, in inverse length units.
constexpr double kGradientFloor = 1e-6;

}  // namespace

std::pair<double, double> local_coords(const BarPrimitive& bar, double x, double y) {
  const double c = std::cos(bar.alpha), s = std::sin(bar.alpha);
  const double dx = x - bar.x_c, dy = y - bar.y_c;
  return {c * dx + s * dy, c * dy - s * dx};
}

double rect_levelset(const BarPrimitive& bar, double x, double y, double mu) {
  if (!(bar.a > 0.0) || !(bar.b > 0.0)) return std::numeric_limits<double>::infinity();
  return bar_field<double>(bar.x_c, bar.y_c, bar.a, bar.b, bar.alpha, x, y, mu).phi;
}

double ks_aggregate(std::span<const double> phi, double beta_ks) {
  require(beta_ks < 0.0, "KS parameter must be negative");
  double m = std::numeric_limits<double>::infinity();
  for (double p : phi) m = std::min(m, p);
  require(std::isfinite(m), "all primitives are empty", ErrorCode::DomainVoid);
  double sum = 0.0;
  for (double p : phi)
    if (std::isfinite(p)) sum += std::exp(beta_ks * (p - m));
  return m + std::log(sum) / beta_ks;
}

double phi_to_density(double phi, double beta_h, double rho_void) {
  return rho_void + (1.0 - rho_void) * 0.5 * (1.0 - std::tanh(phi / beta_h));
}

double phi_to_density_derivative(double phi, double beta_h, double rho_void) {
  const double t = std::tanh(phi / beta_h);
  return -(1.0 - rho_void) * 0.5 * (1.0 - t * t) / beta_h;
}

std::vector<BarPrimitive> unpack_bars(std::span<const double> params) {
  require(params.size() % kBarParams == 0, "bar parameter vector length must be a multiple of 5");
  std::vector<BarPrimitive> bars(params.size() / kBarParams);
  for (std::size_t r = 0; r < bars.size(); ++r) {
    const double* p = params.data() + r * kBarParams;
    bars[r] = {p[0], p[1], p[2], p[3], p[4]};
  }
  return bars;
}

std::vector<double> pack_bars(std::span<const BarPrimitive> bars) {
  std::vector<double> out;
  out.reserve(bars.size() * kBarParams);
  for (const auto& b : bars) out.insert(out.end(), {b.x_c, b.y_c, b.a, b.b, b.alpha});
  return out;
}

RealizedGeometry realize_geometry(std::span<const double> theta, std::span<const double> xi, const BarBounds& bounds,
                                  double perturbation) {
  require(theta.size() % kBarParams == 0, "bar parameter vector length must be a multiple of 5");
  require(xi.size() == theta.size(), "perturbation vector length does not match design length");
  RealizedGeometry g;
  g.params.resize(theta.size());
  g.active.resize(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const int c = static_cast<int>(i % kBarParams);
    const double raw = theta[i] + perturbation * xi[i];
    g.params[i] = std::clamp(raw, bounds.lower[c], bounds.upper[c]);
    g.active[i] = (raw >= bounds.lower[c] && raw <= bounds.upper[c]) ? 1.0 : 0.0;
  }
  return g;
}

std::pair<double, std::vector<double>> regularization(std::span<const double> theta, double lambda_reg) {
  require(theta.size() % kBarParams == 0, "bar parameter vector length must be a multiple of 5");
  double value = 0.0;
  std::vector<double> grad(theta.size(), 0.0);
  for (std::size_t r = 0; r < theta.size() / kBarParams; ++r) {
    const double a = theta[r * kBarParams + 2], b = theta[r * kBarParams + 3];
    value += lambda_reg * (a * a + b * b);
    grad[r * kBarParams + 2] = 2.0 * lambda_reg * a;
    grad[r * kBarParams + 3] = 2.0 * lambda_reg * b;
  }
  return {value, grad};
}

PrimitiveDesign::PrimitiveDesign(StructuredMesh mesh, std::size_t num_bars, PrimitiveParams params, BarBounds bounds)
    : mesh_(std::move(mesh)), num_bars_(num_bars), params_(params), bounds_(bounds) {
  require(mesh_.dim() == 2, "primitive designs need a 2D mesh");
  require(num_bars_ >= 1, "at least one bar is required");
  require(params_.beta_ks < 0.0, "KS parameter must be negative");
  require(params_.mu >= 2.0, "corner exponent must be at least 2");
  require(params_.rho_void > 0.0 && params_.rho_void < 1.0, "void density must lie in (0,1)");
  require(params_.lambda_reg >= 0.0, "regularization weight must be non-negative");
  for (int c = 0; c < kBarParams; ++c) require(bounds_.lower[c] <= bounds_.upper[c], "bar bounds are inverted");
  beta_h_ = params_.beta_h > 0.0 ? params_.beta_h : mesh_.h();
  centroids_.resize(mesh_.num_elements());
  for (std::size_t e = 0; e < centroids_.size(); ++e) {
    const auto c = mesh_.element_centroid(e);
    centroids_[e] = {c[0], c[1]};
  }
}

PrimitiveField PrimitiveDesign::evaluate(std::span<const double> realized_params, bool with_jacobian) const {
  return evaluate_at(centroids_, realized_params, with_jacobian);
}

PrimitiveField PrimitiveDesign::evaluate_at(std::span<const std::array<double, 2>> points,
                                            std::span<const double> realized_params, bool with_jacobian) const {
  require(realized_params.size() == num_variables(), "bar parameter vector length does not match bar count");
  const std::size_t nb = num_bars_, np = num_variables();
  bool any = false;
  for (std::size_t r = 0; r < nb; ++r) any = any || !empty_bar(realized_params.data() + r * kBarParams);
  require(any, "all primitives are empty", ErrorCode::DomainVoid);

  PrimitiveField out;
  out.num_params = np;
  out.rho.resize(points.size());
  if (with_jacobian) out.drho_dp.assign(points.size() * np, 0.0);

  const double beta = params_.beta_ks, mu = params_.mu;
  std::vector<BarField<D5>> fields(nb);
  std::vector<double> weight(nb);
  for (std::size_t e = 0; e < points.size(); ++e) {
    const double x = points[e][0], y = points[e][1];
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < nb; ++r) {
      const double* p = realized_params.data() + r * kBarParams;
      if (empty_bar(p)) continue;
      if (with_jacobian) {
        fields[r] = bar_field<D5>(D5::variable(p[0], 0), D5::variable(p[1], 1), D5::variable(p[2], 2),
                                  D5::variable(p[3], 3), D5::variable(p[4], 4), x, y, mu);
      } else {
        const auto f = bar_field<double>(p[0], p[1], p[2], p[3], p[4], x, y, mu);
        fields[r] = {D5(f.phi), D5(f.gx), D5(f.gy)};
      }
      m = std::min(m, fields[r].phi.v);
    }
    double sum = 0.0;
    for (std::size_t r = 0; r < nb; ++r) {
      weight[r] = empty_bar(realized_params.data() + r * kBarParams) ? 0.0 : std::exp(beta * (fields[r].phi.v - m));
      sum += weight[r];
    }
    const double phi = m + std::log(sum) / beta;
    double gx = 0.0, gy = 0.0;
    for (std::size_t r = 0; r < nb; ++r) {
      weight[r] /= sum;
      if (weight[r] == 0.0) continue;
      gx += weight[r] * fields[r].gx.v;
      gy += weight[r] * fields[r].gy.v;
    }
    const double gnorm = std::sqrt(gx * gx + gy * gy);
    // Interior damping: q -> 0 toward the bar core so the normalized distance
    // runs to -infinity there instead of depending on the approach direction.
    const double depth = std::clamp(-phi, 0.0, 1.0);
    const double q = 1.0 - depth * depth * depth;
    const double dq = (phi < 0.0 && phi > -1.0) ? 3.0 * phi * phi : 0.0;
    const double scale = gnorm * q;
    const double denom = std::sqrt(scale * scale + kGradientFloor * kGradientFloor);
    const double dist = phi / denom;
    out.rho[e] = phi_to_density(dist, beta_h_, params_.rho_void);
    if (!with_jacobian) continue;

    const double slope = phi_to_density_derivative(dist, beta_h_, params_.rho_void);
    if (slope == 0.0) continue;
    double* row = out.drho_dp.data() + e * np;
    for (std::size_t r = 0; r < nb; ++r) {
      const double w = weight[r];
      if (w == 0.0) continue;
      const auto& f = fields[r];
      for (int k = 0; k < kBarParams; ++k) {
        const double dphi_r = f.phi.d[k];
        const double dphi = w * dphi_r;
        const double dgx = beta * w * dphi_r * (f.gx.v - gx) + w * f.gx.d[k];
        const double dgy = beta * w * dphi_r * (f.gy.v - gy) + w * f.gy.d[k];
        const double dgnorm = gnorm > 0.0 ? (gx * dgx + gy * dgy) / gnorm : 0.0;
        const double dscale = dgnorm * q + gnorm * dq * dphi;
        const double ddist = dphi / denom - phi * scale * dscale / (denom * denom * denom);
        row[r * kBarParams + static_cast<std::size_t>(k)] = slope * ddist;
      }
    }
  }
  return out;
}

std::vector<double> PrimitiveDesign::geometry_sensitivities(const PrimitiveField& field,
                                                            const RealizedGeometry& geometry,
                                                            std::span<const double> dC_drho) const {
  const std::size_t np = num_variables();
  require(field.num_params == np && field.drho_dp.size() == field.rho.size() * np,
          "density field carries no Jacobian for this design", ErrorCode::InvalidState);
  require(geometry.active.size() == np, "realized geometry does not match this design", ErrorCode::InvalidState);
  require(dC_drho.size() == field.rho.size(), "sensitivity length does not match element count");
  std::vector<double> grad(np, 0.0);
  for (std::size_t e = 0; e < field.rho.size(); ++e) {
    const double s = dC_drho[e];
    if (s == 0.0) continue;
    const double* row = field.drho_dp.data() + e * np;
    for (std::size_t j = 0; j < np; ++j) grad[j] += s * row[j];
  }
  for (std::size_t j = 0; j < np; ++j) grad[j] *= geometry.active[j];
  return grad;
}

std::pair<std::vector<double>, std::vector<double>> PrimitiveDesign::variable_bounds() const {
  std::vector<double> lo(num_variables()), hi(num_variables());
  for (std::size_t j = 0; j < lo.size(); ++j) {
    lo[j] = bounds_.lower[j % kBarParams];
    hi[j] = bounds_.upper[j % kBarParams];
  }
  return {lo, hi};
}

}  // namespace stotop
