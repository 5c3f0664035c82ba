#include "stotop/simp.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <sstream>
#include <string>

#include "stotop/error.hpp"

namespace stotop {

namespace {

std::atomic<std::uint64_t> next_design_id{1};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

DensityFilter::DensityFilter(const StructuredMesh& mesh, double radius) : radius_(radius) {
  require(radius >= 0.0 && std::isfinite(radius), "filter radius must be finite and non-negative");
  const double h = mesh.h();
  const int dim = mesh.dim();
  const auto& d = mesh.dims();
  const int reach = static_cast<int>(std::ceil(radius / h)) + 1;

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.num_elements() * 8);
  std::vector<std::pair<std::size_t, double>> row;
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto c = mesh.element_centroid(e);
    const auto ijk = mesh.element_ijk(e);
    row.clear();
    double sum = 0.0;
    const int k_lo = dim == 3 ? std::max(0, ijk[2] - reach + 1) : 0;
    const int k_hi = dim == 3 ? std::min(d[2], ijk[2] + reach) : 0;
    for (int k = k_lo; k <= k_hi; ++k)
      for (int j = std::max(0, ijk[1] - reach + 1); j <= std::min(d[1], ijk[1] + reach); ++j)
        for (int i = std::max(0, ijk[0] - reach + 1); i <= std::min(d[0], ijk[0] + reach); ++i) {
          const std::size_t n = mesh.node_index(i, j, k);
          const auto x = mesh.node_coord(n);
          double r2 = 0.0;
          for (int a = 0; a < dim; ++a) r2 += (x[a] - c[a]) * (x[a] - c[a]);
          const double w = radius - std::sqrt(r2);
          if (w > 0.0) {
            row.emplace_back(n, w);
            sum += w;
          }
        }
    if (row.empty()) {
      for (std::size_t n : mesh.element_nodes(e)) row.emplace_back(n, 1.0);
      sum = static_cast<double>(row.size());
    }
    for (const auto& [n, w] : row) trip.emplace_back(static_cast<int>(e), static_cast<int>(n), w / sum);
  }
  W_.resize(static_cast<Eigen::Index>(mesh.num_elements()), static_cast<Eigen::Index>(mesh.num_nodes()));
  W_.setFromTriplets(trip.begin(), trip.end());
  W_.makeCompressed();
}

void DensityFilter::apply(std::span<const double> theta, std::span<double> rho) const {
  require(theta.size() == num_nodes(), "filter input length does not match node count");
  require(rho.size() == num_elements(), "filter output length does not match element count");
  const Eigen::Map<const Eigen::VectorXd> t(theta.data(), static_cast<Eigen::Index>(theta.size()));
  Eigen::Map<Eigen::VectorXd>(rho.data(), static_cast<Eigen::Index>(rho.size())) = W_ * t;
}

std::vector<double> DensityFilter::apply(std::span<const double> theta) const {
  std::vector<double> rho(num_elements());
  apply(theta, rho);
  return rho;
}

void DensityFilter::apply_transpose(std::span<const double> d_rho, std::span<double> d_theta) const {
  require(d_rho.size() == num_elements(), "filter adjoint input length does not match element count");
  require(d_theta.size() == num_nodes(), "filter adjoint output length does not match node count");
  const Eigen::Map<const Eigen::VectorXd> r(d_rho.data(), static_cast<Eigen::Index>(d_rho.size()));
  Eigen::Map<Eigen::VectorXd>(d_theta.data(), static_cast<Eigen::Index>(d_theta.size())) = W_.transpose() * r;
}

double project(double rho, const ProjectionParams& p) {
  const double a = std::tanh(p.beta * p.nu);
  return (a + std::tanh(p.beta * (rho - p.nu))) / (a + std::tanh(p.beta * (1.0 - p.nu)));
}

double project_derivative(double rho, const ProjectionParams& p) {
  const double t = std::tanh(p.beta * (rho - p.nu));
  return p.beta * (1.0 - t * t) / (std::tanh(p.beta * p.nu) + std::tanh(p.beta * (1.0 - p.nu)));
}

ProjectionSchedule::ProjectionSchedule(std::vector<std::pair<int, double>> steps) : steps_(std::move(steps)) {
  require(!steps_.empty(), "projection schedule is empty");
  std::sort(steps_.begin(), steps_.end());
  require(steps_.front().first <= 0, "projection schedule must start at iteration 0", ErrorCode::Configuration);
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    require(steps_[i].second > 0.0, "projection strength must be positive", ErrorCode::Configuration);
    if (i > 0) {
      require(steps_[i].first != steps_[i - 1].first, "duplicate iteration in projection schedule",
              ErrorCode::Configuration);
      require(steps_[i].second >= steps_[i - 1].second, "projection schedule must be non-decreasing",
              ErrorCode::Configuration);
    }
  }
}

ProjectionSchedule ProjectionSchedule::parse(std::string_view text) {
  std::vector<std::pair<int, double>> steps;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = std::min(text.find(',', pos), text.size());
    const std::string item = trim(text.substr(pos, comma - pos));
    const auto colon = item.find(':');
    require(colon != std::string::npos, "projection schedule entry '" + item + "' is not iter:beta",
            ErrorCode::Configuration);
    int it = 0;
    const std::string lhs = trim(item.substr(0, colon));
    const auto [p1, e1] = std::from_chars(lhs.data(), lhs.data() + lhs.size(), it);
    require(e1 == std::errc{} && p1 == lhs.data() + lhs.size(), "bad iteration in projection schedule",
            ErrorCode::Configuration);
    const std::string rhs = trim(item.substr(colon + 1));
    char* end = nullptr;
    const double beta = std::strtod(rhs.c_str(), &end);
    require(!rhs.empty() && end == rhs.c_str() + rhs.size(), "bad strength in projection schedule",
            ErrorCode::Configuration);
    steps.emplace_back(it, beta);
    pos = comma + 1;
  }
  return ProjectionSchedule(std::move(steps));
}

double ProjectionSchedule::beta_at(int iteration) const {
  require(!steps_.empty(), "projection schedule is empty", ErrorCode::InvalidState);
  double beta = steps_.front().second;
  for (const auto& [it, b] : steps_)
    if (iteration >= it) beta = b;
  return beta;
}

std::string ProjectionSchedule::to_string() const {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < steps_.size(); ++i) os << (i ? "," : "") << steps_[i].first << ':' << steps_[i].second;
  return os.str();
}

double simp_modulus(double rho_bar, const SimpParams& p) {
  return p.E_min + std::pow(rho_bar, p.beta_simp) * (p.E0 - p.E_min);
}

double simp_modulus_derivative(double rho_bar, const SimpParams& p) {
  if (p.beta_simp == 1.0) return p.E0 - p.E_min;
  return p.beta_simp * std::pow(rho_bar, p.beta_simp - 1.0) * (p.E0 - p.E_min);
}

SimpDesign::SimpDesign(StructuredMesh design_mesh, double filter_radius, SimpParams params)
    : mesh_(std::move(design_mesh)), params_(params), id_(next_design_id.fetch_add(1)) {
  require(params_.beta_simp >= 1.0, "SIMP exponent must be at least 1");
  require(params_.E0 > 0.0 && params_.E_min > 0.0 && params_.E_min < params_.E0,
          "SIMP moduli must satisfy 0 < E_min < E0");
  filter_ = DensityFilter(mesh_, filter_radius);
}

SimpState SimpDesign::evaluate(std::span<const double> theta, std::optional<ProjectionParams> projection) const {
  require(theta.size() == num_variables(), "design vector length does not match node count");
  if (projection) {
    require(projection->beta > 0.0, "projection strength must be positive");
    require(projection->nu > 0.0 && projection->nu < 1.0, "projection threshold must lie in (0,1)");
  }
  const std::size_t ne = num_elements();
  SimpState s;
  s.owner = id_;
  s.projection = projection;
  s.theta.assign(theta.begin(), theta.end());
  s.rho = filter_.apply(theta);
  s.rho_bar.resize(ne);
  s.drho_bar.resize(ne);
  s.moduli.resize(ne);
  s.dmoduli.resize(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    const double r = std::clamp(s.rho[e], 0.0, 1.0);
    s.rho_bar[e] = projection ? std::clamp(project(r, *projection), 0.0, 1.0) : r;
    s.drho_bar[e] = projection ? project_derivative(r, *projection) : 1.0;
    s.moduli[e] = simp_modulus(s.rho_bar[e], params_);
    s.dmoduli[e] = simp_modulus_derivative(s.rho_bar[e], params_);
  }
  return s;
}

void SimpDesign::check_state(const SimpState& state) const {
  require(state.owner == id_ && state.rho_bar.size() == num_elements() && state.theta.size() == num_variables(),
          "density state was not produced by this design", ErrorCode::InvalidState);
}

std::vector<double> SimpDesign::density_chain(const SimpState& state, std::span<const double> d_drho_bar) const {
  check_state(state);
  require(d_drho_bar.size() == num_elements(), "sensitivity length does not match element count");
  std::vector<double> d_rho(num_elements());
  for (std::size_t e = 0; e < d_rho.size(); ++e) d_rho[e] = d_drho_bar[e] * state.drho_bar[e];
  std::vector<double> out(num_variables());
  filter_.apply_transpose(d_rho, out);
  return out;
}

std::vector<double> SimpDesign::chain_sensitivity(const SimpState& state, std::span<const double> dC_dE) const {
  check_state(state);
  require(dC_dE.size() == num_elements(), "sensitivity length does not match element count");
  std::vector<double> d_rho_bar(num_elements());
  for (std::size_t e = 0; e < d_rho_bar.size(); ++e) d_rho_bar[e] = dC_dE[e] * state.dmoduli[e];
  return density_chain(state, d_rho_bar);
}

VolumeConstraint SimpDesign::volume_constraint(const SimpState& state, double f_v) const {
  check_state(state);
  require(f_v > 0.0 && f_v <= 1.0, "volume fraction limit must lie in (0,1]");
  const double ne = static_cast<double>(num_elements());
  double sum = 0.0;
  for (double r : state.rho_bar) sum += r;
  VolumeConstraint vc;
  vc.volume_fraction = sum / ne;
  vc.g = vc.volume_fraction / f_v - 1.0;
  const std::vector<double> unit(num_elements(), 1.0 / (f_v * ne));
  vc.gradient = density_chain(state, unit);
  return vc;
}

}  // namespace stotop
