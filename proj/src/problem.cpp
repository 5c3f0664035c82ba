#include "stotop/problem.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "stotop/error.hpp"

namespace stotop {

std::vector<BarPrimitive> Problem::bars(std::span<const double>) const { return {}; }

namespace {

StructuredMesh fem_mesh_of(const SimpProblemSpec& s) {
  require(s.design_dims.size() == 2 || s.design_dims.size() == 3, "design region needs 2 or 3 axes");
  require(s.bedding_layers >= 0, "bedding layer count must be non-negative");
  std::vector<int> dims = s.design_dims;
  dims.back() += s.bedding_layers;
  return StructuredMesh(dims, s.h);
}

struct SimpPrepared final : PreparedDesign {
  SimpState state;
  VolumeConstraint volume;
};

struct FemScratch final : EvalWorkspace {
  explicit FemScratch(const FemSystem& sys) : fem(sys.make_workspace()) {}
  std::unique_ptr<FemWorkspace> fem;
  std::vector<double> moduli;
};

template <class T>
const T& downcast(const PreparedDesign& d) {
  const auto* p = dynamic_cast<const T*>(&d);
  require(p != nullptr, "prepared design belongs to a different problem", ErrorCode::InvalidState);
  return *p;
}

FemScratch& scratch_of(EvalWorkspace& ws) {
  auto* p = dynamic_cast<FemScratch*>(&ws);
  require(p != nullptr, "workspace belongs to a different problem", ErrorCode::InvalidState);
  return *p;
}

}  // namespace

SimpProblem::SimpProblem(SimpProblemSpec spec)
    : spec_(std::move(spec)),
      design_(StructuredMesh(spec_.design_dims, spec_.h),
              spec_.filter_radius > 0.0 ? spec_.filter_radius : 1.5 * spec_.h, spec_.simp),
      fem_(fem_mesh_of(spec_), spec_.material, spec_.solver) {
  require(spec_.volume_fraction > 0.0 && spec_.volume_fraction <= 1.0, "volume fraction must lie in (0,1]");
  require(spec_.initial_value >= 0.0 && spec_.initial_value <= 1.0, "initial density must lie in [0,1]");
  require(spec_.objective_scale > 0.0, "objective scale must be positive");
  require(spec_.spring >= 0.0, "spring constant must be non-negative");
  const StructuredMesh& m = fem_.mesh();
  const int dim = m.dim();
  const auto& d = m.dims();
  if (spec_.scenario == SimpScenario::MbbHalfBeam) {
    require(dim == 2 && spec_.bedding_layers == 0, "the MBB scenario is planar without bedding");
    for (int j = 0; j <= d[1]; ++j) clamped_dofs_.push_back(2 * m.node_index(0, j));
    clamped_dofs_.push_back(2 * m.node_index(d[0], 0) + 1);
    load_node_ = m.node_index(0, d[1]);
  } else {
    require(spec_.bedding_layers >= 1, "the bedding scenario needs at least one bedding layer");
    bedding_elements_ = static_cast<std::size_t>(spec_.bedding_layers) * static_cast<std::size_t>(d[0]) *
                        static_cast<std::size_t>(dim == 3 ? d[1] : 1);
    for (std::size_t n = 0; n < m.num_nodes(); ++n) {
      if (m.node_ijk(n)[dim - 1] != 0) continue;
      for (int c = 0; c < dim; ++c) clamped_dofs_.push_back(n * static_cast<std::size_t>(dim) + c);
    }
    load_node_ = dim == 3 ? m.node_index(d[0] / 2, d[1] / 2, d[2]) : m.node_index(d[0] / 2, d[1]);
    // Corner stiffnesses, then the load direction variables.
    random_ = RandomVectorSpec::uniform(dim == 3 ? 10 : 5, 0.0, 1.0, "xi");
  }
}

Box SimpProblem::bounds() const {
  return Box{std::vector<double>(num_variables(), 0.0), std::vector<double>(num_variables(), 1.0)};
}

std::vector<double> SimpProblem::initial_design() const {
  return std::vector<double>(num_variables(), spec_.initial_value);
}

std::shared_ptr<const PreparedDesign> SimpProblem::prepare(std::span<const double> theta,
                                                           std::int64_t iteration) const {
  auto p = std::make_shared<SimpPrepared>();
  p->theta.assign(theta.begin(), theta.end());
  p->iteration = iteration;
  std::optional<ProjectionParams> proj;
  if (spec_.projection && !spec_.schedule.steps().empty())
    proj = ProjectionParams{spec_.schedule.beta_at(static_cast<int>(iteration)), spec_.projection_nu};
  p->state = design_.evaluate(theta, proj);
  p->volume = design_.volume_constraint(p->state, spec_.volume_fraction);
  return p;
}

std::unique_ptr<EvalWorkspace> SimpProblem::make_workspace() const { return std::make_unique<FemScratch>(fem_); }

BoundaryConditions SimpProblem::boundary_conditions(std::span<const double> xi) const {
  require(xi.size() == random_.dim(), "random vector has the wrong length");
  BoundaryConditions bc;
  bc.fixed_dofs = clamped_dofs_;
  bc.spring = spec_.spring;
  PointLoad load{load_node_, {0.0, 0.0, 0.0}};
  if (spec_.scenario == SimpScenario::MbbHalfBeam) {
    load.force = {0.0, -1.0, 0.0};
  } else if (fem_.mesh().dim() == 3) {
    const auto c = realize_load_direction(xi[8], xi[9]);
    load.force = {c[0], c[1], c[2]};
  } else {
    const auto c = realize_load_direction_2d(xi[4]);
    load.force = {c[0], c[1], 0.0};
  }
  bc.loads.push_back(load);
  return bc;
}

std::vector<double> SimpProblem::bedding_moduli(std::span<const double> xi) const {
  if (bedding_elements_ == 0) return {};
  const std::size_t corners = fem_.mesh().dim() == 3 ? 8 : 4;
  auto E = realize_bedding(xi.first(corners), fem_.mesh(), spec_.bedding_layers, spec_.material.E0);
  const double floor = spec_.simp.E_min;
  for (double& e : E) e = std::max(e, floor);
  return E;
}

SampleRecord SimpProblem::evaluate(const PreparedDesign& design, std::span<const double> xi, EvalWorkspace& ws,
                                   bool with_gradients) const {
  const auto& p = downcast<SimpPrepared>(design);
  auto& s = scratch_of(ws);
  const BoundaryConditions bc = boundary_conditions(xi);
  s.moduli = bedding_moduli(xi);
  s.moduli.insert(s.moduli.end(), p.state.moduli.begin(), p.state.moduli.end());
  const FemSolution sol = fem_.solve(s.moduli, bc, *s.fem);

  SampleRecord r;
  r.f = spec_.objective_scale * sol.compliance;
  r.g = {p.volume.g};
  r.grad_g.resize(1);
  if (with_gradients) {
    std::vector<double> dC(design_.num_elements());
    for (std::size_t e = 0; e < dC.size(); ++e) dC[e] = -spec_.objective_scale * sol.unit_energies[bedding_elements_ + e];
    r.grad_f = design_.chain_sensitivity(p.state, dC);
    r.grad_g = {p.volume.gradient};
  }
  return r;
}

double SimpProblem::volume_fraction(const PreparedDesign& design) const {
  return downcast<SimpPrepared>(design).volume.volume_fraction;
}

DensityField SimpProblem::density(const PreparedDesign& design) const {
  const auto& p = downcast<SimpPrepared>(design);
  const StructuredMesh& m = design_.mesh();
  DensityField f;
  f.dim = m.dim();
  f.dims = m.dims();
  f.h = m.h();
  f.origin[static_cast<std::size_t>(m.dim() - 1)] = spec_.bedding_layers * m.h();
  f.values = p.state.rho_bar;
  return f;
}

// ---------------------------------------------------------------------------

namespace {

struct PrimitivePrepared final : PreparedDesign {
  double reg = 0.0;
  std::vector<double> reg_grad;
  std::vector<double> rho_nominal;
};

StructuredMesh beam_mesh(const PrimitiveProblemSpec& s) {
  require(s.h > 0.0 && s.length > 0.0 && s.height > 0.0, "beam geometry must be positive");
  const int nx = static_cast<int>(std::lround(s.length / s.h));
  const int ny = static_cast<int>(std::lround(s.height / s.h));
  require(std::abs(nx * s.h - s.length) < 1e-9 * s.length && std::abs(ny * s.h - s.height) < 1e-9 * s.height,
          "element size must divide the beam dimensions");
  const std::vector<int> dims{nx, ny};
  return StructuredMesh(dims, s.h);
}

}  // namespace

std::vector<double> cross_hatch_design(double length, double height, double b) {
  const double pi = std::numbers::pi;
  std::vector<BarPrimitive> bars;
  for (double y : {b, 0.5 * height, height - b})
    for (double x : {0.25 * length, 0.75 * length}) bars.push_back({x, y, 0.25 * length, b, 0.0});
  for (double x : {b, 0.5 * length, length - b})
    for (double y : {0.25 * height, 0.75 * height}) bars.push_back({x, y, 0.25 * height, b, 0.5 * pi});
  return pack_bars(bars);
}

PrimitiveProblem::PrimitiveProblem(PrimitiveProblemSpec spec)
    : spec_(std::move(spec)),
      design_(beam_mesh(spec_), spec_.num_bars, spec_.params, spec_.bounds),
      fem_(design_.mesh(), spec_.material, spec_.solver),
      random_(RandomVectorSpec::uniform(spec_.num_bars * kBarParams, -1.0, 1.0, "xi")) {
  require(spec_.mass_fraction > 0.0 && spec_.mass_fraction <= 1.0, "mass fraction must lie in (0,1]");
  require(spec_.spring >= 0.0, "spring constant must be non-negative");
  const StructuredMesh& m = design_.mesh();
  const auto& d = m.dims();
  for (int j = 0; j <= d[1]; ++j) bcs_.fixed_dofs.push_back(2 * m.node_index(0, j));
  bcs_.fixed_dofs.push_back(2 * m.node_index(d[0], 0) + 1);
  bcs_.loads.push_back({m.node_index(0, d[1]), {0.0, -1.0, 0.0}});
  bcs_.spring = spec_.spring;
}

Box PrimitiveProblem::bounds() const {
  auto [lo, hi] = design_.variable_bounds();
  return Box{std::move(lo), std::move(hi)};
}

std::vector<double> PrimitiveProblem::initial_design() const {
  require(spec_.num_bars == 12, "the cross-hatch initial design is defined for 12 bars");
  return cross_hatch_design(spec_.length, spec_.height, 0.05 * spec_.height);
}

std::shared_ptr<const PreparedDesign> PrimitiveProblem::prepare(std::span<const double> theta,
                                                                std::int64_t iteration) const {
  require(theta.size() == num_variables(), "design vector length does not match the bar count");
  auto p = std::make_shared<PrimitivePrepared>();
  p->theta.assign(theta.begin(), theta.end());
  p->iteration = iteration;
  std::tie(p->reg, p->reg_grad) = regularization(theta, spec_.params.lambda_reg);
  const std::vector<double> zero(num_variables(), 0.0);
  const auto nominal = realize_geometry(theta, zero, spec_.bounds, spec_.params.perturbation);
  p->rho_nominal = design_.evaluate(nominal.params, false).rho;
  return p;
}

std::unique_ptr<EvalWorkspace> PrimitiveProblem::make_workspace() const {
  return std::make_unique<FemScratch>(fem_);
}

SampleRecord PrimitiveProblem::evaluate(const PreparedDesign& design, std::span<const double> xi, EvalWorkspace& ws,
                                        bool with_gradients) const {
  const auto& p = downcast<PrimitivePrepared>(design);
  auto& s = scratch_of(ws);
  require(xi.size() == random_.dim(), "random vector has the wrong length");
  const auto geometry = realize_geometry(p.theta, xi, spec_.bounds, spec_.params.perturbation);
  const PrimitiveField field = design_.evaluate(geometry.params, with_gradients);
  const std::size_t ne = field.rho.size();
  const double E0 = spec_.material.E0;
  s.moduli.resize(ne);
  for (std::size_t e = 0; e < ne; ++e) s.moduli[e] = E0 * field.rho[e];
  const FemSolution sol = fem_.solve(s.moduli, bcs_, *s.fem);

  const double cap = spec_.mass_fraction * static_cast<double>(ne);
  SampleRecord r;
  r.f = sol.compliance + p.reg;
  r.g = {std::accumulate(field.rho.begin(), field.rho.end(), 0.0) / cap - 1.0};
  r.grad_g.resize(1);
  if (with_gradients) {
    std::vector<double> dC(ne);
    for (std::size_t e = 0; e < ne; ++e) dC[e] = -E0 * sol.unit_energies[e];
    r.grad_f = design_.geometry_sensitivities(field, geometry, dC);
    for (std::size_t j = 0; j < r.grad_f.size(); ++j) r.grad_f[j] += p.reg_grad[j];
    const std::vector<double> dm(ne, 1.0 / cap);
    r.grad_g = {design_.geometry_sensitivities(field, geometry, dm)};
  }
  return r;
}

double PrimitiveProblem::volume_fraction(const PreparedDesign& design) const {
  const auto& p = downcast<PrimitivePrepared>(design);
  return std::accumulate(p.rho_nominal.begin(), p.rho_nominal.end(), 0.0) / static_cast<double>(p.rho_nominal.size());
}

DensityField PrimitiveProblem::density(const PreparedDesign& design) const {
  const auto& p = downcast<PrimitivePrepared>(design);
  DensityField f;
  f.dim = 2;
  f.dims = design_.mesh().dims();
  f.h = design_.mesh().h();
  f.values = p.rho_nominal;
  return f;
}

std::vector<BarPrimitive> PrimitiveProblem::bars(std::span<const double> theta) const {
  require(theta.size() == num_variables(), "design vector length does not match the bar count");
  return unpack_bars(theta);
}

}  // namespace stotop
