#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stotop/estimators.hpp"
#include "stotop/fem.hpp"
#include "stotop/optimizers.hpp"
#include "stotop/primitive.hpp"
#include "stotop/sampling.hpp"
#include "stotop/simp.hpp"

namespace stotop {

/// Design-dependent data computed once per iteration and shared read-only by all samples.
struct PreparedDesign {
  virtual ~PreparedDesign() = default;
  std::vector<double> theta;
  std::int64_t iteration = 0;
};

/// Per-thread scratch for sample evaluation.
class EvalWorkspace {
 public:
  virtual ~EvalWorkspace() = default;
};

/// Element field on a structured grid, for export.
struct DensityField {
  int dim = 2;
  std::array<int, 3> dims{1, 1, 1};
  double h = 1.0;
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::vector<double> values;
};

class Problem {
 public:
  virtual ~Problem() = default;
  virtual std::string name() const = 0;
  virtual std::size_t num_variables() const = 0;
  virtual std::size_t num_constraints() const { return 1; }
  virtual const RandomVectorSpec& random_spec() const = 0;
  virtual Box bounds() const = 0;
  virtual std::vector<double> initial_design() const = 0;
  virtual std::shared_ptr<const PreparedDesign> prepare(std::span<const double> theta, std::int64_t iteration) const = 0;
  virtual std::unique_ptr<EvalWorkspace> make_workspace() const = 0;
  /// f, g and (optionally) their design gradients for one realization xi.
  virtual SampleRecord evaluate(const PreparedDesign& design, std::span<const double> xi, EvalWorkspace& ws,
                                bool with_gradients) const = 0;
  /// Material fraction of the design region for the unperturbed design.
  virtual double volume_fraction(const PreparedDesign& design) const = 0;
  virtual DensityField density(const PreparedDesign& design) const = 0;
  /// Bar table of primitive designs; empty for density designs.
  virtual std::vector<BarPrimitive> bars(std::span<const double> theta) const;
};

enum class SimpScenario {
  /// Half MBB beam: symmetry on the left edge, roller at the bottom right, unit load down at the top left.
  MbbHalfBeam,
  /// Random bedding under the design region, clamped bottom, unit load at the top center with random direction.
  Bedding,
};

struct SimpProblemSpec {
  std::string name;
  SimpScenario scenario = SimpScenario::MbbHalfBeam;
  /// Element counts of the design region.
  std::vector<int> design_dims;
  int bedding_layers = 0;
  double h = 1.0;
  double filter_radius = 0.0;
  SimpParams simp;
  ElasticMaterial material;
  ProjectionSchedule schedule;
  bool projection = true;
  double projection_nu = 0.5;
  double volume_fraction = 0.5;
  double initial_value = 0.5;
  double spring = 0.0;
  double objective_scale = 1.0;
  SolverOptions solver;
};

class SimpProblem final : public Problem {
 public:
  explicit SimpProblem(SimpProblemSpec spec);

  std::string name() const override { return spec_.name; }
  std::size_t num_variables() const override { return design_.num_variables(); }
  const RandomVectorSpec& random_spec() const override { return random_; }
  Box bounds() const override;
  std::vector<double> initial_design() const override;
  std::shared_ptr<const PreparedDesign> prepare(std::span<const double> theta, std::int64_t iteration) const override;
  std::unique_ptr<EvalWorkspace> make_workspace() const override;
  SampleRecord evaluate(const PreparedDesign& design, std::span<const double> xi, EvalWorkspace& ws,
                        bool with_gradients) const override;
  double volume_fraction(const PreparedDesign& design) const override;
  DensityField density(const PreparedDesign& design) const override;

  const SimpProblemSpec& spec() const { return spec_; }
  const SimpDesign& design() const { return design_; }
  const FemSystem& fem() const { return fem_; }
  /// Loads, supports and bedding moduli of one realization.
  BoundaryConditions boundary_conditions(std::span<const double> xi) const;
  std::vector<double> bedding_moduli(std::span<const double> xi) const;

 private:
  SimpProblemSpec spec_;
  SimpDesign design_;
  FemSystem fem_;
  RandomVectorSpec random_;
  std::size_t bedding_elements_ = 0;
  std::vector<std::size_t> clamped_dofs_;
  std::size_t load_node_ = 0;
};

struct PrimitiveProblemSpec {
  std::string name = "example1-beam";
  double length = 3.0;
  double height = 1.0;
  double h = 0.05;
  std::size_t num_bars = 12;
  PrimitiveParams params;
  BarBounds bounds;
  ElasticMaterial material;
  double mass_fraction = 0.5;
  double spring = 1e-6;
  SolverOptions solver;
};

/// Example I: bar assembly on the half beam, geometric perturbations of every bar parameter.
class PrimitiveProblem final : public Problem {
 public:
  explicit PrimitiveProblem(PrimitiveProblemSpec spec);

  std::string name() const override { return spec_.name; }
  std::size_t num_variables() const override { return design_.num_variables(); }
  const RandomVectorSpec& random_spec() const override { return random_; }
  Box bounds() const override;
  std::vector<double> initial_design() const override;
  std::shared_ptr<const PreparedDesign> prepare(std::span<const double> theta, std::int64_t iteration) const override;
  std::unique_ptr<EvalWorkspace> make_workspace() const override;
  SampleRecord evaluate(const PreparedDesign& design, std::span<const double> xi, EvalWorkspace& ws,
                        bool with_gradients) const override;
  double volume_fraction(const PreparedDesign& design) const override;
  DensityField density(const PreparedDesign& design) const override;
  std::vector<BarPrimitive> bars(std::span<const double> theta) const override;

  const PrimitiveProblemSpec& spec() const { return spec_; }
  const PrimitiveDesign& design() const { return design_; }
  BoundaryConditions boundary_conditions() const { return bcs_; }

 private:
  PrimitiveProblemSpec spec_;
  PrimitiveDesign design_;
  FemSystem fem_;
  RandomVectorSpec random_;
  BoundaryConditions bcs_;
};

/// Horizontal and vertical bars in a regular grid pattern.
std::vector<double> cross_hatch_design(double length, double height, double half_width);

}  // namespace stotop
