#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stotop/mesh.hpp"

namespace stotop {

struct UniformComponent {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
};

/// Independent uniform components of the random input vector xi.
class RandomVectorSpec {
 public:
  RandomVectorSpec() = default;
  explicit RandomVectorSpec(std::vector<UniformComponent> components);
  /// n components on the same interval, named prefix1..prefixN.
  static RandomVectorSpec uniform(std::size_t n, double lower, double upper, const std::string& prefix = "xi");

  std::size_t dim() const { return components_.size(); }
  bool empty() const { return components_.empty(); }
  const std::vector<UniformComponent>& components() const { return components_; }
  std::vector<double> midpoint() const;

 private:
  std::vector<UniformComponent> components_;
};

/// Substreams are keyed by (seed, stream, iteration, sample index), so a sample never
/// depends on how many were drawn before it or on which thread draws it.
struct RngConfig {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

inline constexpr std::uint64_t kTrainingStream = 0;
inline constexpr std::uint64_t kValidationStream = 1;
inline constexpr std::uint64_t kPoolStream = 2;
inline constexpr std::uint64_t kSelectionStream = 3;

struct ScenarioBatch {
  std::int64_t iteration = 0;
  std::uint64_t stream = 0;
  std::vector<std::vector<double>> samples;

  std::size_t size() const { return samples.size(); }
};

std::vector<double> draw_sample(const RandomVectorSpec& spec, const RngConfig& rng, std::int64_t iteration,
                                std::uint64_t index);
ScenarioBatch draw_batch(const RandomVectorSpec& spec, std::size_t n, const RngConfig& rng, std::int64_t iteration);

/// n distinct indices from {0..pool_size-1} (partial Fisher-Yates on the (iteration) substream).
std::vector<std::size_t> draw_indices(std::size_t pool_size, std::size_t n, const RngConfig& rng,
                                      std::int64_t iteration);

/// Direction cosines (sin(pi a) sin(2 pi b), sin(pi a) cos(2 pi b), cos(pi a)).
std::array<double, 3> realize_load_direction(double xi9, double xi10);
/// Planar analogue (sin(2 pi t), cos(2 pi t)).
std::array<double, 2> realize_load_direction_2d(double t);

/// Multilinear interpolation of corner values over the bottom `layers` element layers of
/// the mesh (z layers in 3D, y rows in 2D), evaluated at element centroids and scaled by E0.
/// Corners are ordered counter-clockwise, bottom face first (4 corners in 2D, 8 in 3D).
/// Returns moduli for those elements in mesh element order.
std::vector<double> realize_bedding(std::span<const double> corners, const StructuredMesh& mesh, int layers,
                                    double E0);

}  // namespace stotop
