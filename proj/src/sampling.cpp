#include "stotop/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "stotop/error.hpp"

namespace stotop {

RandomVectorSpec::RandomVectorSpec(std::vector<UniformComponent> components) : components_(std::move(components)) {
  for (const auto& c : components_)
    require(c.lower < c.upper && std::isfinite(c.lower) && std::isfinite(c.upper),
            "random component '" + c.name + "' needs lower < upper");
}

RandomVectorSpec RandomVectorSpec::uniform(std::size_t n, double lower, double upper, const std::string& prefix) {
  std::vector<UniformComponent> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = {prefix + std::to_string(i + 1), lower, upper};
  return RandomVectorSpec(std::move(c));
}

std::vector<double> RandomVectorSpec::midpoint() const {
  std::vector<double> m(components_.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (components_[i].lower + components_[i].upper);
  return m;
}

namespace {

std::mt19937_64 substream(const RngConfig& rng, std::int64_t iteration, std::uint64_t index) {
  const auto it = static_cast<std::uint64_t>(iteration);
  std::seed_seq seq{static_cast<std::uint32_t>(rng.seed), static_cast<std::uint32_t>(rng.seed >> 32),
                    static_cast<std::uint32_t>(rng.stream), static_cast<std::uint32_t>(it),
                    static_cast<std::uint32_t>(it >> 32), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

// 53 random bits to [0,1); avoids the implementation-defined distribution classes.
double unit_uniform(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

}  // namespace

std::vector<double> draw_sample(const RandomVectorSpec& spec, const RngConfig& rng, std::int64_t iteration,
                                std::uint64_t index) {
  std::mt19937_64 gen = substream(rng, iteration, index);
  std::vector<double> xi(spec.dim());
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const double u = unit_uniform(gen);
    const auto& c = spec.components()[i];
    xi[i] = c.lower + (c.upper - c.lower) * u;
  }
  return xi;
}

std::vector<std::size_t> draw_indices(std::size_t pool_size, std::size_t n, const RngConfig& rng,
                                      std::int64_t iteration) {
  require(n >= 1 && n <= pool_size, "cannot pick that many distinct pool entries");
  std::mt19937_64 gen = substream(rng, iteration, 0);
  std::vector<std::size_t> perm(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) perm[i] = i;
  for (std::size_t i = 0; i < n; ++i) {
    const auto span = static_cast<double>(pool_size - i);
    const std::size_t j = i + std::min(pool_size - i - 1, static_cast<std::size_t>(unit_uniform(gen) * span));
    std::swap(perm[i], perm[j]);
  }
  perm.resize(n);
  return perm;
}

ScenarioBatch draw_batch(const RandomVectorSpec& spec, std::size_t n, const RngConfig& rng, std::int64_t iteration) {
  require(n >= 1, "batch size must be at least 1");
  ScenarioBatch b;
  b.iteration = iteration;
  b.stream = rng.stream;
  b.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) b.samples.push_back(draw_sample(spec, rng, iteration, i));
  return b;
}

std::array<double, 3> realize_load_direction(double xi9, double xi10) {
  const double pi = std::numbers::pi;
  const double s = std::sin(pi * xi9);
  return {s * std::sin(2.0 * pi * xi10), s * std::cos(2.0 * pi * xi10), std::cos(pi * xi9)};
}

std::array<double, 2> realize_load_direction_2d(double t) {
  const double pi = std::numbers::pi;
  return {std::sin(2.0 * pi * t), std::cos(2.0 * pi * t)};
}

std::vector<double> realize_bedding(std::span<const double> corners, const StructuredMesh& mesh, int layers,
                                    double E0) {
  const int dim = mesh.dim();
  require(corners.size() == (dim == 2 ? 4u : 8u), "bedding needs 4 corner values in 2D and 8 in 3D");
  const int vertical = dim - 1;
  require(layers >= 1 && layers <= mesh.dims()[vertical], "bedding layer count out of range");
  const auto& d = mesh.dims();
  const double h = mesh.h();
  const double lx = d[0] * h, ly = dim == 3 ? d[1] * h : layers * h, lz = layers * h;
  std::size_t count = static_cast<std::size_t>(layers) * d[0] * (dim == 3 ? d[1] : 1);
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
    const auto ijk = mesh.element_ijk(e);
    if (ijk[vertical] >= layers) continue;
    const auto c = mesh.element_centroid(e);
    const double s = c[0] / lx;
    if (dim == 2) {
      const double t = c[1] / ly;
      const double N[4] = {(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t};
      double v = 0.0;
      for (int i = 0; i < 4; ++i) v += N[i] * corners[i];
      out.push_back(E0 * v);
    } else {
      const double t = c[1] / ly, r = c[2] / lz;
      const double bottom[4] = {(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t};
      double v = 0.0;
      for (int i = 0; i < 4; ++i) v += bottom[i] * ((1 - r) * corners[i] + r * corners[i + 4]);
      out.push_back(E0 * v);
    }
  }
  return out;
}

}  // namespace stotop
