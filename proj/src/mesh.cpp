#include "stotop/mesh.hpp"

#include <string>

#include "stotop/error.hpp"

namespace stotop {

StructuredMesh::StructuredMesh(std::span<const int> dims, double h) {
  require(dims.size() == 2 || dims.size() == 3, "mesh must have 2 or 3 axes");
  require(h > 0.0, "mesh edge length must be positive");
  for (int d : dims) require(d >= 1, "mesh element counts must be >= 1, got " + std::to_string(d));

  dim_ = static_cast<int>(dims.size());
  h_ = h;
  for (int a = 0; a < dim_; ++a) dims_[a] = dims[a];

  num_elements_ = 1;
  num_nodes_ = 1;
  for (int a = 0; a < dim_; ++a) {
    num_elements_ *= static_cast<std::size_t>(dims_[a]);
    num_nodes_ *= static_cast<std::size_t>(dims_[a] + 1);
  }

  const int npe = nodes_per_element();
  connectivity_.resize(num_elements_ * npe);
  for (std::size_t e = 0; e < num_elements_; ++e) {
    const auto [i, j, k] = element_ijk(e);
    std::size_t* c = &connectivity_[e * npe];
    c[0] = node_index(i, j, k);
    c[1] = node_index(i + 1, j, k);
    c[2] = node_index(i + 1, j + 1, k);
    c[3] = node_index(i, j + 1, k);
    if (dim_ == 3) {
      c[4] = node_index(i, j, k + 1);
      c[5] = node_index(i + 1, j, k + 1);
      c[6] = node_index(i + 1, j + 1, k + 1);
      c[7] = node_index(i, j + 1, k + 1);
    }
  }
}

std::size_t StructuredMesh::node_index(int i, int j, int k) const {
  const auto nx = static_cast<std::size_t>(dims_[0] + 1);
  const auto ny = static_cast<std::size_t>(dims_[1] + 1);
  return static_cast<std::size_t>(i) + nx * (static_cast<std::size_t>(j) + ny * static_cast<std::size_t>(k));
}

std::size_t StructuredMesh::element_index(int i, int j, int k) const {
  const auto nx = static_cast<std::size_t>(dims_[0]);
  const auto ny = static_cast<std::size_t>(dims_[1]);
  return static_cast<std::size_t>(i) + nx * (static_cast<std::size_t>(j) + ny * static_cast<std::size_t>(k));
}

std::array<int, 3> StructuredMesh::node_ijk(std::size_t node) const {
  const auto nx = static_cast<std::size_t>(dims_[0] + 1);
  const auto ny = static_cast<std::size_t>(dims_[1] + 1);
  return {static_cast<int>(node % nx), static_cast<int>((node / nx) % ny),
          dim_ == 3 ? static_cast<int>(node / (nx * ny)) : 0};
}

std::array<int, 3> StructuredMesh::element_ijk(std::size_t element) const {
  const auto nx = static_cast<std::size_t>(dims_[0]);
  const auto ny = static_cast<std::size_t>(dims_[1]);
  return {static_cast<int>(element % nx), static_cast<int>((element / nx) % ny),
          dim_ == 3 ? static_cast<int>(element / (nx * ny)) : 0};
}

std::array<double, 3> StructuredMesh::node_coord(std::size_t node) const {
  const auto ijk = node_ijk(node);
  return {ijk[0] * h_, ijk[1] * h_, ijk[2] * h_};
}

std::array<double, 3> StructuredMesh::element_centroid(std::size_t element) const {
  const auto ijk = element_ijk(element);
  return {(ijk[0] + 0.5) * h_, (ijk[1] + 0.5) * h_, dim_ == 3 ? (ijk[2] + 0.5) * h_ : 0.0};
}

std::span<const std::size_t> StructuredMesh::element_nodes(std::size_t element) const {
  const auto npe = static_cast<std::size_t>(nodes_per_element());
  return {connectivity_.data() + element * npe, npe};
}

void StructuredMesh::element_dofs(std::size_t element, std::span<std::size_t> out) const {
  const auto nodes = element_nodes(element);
  const auto d = static_cast<std::size_t>(dim_);
  for (std::size_t a = 0; a < nodes.size(); ++a)
    for (std::size_t c = 0; c < d; ++c) out[a * d + c] = nodes[a] * d + c;
}

StructuredMesh build_structured_mesh(std::span<const int> dims, double h) { return StructuredMesh(dims, h); }

}  // namespace stotop
