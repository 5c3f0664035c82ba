#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace stotop {

/// Regular grid of bilinear quads (2D) or trilinear hexes (3D) with edge length h.
/// Nodes and elements are numbered lexicographically, x fastest.
class StructuredMesh {
 public:
  StructuredMesh() = default;
  StructuredMesh(std::span<const int> dims, double h);

  int dim() const { return dim_; }
  double h() const { return h_; }
  /// Element counts per axis; unused axes are 1.
  const std::array<int, 3>& dims() const { return dims_; }
  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_elements() const { return num_elements_; }
  std::size_t num_dofs() const { return num_nodes_ * static_cast<std::size_t>(dim_); }
  int nodes_per_element() const { return dim_ == 2 ? 4 : 8; }
  int dofs_per_element() const { return nodes_per_element() * dim_; }
  double element_volume() const { return dim_ == 2 ? h_ * h_ : h_ * h_ * h_; }

  std::size_t node_index(int i, int j, int k = 0) const;
  std::size_t element_index(int i, int j, int k = 0) const;
  std::array<int, 3> node_ijk(std::size_t node) const;
  std::array<int, 3> element_ijk(std::size_t element) const;

  std::array<double, 3> node_coord(std::size_t node) const;
  std::array<double, 3> element_centroid(std::size_t element) const;

  /// Corner nodes in the local ordering used by the element stiffness template:
  /// counter-clockwise in each z-layer, bottom layer first.
  std::span<const std::size_t> element_nodes(std::size_t element) const;
  /// Global dof numbers of an element (node-major, component-minor).
  void element_dofs(std::size_t element, std::span<std::size_t> out) const;

 private:
  int dim_ = 0;
  double h_ = 0.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::size_t num_nodes_ = 0;
  std::size_t num_elements_ = 0;
  std::vector<std::size_t> connectivity_;
};

StructuredMesh build_structured_mesh(std::span<const int> dims, double h);

}  // namespace stotop
