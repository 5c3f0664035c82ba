#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stotop/primitive.hpp"
#include "stotop/problem.hpp"

namespace stotop {

/// Shortest round-trip decimal form.
std::string format_number(double x);
/// Exact hexadecimal floating form used by checkpoints.
std::string format_hex(double x);
double parse_hex(const std::string& s);

/// "nx,ny,h", the sizes, then one row per j (j = 0 first), values along i.
std::string density_csv(const DensityField& field);
/// Legacy ASCII VTK STRUCTURED_POINTS with one CELL_DATA scalar "density".
std::string density_vtk(const DensityField& field);
/// bar,x_c,y_c,a,b,alpha
std::string bars_csv(std::span<const BarPrimitive> bars);
/// bin_lower,bin_upper,count over [0,1]; the last bin is closed.
std::string histogram_csv(std::span<const double> values, int bins = 10);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

/// Self-describing text container: a tag line, then `scalar` and `vector` records.
struct TextArchive {
  std::string tag;
  int version = 1;
  std::map<std::string, std::string> scalars;
  std::map<std::string, std::vector<double>> vectors;

  std::string serialize() const;
  static TextArchive parse(const std::string& text);
  const std::string& scalar(const std::string& key) const;
  const std::vector<double>& vector(const std::string& key) const;
  bool has_vector(const std::string& key) const { return vectors.count(key) != 0; }
};

}  // namespace stotop
