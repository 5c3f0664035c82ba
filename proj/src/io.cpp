#include "stotop/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stotop/error.hpp"

namespace stotop {

std::string format_number(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::string format_hex(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::hex);
  return std::string(buf, r.ptr);
}

double parse_hex(const std::string& s) {
  double x = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  bool neg = false;
  if (b != e && *b == '-') {
    neg = true;
    ++b;
  }
  // Special values appear as "inf"/"nan" with no hex prefix.
  const auto [p, ec] = std::from_chars(b, e, x, std::chars_format::hex);
  require(ec == std::errc() && p == e, "malformed hexadecimal number '" + s + "'", ErrorCode::Io);
  return neg ? -x : x;
}

std::string density_csv(const DensityField& f) {
  require(f.dim == 2, "CSV density export is for planar fields");
  const int nx = f.dims[0], ny = f.dims[1];
  require(f.values.size() == static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), "field size mismatch");
  std::string s = "nx,ny,h\n" + std::to_string(nx) + "," + std::to_string(ny) + "," + format_number(f.h) + "\n";
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      if (i) s += ',';
      s += format_number(f.values[static_cast<std::size_t>(j) * nx + i]);
    }
    s += '\n';
  }
  return s;
}

std::string density_vtk(const DensityField& f) {
  const auto& d = f.dims;
  const std::size_t n = static_cast<std::size_t>(d[0]) * d[1] * d[2];
  require(f.values.size() == n, "field size mismatch");
  std::ostringstream s;
  s << "# vtk DataFile Version 3.0\nstotop density\nASCII\nDATASET STRUCTURED_POINTS\n";
  s << "DIMENSIONS " << d[0] + 1 << ' ' << d[1] + 1 << ' ' << (f.dim == 3 ? d[2] + 1 : 1) << '\n';
  s << "ORIGIN " << format_number(f.origin[0]) << ' ' << format_number(f.origin[1]) << ' '
    << format_number(f.origin[2]) << '\n';
  s << "SPACING " << format_number(f.h) << ' ' << format_number(f.h) << ' ' << format_number(f.h) << '\n';
  s << "CELL_DATA " << n << "\nSCALARS density double 1\nLOOKUP_TABLE default\n";
  for (double v : f.values) s << format_number(v) << '\n';
  return s.str();
}

std::string bars_csv(std::span<const BarPrimitive> bars) {
  std::string s = "bar,x_c,y_c,a,b,alpha\n";
  for (std::size_t r = 0; r < bars.size(); ++r) {
    const auto& b = bars[r];
    s += std::to_string(r) + "," + format_number(b.x_c) + "," + format_number(b.y_c) + "," + format_number(b.a) + "," +
         format_number(b.b) + "," + format_number(b.alpha) + "\n";
  }
  return s;
}

std::string histogram_csv(std::span<const double> values, int bins) {
  require(bins >= 1, "histogram needs at least one bin");
  std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    const double c = std::clamp(v, 0.0, 1.0);
    int b = std::min(bins - 1, static_cast<int>(c * bins));
    // Edges are the printed lower bounds b / bins; correct the product's rounding against them.
    while (b + 1 < bins && static_cast<double>(b + 1) / bins <= c) ++b;
    while (b > 0 && static_cast<double>(b) / bins > c) --b;
    ++count[static_cast<std::size_t>(b)];
  }
  std::string s = "bin_lower,bin_upper,count\n";
  for (int b = 0; b < bins; ++b)
    s += format_number(static_cast<double>(b) / bins) + "," + format_number(static_cast<double>(b + 1) / bins) + "," +
         std::to_string(count[static_cast<std::size_t>(b)]) + "\n";
  return s;
}

void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(f), "cannot write '" + path + "'", ErrorCode::Io);
    f << content;
    f.flush();
    require(static_cast<bool>(f), "write to '" + path + "' failed", ErrorCode::Io);
  }
  std::filesystem::rename(tmp, p, ec);
  require(!ec, "cannot move '" + tmp + "' into place: " + ec.message(), ErrorCode::Io);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), "cannot read '" + path + "'", ErrorCode::Io);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string TextArchive::serialize() const {
  std::string s = tag + " " + std::to_string(version) + "\n";
  for (const auto& [k, v] : scalars) s += "scalar " + k + " " + v + "\n";
  for (const auto& [k, v] : vectors) {
    s += "vector " + k + " " + std::to_string(v.size()) + "\n";
    for (std::size_t i = 0; i < v.size(); ++i) {
      s += format_hex(v[i]);
      s += (i % 8 == 7 || i + 1 == v.size()) ? '\n' : ' ';
    }
  }
  s += "end\n";
  return s;
}

TextArchive TextArchive::parse(const std::string& text) {
  std::istringstream in(text);
  TextArchive a;
  require(static_cast<bool>(in >> a.tag >> a.version), "archive header missing", ErrorCode::Io);
  std::string word;
  bool ended = false;
  while (in >> word) {
    if (word == "end") {
      ended = true;
      break;
    }
    std::string key;
    if (word == "scalar") {
      std::string value;
      require(static_cast<bool>(in >> key >> value), "truncated scalar record", ErrorCode::Io);
      a.scalars[key] = value;
    } else if (word == "vector") {
      std::size_t n = 0;
      require(static_cast<bool>(in >> key >> n), "truncated vector record", ErrorCode::Io);
      std::vector<double> v(n);
      std::string tok;
      for (auto& x : v) {
        require(static_cast<bool>(in >> tok), "truncated vector '" + key + "'", ErrorCode::Io);
        x = parse_hex(tok);
      }
      a.vectors[key] = std::move(v);
    } else {
      fail(ErrorCode::Io, "unknown archive record '" + word + "'");
    }
  }
  require(ended, "archive is truncated (no end marker)", ErrorCode::Io);
  return a;
}

const std::string& TextArchive::scalar(const std::string& key) const {
  const auto it = scalars.find(key);
  require(it != scalars.end(), "archive lacks '" + key + "'", ErrorCode::Io);
  return it->second;
}

const std::vector<double>& TextArchive::vector(const std::string& key) const {
  const auto it = vectors.find(key);
  require(it != vectors.end(), "archive lacks vector '" + key + "'", ErrorCode::Io);
  return it->second;
}

}  // namespace stotop
