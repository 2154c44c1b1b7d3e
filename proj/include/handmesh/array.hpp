#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "handmesh/errors.hpp"

namespace handmesh {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int e : s) {
    if (e <= 0) throw ShapeError("shape extents must be positive");
    n *= e;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// Dense row-major array of doubles. The single tensor type used across the
// library; 64-bit floats throughout.
struct Array {
  Shape shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(Shape s) : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), 0.0) {}
  Array(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
      throw ShapeError("data length does not match shape " + shape_str(shape));
  }
  Array(Shape s, double fill) : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), fill) {}

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  int rows() const { return shape.size() >= 1 ? shape[0] : 1; }
  int cols() const { return shape.size() >= 2 ? shape[1] : 1; }

  double& at(int i) { return data[static_cast<std::size_t>(i)]; }
  double at(int i) const { return data[static_cast<std::size_t>(i)]; }
  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols() + j]; }
  double& at(int i, int j, int k) {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  double at(int i, int j, int k) const {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }

  bool same_shape(const Array& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static Array zeros(Shape s) { return Array(std::move(s)); }
  static Array ones(Shape s) { return Array(std::move(s), 1.0); }
  static Array scalar(double v) { return Array({1}, std::vector<double>{v}); }
  static Array identity(int n) {
    Array a({n, n});
    for (int i = 0; i < n; ++i) a.at(i, i) = 1.0;
    return a;
  }
};

inline void require_same_shape(const Array& a, const Array& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

}  // namespace handmesh
