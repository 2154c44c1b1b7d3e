#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "handmesh/array.hpp"

namespace handmesh {

// Deterministic random source. Gaussian draws use Box-Muller on top of the
// raw mt19937_64 stream so sequences do not depend on the standard library's
// normal_distribution implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() {  // [0, 1)
    return (gen_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + static_cast<int>(gen_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Array normal_array(Shape shape, double stddev = 1.0, double mean = 0.0) {
    Array a(std::move(shape));
    for (double& v : a.data) v = mean + stddev * normal();
    return a;
  }

  Array uniform_array(Shape shape, double lo, double hi) {
    Array a(std::move(shape));
    for (double& v : a.data) v = uniform(lo, hi);
    return a;
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace handmesh
