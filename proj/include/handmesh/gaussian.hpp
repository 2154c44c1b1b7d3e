#pragma once

#include "handmesh/array.hpp"

namespace handmesh {

// Diagonal Gaussian over a flat coordinate block. The variance field stores
// variances (not standard deviations) everywhere in this library.
struct DiagGaussian {
  Array mean;
  Array variance;

  void validate() const {
    require_same_shape(mean, variance, "DiagGaussian");
    for (double v : variance.data)
      if (!(v > 0.0)) throw DomainError("DiagGaussian: variance must be strictly positive");
  }

  static DiagGaussian unit(const Array& mean) {
    DiagGaussian g;
    g.mean = mean;
    g.variance = Array(mean.shape, 1.0);
    return g;
  }
};

}  // namespace handmesh
