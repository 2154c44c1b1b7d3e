#pragma once

// Small per-column perceptron used by every regression head. Tokens live in
// columns, so a layer is W x + b with the bias broadcast across columns.

#include <map>
#include <string>
#include <vector>

#include "handmesh/autodiff.hpp"
#include "handmesh/rng.hpp"

namespace handmesh {

inline std::string layer_w(const std::string& prefix, int i) { return prefix + ".w" + std::to_string(i); }
inline std::string layer_b(const std::string& prefix, int i) { return prefix + ".b" + std::to_string(i); }

// Declares parameters "<prefix>.w<i>" / "<prefix>.b<i>" and applies the
// layers to x ([widths[0], N]). tanh between layers, linear output.
inline int mlp_cols(ad::Graph& g, int x, const std::string& prefix, const std::vector<int>& widths) {
  const int ncols = g.node(x).shape[1];
  int cur = x;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const int w = g.param(layer_w(prefix, static_cast<int>(i)), {widths[i + 1], widths[i]});
    const int b = g.param(layer_b(prefix, static_cast<int>(i)), {widths[i + 1], 1});
    cur = g.add(g.matmul(w, cur), g.tile_cols(b, ncols));
    if (i + 2 < widths.size()) cur = g.tanh(cur);
  }
  return cur;
}

// Scaled-normal initialization; the output layer starts at zero so heads emit
// their bias until training moves them.
inline void mlp_init(std::map<std::string, Array>& params, const std::string& prefix,
                     const std::vector<int>& widths, Rng& rng, bool zero_last = true) {
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = (i + 2 == widths.size());
    const double stddev = (last && zero_last) ? 0.0 : 1.0 / std::sqrt(static_cast<double>(widths[i]));
    params[layer_w(prefix, static_cast<int>(i))] = rng.normal_array({widths[i + 1], widths[i]}, stddev);
    params[layer_b(prefix, static_cast<int>(i))] = Array({widths[i + 1], 1});
  }
}

}  // namespace handmesh
