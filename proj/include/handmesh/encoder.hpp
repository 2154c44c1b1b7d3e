#pragma once

// Small strided convolutional encoder standing in for the backbone. Each
// stage is a 3x3 stride-2 convolution with tanh; the global feature is the
// average pool of the last stage and the shallow feature map is the first
// stage's output, bilinearly resized back to the input resolution.

#include <map>
#include <string>
#include <vector>

#include "handmesh/autodiff.hpp"
#include "handmesh/rng.hpp"

namespace handmesh {

struct EncoderNodes {
  int feature_col;  // [D,1], D = last stage width
  int feature_map;  // [H,W,C1], resized to the input resolution
};

inline EncoderNodes encoder_nodes(ad::Graph& g, int image, const std::vector<int>& widths,
                                  const std::string& prefix) {
  const Shape& s = g.node(image).shape;
  if (s.size() != 3) throw ShapeError("encoder: image must be [H,W,C]");
  const int H = s[0], W = s[1];
  int cur = image;
  int first_stage = -1;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const Shape& cs = g.node(cur).shape;
    const int cin = cs[2], cout = widths[i];
    const int oh = cs[0] / 2, ow = cs[1] / 2;
    const int patches = g.im2col(cur, 3, 3, 2, 1);
    const int w = g.param(prefix + ".conv" + std::to_string(i) + ".w", {9 * cin, cout});
    const int b = g.param(prefix + ".conv" + std::to_string(i) + ".b", {1, cout});
    const int lin = g.add(g.matmul(patches, w), g.tile_rows(b, oh * ow));
    cur = g.reshape(g.tanh(lin), {oh, ow, cout});
    if (i == 0) first_stage = cur;
  }

  // Global average pool of the last stage.
  const Shape& ls = g.node(cur).shape;
  const int hw = ls[0] * ls[1];
  const int flat = g.reshape(cur, {hw, ls[2]});
  const int pool = g.constant(Array({1, hw}, 1.0 / hw));
  const int feature = g.transpose(g.matmul(pool, flat));

  // Resize the first stage to H x W with a fixed bilinear grid.
  const Shape& fs = g.node(first_stage).shape;
  Array grid({H * W, 2});
  const double sx = static_cast<double>(fs[1]) / W, sy = static_cast<double>(fs[0]) / H;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      grid.at(y * W + x, 0) = (x + 0.5) * sx;
      grid.at(y * W + x, 1) = (y + 0.5) * sy;
    }
  const int resized = g.reshape(g.bilinear_sample(first_stage, g.constant(grid)), {H, W, fs[2]});

  return {feature, resized};
}

inline void encoder_init(std::map<std::string, Array>& params, const std::string& prefix,
                         int image_channels, const std::vector<int>& widths, Rng& rng) {
  int cin = image_channels;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const double stddev = 1.0 / std::sqrt(9.0 * cin);
    params[prefix + ".conv" + std::to_string(i) + ".w"] = rng.normal_array({9 * cin, widths[i]}, stddev);
    params[prefix + ".conv" + std::to_string(i) + ".b"] = Array({1, widths[i]});
    cin = widths[i];
  }
}

}  // namespace handmesh
