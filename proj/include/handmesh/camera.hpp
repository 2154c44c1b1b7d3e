#pragma once

// Weak-perspective camera: axis-angle rotations through the closed-form
// rotation map, projection that drops depth after rotating, and the camera
// head that regresses the 7 camera parameters (scale, rotation, translation)
// as the mean of a unit-variance Gaussian.

#include <array>
#include <map>
#include <string>

#include "handmesh/autodiff.hpp"
#include "handmesh/mlp.hpp"

namespace handmesh {

struct CameraParams {
  double scale = 1.0;                      // s > 0
  std::array<double, 3> rotation{};        // axis-angle, radians
  std::array<double, 3> translation{};     // image units; only x,y enter projection

  Array as_vector() const {
    Array v({7});
    v.data = {scale, rotation[0], rotation[1], rotation[2], translation[0], translation[1],
              translation[2]};
    return v;
  }
  static CameraParams from_vector(const Array& v) {
    if (v.numel() != 7) throw ShapeError("camera vector must have 7 entries");
    CameraParams c;
    c.scale = v.data[0];
    c.rotation = {v.data[1], v.data[2], v.data[3]};
    c.translation = {v.data[4], v.data[5], v.data[6]};
    return c;
  }
};

// Mean of the camera Gaussian; the variance is pinned to one everywhere.
struct CameraGaussian {
  Array mean;  // [7]
};

inline Array rodrigues(const std::array<double, 3>& r) {
  Array R({3, 3});
  const double rv[3] = {r[0], r[1], r[2]};
  ad::detail::rodrigues_forward(rv, R.data.data());
  return R;
}

// points2D = (s * points3D R)[:, 0:2] + (T1, T2)
inline Array project_weak_perspective(const Array& points3d, const CameraParams& cam) {
  if (points3d.rank() != 2 || points3d.shape[1] != 3)
    throw ShapeError("project_weak_perspective: points must be [N,3]");
  const Array R = rodrigues(cam.rotation);
  const int n = points3d.shape[0];
  Array out({n, 2});
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 2; ++a) {
      double acc = 0.0;
      for (int b = 0; b < 3; ++b) acc += points3d.at(i, b) * R.at(b, a);
      out.at(i, a) = cam.scale * acc + cam.translation[a];
    }
  }
  return out;
}

// Camera-space depth after rotation, used for depth ordering in rendering.
inline Array camera_depths(const Array& points3d, const CameraParams& cam) {
  const Array R = rodrigues(cam.rotation);
  const int n = points3d.shape[0];
  Array out({n});
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int b = 0; b < 3; ++b) acc += points3d.at(i, b) * R.at(b, 2);
    out.data[i] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Graph builders
// ---------------------------------------------------------------------------

// Split camera nodes extracted from a 7-entry column or flat vector.
struct CameraNodes {
  int scale;        // [1]
  int rotation;     // [3]
  int translation;  // [1,2], image-plane part only
  int full;         // [7,1] column (s, r, T)
};

inline CameraNodes split_camera(ad::Graph& g, int cam7col) {
  const Shape& s = g.node(cam7col).shape;
  if (shape_numel(s) != 7) throw ShapeError("split_camera: expected 7 entries");
  int col = (s == Shape{7, 1}) ? cam7col : g.reshape(cam7col, {7, 1});
  CameraNodes c;
  c.scale = g.reshape(g.slice(col, {0, 0}, {1, 1}), {1});
  c.rotation = g.reshape(g.slice(col, {1, 0}, {4, 1}), {3});
  c.translation = g.transpose(g.slice(col, {4, 0}, {6, 1}));
  c.full = col;
  return c;
}

// Weak-perspective projection of [N,3] points, differentiable in points and
// all camera parameters.
inline int project_nodes(ad::Graph& g, int points, const CameraNodes& cam) {
  const int n = g.node(points).shape[0];
  const int R = g.rodrigues(cam.rotation);
  const int P = g.smul(cam.scale, g.matmul(points, R));
  const int xy = g.slice(P, {0, 0}, {n, 2});
  return g.add(xy, g.tile_rows(cam.translation, n));
}

// Diagonal push-forward of per-point variances through the projection:
// var2d[:,a] = |s| * sum_b R[b,a]^2 var3d[:,b], image-plane axes only.
// Cross terms are dropped, matching the diagonal-only treatment of the
// projected spread.
inline int project_var_nodes(ad::Graph& g, int var3d, const CameraNodes& cam) {
  const int R = g.rodrigues(cam.rotation);
  const int Rsq = g.mul(R, R);
  const int Rsq2 = g.slice(Rsq, {0, 0}, {3, 2});
  return g.smul(g.abs(cam.scale), g.matmul(var3d, Rsq2));
}

// Two-layer perceptron from the global feature to the camera mean; the scale
// entry passes through exp so it stays positive. Returns the [7,1] mean
// column (variance is one by construction).
inline int camera_head_nodes(ad::Graph& g, int feature_col, const std::string& prefix, int hidden) {
  const int d = g.node(feature_col).shape[0];
  const int raw = mlp_cols(g, feature_col, prefix, {d, hidden, 7});
  const int s = g.exp(g.slice(raw, {0, 0}, {1, 1}));
  const int rest = g.slice(raw, {1, 0}, {7, 1});
  return g.concat({s, rest}, 0);
}

inline void camera_head_init(std::map<std::string, Array>& params, const std::string& prefix, int d,
                             int hidden, Rng& rng) {
  mlp_init(params, prefix, {d, hidden, 7}, rng);
}

}  // namespace handmesh
