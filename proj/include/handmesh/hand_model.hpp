#pragma once

// Parametric hand model used as the prior-net. A template carries the rest
// mesh, shape/pose blendshapes, skinning weights, a kinematic tree and the
// joint regressor. Posing runs linear blend skinning with pose-corrective
// blendshapes driven by (R(theta_j) - I) per non-root joint; the prior head
// maps the backbone feature to shape/pose coefficients and emits the skinned
// vertices as the mean of a unit-variance vertex distribution.

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "handmesh/autodiff.hpp"
#include "handmesh/mlp.hpp"

namespace handmesh {

struct HandTemplate {
  int vertex_count = 0;  // V
  int joint_count = 0;   // K
  Array template_vertices;              // [V,3]
  std::vector<std::array<int, 3>> faces;
  Array shape_blendshapes;              // [V,3,S]
  Array pose_blendshapes;               // [V,3,9*(K-1)]
  Array skinning_weights;               // [V,K], rows sum to 1, non-negative
  std::vector<int> kinematic_parents;   // K entries, root = -1, parents precede children
  Array joint_regressor;                // [K,V], rows sum to 1

  int shape_dim() const { return shape_blendshapes.shape[2]; }
  int pose_dim() const { return pose_blendshapes.shape[2]; }
};

// Vertex prior: mean from skinning, variance pinned to one.
struct PriorDistribution {
  Array mean;      // [V,3]
  Array variance;  // [V,3], all ones
};

inline void validate_template(const HandTemplate& t) {
  const int V = t.vertex_count, K = t.joint_count;
  if (V < 3 || K < 2) throw ValidationError("template: vertex_count/joint_count too small");
  if (t.template_vertices.shape != Shape{V, 3})
    throw ValidationError("template: template_vertices must be [vertex_count,3]");
  for (const auto& f : t.faces)
    for (int idx : f)
      if (idx < 0 || idx >= V) throw ValidationError("template: face indexes invalid vertex");
  if (t.shape_blendshapes.rank() != 3 || t.shape_blendshapes.shape[0] != V ||
      t.shape_blendshapes.shape[1] != 3)
    throw ValidationError("template: shape_blendshapes must be [vertex_count,3,S]");
  if (t.pose_blendshapes.rank() != 3 || t.pose_blendshapes.shape[0] != V ||
      t.pose_blendshapes.shape[1] != 3 || t.pose_blendshapes.shape[2] != 9 * (K - 1))
    throw ValidationError("template: pose_blendshapes must be [vertex_count,3,9*(joint_count-1)]");
  if (t.skinning_weights.shape != Shape{V, K})
    throw ValidationError("template: skinning_weights must be [vertex_count,joint_count]");
  for (int i = 0; i < V; ++i) {
    double s = 0.0;
    for (int j = 0; j < K; ++j) {
      const double w = t.skinning_weights.at(i, j);
      if (w < 0.0) throw ValidationError("template: negative skinning weight at vertex " + std::to_string(i));
      s += w;
    }
    if (std::fabs(s - 1.0) > 1e-9)
      throw ValidationError("template: skinning row " + std::to_string(i) + " sums to " + std::to_string(s));
  }
  if (static_cast<int>(t.kinematic_parents.size()) != K)
    throw ValidationError("template: kinematic_parents must have joint_count entries");
  if (t.kinematic_parents[0] != -1) throw ValidationError("template: joint 0 must be the root (-1)");
  for (int j = 1; j < K; ++j)
    if (t.kinematic_parents[j] < 0 || t.kinematic_parents[j] >= j)
      throw ValidationError("template: parent of joint " + std::to_string(j) + " must precede it");
  if (t.joint_regressor.shape != Shape{K, V})
    throw ValidationError("template: joint_regressor must be [joint_count,vertex_count]");
  for (int j = 0; j < K; ++j) {
    double s = 0.0;
    for (int i = 0; i < V; ++i) s += t.joint_regressor.at(j, i);
    if (std::fabs(s - 1.0) > 1e-9)
      throw ValidationError("template: joint_regressor row " + std::to_string(j) + " sums to " +
                            std::to_string(s));
  }
  for (const Array* a : {&t.template_vertices, &t.shape_blendshapes, &t.pose_blendshapes,
                         &t.skinning_weights, &t.joint_regressor})
    if (!a->all_finite()) throw ValidationError("template: non-finite value");
}

// ---------------------------------------------------------------------------
// Template document I/O
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json array_to_json(const Array& a) {
  using nlohmann::json;
  if (a.rank() == 1) {
    return json(a.data);
  }
  if (a.rank() == 2) {
    json out = json::array();
    for (int i = 0; i < a.shape[0]; ++i) {
      json row = json::array();
      for (int j = 0; j < a.shape[1]; ++j) row.push_back(a.at(i, j));
      out.push_back(std::move(row));
    }
    return out;
  }
  json out = json::array();
  for (int i = 0; i < a.shape[0]; ++i) {
    json mid = json::array();
    for (int j = 0; j < a.shape[1]; ++j) {
      json row = json::array();
      for (int k = 0; k < a.shape[2]; ++k) row.push_back(a.at(i, j, k));
      mid.push_back(std::move(row));
    }
    out.push_back(std::move(mid));
  }
  return out;
}

inline Array json_to_array(const nlohmann::json& j, const std::string& field, int rank) {
  try {
    if (rank == 1) {
      std::vector<double> v = j.get<std::vector<double>>();
      return Array({static_cast<int>(v.size())}, std::move(v));
    }
    if (rank == 2) {
      const int r = static_cast<int>(j.size());
      const int c = static_cast<int>(j.at(0).size());
      Array a({r, c});
      for (int i = 0; i < r; ++i) {
        const auto& row = j.at(i);
        if (static_cast<int>(row.size()) != c) throw ParseError("ragged rows");
        for (int k = 0; k < c; ++k) a.at(i, k) = row.at(k).get<double>();
      }
      return a;
    }
    const int d0 = static_cast<int>(j.size());
    const int d1 = static_cast<int>(j.at(0).size());
    const int d2 = static_cast<int>(j.at(0).at(0).size());
    Array a({d0, d1, d2});
    for (int i = 0; i < d0; ++i)
      for (int k = 0; k < d1; ++k) {
        const auto& row = j.at(i).at(k);
        if (static_cast<int>(row.size()) != d2) throw ParseError("ragged rows");
        for (int m = 0; m < d2; ++m) a.at(i, k, m) = row.at(m).get<double>();
      }
    return a;
  } catch (const ParseError&) {
    throw ParseError("template field '" + field + "': ragged array");
  } catch (const std::exception& e) {
    throw ParseError("template field '" + field + "': " + e.what());
  }
}

}  // namespace detail

inline void save_template(const HandTemplate& t, const std::string& path) {
  nlohmann::json j;
  j["vertex_count"] = t.vertex_count;
  j["joint_count"] = t.joint_count;
  j["template_vertices"] = detail::array_to_json(t.template_vertices);
  nlohmann::json faces = nlohmann::json::array();
  for (const auto& f : t.faces) faces.push_back({f[0], f[1], f[2]});
  j["faces"] = std::move(faces);
  j["shape_blendshapes"] = detail::array_to_json(t.shape_blendshapes);
  j["pose_blendshapes"] = detail::array_to_json(t.pose_blendshapes);
  j["skinning_weights"] = detail::array_to_json(t.skinning_weights);
  j["kinematic_parents"] = t.kinematic_parents;
  j["joint_regressor"] = detail::array_to_json(t.joint_regressor);
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << j.dump();
}

inline HandTemplate load_template(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open template file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(std::string("template: invalid document: ") + e.what());
  }
  auto need = [&](const char* field) -> const nlohmann::json& {
    if (!j.contains(field)) throw ParseError(std::string("template: missing field '") + field + "'");
    return j.at(field);
  };
  HandTemplate t;
  try {
    t.vertex_count = need("vertex_count").get<int>();
    t.joint_count = need("joint_count").get<int>();
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("template field 'vertex_count/joint_count': ") + e.what());
  }
  t.template_vertices = detail::json_to_array(need("template_vertices"), "template_vertices", 2);
  try {
    for (const auto& f : need("faces"))
      t.faces.push_back({f.at(0).get<int>(), f.at(1).get<int>(), f.at(2).get<int>()});
  } catch (const std::exception& e) {
    throw ParseError(std::string("template field 'faces': ") + e.what());
  }
  t.shape_blendshapes = detail::json_to_array(need("shape_blendshapes"), "shape_blendshapes", 3);
  t.pose_blendshapes = detail::json_to_array(need("pose_blendshapes"), "pose_blendshapes", 3);
  t.skinning_weights = detail::json_to_array(need("skinning_weights"), "skinning_weights", 2);
  try {
    t.kinematic_parents = need("kinematic_parents").get<std::vector<int>>();
  } catch (const std::exception& e) {
    throw ParseError(std::string("template field 'kinematic_parents': ") + e.what());
  }
  t.joint_regressor = detail::json_to_array(need("joint_regressor"), "joint_regressor", 2);
  validate_template(t);
  return t;
}

// ---------------------------------------------------------------------------
// Skinning
// ---------------------------------------------------------------------------

struct LbsNodes {
  int vertices;  // [V,3]
  int joints;    // [K,3] = regressor * vertices
};

// Differentiable skinning: shape blend, pose-corrective blend, rigid
// transforms composed along the kinematic tree, then the joint regressor on
// the skinned vertices. shape_coeffs: [S], pose: [K,3] axis-angle.
inline LbsNodes lbs_nodes(ad::Graph& g, const HandTemplate& t, int shape_coeffs, int pose) {
  const int V = t.vertex_count, K = t.joint_count, S = t.shape_dim(), P = t.pose_dim();
  if (g.node(shape_coeffs).shape != Shape{S}) throw ShapeError("lbs: shape_coeffs must be [S]");
  if (g.node(pose).shape != Shape{K, 3}) throw ShapeError("lbs: pose must be [K,3]");

  const int tmpl = g.constant(t.template_vertices);
  Array shape_mat = t.shape_blendshapes;
  shape_mat.shape = {V * 3, S};
  const int v_shaped =
      g.add(tmpl, g.reshape(g.matmul(g.constant(shape_mat), g.reshape(shape_coeffs, {S, 1})), {V, 3}));

  const int B = g.constant(t.joint_regressor);
  const int j0 = g.matmul(B, v_shaped);

  std::vector<int> R(K);
  for (int j = 0; j < K; ++j) R[j] = g.rodrigues(g.reshape(g.row(pose, j), {3}));

  const int I3 = g.constant(Array::identity(3));
  std::vector<int> feat_parts;
  for (int j = 1; j < K; ++j) feat_parts.push_back(g.reshape(g.sub(R[j], I3), {9, 1}));
  Array pose_mat = t.pose_blendshapes;
  pose_mat.shape = {V * 3, P};
  const int v_posed = g.add(
      v_shaped, g.reshape(g.matmul(g.constant(pose_mat), g.concat(feat_parts, 0)), {V, 3}));

  std::vector<int> GR(K), Gt(K);
  GR[0] = R[0];
  Gt[0] = g.transpose(g.row(j0, 0));
  for (int j = 1; j < K; ++j) {
    const int p = t.kinematic_parents[j];
    const int offset = g.transpose(g.sub(g.row(j0, j), g.row(j0, p)));
    GR[j] = g.matmul(GR[p], R[j]);
    Gt[j] = g.add(g.matmul(GR[p], offset), Gt[p]);
  }

  int skinned = -1;
  for (int j = 0; j < K; ++j) {
    const int j0col = g.transpose(g.row(j0, j));
    const int t_rel = g.sub(Gt[j], g.matmul(GR[j], j0col));
    const int moved = g.add(g.matmul(v_posed, g.transpose(GR[j])), g.tile_rows(g.transpose(t_rel), V));
    Array wcol({V, 1});
    for (int i = 0; i < V; ++i) wcol.data[i] = t.skinning_weights.at(i, j);
    const int weighted = g.mul(g.tile_cols(g.constant(wcol), 3), moved);
    skinned = (j == 0) ? weighted : g.add(skinned, weighted);
  }

  LbsNodes out;
  out.vertices = skinned;
  out.joints = g.matmul(B, skinned);
  return out;
}

struct LbsResult {
  Array vertices;  // [V,3]
  Array joints;    // [K,3]
};

inline LbsResult lbs_forward(const HandTemplate& t, const Array& shape_coeffs, const Array& pose) {
  if (!shape_coeffs.all_finite() || !pose.all_finite())
    throw NumericError("lbs_forward: non-finite input");
  ad::Graph g;
  const int s = g.input("shape", {t.shape_dim()});
  const int p = g.input("pose", {t.joint_count, 3});
  const LbsNodes nodes = lbs_nodes(g, t, s, p);
  ad::Evaluator ev(g);
  ev.bind("shape", shape_coeffs);
  ev.bind("pose", pose);
  ev.forward();
  return {ev.value(nodes.vertices), ev.value(nodes.joints)};
}

// Rest-pose vertices and regressed joints (zero shape and pose coefficients).
inline LbsResult rest_coords(const HandTemplate& t) {
  return lbs_forward(t, Array({t.shape_dim()}), Array({t.joint_count, 3}));
}

// ---------------------------------------------------------------------------
// Prior head
// ---------------------------------------------------------------------------

struct PriorHeadNodes {
  int shape_coeffs;  // [S]
  int pose;          // [K,3]
  int mean;          // [V,3] skinned vertices
};

inline constexpr int kPriorHiddenWidth = 512;

// Two hidden layers map the global feature to shape and pose coefficients;
// the skinned vertices are the prior mean and the variance is one.
inline PriorHeadNodes prior_head_nodes(ad::Graph& g, const HandTemplate& t, int feature_col,
                                       const std::string& prefix, int hidden = kPriorHiddenWidth) {
  const int D = g.node(feature_col).shape[0];
  const int S = t.shape_dim(), K = t.joint_count;
  const int raw = mlp_cols(g, feature_col, prefix, {D, hidden, hidden, S + 3 * K});
  const int shape = g.reshape(g.slice(raw, {0, 0}, {S, 1}), {S});
  const int pose = g.reshape(g.slice(raw, {S, 0}, {S + 3 * K, 1}), {K, 3});
  const LbsNodes lbs = lbs_nodes(g, t, shape, pose);
  return {shape, pose, lbs.vertices};
}

inline void prior_head_init(std::map<std::string, Array>& params, const std::string& prefix,
                            const HandTemplate& t, int feature_dim, Rng& rng,
                            int hidden = kPriorHiddenWidth) {
  mlp_init(params, prefix, {feature_dim, hidden, hidden, t.shape_dim() + 3 * t.joint_count}, rng);
}

// Value-level prior head: evaluates the graph for one feature vector.
inline PriorDistribution prior_head(const Array& feature, const std::map<std::string, Array>& params,
                                    const HandTemplate& t, const std::string& prefix = "prior.mlp",
                                    int hidden = kPriorHiddenWidth) {
  ad::Graph g;
  const int D = static_cast<int>(feature.numel());
  const int f = g.input("feature", {D, 1});
  const PriorHeadNodes nodes = prior_head_nodes(g, t, f, prefix, hidden);
  ad::Evaluator ev(g);
  Array fcol = feature;
  fcol.shape = {D, 1};
  ev.bind("feature", fcol);
  for (const std::string& name : g.param_names()) ev.bind(name, params.at(name));
  ev.forward();
  PriorDistribution out;
  out.mean = ev.value(nodes.mean);
  out.variance = Array::ones({t.vertex_count, 3});
  return out;
}

// ---------------------------------------------------------------------------
// Procedural templates
// ---------------------------------------------------------------------------

// Model units are decimeters: a hand spans ~2 units, so coordinates, camera
// scales and regression targets all sit near one.
inline constexpr double kMillimetersPerUnit = 100.0;

namespace detail {

inline void box_faces(std::vector<std::array<int, 3>>& faces, int b) {
  // Corner order: (x-,y0,z-),(x+,y0,z-),(x+,y0,z+),(x-,y0,z+), then the same
  // four at y1.
  const int q[6][4] = {{0, 1, 2, 3}, {4, 7, 6, 5}, {0, 4, 5, 1}, {1, 5, 6, 2}, {2, 6, 7, 3}, {3, 7, 4, 0}};
  for (const auto& f : q) {
    faces.push_back({b + f[0], b + f[1], b + f[2]});
    faces.push_back({b + f[0], b + f[2], b + f[3]});
  }
}

inline void finish_blendshapes(HandTemplate& t) {
  const int V = t.vertex_count, K = t.joint_count;
  // Shape direction 0: scale about the centroid. Direction 1: lengthen
  // whatever extends beyond the palm.
  double cx = 0, cy = 0, cz = 0;
  for (int i = 0; i < V; ++i) {
    cx += t.template_vertices.at(i, 0);
    cy += t.template_vertices.at(i, 1);
    cz += t.template_vertices.at(i, 2);
  }
  cx /= V;
  cy /= V;
  cz /= V;
  t.shape_blendshapes = Array({V, 3, 2});
  for (int i = 0; i < V; ++i) {
    t.shape_blendshapes.at(i, 0, 0) = t.template_vertices.at(i, 0) - cx;
    t.shape_blendshapes.at(i, 1, 0) = t.template_vertices.at(i, 1) - cy;
    t.shape_blendshapes.at(i, 2, 0) = t.template_vertices.at(i, 2) - cz;
    const double stretch = std::max(0.0, t.template_vertices.at(i, 1) - cy);
    t.shape_blendshapes.at(i, 1, 1) = stretch;
  }
  double extent = 0.0;
  for (int i = 0; i < V; ++i)
    for (int c = 0; c < 3; ++c) extent = std::max(extent, std::fabs(t.template_vertices.at(i, c)));
  const int P = 9 * (K - 1);
  t.pose_blendshapes = Array({V, 3, P});
  for (int i = 0; i < V; ++i)
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < P; ++p)
        t.pose_blendshapes.at(i, c, p) = 0.01 * extent * std::sin(0.7 * i + 1.3 * c + 2.1 * p);
}

}  // namespace detail

// Articulated "paddle hand": a slab palm plus five three-segment fingers.
// 162 vertices, 16 joints, desk scale in meters.
inline HandTemplate make_paddle_template() {
  HandTemplate t;
  t.joint_count = 16;
  const int palm_rows = 3, palm_cols = 7;
  const double palm_y[3] = {0.0, 0.4, 0.8};
  const double palm_x0 = -0.42, palm_dx = 0.14, palm_z = 0.12;
  const double seg_len = 0.25, seg_half = 0.06;
  const double finger_x0 = -0.32, finger_dx = 0.16;

  std::vector<double> verts;
  auto pushv = [&](double x, double y, double z) {
    verts.push_back(x);
    verts.push_back(y);
    verts.push_back(z);
  };
  for (int r = 0; r < palm_rows; ++r)
    for (int c = 0; c < palm_cols; ++c) pushv(palm_x0 + c * palm_dx, palm_y[r], palm_z);
  for (int r = 0; r < palm_rows; ++r)
    for (int c = 0; c < palm_cols; ++c) pushv(palm_x0 + c * palm_dx, palm_y[r], -palm_z);

  const int seg_base = 42;
  for (int f = 0; f < 5; ++f) {
    const double fx = finger_x0 + f * finger_dx;
    for (int s = 0; s < 3; ++s) {
      const double y0 = 0.8 + s * seg_len, y1 = y0 + seg_len;
      pushv(fx - seg_half, y0, -seg_half);
      pushv(fx + seg_half, y0, -seg_half);
      pushv(fx + seg_half, y0, seg_half);
      pushv(fx - seg_half, y0, seg_half);
      pushv(fx - seg_half, y1, -seg_half);
      pushv(fx + seg_half, y1, -seg_half);
      pushv(fx + seg_half, y1, seg_half);
      pushv(fx - seg_half, y1, seg_half);
    }
  }
  t.vertex_count = static_cast<int>(verts.size()) / 3;
  t.template_vertices = Array({t.vertex_count, 3}, std::move(verts));

  auto grid = [&](int r, int c, bool top) { return (top ? 0 : 21) + r * palm_cols + c; };
  for (int r = 0; r + 1 < palm_rows; ++r)
    for (int c = 0; c + 1 < palm_cols; ++c) {
      t.faces.push_back({grid(r, c, true), grid(r, c + 1, true), grid(r + 1, c + 1, true)});
      t.faces.push_back({grid(r, c, true), grid(r + 1, c + 1, true), grid(r + 1, c, true)});
      t.faces.push_back({grid(r, c, false), grid(r + 1, c + 1, false), grid(r, c + 1, false)});
      t.faces.push_back({grid(r, c, false), grid(r + 1, c, false), grid(r + 1, c + 1, false)});
    }
  auto wall = [&](int a, int b) {
    t.faces.push_back({a, b, b + 21});
    t.faces.push_back({a, b + 21, a + 21});
  };
  for (int c = 0; c + 1 < palm_cols; ++c) {
    wall(grid(0, c, true), grid(0, c + 1, true));
    wall(grid(palm_rows - 1, c + 1, true), grid(palm_rows - 1, c, true));
  }
  for (int r = 0; r + 1 < palm_rows; ++r) {
    wall(grid(r + 1, 0, true), grid(r, 0, true));
    wall(grid(r, palm_cols - 1, true), grid(r + 1, palm_cols - 1, true));
  }
  for (int part = 0; part < 15; ++part) detail::box_faces(t.faces, seg_base + part * 8);

  t.kinematic_parents.assign(16, -1);
  for (int f = 0; f < 5; ++f)
    for (int s = 0; s < 3; ++s) t.kinematic_parents[1 + f * 3 + s] = (s == 0) ? 0 : f * 3 + s;

  t.skinning_weights = Array({t.vertex_count, 16});
  for (int i = 0; i < seg_base; ++i) t.skinning_weights.at(i, 0) = 1.0;
  for (int f = 0; f < 5; ++f)
    for (int s = 0; s < 3; ++s) {
      const int joint = 1 + f * 3 + s;
      const int parent = t.kinematic_parents[joint];
      const int vb = seg_base + (f * 3 + s) * 8;
      for (int k = 0; k < 4; ++k) {  // base ring blends toward the parent
        t.skinning_weights.at(vb + k, joint) = 0.5;
        t.skinning_weights.at(vb + k, parent) = 0.5;
      }
      for (int k = 4; k < 8; ++k) t.skinning_weights.at(vb + k, joint) = 1.0;
    }

  t.joint_regressor = Array({16, t.vertex_count});
  for (int i = 0; i < seg_base; ++i) t.joint_regressor.at(0, i) = 1.0 / seg_base;
  for (int f = 0; f < 5; ++f)
    for (int s = 0; s < 3; ++s) {
      const int joint = 1 + f * 3 + s;
      const int vb = seg_base + (f * 3 + s) * 8;
      for (int k = 0; k < 4; ++k) t.joint_regressor.at(joint, vb + k) = 0.25;
    }

  detail::finish_blendshapes(t);
  validate_template(t);
  return t;
}

// Tiny chain used by gradient audits: a single articulated finger with
// triangular rings. 12 vertices, 4 joints. With one_hot_weights set, every
// vertex is rigidly owned by one joint and pose correctives are zeroed, so
// each part moves as a pure rigid body.
inline HandTemplate make_toy_template(bool one_hot_weights = false) {
  HandTemplate t;
  t.joint_count = 4;
  t.vertex_count = 12;
  const double ring_r = 0.08, seg = 0.3;
  t.template_vertices = Array({12, 3});
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 3; ++k) {
      const double a = 2.0943951023931953 * k + 0.3;
      t.template_vertices.at(j * 3 + k, 0) = ring_r * std::cos(a);
      t.template_vertices.at(j * 3 + k, 1) = seg * j;
      t.template_vertices.at(j * 3 + k, 2) = ring_r * std::sin(a);
    }
  for (int j = 0; j + 1 < 4; ++j)
    for (int k = 0; k < 3; ++k) {
      const int a = j * 3 + k, b = j * 3 + (k + 1) % 3;
      t.faces.push_back({a, b, b + 3});
      t.faces.push_back({a, b + 3, a + 3});
    }
  t.faces.push_back({0, 1, 2});
  t.faces.push_back({9, 11, 10});

  t.kinematic_parents = {-1, 0, 1, 2};
  t.skinning_weights = Array({12, 4});
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 3; ++k) {
      const int v = j * 3 + k;
      if (j == 0 || one_hot_weights) {
        t.skinning_weights.at(v, j) = 1.0;
      } else {
        t.skinning_weights.at(v, j) = 0.5;
        t.skinning_weights.at(v, j - 1) = 0.5;
      }
    }
  t.joint_regressor = Array({4, 12});
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 3; ++k) t.joint_regressor.at(j, j * 3 + k) = 1.0 / 3.0;

  detail::finish_blendshapes(t);
  if (one_hot_weights)
    t.pose_blendshapes = Array({t.vertex_count, 3, 9 * (t.joint_count - 1)});
  validate_template(t);
  return t;
}

}  // namespace handmesh
