#pragma once

// Gradient audit: every differentiable op kind in a micro graph, then the
// composite supervised and weakly-supervised training graphs (texture branch
// included) on the built-in toy template, all against central finite
// differences.

#include <iostream>
#include <string>
#include <vector>

#include "handmesh/model.hpp"
#include "handmesh/scene.hpp"

namespace handmesh {

struct AuditEntry {
  std::string name;
  double max_rel_error = 0.0;
};

namespace audit_detail {

inline double op_audit(const std::string& which, std::uint64_t seed) {
  ad::Graph g;
  Rng rng(seed);
  std::map<std::string, Array> binds;
  int y = -1;
  auto randp = [&](const char* n, Shape s) {
    int id = g.param(n, s);
    binds[n] = rng.normal_array(s);
    return id;
  };
  if (which == "add") {
    y = g.sum(g.add(randp("a", {3, 4}), randp("b", {3, 4})));
  } else if (which == "mul") {
    y = g.sum(g.mul(randp("a", {3, 4}), randp("b", {3, 4})));
  } else if (which == "matmul") {
    y = g.sum(g.matmul(randp("a", {3, 4}), randp("b", {4, 2})));
  } else if (which == "softmax") {
    y = g.sum(g.mul(g.softmax_rows(randp("a", {3, 4})), randp("w", {3, 4})));
  } else if (which == "exp") {
    y = g.sum(g.exp(randp("a", {3, 4})));
  } else if (which == "log") {
    y = g.sum(g.log(g.add_const(g.square(randp("a", {3, 4})), 0.5)));
  } else if (which == "concat") {
    y = g.sum(g.square(g.concat({randp("a", {2, 3}), randp("b", {4, 3})}, 0)));
  } else if (which == "slice") {
    y = g.sum(g.square(g.slice(randp("a", {4, 5}), {1, 2}, {3, 5})));
  } else if (which == "sum") {
    y = g.sum(g.square(randp("a", {3, 4})));
  } else if (which == "mean") {
    y = g.mean(g.square(randp("a", {3, 4})));
  } else if (which == "square") {
    y = g.sum(g.square(randp("a", {3, 4})));
  } else if (which == "sqrt") {
    y = g.sum(g.sqrt(g.add_const(g.square(randp("a", {3, 4})), 0.5)));
  } else if (which == "reciprocal") {
    y = g.sum(g.reciprocal(g.add_const(g.square(randp("a", {3, 4})), 0.5)));
  } else if (which == "bilinear_sample") {
    int map = randp("map", {5, 6, 2});
    int pts = g.param("pts", {4, 2});
    Array p({4, 2});
    for (int i = 0; i < 4; ++i) {
      p.at(i, 0) = rng.uniform(1.2, 4.6);
      p.at(i, 1) = rng.uniform(1.2, 3.6);
    }
    binds["pts"] = p;
    y = g.sum(g.square(g.bilinear_sample(map, pts)));
  } else if (which == "rodrigues") {
    y = g.sum(g.mul(g.rodrigues(randp("r", {3})), randp("w", {3, 3})));
  } else if (which == "tanh") {
    y = g.sum(g.tanh(randp("a", {3, 4})));
  } else if (which == "sigmoid") {
    y = g.sum(g.sigmoid(randp("a", {3, 4})));
  } else if (which == "abs") {
    y = g.sum(g.abs(g.add_const(randp("a", {3, 4}), 0.05)));
  } else if (which == "im2col") {
    y = g.sum(g.square(g.matmul(g.im2col(randp("img", {5, 5, 2}), 3, 3, 2, 1), randp("w", {18, 2}))));
  } else {
    throw ContractError("unknown audit op '" + which + "'");
  }
  return ad::grad_check(g, y, binds, 1e-6);
}

inline RunConfig toy_config(const std::string& mode) {
  RunConfig cfg;
  cfg.image_size = 16;
  cfg.encoder_widths = {3, 4};
  cfg.attention_dims = {3, 3, 4};
  cfg.loss_weights = {1, 1, 1, 1, 1};
  cfg.mode = mode;
  cfg.weak_samples = 2;
  cfg.batch_size = 1;
  cfg.steps = 0;
  return cfg;
}

inline double composite_audit(const std::string& mode, std::uint64_t seed) {
  const HandTemplate tmpl = make_toy_template();
  const RunConfig cfg = toy_config(mode);
  ad::Graph g;
  const ModelNodes m = build_model(g, cfg, tmpl, /*with_texture=*/true, /*prior_hidden=*/8);

  Rng rng(seed);
  std::map<std::string, Array> binds = init_params(cfg, tmpl, rng, /*prior_hidden=*/8);
  for (auto& [name, value] : binds)
    for (double& x : value.data) x += 0.05 * rng.normal();

  const std::vector<SceneSample> scenes = generate_synthetic(cfg, tmpl, 1, seed);
  const SceneSample& sample = scenes[0];
  binds["image"] = sample.image;
  if (mode == "supervised") {
    binds["target.vertices"] = sample.targets.vertices;
    binds["target.joints3d"] = sample.targets.joints3d;
    binds["target.joints2d"] = sample.targets.joints2d;
    Array cam = sample.targets.camera;
    cam.shape = {7, 1};
    binds["target.camera"] = cam;
  } else {
    binds["target.joints2d"] = sample.targets.joints2d;
    for (int s = 0; s < cfg.weak_samples; ++s) {
      binds["eps.vertices." + std::to_string(s)] = rng.normal_array({tmpl.vertex_count, 3}, 0.3);
      binds["eps.camera." + std::to_string(s)] = rng.normal_array({7, 1}, 0.1);
    }
  }
  // A ground-truth raster keeps the texture branch at a generic point; the
  // table is an input, so any coverage is a valid audit point.
  const CameraParams cam = CameraParams::from_vector(sample.targets.camera);
  const ProjectedMesh pm =
      project_scene(sample.targets.vertices, tmpl.faces, cam, sample.occluder, cfg.image_size);
  const RasterBuffers rb = rasterize(pm, cfg.image_size, cfg.image_size);
  Array table = build_raster_table(rb, pm.faces);
  const int P = cfg.image_size * cfg.image_size;
  Array mask3({P, 3});
  for (int p = 0; p < P; ++p) {
    const int t = rb.tri_id[static_cast<std::size_t>(p)];
    const bool hand = t >= 0 && t < static_cast<int>(tmpl.faces.size());
    if (!hand && t >= 0) table.at(p, 0) = -1.0;
    for (int c = 0; c < 3; ++c) mask3.at(p, c) = hand ? 1.0 : 0.0;
  }
  binds["raster.table"] = table;
  Array img = sample.image;
  img.shape = {P, 3};
  binds["raster.image"] = img;
  binds["raster.mask"] = mask3;

  return ad::grad_check(g, m.loss_total, binds, 1e-6);
}

}  // namespace audit_detail

// Runs the full audit over the given seeds; prints one line per entry when a
// stream is supplied. Passing threshold is 1e-4 everywhere.
inline bool gradient_audit(const std::vector<std::uint64_t>& seeds, std::ostream* os,
                           std::vector<AuditEntry>* entries_out = nullptr) {
  static const char* kOps[] = {"add",  "mul",   "matmul",    "softmax",         "exp",
                               "log",  "concat", "slice",    "sum",             "mean",
                               "square", "sqrt", "reciprocal", "bilinear_sample", "rodrigues",
                               "tanh", "sigmoid", "abs",     "im2col"};
  bool pass = true;
  std::vector<AuditEntry> entries;
  for (const char* op : kOps) {
    AuditEntry e{std::string("op.") + op, 0.0};
    for (std::uint64_t seed : seeds)
      e.max_rel_error = std::max(e.max_rel_error, audit_detail::op_audit(op, seed));
    entries.push_back(e);
  }
  for (const char* mode : {"supervised", "weak"}) {
    AuditEntry e{std::string("composite.") + mode, 0.0};
    for (std::uint64_t seed : seeds)
      e.max_rel_error = std::max(e.max_rel_error, audit_detail::composite_audit(mode, seed));
    entries.push_back(e);
  }
  for (const AuditEntry& e : entries) {
    const bool ok = e.max_rel_error < 1e-4;
    pass = pass && ok;
    if (os)
      *os << (ok ? "PASS" : "FAIL") << "  " << e.name << "  max_rel_error=" << e.max_rel_error
          << "\n";
  }
  if (entries_out) *entries_out = std::move(entries);
  return pass;
}

}  // namespace handmesh
