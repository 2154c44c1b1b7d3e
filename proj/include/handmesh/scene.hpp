#pragma once

// Synthetic scene generation: random shape/pose/camera draws rendered with
// known per-vertex colors, plus optional axis-aligned box occluders living in
// camera space so occlusion is exact. Ground truth is self-consistent by
// construction: the stored 2D joints are the stored camera's projection of
// the stored 3D joints.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "handmesh/camera.hpp"
#include "handmesh/config.hpp"
#include "handmesh/hand_model.hpp"
#include "handmesh/image_io.hpp"
#include "handmesh/losses.hpp"
#include "handmesh/rasterizer.hpp"

namespace handmesh {

struct OccluderBox {
  bool present = false;
  // Camera-space center, half extents and flat color.
  std::array<double, 3> center{};
  std::array<double, 3> half{};
  std::array<double, 3> color{};
};

struct SceneSample {
  Array image;  // [H,W,3] in [0,1]
  SupervisedTarget targets;
  Array true_colors;  // [V,3]
  OccluderBox occluder;
};

namespace scene_detail {

// Appends the occluder's 8 camera-space corners and 12 triangles to a
// projected mesh that already contains the hand.
inline void append_box(ProjectedMesh& pm, const OccluderBox& box, const CameraParams& cam,
                       double pixel_scale) {
  if (!box.present) return;
  const int base = pm.verts2d.shape[0];
  Array v2({base + 8, 2});
  Array dz({base + 8});
  for (int i = 0; i < base; ++i) {
    v2.at(i, 0) = pm.verts2d.at(i, 0);
    v2.at(i, 1) = pm.verts2d.at(i, 1);
    dz.data[i] = pm.depths.data[i];
  }
  for (int i = 0; i < 8; ++i) {
    const double cx = box.center[0] + (i & 1 ? box.half[0] : -box.half[0]);
    const double cy = box.center[1] + (i & 2 ? box.half[1] : -box.half[1]);
    const double cz = box.center[2] + (i & 4 ? box.half[2] : -box.half[2]);
    v2.at(base + i, 0) = (cam.scale * cx + cam.translation[0]) * pixel_scale;
    v2.at(base + i, 1) = (cam.scale * cy + cam.translation[1]) * pixel_scale;
    dz.data[base + i] = cz;
  }
  pm.verts2d = std::move(v2);
  pm.depths = std::move(dz);
  static const int quads[6][4] = {{0, 1, 3, 2}, {4, 6, 7, 5}, {0, 4, 5, 1},
                                  {1, 5, 7, 3}, {3, 7, 6, 2}, {2, 6, 4, 0}};
  for (const auto& q : quads) {
    pm.faces.push_back({base + q[0], base + q[1], base + q[2]});
    pm.faces.push_back({base + q[0], base + q[2], base + q[3]});
  }
}

}  // namespace scene_detail

// Cameras live in normalized image coordinates (the unit square), which keeps
// every camera parameter near one for the optimizer; pixel_scale converts the
// projection to pixel coordinates for rasterization. Hand triangles keep IDs
// [0, hand_face_count); the occluder is appended after them.
inline ProjectedMesh project_scene(const Array& vertices,
                                   const std::vector<std::array<int, 3>>& faces,
                                   const CameraParams& cam, const OccluderBox& occluder,
                                   double pixel_scale) {
  ProjectedMesh pm;
  pm.verts2d = project_weak_perspective(vertices, cam);
  for (double& v : pm.verts2d.data) v *= pixel_scale;
  pm.depths = camera_depths(vertices, cam);
  pm.faces = faces;
  scene_detail::append_box(pm, occluder, cam, pixel_scale);
  return pm;
}

// Composite render: hand pixels interpolate vertex colors, occluder pixels
// take the box's flat color, background stays black.
inline Array render_scene(const RasterBuffers& buffers, const ProjectedMesh& pm, int hand_faces,
                          const Array& colors, const OccluderBox& occluder) {
  Array img({buffers.height, buffers.width, 3});
  for (int y = 0; y < buffers.height; ++y)
    for (int x = 0; x < buffers.width; ++x) {
      const int t = buffers.tri_at(y, x);
      if (t < 0) continue;
      if (t < hand_faces) {
        const auto& f = pm.faces[static_cast<std::size_t>(t)];
        for (int c = 0; c < 3; ++c)
          img.at(y, x, c) = buffers.bary.at(y, x, 0) * colors.at(f[0], c) +
                            buffers.bary.at(y, x, 1) * colors.at(f[1], c) +
                            buffers.bary.at(y, x, 2) * colors.at(f[2], c);
      } else {
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = occluder.color[c];
      }
    }
  return img;
}

inline std::vector<SceneSample> generate_synthetic(const RunConfig& cfg, const HandTemplate& tmpl,
                                                   int n, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  std::vector<SceneSample> out;
  out.reserve(static_cast<std::size_t>(n));
  const int H = cfg.image_size, W = cfg.image_size;
  for (int s = 0; s < n; ++s) {
    SceneSample sample;
    Array shape = rng.normal_array({tmpl.shape_dim()}, 0.3);
    Array pose({tmpl.joint_count, 3});
    for (int c = 0; c < 3; ++c) pose.at(0, c) = rng.uniform(-1.2, 1.2);
    for (int j = 1; j < tmpl.joint_count; ++j)
      for (int c = 0; c < 3; ++c) pose.at(j, c) = 0.25 * rng.normal();
    const LbsResult posed = lbs_forward(tmpl, shape, pose);

    // Camera scale targets a hand coverage fraction of the unit image, so
    // generation is independent of the template's unit convention.
    double extent = 0.0;
    {
      double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
      for (int i = 0; i < tmpl.vertex_count; ++i)
        for (int c = 0; c < 3; ++c) {
          lo[c] = std::min(lo[c], posed.vertices.at(i, c));
          hi[c] = std::max(hi[c], posed.vertices.at(i, c));
        }
      extent = std::sqrt((hi[0] - lo[0]) * (hi[0] - lo[0]) + (hi[1] - lo[1]) * (hi[1] - lo[1]) +
                         (hi[2] - lo[2]) * (hi[2] - lo[2]));
    }
    CameraParams cam;
    cam.scale = rng.uniform(0.40, 0.55) / extent;
    cam.rotation = {0.3 * rng.normal(), 0.3 * rng.normal(), 0.3 * rng.normal()};
    // Center the hand's projected centroid in the unit square, with jitter.
    Array depths = camera_depths(posed.vertices, cam);
    Array proj0 = project_weak_perspective(posed.vertices, cam);
    double cx = 0, cy = 0;
    for (int i = 0; i < tmpl.vertex_count; ++i) {
      cx += proj0.at(i, 0);
      cy += proj0.at(i, 1);
    }
    cam.translation = {0.5 - cx / tmpl.vertex_count + rng.uniform(-0.05, 0.05),
                       0.5 - cy / tmpl.vertex_count + rng.uniform(-0.05, 0.05), 0.0};

    sample.targets.vertices = posed.vertices;
    sample.targets.joints3d = posed.joints;
    sample.targets.joints2d = project_weak_perspective(posed.joints, cam);
    sample.targets.camera = cam.as_vector();

    sample.true_colors = Array({tmpl.vertex_count, 3});
    for (int i = 0; i < tmpl.vertex_count; ++i)
      for (int c = 0; c < 3; ++c) {
        const double p = tmpl.template_vertices.at(i, 0) * 2.3 +
                         tmpl.template_vertices.at(i, 1) * 1.7 +
                         tmpl.template_vertices.at(i, 2) * 1.1;
        sample.true_colors.at(i, c) = 0.5 + 0.4 * std::sin(p * (c + 1) + 1.3 * c);
      }

    if (rng.uniform() < 0.5) {
      sample.occluder.present = true;
      double zmin = depths.data[0], xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
      Array rotated({tmpl.vertex_count, 3});
      const Array R = rodrigues(cam.rotation);
      for (int i = 0; i < tmpl.vertex_count; ++i) {
        for (int a = 0; a < 3; ++a) {
          double acc = 0;
          for (int b = 0; b < 3; ++b) acc += posed.vertices.at(i, b) * R.at(b, a);
          rotated.at(i, a) = acc;
        }
        zmin = std::min(zmin, rotated.at(i, 2));
        xmin = std::min(xmin, rotated.at(i, 0));
        xmax = std::max(xmax, rotated.at(i, 0));
        ymin = std::min(ymin, rotated.at(i, 1));
        ymax = std::max(ymax, rotated.at(i, 1));
      }
      sample.occluder.center = {rng.uniform(xmin, xmax), rng.uniform(ymin, ymax),
                                zmin - extent * rng.uniform(0.5, 1.5)};
      sample.occluder.half = {extent * rng.uniform(0.06, 0.17), extent * rng.uniform(0.06, 0.17),
                              0.05 * extent};
      sample.occluder.color = {rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9)};
    } else {
      rng.uniform();  // keep the draw count independent of occluder presence
    }

    const ProjectedMesh pm =
        project_scene(posed.vertices, tmpl.faces, cam, sample.occluder, cfg.image_size);
    const RasterBuffers rb = rasterize(pm, H, W);
    sample.image = render_scene(rb, pm, static_cast<int>(tmpl.faces.size()), sample.true_colors,
                                sample.occluder);
    out.push_back(std::move(sample));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directory layout: dataset.json index + per-sample pixmap/targets
// ---------------------------------------------------------------------------

namespace scene_detail {

inline std::string sample_stem(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%04d", i);
  return buf;
}

}  // namespace scene_detail

inline void save_dataset(const std::string& dir, const std::vector<SceneSample>& samples,
                         const HandTemplate& tmpl, const std::string& template_path) {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["n"] = static_cast<int>(samples.size());
  index["vertex_count"] = tmpl.vertex_count;
  index["joint_count"] = tmpl.joint_count;
  index["template_path"] = template_path;
  std::ofstream(dir + "/dataset.json") << index.dump(2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string stem = dir + "/" + scene_detail::sample_stem(static_cast<int>(i));
    write_ppm(stem + ".ppm", samples[i].image);
    nlohmann::json j;
    j["vertices"] = samples[i].targets.vertices.data;
    j["joints3d"] = samples[i].targets.joints3d.data;
    j["joints2d"] = samples[i].targets.joints2d.data;
    j["camera"] = samples[i].targets.camera.data;
    j["true_colors"] = samples[i].true_colors.data;
    j["occluder"] = {{"present", samples[i].occluder.present},
                     {"center", samples[i].occluder.center},
                     {"half", samples[i].occluder.half},
                     {"color", samples[i].occluder.color}};
    std::ofstream(stem + ".json") << j.dump();
  }
}

struct Dataset {
  int vertex_count = 0;
  int joint_count = 0;
  std::string template_path;
  std::vector<SceneSample> samples;
};

inline Dataset load_dataset(const std::string& dir) {
  std::ifstream in(dir + "/dataset.json");
  if (!in) throw ParseError("cannot open dataset index in '" + dir + "'");
  nlohmann::json index;
  in >> index;
  Dataset ds;
  ds.vertex_count = index.at("vertex_count").get<int>();
  ds.joint_count = index.at("joint_count").get<int>();
  ds.template_path = index.at("template_path").get<std::string>();
  const int n = index.at("n").get<int>();
  const int V = ds.vertex_count, K = ds.joint_count;
  for (int i = 0; i < n; ++i) {
    const std::string stem = dir + "/" + scene_detail::sample_stem(i);
    SceneSample s;
    s.image = read_ppm(stem + ".ppm");
    std::ifstream jin(stem + ".json");
    if (!jin) throw ParseError("missing targets file '" + stem + ".json'");
    nlohmann::json j;
    jin >> j;
    s.targets.vertices = Array({V, 3}, j.at("vertices").get<std::vector<double>>());
    s.targets.joints3d = Array({K, 3}, j.at("joints3d").get<std::vector<double>>());
    s.targets.joints2d = Array({K, 2}, j.at("joints2d").get<std::vector<double>>());
    s.targets.camera = Array({7}, j.at("camera").get<std::vector<double>>());
    s.true_colors = Array({V, 3}, j.at("true_colors").get<std::vector<double>>());
    const auto& occ = j.at("occluder");
    s.occluder.present = occ.at("present").get<bool>();
    s.occluder.center = occ.at("center").get<std::array<double, 3>>();
    s.occluder.half = occ.at("half").get<std::array<double, 3>>();
    s.occluder.color = occ.at("color").get<std::array<double, 3>>();
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace handmesh
