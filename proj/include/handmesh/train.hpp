#pragma once

// Training loop (first-order adaptive-moment updates), binary checkpoint
// container, and evaluation. Everything here is sequential and seeded, so a
// run is bitwise reproducible from its config.

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "handmesh/metrics.hpp"
#include "handmesh/model.hpp"
#include "handmesh/scene.hpp"

namespace handmesh {

// ---------------------------------------------------------------------------
// Checkpoint container
// ---------------------------------------------------------------------------

struct Checkpoint {
  std::string config_text;  // exact echo of the run configuration
  std::map<std::string, Array> params;
};

namespace train_detail {

constexpr char kCheckpointMagic[] = "HMCKPT1\n";

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace train_detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open checkpoint '" + path + "' for writing");
  out.write(train_detail::kCheckpointMagic, 8);
  train_detail::put<std::uint64_t>(out, ckpt.config_text.size());
  out.write(ckpt.config_text.data(), static_cast<std::streamsize>(ckpt.config_text.size()));
  train_detail::put<std::uint64_t>(out, ckpt.params.size());
  for (const auto& [name, value] : ckpt.params) {
    train_detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    train_detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(value.shape.size()));
    for (int e : value.shape) train_detail::put<std::int32_t>(out, e);
    out.write(reinterpret_cast<const char*>(value.data.data()),
              static_cast<std::streamsize>(value.data.size() * sizeof(double)));
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint file '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, train_detail::kCheckpointMagic, 8) != 0)
    throw ParseError("'" + path + "': not a checkpoint file");
  Checkpoint ckpt;
  const auto cfg_len = train_detail::get<std::uint64_t>(in);
  ckpt.config_text.resize(cfg_len);
  in.read(ckpt.config_text.data(), static_cast<std::streamsize>(cfg_len));
  const auto n = train_detail::get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto name_len = train_detail::get<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = train_detail::get<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& e : shape) e = train_detail::get<std::int32_t>(in);
    Array value(shape);
    in.read(reinterpret_cast<char*>(value.data.data()),
            static_cast<std::streamsize>(value.data.size() * sizeof(double)));
    ckpt.params.emplace(std::move(name), std::move(value));
  }
  if (!in) throw ParseError("'" + path + "': truncated checkpoint");
  return ckpt;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

class Adam {
 public:
  explicit Adam(double lr) : lr_(lr) {}

  void step(std::map<std::string, Array>& params, const std::map<std::string, Array>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, p] : params) {
      const auto it = grads.find(name);
      if (it == grads.end()) continue;
      const Array& g = it->second;
      Array& m = m_[name];
      Array& v = v_[name];
      if (m.data.empty()) {
        m = Array(p.shape);
        v = Array(p.shape);
      }
      for (std::size_t i = 0; i < p.data.size(); ++i) {
        m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g.data[i];
        v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g.data[i] * g.data[i];
        const double mhat = m.data[i] / bc1;
        const double vhat = v.data[i] / bc2;
        p.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int t_ = 0;
  std::map<std::string, Array> m_, v_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace train_detail {

inline Array flatten_image(const Array& img) {
  Array out = img;
  out.shape = {img.shape[0] * img.shape[1], 3};
  return out;
}

// Rasterizes the predicted mesh together with the sample's occluder and
// produces the raster-table / mask bindings for the texture branch.
struct TextureBindings {
  Array table;  // [H*W,6]
  Array mask3;  // [H*W,3]
  RasterBuffers buffers;
  ProjectedMesh mesh;
  int hand_faces = 0;
};

inline TextureBindings make_texture_bindings(const Array& pred_verts, const Array& cam_vec,
                                             const HandTemplate& tmpl, const OccluderBox& occluder,
                                             int image_size) {
  TextureBindings out;
  Array camv = cam_vec;
  camv.shape = {7};
  const CameraParams cam = CameraParams::from_vector(camv);
  out.hand_faces = static_cast<int>(tmpl.faces.size());
  out.mesh = project_scene(pred_verts, tmpl.faces, cam, occluder, image_size);
  out.buffers = rasterize(out.mesh, image_size, image_size);
  out.table = build_raster_table(out.buffers, out.mesh.faces);
  // Pixels past the hand's own faces belong to the occluder: excluded from
  // both the mask and the interpolation table.
  const int P = image_size * image_size;
  out.mask3 = Array({P, 3});
  for (int p = 0; p < P; ++p) {
    const int t = out.buffers.tri_id[static_cast<std::size_t>(p)];
    const bool hand = t >= 0 && t < out.hand_faces;
    if (!hand && t >= 0) out.table.at(p, 0) = -1.0;
    for (int c = 0; c < 3; ++c) out.mask3.at(p, c) = hand ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace train_detail

struct TrainOutput {
  Checkpoint checkpoint;
  std::string log;  // one line per step, %.17g values
};

inline TrainOutput train(const RunConfig& cfg, const HandTemplate& tmpl,
                         const std::vector<SceneSample>& data) {
  cfg.validate();
  if (data.empty() && cfg.steps > 0) throw ValidationError("train: empty dataset");
  const bool texture = cfg.texture_enabled();

  ad::Graph g;
  const ModelNodes m = build_model(g, cfg, tmpl, texture);
  ad::Evaluator ev(g);

  // Geometry-only twin used to place the raster table before the main pass.
  ad::Graph g_geo;
  ModelNodes m_geo;
  if (texture)
    m_geo = build_model(g_geo, cfg, tmpl, /*with_texture=*/false, kPriorHiddenWidth,
                        /*with_losses=*/false);
  ad::Evaluator ev_geo(texture ? g_geo : g);

  Rng rng(cfg.seed);
  std::map<std::string, Array> params = init_params(cfg, tmpl, rng);
  Rng eps_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  Adam opt(cfg.learning_rate);

  const int H = cfg.image_size;
  std::ostringstream log;
  const int n = static_cast<int>(data.size());

  for (int step = 0; step < cfg.steps; ++step) {
    std::map<std::string, Array> grad_acc;
    double sum_v = 0, sum_j = 0, sum_c = 0, sum_j2d = 0, sum_tex = 0, sum_total = 0;
    for (const auto& name : g.param_names()) ev.bind(name, params.at(name));
    if (texture)
      for (const auto& name : g_geo.param_names()) ev_geo.bind(name, params.at(name));
    for (int k = 0; k < cfg.batch_size; ++k) {
      const SceneSample& sample = data[static_cast<std::size_t>((static_cast<long long>(step) *
                                                                 cfg.batch_size + k) % n)];
      ev.bind("image", sample.image);
      if (cfg.mode == "supervised") {
        ev.bind("target.vertices", sample.targets.vertices);
        ev.bind("target.joints3d", sample.targets.joints3d);
        ev.bind("target.joints2d", sample.targets.joints2d);
        Array cam = sample.targets.camera;
        cam.shape = {7, 1};
        ev.bind("target.camera", cam);
      } else {
        ev.bind("target.joints2d", sample.targets.joints2d);
        for (int s = 0; s < cfg.weak_samples; ++s) {
          ev.bind("eps.vertices." + std::to_string(s),
                  eps_rng.normal_array({tmpl.vertex_count, 3}));
          ev.bind("eps.camera." + std::to_string(s), eps_rng.normal_array({7, 1}));
        }
      }
      if (texture) {
        ev_geo.bind("image", sample.image);
        ev_geo.forward();
        const train_detail::TextureBindings tb = train_detail::make_texture_bindings(
            ev_geo.value(m_geo.mu_phi), ev_geo.value(m_geo.cam_mu), tmpl, sample.occluder, H);
        ev.bind("raster.table", tb.table);
        ev.bind("raster.image", train_detail::flatten_image(sample.image));
        ev.bind("raster.mask", tb.mask3);
      }
      ev.forward();
      const double total = ev.value(m.loss_total).data[0];
      sum_total += total;
      sum_v += ev.value(m.log_v).data[0];
      sum_j += ev.value(m.log_j).data[0];
      sum_c += ev.value(m.log_c).data[0];
      sum_j2d += ev.value(m.log_j2d).data[0];
      if (texture) sum_tex += ev.value(m.log_tex).data[0];
      if (!std::isfinite(total)) {
        char msg[512];
        std::snprintf(msg, sizeof(msg),
                      "train: non-finite loss at step %d (v=%g j=%g c=%g j2d=%g tex=%g)", step,
                      ev.value(m.log_v).data[0], ev.value(m.log_j).data[0],
                      ev.value(m.log_c).data[0], ev.value(m.log_j2d).data[0],
                      texture ? ev.value(m.log_tex).data[0] : 0.0);
        throw NumericError(msg);
      }
      ev.backward(m.loss_total);
      for (const auto& name : g.param_names()) {
        const Array& pg = ev.grad(g.leaf_id(name));
        Array& acc = grad_acc[name];
        if (acc.data.empty())
          acc = pg;
        else
          for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += pg.data[i];
      }
    }
    const double inv = 1.0 / cfg.batch_size;
    for (auto& [name, acc] : grad_acc)
      for (double& v : acc.data) v *= inv;
    opt.step(params, grad_acc);

    char line[512];
    std::snprintf(line, sizeof(line),
                  "step=%d loss_v=%.17g loss_j=%.17g loss_c=%.17g loss_j2d=%.17g loss_tex=%.17g "
                  "total=%.17g\n",
                  step, sum_v * inv, sum_j * inv, sum_c * inv, sum_j2d * inv, sum_tex * inv,
                  sum_total * inv);
    log << line;
  }

  TrainOutput out;
  out.checkpoint.config_text = serialize_config(cfg);
  out.checkpoint.params = std::move(params);
  out.log = log.str();
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

// Inference takes the regressor mean as the point estimate and regresses
// joints through the template's joint matrix; metrics are computed after
// similarity alignment, in millimeters (model units are meters).
inline MetricsReport evaluate(const Checkpoint& ckpt, const Dataset& ds, const HandTemplate& tmpl,
                              const std::string& render_dir = "") {
  const RunConfig cfg = parse_config_text(ckpt.config_text);
  if (tmpl.vertex_count != ds.vertex_count || tmpl.joint_count != ds.joint_count)
    throw CompatibilityError("evaluate: checkpoint template does not match the dataset");

  ad::Graph g;
  const ModelNodes m = build_model(g, cfg, tmpl, /*with_texture=*/true);
  ad::Evaluator ev(g);
  const int H = cfg.image_size;
  const Array dummy_table({H * H, 6}, -1.0);
  const Array dummy_img({H * H, 3});

  if (!render_dir.empty()) std::filesystem::create_directories(render_dir);

  double mpjpe = 0, mpvpe = 0, f5 = 0, f15 = 0, psnr = 0, ssim = 0;
  std::vector<double> joint_errors_mm, vertex_errors_mm;
  const int n = static_cast<int>(ds.samples.size());
  if (n == 0) throw ValidationError("evaluate: empty dataset");

  for (int i = 0; i < n; ++i) {
    const SceneSample& sample = ds.samples[static_cast<std::size_t>(i)];
    for (const auto& name : g.param_names()) ev.bind(name, ckpt.params.at(name));
    ev.bind("image", sample.image);
    if (cfg.mode == "supervised") {
      ev.bind("target.vertices", sample.targets.vertices);
      ev.bind("target.joints3d", sample.targets.joints3d);
      ev.bind("target.joints2d", sample.targets.joints2d);
      Array cam = sample.targets.camera;
      cam.shape = {7, 1};
      ev.bind("target.camera", cam);
    } else {
      ev.bind("target.joints2d", sample.targets.joints2d);
      for (int s = 0; s < cfg.weak_samples; ++s) {
        ev.bind("eps.vertices." + std::to_string(s), Array({tmpl.vertex_count, 3}));
        ev.bind("eps.camera." + std::to_string(s), Array({7, 1}));
      }
    }
    ev.bind("raster.table", dummy_table);
    ev.bind("raster.image", dummy_img);
    ev.bind("raster.mask", dummy_img);
    ev.forward();

    const Array& pred_verts = ev.value(m.mu_phi);
    const Array& pred_joints = ev.value(m.joints_mu);

    const Array averts = procrustes_align(pred_verts, sample.targets.vertices);
    const Array ajoints = procrustes_align(pred_joints, sample.targets.joints3d);
    mpvpe += kMillimetersPerUnit * mean_point_error(averts, sample.targets.vertices);
    mpjpe += kMillimetersPerUnit * mean_point_error(ajoints, sample.targets.joints3d);
    for (int k = 0; k < tmpl.joint_count; ++k) {
      double d2 = 0;
      for (int c = 0; c < 3; ++c) {
        const double d = ajoints.at(k, c) - sample.targets.joints3d.at(k, c);
        d2 += d * d;
      }
      joint_errors_mm.push_back(kMillimetersPerUnit * std::sqrt(d2));
    }
    PointSet pred_mm(static_cast<std::size_t>(tmpl.vertex_count));
    PointSet gt_mm(static_cast<std::size_t>(tmpl.vertex_count));
    for (int k = 0; k < tmpl.vertex_count; ++k) {
      double d2 = 0;
      for (int c = 0; c < 3; ++c) {
        const double d = averts.at(k, c) - sample.targets.vertices.at(k, c);
        d2 += d * d;
        pred_mm[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] = kMillimetersPerUnit * averts.at(k, c);
        gt_mm[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] =
            kMillimetersPerUnit * sample.targets.vertices.at(k, c);
      }
      vertex_errors_mm.push_back(kMillimetersPerUnit * std::sqrt(d2));
    }
    f5 += f_score(pred_mm, gt_mm, 5.0);
    f15 += f_score(pred_mm, gt_mm, 15.0);

    // Texture: render the predicted mesh with the predicted camera and score
    // the hand-visible region against the input.
    const train_detail::TextureBindings tb = train_detail::make_texture_bindings(
        pred_verts, ev.value(m.cam_mu), tmpl, sample.occluder, H);
    const Array rendered = render_colors(tb.buffers, tb.mesh.faces, ev.value(m.tex_head.colors));
    Array mask({H, H});
    bool any = false;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < H; ++x) {
        const int t = tb.buffers.tri_at(y, x);
        mask.at(y, x) = (t >= 0 && t < tb.hand_faces) ? 1.0 : 0.0;
        any = any || mask.at(y, x) != 0.0;
      }
    if (any) {
      const auto [p, s] = image_metrics(rendered, sample.image, mask);
      psnr += p;
      ssim += s;
    }
    if (!render_dir.empty()) {
      char stem[64];
      std::snprintf(stem, sizeof(stem), "%s/render_%04d", render_dir.c_str(), i);
      write_ppm(std::string(stem) + ".ppm", rendered);
      write_png(std::string(stem) + ".png", rendered);
      write_pgm(std::string(stem) + "_mask.pgm", mask);
    }
  }

  MetricsReport report;
  report.mpjpe_mm = mpjpe / n;
  report.mpvpe_mm = mpvpe / n;
  report.auc_j = pck_auc(joint_errors_mm);
  report.auc_v = pck_auc(vertex_errors_mm);
  report.f5 = f5 / n;
  report.f15 = f15 / n;
  report.psnr_db = psnr / n;
  report.ssim = ssim / n;
  report.validate();
  return report;
}

}  // namespace handmesh
