#pragma once

// Full model assembly: image -> encoder -> { skinning prior head, attention
// vertex regressor, camera heads } -> probabilistic losses, with the optional
// occlusion-aware texture branch. One graph evaluates one sample; training
// loops over the batch and sums gradients in index order.

#include <map>
#include <string>
#include <vector>

#include "handmesh/attention.hpp"
#include "handmesh/autodiff.hpp"
#include "handmesh/camera.hpp"
#include "handmesh/config.hpp"
#include "handmesh/encoder.hpp"
#include "handmesh/hand_model.hpp"
#include "handmesh/losses.hpp"
#include "handmesh/rasterizer.hpp"

namespace handmesh {

struct ModelNodes {
  int image = -1;  // [H,W,3] input

  EncoderNodes enc;
  int prior_mu = -1;      // [V,3]
  int prior_var = -1;     // [V,3] constant ones
  int prior_cam_mu = -1;  // [7,1]
  int mu_phi = -1;        // [V,3]
  int var_phi = -1;       // [V,3]
  int cam_mu = -1;        // [7,1]
  int joints_mu = -1;     // [K,3] = B mu_phi
  int verts2d = -1;       // [V,2] projection of mu_phi under the camera mean

  // Supervised branch.
  SupervisedTargetNodes target{};
  SupervisedLossNodes sup{};

  // Weak branch: one (eps_vertices, eps_camera) input pair per draw.
  std::vector<std::pair<int, int>> eps;
  WeakLossNodes weak{};

  // Texture branch.
  bool with_texture = false;
  int raster_table = -1;  // [H*W,6] input, rebound per step
  int tex_image = -1;     // [H*W,3] input
  int tex_mask = -1;      // [H*W,3] input
  TextureHeadNodes tex_head{};
  TextureLossNodes tex{};

  int loss_total = -1;
  // Per-term handles for the loss log. In weak mode the vertex/joint/camera
  // slots carry the KL terms and the 2D slot carries the reprojection term,
  // mirroring the weight mapping.
  int log_v = -1, log_j = -1, log_c = -1, log_j2d = -1, log_tex = -1;
};

inline LossWeights loss_weights_from(const RunConfig& cfg) {
  LossWeights w;
  w.vertices = cfg.loss_weights[0];
  w.joints = cfg.loss_weights[1];
  w.camera = cfg.loss_weights[2];
  w.joints2d = cfg.loss_weights[3];
  w.texture = cfg.loss_weights[4];
  return w;
}

inline ModelNodes build_model(ad::Graph& g, const RunConfig& cfg, const HandTemplate& tmpl,
                              bool with_texture, int prior_hidden = kPriorHiddenWidth,
                              bool with_losses = true) {
  const int H = cfg.image_size, W = cfg.image_size;
  const int V = tmpl.vertex_count, K = tmpl.joint_count;
  const LossWeights w = loss_weights_from(cfg);

  ModelNodes m;
  m.image = g.input("image", {H, W, 3});
  m.enc = encoder_nodes(g, m.image, cfg.encoder_widths, "enc");

  const LbsResult rest = rest_coords(tmpl);
  const int verts0 = g.constant(rest.vertices);
  const int joints0 = g.constant(rest.joints);
  const int regressor = g.constant(tmpl.joint_regressor);

  PriorHeadNodes prior = prior_head_nodes(g, tmpl, m.enc.feature_col, "prior.mlp", prior_hidden);
  m.prior_mu = prior.mean;
  m.prior_var = g.constant(Array({V, 3}, 1.0));
  m.prior_cam_mu = camera_head_nodes(g, m.enc.feature_col, "prior.cam", cfg.attention_dims[2]);

  VertexRegressorConfig rcfg;
  rcfg.d_cross = cfg.attention_dims[0];
  rcfg.d_self = cfg.attention_dims[1];
  rcfg.head_hidden = cfg.attention_dims[2];
  VertexRegressorNodes reg = vertex_regressor_nodes(g, m.enc.feature_col, verts0, joints0, "reg", rcfg);
  m.mu_phi = reg.mean;
  m.var_phi = reg.variance;
  m.joints_mu = g.matmul(regressor, m.mu_phi);

  m.cam_mu = camera_head_nodes(g, m.enc.feature_col, "cam", cfg.attention_dims[2]);
  const CameraNodes cam_split = split_camera(g, m.cam_mu);
  m.verts2d = project_nodes(g, m.mu_phi, cam_split);  // normalized image coordinates

  const GaussianNodes q_verts{m.mu_phi, m.var_phi};
  const GaussianNodes p_verts{m.prior_mu, m.prior_var};

  if (!with_losses) return m;  // heads-only twin for the rasterization pre-pass

  int mode_total = -1;
  if (cfg.mode == "supervised") {
    m.target.vertices = g.input("target.vertices", {V, 3});
    m.target.joints3d = g.input("target.joints3d", {K, 3});
    m.target.joints2d = g.input("target.joints2d", {K, 2});
    m.target.camera = g.input("target.camera", {7, 1});
    m.sup = supervised_loss_nodes(g, m.target, q_verts, p_verts, m.cam_mu, regressor, w);
    mode_total = m.sup.total;
    m.log_v = m.sup.l_v;
    m.log_j = m.sup.l_j;
    m.log_c = m.sup.l_c;
    m.log_j2d = m.sup.l_j2d;
  } else {
    m.target.joints2d = g.input("target.joints2d", {K, 2});
    int acc = -1;
    for (int s = 0; s < cfg.weak_samples; ++s) {
      const int ev = g.input("eps.vertices." + std::to_string(s), {V, 3});
      const int ec = g.input("eps.camera." + std::to_string(s), {7, 1});
      m.eps.emplace_back(ev, ec);
      WeakLossNodes wl = weak_loss_nodes(g, m.target.joints2d, q_verts, m.cam_mu, p_verts,
                                         m.prior_cam_mu, regressor, ev, ec, w);
      if (s == 0) m.weak = wl;
      acc = (s == 0) ? wl.total : g.add(acc, wl.total);
    }
    mode_total = g.scale(acc, 1.0 / cfg.weak_samples);
    m.log_v = m.weak.kl_v;
    m.log_j = m.weak.kl_j;
    m.log_c = m.weak.kl_c;
    m.log_j2d = m.weak.e_term;
  }

  m.with_texture = with_texture;
  if (with_texture) {
    const int verts2d_px = g.scale(m.verts2d, cfg.image_size);
    const int hfeat = reverse_interpolate_nodes(g, verts2d_px, m.enc.feature_col, m.enc.feature_map,
                                                m.mu_phi);
    m.tex_head = texture_head_nodes(g, hfeat, "tex", cfg.attention_dims[1], cfg.attention_dims[2]);
    m.raster_table = g.input("raster.table", {H * W, 6});
    m.tex_image = g.input("raster.image", {H * W, 3});
    m.tex_mask = g.input("raster.mask", {H * W, 3});
    m.tex = texture_loss_nodes(g, m.tex_head.colors, m.raster_table, m.tex_image, m.tex_mask);
    m.log_tex = m.tex.loss;
    m.loss_total = g.add(mode_total, g.scale(m.tex.loss, w.texture));
  } else {
    m.loss_total = mode_total;
  }
  return m;
}

inline std::map<std::string, Array> init_params(const RunConfig& cfg, const HandTemplate& tmpl,
                                                Rng& rng, int prior_hidden = kPriorHiddenWidth) {
  std::map<std::string, Array> params;
  const int D = cfg.feature_dim();
  encoder_init(params, "enc", 3, cfg.encoder_widths, rng);
  prior_head_init(params, "prior.mlp", tmpl, D, rng, prior_hidden);
  camera_head_init(params, "prior.cam", D, cfg.attention_dims[2], rng);
  camera_head_init(params, "cam", D, cfg.attention_dims[2], rng);
  VertexRegressorConfig rcfg;
  rcfg.d_cross = cfg.attention_dims[0];
  rcfg.d_self = cfg.attention_dims[1];
  rcfg.head_hidden = cfg.attention_dims[2];
  vertex_regressor_init(params, "reg", D + 3, rcfg, rng);
  texture_head_init(params, "tex", D + cfg.encoder_widths[0] + 3, cfg.attention_dims[1],
                    cfg.attention_dims[2], rng);
  return params;
}

}  // namespace handmesh
