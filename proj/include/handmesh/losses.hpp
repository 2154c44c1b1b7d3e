#pragma once

// Probabilistic training objectives. One convention everywhere: a diagonal
// Gaussian stores VARIANCE, the NLL is sum of (x-mu)^2/(2 var) + ln(2 pi
// var)/2, and the KL between diagonal Gaussians is
//   0.5 * [ sum ln(var_p/var_q) - d + sum (var_q + (mu_p-mu_q)^2) / var_p ].
// The supervised objective couples the vertex posterior to the skinning
// prior in vertex space, joint space (through the regressor push-forward,
// one shared code path) and projected 2D space; the weakly-supervised
// objective is a single-sample reparameterized estimate of the 2D
// reprojection NLL plus the three KL terms.

#include <map>
#include <string>

#include "handmesh/attention.hpp"
#include "handmesh/autodiff.hpp"
#include "handmesh/camera.hpp"
#include "handmesh/gaussian.hpp"
#include "handmesh/hand_model.hpp"

namespace handmesh {

// ---------------------------------------------------------------------------
// Graph builders
// ---------------------------------------------------------------------------

inline int nll_nodes(ad::Graph& g, int x, int mu, int var) {
  const int quad = g.mul(g.square(g.sub(x, mu)), g.reciprocal(var));
  const int logterm = g.log(g.scale(var, 6.283185307179586476925286766559));
  return g.scale(g.add(g.sum(quad), g.sum(logterm)), 0.5);
}

inline int kl_nodes(ad::Graph& g, int q_mu, int q_var, int p_mu, int p_var) {
  const double d = static_cast<double>(shape_numel(g.node(q_mu).shape));
  const int logs = g.sub(g.log(p_var), g.log(q_var));
  const int frac = g.mul(g.add(q_var, g.square(g.sub(p_mu, q_mu))), g.reciprocal(p_var));
  return g.scale(g.add_const(g.sum(g.add(logs, frac)), -d), 0.5);
}

inline int reparam_nodes(ad::Graph& g, int mu, int var, int eps) {
  return g.add(mu, g.mul(g.sqrt(var), eps));
}

struct LossWeights {
  double vertices = 1.0;
  double joints = 1.0;
  double camera = 1.0;
  double joints2d = 1.0;
  double texture = 1.0;
};

struct SupervisedLossNodes {
  int l_v, l_j, l_c, l_j2d;       // per-term scalars
  int l_v_kl, l_j_kl, l_j2d_kl;   // KL components, exposed for tests
  int total;                      // weighted sum
};

struct SupervisedTargetNodes {
  int vertices;  // [V,3]
  int joints3d;  // [K,3]
  int joints2d;  // [K,2]
  int camera;    // [7,1]
};

// The four supervised losses given posterior/prior distribution nodes.
// q_cam_mu is the [7,1] camera mean column; its variance is one by
// construction. With project_with_target_camera the 2D term projects with
// the ground-truth camera instead of the estimated mean (the estimated mean
// is the default; nothing is sampled in either case).
inline SupervisedLossNodes supervised_loss_nodes(ad::Graph& g, const SupervisedTargetNodes& target,
                                                 const GaussianNodes& q_verts,
                                                 const GaussianNodes& prior_verts, int q_cam_mu,
                                                 int regressor, const LossWeights& w,
                                                 bool project_with_target_camera = false) {
  SupervisedLossNodes out;

  out.l_v_kl = kl_nodes(g, q_verts.mean, q_verts.variance, prior_verts.mean, prior_verts.variance);
  out.l_v = g.add(nll_nodes(g, target.vertices, q_verts.mean, q_verts.variance), out.l_v_kl);

  const GaussianNodes q_j = push_through_regressor(g, regressor, q_verts);
  const GaussianNodes p_j = push_through_regressor(g, regressor, prior_verts);
  out.l_j_kl = kl_nodes(g, q_j.mean, q_j.variance, p_j.mean, p_j.variance);
  out.l_j = g.add(nll_nodes(g, target.joints3d, q_j.mean, q_j.variance), out.l_j_kl);

  out.l_c = g.sum(g.square(g.sub(target.camera, q_cam_mu)));

  const CameraNodes cam = split_camera(g, project_with_target_camera ? target.camera : q_cam_mu);
  const int s_qmu = project_nodes(g, q_j.mean, cam);
  const int s_qvar = project_var_nodes(g, q_j.variance, cam);
  const int s_pmu = project_nodes(g, p_j.mean, cam);
  const int s_pvar = project_var_nodes(g, p_j.variance, cam);
  out.l_j2d_kl = kl_nodes(g, s_qmu, s_qvar, s_pmu, s_pvar);
  out.l_j2d = g.add(nll_nodes(g, target.joints2d, s_qmu, s_qvar), out.l_j2d_kl);

  out.total = g.add(g.add(g.scale(out.l_v, w.vertices), g.scale(out.l_j, w.joints)),
                    g.add(g.scale(out.l_c, w.camera), g.scale(out.l_j2d, w.joints2d)));
  return out;
}

struct WeakLossNodes {
  int e_term;                 // reprojection NLL on the reparameterized sample
  int kl_v, kl_j, kl_c;       // the three divergence terms
  int total;                  // weighted sum
};

// Weakly-supervised objective: latents are sampled with the
// reparameterization trick (one epsilon per latent; joints derive through
// the regressor), the reprojection NLL is evaluated at the samples, and the
// three KL terms tie the posterior to the prior-net. Weight mapping:
// vertices/joints/camera weights scale their KL terms, the joints2d weight
// scales the reprojection term.
inline WeakLossNodes weak_loss_nodes(ad::Graph& g, int target_joints2d, const GaussianNodes& q_verts,
                                     int q_cam_mu, const GaussianNodes& prior_verts, int prior_cam_mu,
                                     int regressor, int eps_vertices, int eps_camera,
                                     const LossWeights& w) {
  WeakLossNodes out;
  const int v_sample = reparam_nodes(g, q_verts.mean, q_verts.variance, eps_vertices);
  const int cam_sample = g.add(q_cam_mu, eps_camera);  // camera variance is one
  const int j_sample = g.matmul(regressor, v_sample);

  const CameraNodes cam = split_camera(g, cam_sample);
  const GaussianNodes q_j = push_through_regressor(g, regressor, q_verts);
  const int proj_mu = project_nodes(g, j_sample, cam);
  const int proj_var = project_var_nodes(g, q_j.variance, cam);
  out.e_term = nll_nodes(g, target_joints2d, proj_mu, proj_var);

  out.kl_v = kl_nodes(g, q_verts.mean, q_verts.variance, prior_verts.mean, prior_verts.variance);
  const GaussianNodes p_j = push_through_regressor(g, regressor, prior_verts);
  out.kl_j = kl_nodes(g, q_j.mean, q_j.variance, p_j.mean, p_j.variance);
  const int ones7 = g.constant(Array({7, 1}, 1.0));
  out.kl_c = kl_nodes(g, q_cam_mu, ones7, prior_cam_mu, ones7);

  out.total = g.add(g.add(g.scale(out.e_term, w.joints2d), g.scale(out.kl_v, w.vertices)),
                    g.add(g.scale(out.kl_j, w.joints), g.scale(out.kl_c, w.camera)));
  return out;
}

// ---------------------------------------------------------------------------
// Value-level operations
// ---------------------------------------------------------------------------

inline double gaussian_nll(const Array& x, const DiagGaussian& gauss) {
  gauss.validate();
  require_same_shape(x, gauss.mean, "gaussian_nll");
  ad::Graph g;
  const int xn = g.input("x", x.shape);
  const int mu = g.input("mu", x.shape);
  const int var = g.input("var", x.shape);
  const int out = nll_nodes(g, xn, mu, var);
  ad::Evaluator ev(g);
  ev.bind("x", x);
  ev.bind("mu", gauss.mean);
  ev.bind("var", gauss.variance);
  ev.forward();
  return ev.value(out).data[0];
}

inline double kl_diag_gaussian(const DiagGaussian& q, const DiagGaussian& p) {
  q.validate();
  p.validate();
  require_same_shape(q.mean, p.mean, "kl_diag_gaussian");
  ad::Graph g;
  const int qm = g.input("qm", q.mean.shape);
  const int qv = g.input("qv", q.mean.shape);
  const int pm = g.input("pm", q.mean.shape);
  const int pv = g.input("pv", q.mean.shape);
  const int out = kl_nodes(g, qm, qv, pm, pv);
  ad::Evaluator ev(g);
  ev.bind("qm", q.mean);
  ev.bind("qv", q.variance);
  ev.bind("pm", p.mean);
  ev.bind("pv", p.variance);
  ev.forward();
  return ev.value(out).data[0];
}

inline Array reparam_sample(const DiagGaussian& gauss, const Array& eps) {
  gauss.validate();
  require_same_shape(eps, gauss.mean, "reparam_sample");
  Array out = gauss.mean;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] += std::sqrt(gauss.variance.data[i]) * eps.data[i];
  return out;
}

struct SupervisedTarget {
  Array vertices;  // [V,3]
  Array joints3d;  // [K,3]
  Array joints2d;  // [K,2]
  Array camera;    // [7]

  void validate(int V, int K) const {
    if (vertices.shape != Shape{V, 3} || joints3d.shape != Shape{K, 3} ||
        joints2d.shape != Shape{K, 2} || camera.shape != Shape{7})
      throw ShapeError("SupervisedTarget: shapes do not match the template");
    for (const Array* a : {&vertices, &joints3d, &joints2d, &camera})
      if (!a->all_finite()) throw NumericError("SupervisedTarget: non-finite value");
  }
};

struct LossBreakdown {
  double l_v = 0, l_j = 0, l_c = 0, l_j2d = 0, l_tex = 0, total = 0;
};

inline LossBreakdown supervised_losses(const SupervisedTarget& target, const DiagGaussian& q_verts,
                                       const PriorDistribution& prior, const CameraGaussian& q_cam,
                                       const Array& regressor, bool cam_sampleless = true,
                                       const LossWeights& w = {}) {
  q_verts.validate();
  ad::Graph g;
  const int V = q_verts.mean.shape[0];
  const int K = regressor.shape[0];
  SupervisedTargetNodes tn;
  tn.vertices = g.input("t.v", {V, 3});
  tn.joints3d = g.input("t.j", {K, 3});
  tn.joints2d = g.input("t.j2d", {K, 2});
  tn.camera = g.input("t.cam", {7, 1});
  GaussianNodes q{g.input("q.mu", {V, 3}), g.input("q.var", {V, 3})};
  GaussianNodes p{g.input("p.mu", {V, 3}), g.input("p.var", {V, 3})};
  const int cam = g.input("cam.mu", {7, 1});
  const int B = g.constant(regressor);
  const SupervisedLossNodes nodes =
      supervised_loss_nodes(g, tn, q, p, cam, B, w, /*project_with_target_camera=*/!cam_sampleless);

  ad::Evaluator ev(g);
  Array camcol = target.camera;
  camcol.shape = {7, 1};
  ev.bind("t.v", target.vertices);
  ev.bind("t.j", target.joints3d);
  ev.bind("t.j2d", target.joints2d);
  ev.bind("t.cam", camcol);
  ev.bind("q.mu", q_verts.mean);
  ev.bind("q.var", q_verts.variance);
  ev.bind("p.mu", prior.mean);
  ev.bind("p.var", prior.variance);
  Array qc = q_cam.mean;
  qc.shape = {7, 1};
  ev.bind("cam.mu", qc);
  ev.forward();
  LossBreakdown out;
  out.l_v = ev.value(nodes.l_v).data[0];
  out.l_j = ev.value(nodes.l_j).data[0];
  out.l_c = ev.value(nodes.l_c).data[0];
  out.l_j2d = ev.value(nodes.l_j2d).data[0];
  out.total = ev.value(nodes.total).data[0];
  for (double v : {out.l_v, out.l_j, out.l_c, out.l_j2d})
    if (!std::isfinite(v)) throw NumericError("supervised_losses: non-finite loss term");
  return out;
}

inline double weak_loss(const Array& target_joints2d, const DiagGaussian& q_verts,
                        const CameraGaussian& q_cam, const PriorDistribution& prior,
                        const CameraGaussian& prior_cam, const Array& regressor,
                        const std::map<std::string, Array>& eps_bindings, const LossWeights& w = {}) {
  q_verts.validate();
  ad::Graph g;
  const int V = q_verts.mean.shape[0];
  const int K = regressor.shape[0];
  const int j2d = g.input("t.j2d", {K, 2});
  GaussianNodes q{g.input("q.mu", {V, 3}), g.input("q.var", {V, 3})};
  GaussianNodes p{g.input("p.mu", {V, 3}), g.input("p.var", {V, 3})};
  const int cam = g.input("cam.mu", {7, 1});
  const int pcam = g.input("pcam.mu", {7, 1});
  const int eps_v = g.input("eps.vertices", {V, 3});
  const int eps_c = g.input("eps.camera", {7, 1});
  const int B = g.constant(regressor);
  const WeakLossNodes nodes = weak_loss_nodes(g, j2d, q, cam, p, pcam, B, eps_v, eps_c, w);

  ad::Evaluator ev(g);
  ev.bind("t.j2d", target_joints2d);
  ev.bind("q.mu", q_verts.mean);
  ev.bind("q.var", q_verts.variance);
  ev.bind("p.mu", prior.mean);
  ev.bind("p.var", prior.variance);
  Array qc = q_cam.mean, pc = prior_cam.mean;
  qc.shape = {7, 1};
  pc.shape = {7, 1};
  ev.bind("cam.mu", qc);
  ev.bind("pcam.mu", pc);
  Array ev_v = eps_bindings.at("vertices");
  Array ev_c = eps_bindings.at("camera");
  ev_c.shape = {7, 1};
  ev.bind("eps.vertices", ev_v);
  ev.bind("eps.camera", ev_c);
  ev.forward();
  const double total = ev.value(nodes.total).data[0];
  if (!std::isfinite(total)) throw NumericError("weak_loss: non-finite loss");
  return total;
}

}  // namespace handmesh
