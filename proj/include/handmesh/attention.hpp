#pragma once

// Attention-based vertex distribution regression. Joint and vertex tokens are
// the broadcast global feature with the rest-pose coordinate appended, run
// through one cross-attention block (vertices query joints) and one
// self-attention block with residual connections, then per-token heads emit
// the mean and log-variance of the vertex coordinate Gaussian.
//
// Tokens sit in columns: F_V is [D+3, V], F_J is [D+3, K]. Correlation maps
// are row-stochastic: S_cross is [V, K], S_self is [V, V]. No layer norm and
// a single head per block.

#include <map>
#include <string>

#include "handmesh/autodiff.hpp"
#include "handmesh/gaussian.hpp"
#include "handmesh/mlp.hpp"

namespace handmesh {

struct TokenFeatures {
  Array joint_tokens;   // [D+3, K]
  Array vertex_tokens;  // [D+3, V]
};

inline TokenFeatures positional_encode(const Array& feature, const Array& verts0, const Array& joints0) {
  const int D = static_cast<int>(feature.numel());
  const int V = verts0.shape[0], K = joints0.shape[0];
  TokenFeatures out;
  out.vertex_tokens = Array({D + 3, V});
  out.joint_tokens = Array({D + 3, K});
  for (int c = 0; c < V; ++c) {
    for (int r = 0; r < D; ++r) out.vertex_tokens.at(r, c) = feature.data[r];
    for (int r = 0; r < 3; ++r) out.vertex_tokens.at(D + r, c) = verts0.at(c, r);
  }
  for (int c = 0; c < K; ++c) {
    for (int r = 0; r < D; ++r) out.joint_tokens.at(r, c) = feature.data[r];
    for (int r = 0; r < 3; ++r) out.joint_tokens.at(D + r, c) = joints0.at(c, r);
  }
  return out;
}

struct TokenNodes {
  int vertex_tokens;  // [D+3, V]
  int joint_tokens;   // [D+3, K]
};

inline TokenNodes positional_encode_nodes(ad::Graph& g, int feature_col, int verts0, int joints0) {
  const int V = g.node(verts0).shape[0];
  const int K = g.node(joints0).shape[0];
  TokenNodes out;
  out.vertex_tokens = g.concat({g.tile_cols(feature_col, V), g.transpose(verts0)}, 0);
  out.joint_tokens = g.concat({g.tile_cols(feature_col, K), g.transpose(joints0)}, 0);
  return out;
}

struct AttentionBlockNodes {
  int output;     // same shape as the block's primary input
  int attention;  // row-stochastic correlation map
};

// S = softmax((W_q F_V)' (W_k F_J) / sqrt(d)); output = F_V + W_o (W_v F_J) S'.
// With zero value/output projections the block is an exact identity.
inline AttentionBlockNodes cross_attention_nodes(ad::Graph& g, int f_v, int f_j,
                                                 const std::string& prefix, int d_embed) {
  const int rows = g.node(f_v).shape[0];
  if (g.node(f_j).shape[0] != rows) throw ShapeError("cross_attention: token row mismatch");
  const int wq = g.param(prefix + ".wq", {d_embed, rows});
  const int wk = g.param(prefix + ".wk", {d_embed, rows});
  const int wv = g.param(prefix + ".wv", {d_embed, rows});
  const int wo = g.param(prefix + ".wo", {rows, d_embed});
  const int q = g.matmul(wq, f_v);
  const int k = g.matmul(wk, f_j);
  const int logits = g.scale(g.matmul(g.transpose(q), k), 1.0 / std::sqrt(static_cast<double>(d_embed)));
  const int attn = g.softmax_rows(logits);
  const int attended = g.matmul(g.matmul(wv, f_j), g.transpose(attn));
  return {g.add(f_v, g.matmul(wo, attended)), attn};
}

inline AttentionBlockNodes self_attention_nodes(ad::Graph& g, int f_in, const std::string& prefix,
                                                int d_embed) {
  return cross_attention_nodes(g, f_in, f_in, prefix, d_embed);
}

inline void attention_init(std::map<std::string, Array>& params, const std::string& prefix, int rows,
                           int d_embed, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(rows));
  params[prefix + ".wq"] = rng.normal_array({d_embed, rows}, s);
  params[prefix + ".wk"] = rng.normal_array({d_embed, rows}, s);
  params[prefix + ".wv"] = rng.normal_array({d_embed, rows}, s);
  params[prefix + ".wo"] = Array({rows, d_embed});
}

struct GaussianHeadNodes {
  int mean;      // [N,3]
  int variance;  // [N,3], exp of the log-variance head
};

// Independent two-layer heads per token column.
inline GaussianHeadNodes gaussian_head_nodes(ad::Graph& g, int tokens, const std::string& prefix,
                                             int hidden) {
  const int rows = g.node(tokens).shape[0];
  GaussianHeadNodes out;
  out.mean = g.transpose(mlp_cols(g, tokens, prefix + ".mu", {rows, hidden, 3}));
  out.variance = g.exp(g.transpose(mlp_cols(g, tokens, prefix + ".logvar", {rows, hidden, 3})));
  return out;
}

inline void gaussian_head_init(std::map<std::string, Array>& params, const std::string& prefix,
                               int rows, int hidden, Rng& rng) {
  mlp_init(params, prefix + ".mu", {rows, hidden, 3}, rng);
  mlp_init(params, prefix + ".logvar", {rows, hidden, 3}, rng);
}

// Joint-space push-forward (B mu, B var); the single code path every joint
// distribution consumer shares.
struct GaussianNodes {
  int mean;
  int variance;
};

inline GaussianNodes push_through_regressor(ad::Graph& g, int regressor, const GaussianNodes& verts) {
  return {g.matmul(regressor, verts.mean), g.matmul(regressor, verts.variance)};
}

// ---------------------------------------------------------------------------
// Full regressor assembly
// ---------------------------------------------------------------------------

struct VertexRegressorConfig {
  int d_cross = 32;
  int d_self = 32;
  int head_hidden = 64;
};

struct VertexRegressorNodes {
  TokenNodes tokens;
  AttentionBlockNodes cross;
  AttentionBlockNodes self;
  int mean;      // [V,3]
  int variance;  // [V,3]
};

inline VertexRegressorNodes vertex_regressor_nodes(ad::Graph& g, int feature_col, int verts0,
                                                   int joints0, const std::string& prefix,
                                                   const VertexRegressorConfig& cfg) {
  VertexRegressorNodes out;
  out.tokens = positional_encode_nodes(g, feature_col, verts0, joints0);
  out.cross = cross_attention_nodes(g, out.tokens.vertex_tokens, out.tokens.joint_tokens,
                                    prefix + ".cross", cfg.d_cross);
  out.self = self_attention_nodes(g, out.cross.output, prefix + ".self", cfg.d_self);
  GaussianHeadNodes head = gaussian_head_nodes(g, out.self.output, prefix + ".head", cfg.head_hidden);
  out.mean = head.mean;
  out.variance = head.variance;
  return out;
}

inline void vertex_regressor_init(std::map<std::string, Array>& params, const std::string& prefix,
                                  int token_rows, const VertexRegressorConfig& cfg, Rng& rng) {
  attention_init(params, prefix + ".cross", token_rows, cfg.d_cross, rng);
  attention_init(params, prefix + ".self", token_rows, cfg.d_self, rng);
  gaussian_head_init(params, prefix + ".head", token_rows, cfg.head_hidden, rng);
}

// ---------------------------------------------------------------------------
// Value-level wrappers (evaluate the same graph builders once)
// ---------------------------------------------------------------------------

struct AttentionWeights {
  Array w_q, w_k, w_v, w_o;
};

inline Array attention_apply(const Array& f_primary, const Array& f_kv, const AttentionWeights& w) {
  ad::Graph g;
  const int fv = g.input("fv", f_primary.shape);
  const int fj = g.input("fj", f_kv.shape);
  const int d = w.w_q.shape[0];
  AttentionBlockNodes nodes = cross_attention_nodes(g, fv, fj, "attn", d);
  ad::Evaluator ev(g);
  ev.bind("fv", f_primary);
  ev.bind("fj", f_kv);
  ev.bind("attn.wq", w.w_q);
  ev.bind("attn.wk", w.w_k);
  ev.bind("attn.wv", w.w_v);
  ev.bind("attn.wo", w.w_o);
  ev.forward();
  return ev.value(nodes.output);
}

inline Array cross_attention(const Array& f_v, const Array& f_j, const AttentionWeights& w) {
  return attention_apply(f_v, f_j, w);
}

inline Array self_attention(const Array& f_in, const AttentionWeights& w) {
  return attention_apply(f_in, f_in, w);
}

}  // namespace handmesh
