#include <catch2/catch_amalgamated.hpp>

#include "handmesh/attention.hpp"
#include "handmesh/rng.hpp"

using namespace handmesh;

namespace {

// Naive dense-loop attention oracle: no matrix helpers from the library.
Array attention_oracle(const Array& f_primary, const Array& f_kv, const AttentionWeights& w) {
  const int rows = f_primary.shape[0];
  const int n = f_primary.shape[1], m = f_kv.shape[1];
  const int d = w.w_q.shape[0];
  auto embed = [&](const Array& W, const Array& F, int col, int r) {
    double acc = 0;
    for (int i = 0; i < F.shape[0]; ++i) acc += W.at(r, i) * F.at(i, col);
    return acc;
  };
  Array S({n, m});
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int j = 0; j < m; ++j) {
      double logit = 0;
      for (int r = 0; r < d; ++r) logit += embed(w.w_q, f_primary, i, r) * embed(w.w_k, f_kv, j, r);
      S.at(i, j) = logit / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, S.at(i, j));
    }
    double z = 0;
    for (int j = 0; j < m; ++j) {
      S.at(i, j) = std::exp(S.at(i, j) - mx);
      z += S.at(i, j);
    }
    for (int j = 0; j < m; ++j) S.at(i, j) /= z;
  }
  Array out = f_primary;
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < rows; ++r) {
      double acc = 0;
      for (int e = 0; e < d; ++e) {
        double val = 0;
        for (int j = 0; j < m; ++j) val += embed(w.w_v, f_kv, j, e) * S.at(c, j);
        acc += w.w_o.at(r, e) * val;
      }
      out.at(r, c) += acc;
    }
  return out;
}

AttentionWeights random_weights(int rows, int d, Rng& rng) {
  AttentionWeights w;
  w.w_q = rng.normal_array({d, rows}, 0.5);
  w.w_k = rng.normal_array({d, rows}, 0.5);
  w.w_v = rng.normal_array({d, rows}, 0.5);
  w.w_o = rng.normal_array({rows, d}, 0.5);
  return w;
}

}  // namespace

TEST_CASE("positional encoding shapes at full joint count") {
  Rng rng(3);
  Array feature = rng.normal_array({2048});
  Array verts0 = rng.normal_array({10, 3});
  Array joints0 = rng.normal_array({21, 3});
  TokenFeatures tf = positional_encode(feature, verts0, joints0);
  REQUIRE(tf.joint_tokens.shape == Shape{2051, 21});
  REQUIRE(tf.vertex_tokens.shape == Shape{2051, 10});
}

TEST_CASE("zero feature: columns differ only in the coordinate rows") {
  Array feature({4});
  Rng rng(5);
  Array verts0 = rng.normal_array({6, 3});
  Array joints0 = rng.normal_array({2, 3});
  TokenFeatures tf = positional_encode(feature, verts0, joints0);
  for (int c = 0; c < 6; ++c) {
    for (int r = 0; r < 4; ++r) REQUIRE(tf.vertex_tokens.at(r, c) == 0.0);
    for (int r = 0; r < 3; ++r) REQUIRE(tf.vertex_tokens.at(4 + r, c) == verts0.at(c, r));
  }
}

TEST_CASE("equal rest coordinates give identical token columns") {
  Rng rng(7);
  Array feature = rng.normal_array({5});
  Array verts0 = rng.normal_array({4, 3});
  for (int c = 0; c < 3; ++c) verts0.at(2, c) = verts0.at(0, c);
  Array joints0 = rng.normal_array({2, 3});
  TokenFeatures tf = positional_encode(feature, verts0, joints0);
  for (int r = 0; r < 8; ++r) REQUIRE(tf.vertex_tokens.at(r, 2) == tf.vertex_tokens.at(r, 0));
}

TEST_CASE("cross attention with a single key") {
  Rng rng(11);
  const int rows = 6, d = 3;
  AttentionWeights w = random_weights(rows, d, rng);
  Array f_v = rng.normal_array({rows, 5});
  Array f_j = rng.normal_array({rows, 1});
  Array out = cross_attention(f_v, f_j, w);
  // S is all ones, so every vertex receives the same joint value vector.
  Array delta0({rows});
  for (int r = 0; r < rows; ++r) delta0.data[r] = out.at(r, 0) - f_v.at(r, 0);
  for (int c = 1; c < 5; ++c)
    for (int r = 0; r < rows; ++r)
      REQUIRE(out.at(r, c) - f_v.at(r, c) == Catch::Approx(delta0.data[r]).margin(1e-12));
}

TEST_CASE("identical joint keys give the uniform correlation map") {
  ad::Graph g;
  const int rows = 5, V = 4, K = 3, d = 2;
  int fv = g.input("fv", {rows, V});
  int fj = g.input("fj", {rows, K});
  AttentionBlockNodes blk = cross_attention_nodes(g, fv, fj, "x", d);
  Rng rng(13);
  ad::Evaluator ev(g);
  ev.bind("fv", rng.normal_array({rows, V}));
  Array col = rng.normal_array({rows, 1});
  Array fjv({rows, K});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < K; ++c) fjv.at(r, c) = col.data[r];
  ev.bind("fj", fjv);
  ev.bind("x.wq", rng.normal_array({d, rows}));
  ev.bind("x.wk", rng.normal_array({d, rows}));
  ev.bind("x.wv", rng.normal_array({d, rows}));
  ev.bind("x.wo", rng.normal_array({rows, d}));
  ev.forward();
  const Array& S = ev.value(blk.attention);
  for (int i = 0; i < V; ++i)
    for (int j = 0; j < K; ++j) REQUIRE(S.at(i, j) == Catch::Approx(1.0 / K).margin(1e-12));
}

TEST_CASE("cross attention matches the dense-loop oracle") {
  Rng rng(17);
  const int rows = 7, V = 5, K = 3, d = 4;
  AttentionWeights w = random_weights(rows, d, rng);
  Array f_v = rng.normal_array({rows, V});
  Array f_j = rng.normal_array({rows, K});
  Array got = cross_attention(f_v, f_j, w);
  Array expect = attention_oracle(f_v, f_j, w);
  for (std::size_t i = 0; i < got.data.size(); ++i)
    REQUIRE(got.data[i] == Catch::Approx(expect.data[i]).margin(1e-12));
}

TEST_CASE("self attention matches the dense-loop oracle") {
  Rng rng(19);
  const int rows = 5, V = 4, d = 2;
  AttentionWeights w = random_weights(rows, d, rng);
  Array f = rng.normal_array({rows, V});
  Array got = self_attention(f, w);
  Array expect = attention_oracle(f, f, w);
  for (std::size_t i = 0; i < got.data.size(); ++i)
    REQUIRE(got.data[i] == Catch::Approx(expect.data[i]).margin(1e-12));
}

TEST_CASE("self attention with equal columns stays equal") {
  Rng rng(23);
  const int rows = 6, V = 5, d = 3;
  AttentionWeights w = random_weights(rows, d, rng);
  Array col = rng.normal_array({rows, 1});
  Array f({rows, V});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < V; ++c) f.at(r, c) = col.data[r];
  Array out = self_attention(f, w);
  for (int r = 0; r < rows; ++r)
    for (int c = 1; c < V; ++c) REQUIRE(out.at(r, c) == Catch::Approx(out.at(r, 0)).margin(1e-12));
}

TEST_CASE("self attention is permutation equivariant") {
  Rng rng(29);
  const int rows = 5, V = 6, d = 3;
  AttentionWeights w = random_weights(rows, d, rng);
  Array f = rng.normal_array({rows, V});
  const int perm[6] = {3, 0, 5, 1, 4, 2};
  Array fp({rows, V});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < V; ++c) fp.at(r, c) = f.at(r, perm[c]);
  Array out = self_attention(f, w);
  Array outp = self_attention(fp, w);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < V; ++c)
      REQUIRE(outp.at(r, c) == Catch::Approx(out.at(r, perm[c])).margin(1e-12));
}

TEST_CASE("attention rows are stochastic") {
  ad::Graph g;
  const int rows = 8, V = 7, K = 4;
  int fv = g.input("fv", {rows, V});
  int fj = g.input("fj", {rows, K});
  AttentionBlockNodes cross = cross_attention_nodes(g, fv, fj, "c", 3);
  AttentionBlockNodes self = self_attention_nodes(g, cross.output, "s", 3);
  Rng rng(31);
  ad::Evaluator ev(g);
  ev.bind("fv", rng.normal_array({rows, V}, 2.0));
  ev.bind("fj", rng.normal_array({rows, K}, 2.0));
  for (const char* p : {"c", "s"}) {
    ev.bind(std::string(p) + ".wq", rng.normal_array({3, rows}));
    ev.bind(std::string(p) + ".wk", rng.normal_array({3, rows}));
    ev.bind(std::string(p) + ".wv", rng.normal_array({3, rows}));
    ev.bind(std::string(p) + ".wo", rng.normal_array({rows, 3}));
  }
  ev.forward();
  for (int node : {cross.attention, self.attention}) {
    const Array& S = ev.value(node);
    for (int i = 0; i < S.shape[0]; ++i) {
      double sum = 0;
      for (int j = 0; j < S.shape[1]; ++j) {
        REQUIRE(S.at(i, j) >= 0.0);
        sum += S.at(i, j);
      }
      REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("zero value/output projections are exact identities") {
  Rng rng(37);
  const int rows = 6, V = 5, d = 3;
  AttentionWeights w;
  w.w_q = rng.normal_array({d, rows});
  w.w_k = rng.normal_array({d, rows});
  w.w_v = Array({d, rows});
  w.w_o = Array({rows, d});
  Array f_v = rng.normal_array({rows, V});
  Array f_j = rng.normal_array({rows, 2});
  Array out_c = cross_attention(f_v, f_j, w);
  Array out_s = self_attention(f_v, w);
  REQUIRE(out_c.data == f_v.data);
  REQUIRE(out_s.data == f_v.data);
}

TEST_CASE("gaussian head: zero weights give constant mean and unit variance") {
  ad::Graph g;
  int tok = g.input("tok", {5, 4});
  GaussianHeadNodes head = gaussian_head_nodes(g, tok, "h", 3);
  ad::Evaluator ev(g);
  Rng rng(41);
  ev.bind("tok", rng.normal_array({5, 4}));
  for (const std::string& n : g.param_names()) ev.bind(n, Array(g.node(g.leaf_id(n)).shape));
  ev.forward();
  REQUIRE(ev.value(head.mean).shape == Shape{4, 3});
  REQUIRE(ev.value(head.variance).shape == Shape{4, 3});
  for (double v : ev.value(head.mean).data) REQUIRE(v == 0.0);
  for (double v : ev.value(head.variance).data) REQUIRE(v == 1.0);
}

TEST_CASE("variance is positive for any finite parameters") {
  ad::Graph g;
  int tok = g.input("tok", {5, 6});
  GaussianHeadNodes head = gaussian_head_nodes(g, tok, "h", 4);
  Rng rng(43);
  ad::Evaluator ev(g);
  ev.bind("tok", rng.normal_array({5, 6}, 3.0));
  for (const std::string& n : g.param_names())
    ev.bind(n, rng.normal_array(g.node(g.leaf_id(n)).shape, 2.0));
  ev.forward();
  for (double v : ev.value(head.variance).data) REQUIRE(v > 0.0);
}

TEST_CASE("gradient audit through both attention blocks and heads") {
  ad::Graph g;
  const int D = 5, V = 4, K = 2;
  int f = g.input("f", {D, 1});
  Rng rng(47);
  int verts0 = g.constant(rng.normal_array({V, 3}));
  int joints0 = g.constant(rng.normal_array({K, 3}));
  VertexRegressorConfig cfg;
  cfg.d_cross = 3;
  cfg.d_self = 3;
  cfg.head_hidden = 4;
  VertexRegressorNodes reg = vertex_regressor_nodes(g, f, verts0, joints0, "amv", cfg);
  int loss = g.add(g.sum(reg.mean), g.sum(reg.variance));
  std::map<std::string, Array> binds;
  vertex_regressor_init(binds, "amv", D + 3, cfg, rng);
  for (auto& [k, v] : binds)
    for (double& x : v.data) x += 0.15 * rng.normal();
  binds["f"] = rng.normal_array({D, 1});
  REQUIRE(ad::grad_check(g, loss, binds, 1e-6) < 1e-4);
}
