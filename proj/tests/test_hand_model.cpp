#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "handmesh/camera.hpp"
#include "handmesh/hand_model.hpp"

using namespace handmesh;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Independent skinning oracle: plain loops, explicit transform composition.
Array lbs_oracle(const HandTemplate& t, const Array& shape, const Array& pose) {
  const int V = t.vertex_count, K = t.joint_count;
  Array v_shaped = t.template_vertices;
  for (int i = 0; i < V; ++i)
    for (int c = 0; c < 3; ++c)
      for (int s = 0; s < t.shape_dim(); ++s)
        v_shaped.at(i, c) += t.shape_blendshapes.at(i, c, s) * shape.data[s];
  Array j0({K, 3});
  for (int j = 0; j < K; ++j)
    for (int c = 0; c < 3; ++c) {
      double acc = 0;
      for (int i = 0; i < V; ++i) acc += t.joint_regressor.at(j, i) * v_shaped.at(i, c);
      j0.at(j, c) = acc;
    }
  std::vector<Array> R(K);
  for (int j = 0; j < K; ++j)
    R[j] = rodrigues({pose.at(j, 0), pose.at(j, 1), pose.at(j, 2)});
  Array v_posed = v_shaped;
  for (int i = 0; i < V; ++i)
    for (int c = 0; c < 3; ++c) {
      double acc = 0;
      for (int j = 1; j < K; ++j)
        for (int p = 0; p < 9; ++p) {
          const double feat = R[j].data[p] - (p % 4 == 0 ? 1.0 : 0.0);
          acc += t.pose_blendshapes.at(i, c, (j - 1) * 9 + p) * feat;
        }
      v_posed.at(i, c) += acc;
    }
  std::vector<Array> GR(K), Gt(K);
  GR[0] = R[0];
  Gt[0] = Array({3});
  for (int c = 0; c < 3; ++c) Gt[0].data[c] = j0.at(0, c);
  for (int j = 1; j < K; ++j) {
    const int p = t.kinematic_parents[j];
    GR[j] = Array({3, 3});
    Gt[j] = Array({3});
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        double acc = 0;
        for (int k = 0; k < 3; ++k) acc += GR[p].at(a, k) * R[j].at(k, b);
        GR[j].at(a, b) = acc;
      }
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += GR[p].at(a, k) * (j0.at(j, k) - j0.at(p, k));
      Gt[j].data[a] = acc + Gt[p].data[a];
    }
  }
  Array out({V, 3});
  for (int i = 0; i < V; ++i)
    for (int a = 0; a < 3; ++a) {
      double acc = 0;
      for (int j = 0; j < K; ++j) {
        const double w = t.skinning_weights.at(i, j);
        if (w == 0.0) continue;
        double moved = Gt[j].data[a];
        for (int b = 0; b < 3; ++b)
          moved += GR[j].at(a, b) * (v_posed.at(i, b) - j0.at(j, b));
        acc += w * moved;
      }
      out.at(i, a) = acc;
    }
  return out;
}

}  // namespace

TEST_CASE("paddle template dimensions and round trip") {
  HandTemplate t = make_paddle_template();
  REQUIRE(t.vertex_count == 162);
  REQUIRE(t.joint_count == 16);
  const std::string path = temp_path("handmesh_paddle.json");
  save_template(t, path);
  HandTemplate u = load_template(path);
  REQUIRE(u.vertex_count == 162);
  REQUIRE(u.template_vertices.data == t.template_vertices.data);
  REQUIRE(u.skinning_weights.data == t.skinning_weights.data);
  REQUIRE(u.faces == t.faces);
  std::remove(path.c_str());
}

TEST_CASE("corrupt skinning row fails validation") {
  HandTemplate t = make_toy_template();
  t.skinning_weights.at(2, 0) = 0.9;  // row now sums to 0.9
  for (int j = 1; j < 4; ++j) t.skinning_weights.at(2, j) = 0.0;
  REQUIRE_THROWS_AS(validate_template(t), ValidationError);
}

TEST_CASE("template file with a MANO-shaped layout loads") {
  HandTemplate t;
  t.vertex_count = 778;
  t.joint_count = 21;
  Rng rng(77);
  t.template_vertices = rng.normal_array({778, 3}, 0.02);
  t.faces.push_back({0, 1, 2});
  t.kinematic_parents.assign(21, 0);
  t.kinematic_parents[0] = -1;
  for (int j = 1; j < 21; ++j) t.kinematic_parents[j] = (j % 4 == 1) ? 0 : j - 1;
  t.skinning_weights = Array({778, 21});
  for (int i = 0; i < 778; ++i) t.skinning_weights.at(i, i % 21) = 1.0;
  t.joint_regressor = Array({21, 778});
  for (int j = 0; j < 21; ++j) {
    int count = 0;
    for (int i = j; i < 778; i += 21) ++count;
    for (int i = j; i < 778; i += 21) t.joint_regressor.at(j, i) = 1.0 / count;
  }
  detail::finish_blendshapes(t);
  validate_template(t);
  const std::string path = temp_path("handmesh_mano_shape.json");
  save_template(t, path);
  HandTemplate u = load_template(path);
  REQUIRE(u.vertex_count == 778);
  REQUIRE(u.joint_count == 21);
  REQUIRE(u.pose_dim() == 180);
  std::remove(path.c_str());
}

TEST_CASE("missing field names the field") {
  const std::string path = temp_path("handmesh_broken.json");
  {
    nlohmann::json j;
    j["vertex_count"] = 3;
    std::ofstream out(path);
    out << j.dump();
  }
  try {
    load_template(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    REQUIRE(std::string(e.what()).find("joint_count") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("rest coordinates reproduce the template") {
  for (bool paddle : {true, false}) {
    HandTemplate t = paddle ? make_paddle_template() : make_toy_template();
    LbsResult rest = rest_coords(t);
    for (std::size_t i = 0; i < rest.vertices.data.size(); ++i)
      REQUIRE(rest.vertices.data[i] == Catch::Approx(t.template_vertices.data[i]).margin(1e-12));
    // joints0 is the regressor applied to verts0.
    for (int j = 0; j < t.joint_count; ++j)
      for (int c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = 0; i < t.vertex_count; ++i)
          acc += t.joint_regressor.at(j, i) * rest.vertices.at(i, c);
        REQUIRE(rest.joints.at(j, c) == acc);
      }
  }
}

TEST_CASE("paddle rest joints match the golden file") {
  HandTemplate t = make_paddle_template();
  LbsResult rest = rest_coords(t);
  std::ifstream in(std::string(TEST_DATA_DIR) + "/paddle_joints0.json");
  REQUIRE(in.good());
  nlohmann::json j;
  in >> j;
  REQUIRE(static_cast<int>(j.size()) == t.joint_count);
  for (int k = 0; k < t.joint_count; ++k)
    for (int c = 0; c < 3; ++c)
      REQUIRE(rest.joints.at(k, c) == Catch::Approx(j.at(k).at(c).get<double>()).margin(1e-12));
}

TEST_CASE("unit shape coefficient adds the first blendshape") {
  HandTemplate t = make_toy_template();
  Array shape({t.shape_dim()});
  shape.data[0] = 1.0;
  LbsResult res = lbs_forward(t, shape, Array({t.joint_count, 3}));
  for (int i = 0; i < t.vertex_count; ++i)
    for (int c = 0; c < 3; ++c)
      REQUIRE(res.vertices.at(i, c) ==
              Catch::Approx(t.template_vertices.at(i, c) + t.shape_blendshapes.at(i, c, 0)).margin(1e-12));
}

TEST_CASE("quarter turn of one joint moves its subtree rigidly") {
  HandTemplate t = make_paddle_template();
  const double pi = 3.14159265358979323846;
  Array pose({16, 3});
  pose.at(1, 0) = pi / 2;  // first segment of the first finger
  Array shape({t.shape_dim()});
  LbsResult res = lbs_forward(t, shape, pose);
  Array oracle = lbs_oracle(t, shape, pose);
  for (std::size_t i = 0; i < oracle.data.size(); ++i)
    REQUIRE(res.vertices.data[i] == Catch::Approx(oracle.data[i]).margin(1e-12));

  // Vertices fully owned by the rotated subtree map through one rigid
  // transform about the joint.
  LbsResult rest = rest_coords(t);
  Array j0({3});
  for (int c = 0; c < 3; ++c) j0.data[c] = rest.joints.at(1, c);
  Array R = rodrigues({pi / 2, 0, 0});
  // v_posed includes the pose-corrective offsets; recompute it directly.
  Array zero_shape({t.shape_dim()});
  Array v_posed = t.template_vertices;
  {
    std::vector<Array> Rj(16);
    for (int j = 0; j < 16; ++j) Rj[j] = rodrigues({pose.at(j, 0), pose.at(j, 1), pose.at(j, 2)});
    for (int i = 0; i < t.vertex_count; ++i)
      for (int c = 0; c < 3; ++c)
        for (int j = 1; j < 16; ++j)
          for (int p = 0; p < 9; ++p)
            v_posed.at(i, c) += t.pose_blendshapes.at(i, c, (j - 1) * 9 + p) *
                                (Rj[j].data[p] - (p % 4 == 0 ? 1.0 : 0.0));
  }
  int checked = 0;
  for (int i = 0; i < t.vertex_count; ++i) {
    double wsub = t.skinning_weights.at(i, 1) + t.skinning_weights.at(i, 2) + t.skinning_weights.at(i, 3);
    if (wsub != 1.0) continue;
    ++checked;
    for (int a = 0; a < 3; ++a) {
      double e = j0.data[a];
      for (int b = 0; b < 3; ++b) e += R.at(a, b) * (v_posed.at(i, b) - j0.data[b]);
      REQUIRE(res.vertices.at(i, a) == Catch::Approx(e).margin(1e-12));
    }
  }
  REQUIRE(checked >= 16);
}

TEST_CASE("global root rotation is a rigid map of the whole mesh") {
  HandTemplate t = make_paddle_template();
  Rng rng(19);
  Array shape = rng.normal_array({t.shape_dim()}, 0.3);
  Array pose = rng.normal_array({16, 3}, 0.2);
  for (int c = 0; c < 3; ++c) pose.at(0, c) = 0.0;
  LbsResult base = lbs_forward(t, shape, pose);

  std::array<double, 3> r0{0.7, -0.3, 1.1};
  Array pose_rot = pose;
  for (int c = 0; c < 3; ++c) pose_rot.at(0, c) = r0[c];
  LbsResult rot = lbs_forward(t, shape, pose_rot);

  // Root joint position of the shaped mesh.
  Array v_shaped = t.template_vertices;
  for (int i = 0; i < t.vertex_count; ++i)
    for (int c = 0; c < 3; ++c)
      for (int s = 0; s < t.shape_dim(); ++s)
        v_shaped.at(i, c) += t.shape_blendshapes.at(i, c, s) * shape.data[s];
  double j0[3] = {0, 0, 0};
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < t.vertex_count; ++i) j0[c] += t.joint_regressor.at(0, i) * v_shaped.at(i, c);

  Array R = rodrigues(r0);
  for (int i = 0; i < t.vertex_count; ++i)
    for (int a = 0; a < 3; ++a) {
      double e = j0[a];
      for (int b = 0; b < 3; ++b) e += R.at(a, b) * (base.vertices.at(i, b) - j0[b]);
      REQUIRE(rot.vertices.at(i, a) == Catch::Approx(e).margin(1e-9));
    }
}

TEST_CASE("one-hot skinning is pure rigid motion per part") {
  HandTemplate t = make_toy_template(/*one_hot_weights=*/true);
  Rng rng(29);
  Array shape = rng.normal_array({t.shape_dim()}, 0.2);
  Array pose = rng.normal_array({4, 3}, 0.6);
  LbsResult res = lbs_forward(t, shape, pose);
  Array oracle = lbs_oracle(t, shape, pose);
  for (std::size_t i = 0; i < oracle.data.size(); ++i)
    REQUIRE(res.vertices.data[i] == Catch::Approx(oracle.data[i]).margin(1e-12));
}

TEST_CASE("joints output is the regressor applied to the vertices") {
  HandTemplate t = make_toy_template();
  Rng rng(31);
  Array shape = rng.normal_array({t.shape_dim()}, 0.3);
  Array pose = rng.normal_array({4, 3}, 0.4);
  LbsResult res = lbs_forward(t, shape, pose);
  // Same accumulation order as the library matmul: bitwise equality.
  for (int j = 0; j < 4; ++j)
    for (int c = 0; c < 3; ++c) {
      double acc = 0;
      for (int i = 0; i < 12; ++i) acc += t.joint_regressor.at(j, i) * res.vertices.at(i, c);
      REQUIRE(res.joints.at(j, c) == acc);
    }
}

TEST_CASE("lbs rejects non-finite input") {
  HandTemplate t = make_toy_template();
  Array pose({4, 3});
  pose.data[5] = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(lbs_forward(t, Array({2}), pose), NumericError);
}

TEST_CASE("prior head: zero initialization lands on the rest mesh") {
  HandTemplate t = make_toy_template();
  const int D = 6;
  std::map<std::string, Array> params;
  Rng rng(43);
  prior_head_init(params, "prior.mlp", t, D, rng, /*hidden=*/8);
  PriorDistribution prior = prior_head(rng.normal_array({D}), params, t, "prior.mlp", 8);
  LbsResult rest = rest_coords(t);
  for (std::size_t i = 0; i < prior.mean.data.size(); ++i)
    REQUIRE(prior.mean.data[i] == Catch::Approx(rest.vertices.data[i]).margin(1e-12));
  for (double v : prior.variance.data) REQUIRE(v == 1.0);
}

TEST_CASE("prior head gradient audit") {
  HandTemplate t = make_toy_template();
  const int D = 5;
  ad::Graph g;
  int f = g.input("f", {D, 1});
  PriorHeadNodes nodes = prior_head_nodes(g, t, f, "prior.mlp", /*hidden=*/6);
  int loss = g.sum(nodes.mean);
  Rng rng(47);
  std::map<std::string, Array> binds;
  prior_head_init(binds, "prior.mlp", t, D, rng, 6);
  for (auto& [k, v] : binds)
    for (double& x : v.data) x += 0.1 * rng.normal();
  binds["f"] = rng.normal_array({D, 1});
  REQUIRE(ad::grad_check(g, loss, binds, 1e-6) < 1e-4);
}
