#include <catch2/catch_amalgamated.hpp>

#include "handmesh/camera.hpp"
#include "handmesh/rng.hpp"

using namespace handmesh;

TEST_CASE("rodrigues basics") {
  Array I = rodrigues({0, 0, 0});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) REQUIRE(I.at(i, j) == (i == j ? 1.0 : 0.0));

  const double pi = 3.14159265358979323846;
  Array Rx = rodrigues({pi, 0, 0});
  double expx[9] = {1, 0, 0, 0, -1, 0, 0, 0, -1};
  for (int i = 0; i < 9; ++i) REQUIRE(Rx.data[i] == Catch::Approx(expx[i]).margin(1e-12));

  Array Rz = rodrigues({0, 0, pi / 2});
  double expz[9] = {0, -1, 0, 1, 0, 0, 0, 0, 1};
  for (int i = 0; i < 9; ++i) REQUIRE(Rz.data[i] == Catch::Approx(expz[i]).margin(1e-12));
}

TEST_CASE("rodrigues inverse property") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::array<double, 3> r{rng.normal(), rng.normal(), rng.normal()};
    Array A = rodrigues(r);
    Array B = rodrigues({-r[0], -r[1], -r[2]});
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = 0;
        for (int k = 0; k < 3; ++k) acc += A.at(i, k) * B.at(k, j);
        REQUIRE(acc == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-10));
      }
  }
}

TEST_CASE("rodrigues is orthonormal with unit determinant") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    Array R = rodrigues({rng.normal(), rng.normal(), rng.normal()});
    double det = R.at(0, 0) * (R.at(1, 1) * R.at(2, 2) - R.at(1, 2) * R.at(2, 1)) -
                 R.at(0, 1) * (R.at(1, 0) * R.at(2, 2) - R.at(1, 2) * R.at(2, 0)) +
                 R.at(0, 2) * (R.at(1, 0) * R.at(2, 1) - R.at(1, 1) * R.at(2, 0));
    REQUIRE(det == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("projection: identity camera drops z") {
  CameraParams cam;
  Array pts({2, 3}, std::vector<double>{1, 2, 3, -4, 5, -6});
  Array p2 = project_weak_perspective(pts, cam);
  REQUIRE(p2.at(0, 0) == 1.0);
  REQUIRE(p2.at(0, 1) == 2.0);
  REQUIRE(p2.at(1, 0) == -4.0);
  REQUIRE(p2.at(1, 1) == 5.0);
}

TEST_CASE("projection: affine arithmetic") {
  CameraParams cam;
  cam.scale = 2.0;
  cam.translation = {3.0, 4.0, 9.0};
  Array pts({1, 3}, std::vector<double>{1, 1, 5});
  Array p2 = project_weak_perspective(pts, cam);
  REQUIRE(p2.at(0, 0) == 5.0);
  REQUIRE(p2.at(0, 1) == 6.0);
}

TEST_CASE("projection matches the direct formula on random inputs") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    CameraParams cam;
    cam.scale = std::exp(rng.normal());
    cam.rotation = {rng.normal(), rng.normal(), rng.normal()};
    cam.translation = {rng.normal(), rng.normal(), rng.normal()};
    Array pts = rng.normal_array({6, 3});
    Array got = project_weak_perspective(pts, cam);
    Array R = rodrigues(cam.rotation);
    for (int i = 0; i < 6; ++i)
      for (int a = 0; a < 2; ++a) {
        double e = cam.scale * (pts.at(i, 0) * R.at(0, a) + pts.at(i, 1) * R.at(1, a) +
                                pts.at(i, 2) * R.at(2, a)) +
                   cam.translation[a];
        REQUIRE(std::fabs(got.at(i, a) - e) <= 1e-12 * std::max(1.0, std::fabs(e)));
      }
  }
}

TEST_CASE("projection is scale-linear") {
  Rng rng(37);
  CameraParams cam;
  cam.scale = 0.73;
  cam.rotation = {0.2, -0.4, 0.9};
  Array pts = rng.normal_array({5, 3});
  CameraParams cam2 = cam;
  cam2.scale = 2.0 * cam.scale;
  Array a = project_weak_perspective(pts, cam);
  Array b = project_weak_perspective(pts, cam2);
  for (std::size_t i = 0; i < a.data.size(); ++i) REQUIRE(b.data[i] == 2.0 * a.data[i]);
}

TEST_CASE("projecting rotated points equals composed rotation") {
  Rng rng(41);
  CameraParams cam;
  cam.scale = 1.4;
  cam.rotation = {0.3, 0.1, -0.7};
  cam.translation = {5.0, -2.0, 0.0};
  Array A = rodrigues({0.9, -0.2, 0.5});
  Array pts = rng.normal_array({7, 3});
  Array rotated({7, 3});
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += pts.at(i, k) * A.at(k, j);
      rotated.at(i, j) = acc;
    }
  Array got = project_weak_perspective(rotated, cam);
  // Direct evaluation with the composed matrix A * R.
  Array R = rodrigues(cam.rotation);
  for (int i = 0; i < 7; ++i)
    for (int a = 0; a < 2; ++a) {
      double e = cam.translation[a];
      for (int b = 0; b < 3; ++b) {
        double ar = 0;
        for (int k = 0; k < 3; ++k) ar += A.at(b, k) * R.at(k, a);
        e += cam.scale * pts.at(i, b) * ar;
      }
      REQUIRE(got.at(i, a) == Catch::Approx(e).margin(1e-10));
    }
}

TEST_CASE("camera head: zero weights give the constant camera") {
  ad::Graph g;
  const int D = 6;
  int f = g.input("f", {D, 1});
  int cam = camera_head_nodes(g, f, "cam", 5);
  g.mark_output("cam", cam);
  std::map<std::string, Array> params;
  for (const std::string& n : g.param_names()) params[n] = Array(g.node(g.leaf_id(n)).shape);
  ad::Evaluator ev(g);
  ev.bind_all(params);
  Rng rng(5);
  ev.bind("f", rng.normal_array({D, 1}));
  ev.forward();
  const Array& mu = ev.value(cam);
  REQUIRE(mu.shape == Shape{7, 1});
  REQUIRE(mu.data[0] == 1.0);  // exp(0)
  for (int i = 1; i < 7; ++i) REQUIRE(mu.data[i] == 0.0);
}

TEST_CASE("camera loss gradient through the head") {
  ad::Graph g;
  const int D = 5;
  int f = g.input("f", {D, 1});
  int cam = camera_head_nodes(g, f, "cam", 4);
  int target = g.input("target", {7, 1});
  int loss = g.sum(g.square(g.sub(target, cam)));
  Rng rng(90);
  std::map<std::string, Array> binds;
  camera_head_init(binds, "cam", D, 4, rng);
  // Perturb the zero output layer so the audit sees a generic point.
  for (auto& [k, v] : binds)
    for (double& x : v.data) x += 0.05 * rng.normal();
  binds["f"] = rng.normal_array({D, 1});
  binds["target"] = rng.normal_array({7, 1});
  REQUIRE(ad::grad_check(g, loss, binds, 1e-6) < 1e-4);
}

TEST_CASE("projection graph nodes match the plain projection") {
  ad::Graph g;
  int pts = g.input("pts", {5, 3});
  int camv = g.input("cam", {7, 1});
  CameraNodes cn = split_camera(g, camv);
  int p2 = project_nodes(g, pts, cn);
  g.mark_output("p2", p2);
  Rng rng(55);
  CameraParams cam;
  cam.scale = 1.7;
  cam.rotation = {0.4, -0.8, 0.2};
  cam.translation = {3.0, -1.0, 0.5};
  Array pv = rng.normal_array({5, 3});
  std::map<std::string, Array> binds;
  binds["pts"] = pv;
  Array c7 = cam.as_vector();
  c7.shape = {7, 1};
  binds["cam"] = c7;
  auto out = ad::forward_eval(g, binds);
  Array direct = project_weak_perspective(pv, cam);
  for (std::size_t i = 0; i < direct.data.size(); ++i)
    REQUIRE(out.at("p2").data[i] == Catch::Approx(direct.data[i]).margin(1e-13));
}
