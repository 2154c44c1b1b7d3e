#pragma once

// Evaluation: similarity alignment (rotation with det +1, positive scale,
// translation), mean point errors, the area under the correct-keypoint curve
// over 0-50 mm, F-scores at distance thresholds, and masked PSNR/SSIM.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "handmesh/array.hpp"

namespace handmesh {

namespace metrics_detail {

// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix: A = V D V'.
inline void jacobi_eigen3(const double a_in[3][3], double eigval[3], double v[3][3]) {
  double a[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      a[i][j] = a_in[i][j];
      v[i][j] = (i == j) ? 1.0 : 0.0;
    }
  for (int sweep = 0; sweep < 50; ++sweep) {
    double off = std::fabs(a[0][1]) + std::fabs(a[0][2]) + std::fabs(a[1][2]);
    if (off < 1e-300) break;
    for (int p = 0; p < 2; ++p)
      for (int q = p + 1; q < 3; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int k = 0; k < 3; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
  }
  for (int i = 0; i < 3; ++i) eigval[i] = a[i][i];
  // Sort descending, keeping columns aligned.
  for (int i = 0; i < 2; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (eigval[j] > eigval[i]) {
        std::swap(eigval[i], eigval[j]);
        for (int k = 0; k < 3; ++k) std::swap(v[k][i], v[k][j]);
      }
}

inline double det3(const double m[3][3]) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

}  // namespace metrics_detail

struct SimilarityTransform {
  double scale = 1.0;
  double rotation[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  double translation[3] = {0, 0, 0};

  std::array<double, 3> apply(const double* p) const {
    std::array<double, 3> out;
    for (int a = 0; a < 3; ++a) {
      double acc = translation[a];
      for (int b = 0; b < 3; ++b) acc += scale * rotation[a][b] * p[b];
      out[a] = acc;
    }
    return out;
  }
};

// Least-squares similarity fit of pred onto gt. Rotation determinant is +1
// (no reflections); scale is positive. Collinear or coincident source
// geometry cannot be aligned.
inline SimilarityTransform procrustes_fit(const Array& pred, const Array& gt) {
  if (pred.rank() != 2 || pred.shape[1] != 3 || !gt.same_shape(pred))
    throw ShapeError("procrustes: point sets must be matching [N,3]");
  const int n = pred.shape[0];
  if (n < 3) throw DegenerateGeometryError("procrustes: need at least 3 points");

  double mx[3] = {0, 0, 0}, my[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      mx[c] += pred.at(i, c);
      my[c] += gt.at(i, c);
    }
  for (int c = 0; c < 3; ++c) {
    mx[c] /= n;
    my[c] /= n;
  }
  double cov[3][3] = {};  // (1/n) sum (y - my)(x - mx)'
  double var_x = 0.0;
  for (int i = 0; i < n; ++i) {
    double dx[3], dy[3];
    for (int c = 0; c < 3; ++c) {
      dx[c] = pred.at(i, c) - mx[c];
      dy[c] = gt.at(i, c) - my[c];
      var_x += dx[c] * dx[c];
    }
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) cov[a][b] += dy[a] * dx[b];
  }
  var_x /= n;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) cov[a][b] /= n;

  // SVD cov = U S V' through the eigendecomposition of cov' cov.
  double ata[3][3] = {};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int k = 0; k < 3; ++k) ata[a][b] += cov[k][a] * cov[k][b];
  double eig[3], V[3][3];
  metrics_detail::jacobi_eigen3(ata, eig, V);
  double sigma[3];
  for (int i = 0; i < 3; ++i) sigma[i] = std::sqrt(std::max(eig[i], 0.0));
  if (var_x <= 0.0 || sigma[1] <= 1e-12 * std::max(sigma[0], 1e-300))
    throw DegenerateGeometryError("procrustes: source geometry is rank deficient");

  double U[3][3];
  for (int i = 0; i < 2; ++i)
    for (int a = 0; a < 3; ++a) {
      double acc = 0;
      for (int b = 0; b < 3; ++b) acc += cov[a][b] * V[b][i];
      U[a][i] = acc / sigma[i];
    }
  if (sigma[2] > 1e-9 * sigma[0]) {
    for (int a = 0; a < 3; ++a) {
      double acc = 0;
      for (int b = 0; b < 3; ++b) acc += cov[a][b] * V[b][2];
      U[a][2] = acc / sigma[2];
    }
  } else {
    // Complete U with the cross product of its first two columns.
    U[0][2] = U[1][0] * U[2][1] - U[2][0] * U[1][1];
    U[1][2] = U[2][0] * U[0][1] - U[0][0] * U[2][1];
    U[2][2] = U[0][0] * U[1][1] - U[1][0] * U[0][1];
  }
  const double d = (metrics_detail::det3(U) * metrics_detail::det3(V) < 0.0) ? -1.0 : 1.0;

  SimilarityTransform out;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += U[a][k] * (k == 2 ? d : 1.0) * V[b][k];
      out.rotation[a][b] = acc;
    }
  out.scale = (sigma[0] + sigma[1] + d * sigma[2]) / var_x;
  if (!(out.scale > 0.0))
    throw DegenerateGeometryError("procrustes: non-positive optimal scale");
  for (int a = 0; a < 3; ++a) {
    double acc = 0;
    for (int b = 0; b < 3; ++b) acc += out.rotation[a][b] * mx[b];
    out.translation[a] = my[a] - out.scale * acc;
  }
  return out;
}

inline Array procrustes_align(const Array& pred, const Array& gt) {
  const SimilarityTransform T = procrustes_fit(pred, gt);
  Array out({pred.shape[0], 3});
  for (int i = 0; i < pred.shape[0]; ++i) {
    const double p[3] = {pred.at(i, 0), pred.at(i, 1), pred.at(i, 2)};
    const std::array<double, 3> q = T.apply(p);
    for (int c = 0; c < 3; ++c) out.at(i, c) = q[c];
  }
  return out;
}

inline double mean_point_error(const Array& pred, const Array& gt) {
  if (!pred.same_shape(gt) || pred.rank() != 2 || pred.shape[1] != 3)
    throw ShapeError("mean_point_error: point sets must be matching [N,3]");
  double acc = 0.0;
  const int n = pred.shape[0];
  for (int i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      const double d = pred.at(i, c) - gt.at(i, c);
      d2 += d * d;
    }
    acc += std::sqrt(d2);
  }
  return acc / n;
}

// Area under the correct-keypoint curve. steps is the number of threshold
// samples over [0, t_max]; the trapezoidal sum divided by t_max reduces to
// the endpoint-halved average over steps-1 intervals.
inline double pck_auc(const std::vector<double>& errors, double t_max = 50.0, int steps = 100) {
  if (steps < 2) throw DomainError("pck_auc: need at least 2 threshold samples");
  for (double e : errors)
    if (!(e >= 0.0)) throw DomainError("pck_auc: errors must be non-negative");
  if (errors.empty()) throw DomainError("pck_auc: empty error list");
  double weighted = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double t = t_max * i / (steps - 1);
    int within = 0;
    for (double e : errors) within += (e <= t);
    const double pck = static_cast<double>(within) / errors.size();
    weighted += (i == 0 || i == steps - 1) ? 0.5 * pck : pck;
  }
  return weighted / (steps - 1);
}

using PointSet = std::vector<std::array<double, 3>>;

inline PointSet to_point_set(const Array& a) {
  PointSet out(static_cast<std::size_t>(a.shape[0]));
  for (int i = 0; i < a.shape[0]; ++i)
    out[static_cast<std::size_t>(i)] = {a.at(i, 0), a.at(i, 1), a.at(i, 2)};
  return out;
}

// Harmonic mean of precision and recall of nearest-neighbor hits within tau.
inline double f_score(const PointSet& pred, const PointSet& gt, double tau) {
  if (pred.empty() || gt.empty()) throw DomainError("f_score: empty point set");
  auto frac_within = [&](const PointSet& from, const PointSet& to) {
    int hit = 0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        const double d2 = (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) +
                          (p[2] - q[2]) * (p[2] - q[2]);
        best = std::min(best, d2);
      }
      hit += (std::sqrt(best) <= tau);
    }
    return static_cast<double>(hit) / from.size();
  };
  const double precision = frac_within(pred, gt);
  const double recall = frac_within(gt, pred);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

// ---------------------------------------------------------------------------
// Image metrics
// ---------------------------------------------------------------------------

// Masked PSNR (peak 1.0, zero-error capped at 99 dB) and masked SSIM with the
// standard 11x11 Gaussian window (sigma 1.5, C1 = 0.01^2, C2 = 0.03^2).
// SSIM is computed per channel, averaged over channels and mask pixels; the
// window renormalizes where it overhangs the border.
inline std::pair<double, double> image_metrics(const Array& img_a, const Array& img_b,
                                               const Array& mask) {
  if (img_a.rank() != 3 || !img_a.same_shape(img_b))
    throw ShapeError("image_metrics: images must be matching [H,W,C]");
  if (mask.rank() != 2 || mask.shape[0] != img_a.shape[0] || mask.shape[1] != img_a.shape[1])
    throw ShapeError("image_metrics: mask must be [H,W]");
  const int H = img_a.shape[0], W = img_a.shape[1], C = img_a.shape[2];
  std::int64_t inside = 0;
  double mse = 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (mask.at(y, x) == 0.0) continue;
      ++inside;
      for (int c = 0; c < C; ++c) {
        const double d = img_a.at(y, x, c) - img_b.at(y, x, c);
        mse += d * d;
      }
    }
  if (inside == 0) throw DomainError("image_metrics: empty mask");
  mse /= static_cast<double>(inside * C);
  const double psnr = (mse == 0.0) ? 99.0 : std::min(99.0, -10.0 * std::log10(mse));

  // 11x11 Gaussian window, sigma 1.5.
  double w[11];
  double wsum = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5.0;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    wsum += w[i];
  }
  for (double& v : w) v /= wsum;

  const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  double ssim_acc = 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (mask.at(y, x) == 0.0) continue;
      double per_pixel = 0.0;
      for (int c = 0; c < C; ++c) {
        double sw = 0, ma = 0, mb = 0, va = 0, vb = 0, vab = 0;
        for (int dy = -5; dy <= 5; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= H) continue;
          for (int dx = -5; dx <= 5; ++dx) {
            const int xx = x + dx;
            if (xx < 0 || xx >= W) continue;
            const double wgt = w[dy + 5] * w[dx + 5];
            const double a = img_a.at(yy, xx, c), b = img_b.at(yy, xx, c);
            sw += wgt;
            ma += wgt * a;
            mb += wgt * b;
            va += wgt * a * a;
            vb += wgt * b * b;
            vab += wgt * a * b;
          }
        }
        ma /= sw;
        mb /= sw;
        va = va / sw - ma * ma;
        vb = vb / sw - mb * mb;
        vab = vab / sw - ma * mb;
        per_pixel += ((2.0 * ma * mb + C1) * (2.0 * vab + C2)) /
                     ((ma * ma + mb * mb + C1) * (va + vb + C2));
      }
      ssim_acc += per_pixel / C;
    }
  return {psnr, ssim_acc / static_cast<double>(inside)};
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct MetricsReport {
  double mpjpe_mm = 0, mpvpe_mm = 0;
  double auc_j = 0, auc_v = 0;
  double f5 = 0, f15 = 0;
  double psnr_db = 0, ssim = 0;

  void validate() const {
    for (double v : {auc_j, auc_v, f5, f15, ssim})
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("MetricsReport: unit-interval field out of range");
    if (!(mpjpe_mm >= 0.0 && mpvpe_mm >= 0.0))
      throw DomainError("MetricsReport: negative error");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"mpjpe_mm", mpjpe_mm}, {"mpvpe_mm", mpvpe_mm}, {"auc_j", auc_j},
                          {"auc_v", auc_v},       {"f5", f5},             {"f15", f15},
                          {"psnr_db", psnr_db},   {"ssim", ssim}};
  }

  static MetricsReport from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.mpjpe_mm = j.at("mpjpe_mm").get<double>();
    r.mpvpe_mm = j.at("mpvpe_mm").get<double>();
    r.auc_j = j.at("auc_j").get<double>();
    r.auc_v = j.at("auc_v").get<double>();
    r.f5 = j.at("f5").get<double>();
    r.f15 = j.at("f15").get<double>();
    r.psnr_db = j.at("psnr_db").get<double>();
    r.ssim = j.at("ssim").get<double>();
    return r;
  }
};

}  // namespace handmesh
