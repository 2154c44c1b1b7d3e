#pragma once

// Occlusion-aware software rasterization and texture regression.
//
// Conventions, fixed because they are part of this module's contract:
//   - pixel centers at (x+0.5, y+0.5), y growing downward;
//   - coverage by edge functions e = (Ex-Sx)(Py-Sy) - (Ey-Sy)(Px-Sx),
//     evaluated directly per pixel (never incrementally), with the top-left
//     fill rule accepting e == 0 when the edge direction d = E-S has
//     d.y < 0, or d.y == 0 and d.x > 0;
//   - triangles with negative doubled area swap their last two vertices so
//     interior edge functions are positive; zero-area triangles are skipped;
//   - smaller interpolated depth wins; a candidate replaces the incumbent
//     only when it is nearer by more than 1e-12, and triangles are processed
//     in ascending ID, so depth ties resolve to the lower triangle ID.
//
// Gradients flow through barycentric color interpolation and through the
// sampling locations of reverse interpolation. Coverage geometry (which
// triangle wins which pixel) is treated as piecewise constant.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "handmesh/attention.hpp"
#include "handmesh/autodiff.hpp"

namespace handmesh {

struct ProjectedMesh {
  Array verts2d;  // [V,2] pixel coordinates
  Array depths;   // [V] camera-space z after rotation
  std::vector<std::array<int, 3>> faces;
};

struct RasterBuffers {
  int height = 0, width = 0;
  Array depth;              // [H,W], +inf on background
  std::vector<int> tri_id;  // H*W, -1 on background
  Array bary;               // [H,W,3] in original vertex order, 0 on background

  int tri_at(int y, int x) const { return tri_id[static_cast<std::size_t>(y) * width + x]; }
};

struct OcclusionMask {
  int height = 0, width = 0;
  std::vector<std::uint8_t> mask;              // H*W binary
  std::vector<std::uint8_t> visible_vertices;  // V booleans

  bool at(int y, int x) const { return mask[static_cast<std::size_t>(y) * width + x] != 0; }
};

namespace raster_detail {

inline double edge(double sx, double sy, double ex, double ey, double px, double py) {
  return (ex - sx) * (py - sy) - (ey - sy) * (px - sx);
}

inline bool edge_accepts(double e, double dx, double dy) {
  if (e > 0.0) return true;
  if (e != 0.0) return false;
  return dy < 0.0 || (dy == 0.0 && dx > 0.0);
}

}  // namespace raster_detail

inline RasterBuffers rasterize(const ProjectedMesh& pm, int height, int width) {
  if (height < 1 || width < 1) throw ShapeError("rasterize: image extents must be >= 1");
  if (pm.verts2d.rank() != 2 || pm.verts2d.shape[1] != 2)
    throw ShapeError("rasterize: verts2d must be [V,2]");
  if (pm.depths.numel() != pm.verts2d.shape[0])
    throw ShapeError("rasterize: depths must match verts2d");

  RasterBuffers out;
  out.height = height;
  out.width = width;
  out.depth = Array({height, width}, std::numeric_limits<double>::infinity());
  out.tri_id.assign(static_cast<std::size_t>(height) * width, -1);
  out.bary = Array({height, width, 3});

  using raster_detail::edge;
  using raster_detail::edge_accepts;

  const int ntri = static_cast<int>(pm.faces.size());
  for (int t = 0; t < ntri; ++t) {
    int ia = pm.faces[t][0], ib = pm.faces[t][1], ic = pm.faces[t][2];
    const double ax0 = pm.verts2d.at(ia, 0), ay0 = pm.verts2d.at(ia, 1);
    const double bx0 = pm.verts2d.at(ib, 0), by0 = pm.verts2d.at(ib, 1);
    const double cx0 = pm.verts2d.at(ic, 0), cy0 = pm.verts2d.at(ic, 1);
    double area2 = edge(ax0, ay0, bx0, by0, cx0, cy0);
    bool flipped = false;
    if (area2 == 0.0) continue;  // degenerate
    if (area2 < 0.0) {           // swap the last two vertices
      flipped = true;
      std::swap(ib, ic);
      area2 = -area2;
    }
    const double ax = pm.verts2d.at(ia, 0), ay = pm.verts2d.at(ia, 1);
    const double bx = pm.verts2d.at(ib, 0), by = pm.verts2d.at(ib, 1);
    const double cx = pm.verts2d.at(ic, 0), cy = pm.verts2d.at(ic, 1);
    const double za = pm.depths.data[ia], zb = pm.depths.data[ib], zc = pm.depths.data[ic];

    const double minx = std::min({ax, bx, cx}), maxx = std::max({ax, bx, cx});
    const double miny = std::min({ay, by, cy}), maxy = std::max({ay, by, cy});
    const int x0 = std::max(0, static_cast<int>(std::floor(minx - 0.5)) - 1);
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(maxx - 0.5)) + 1);
    const int y0 = std::max(0, static_cast<int>(std::floor(miny - 0.5)) - 1);
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(maxy - 0.5)) + 1);

    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double e0 = edge(bx, by, cx, cy, px, py);  // opposite A
        const double e1 = edge(cx, cy, ax, ay, px, py);  // opposite B
        const double e2 = edge(ax, ay, bx, by, px, py);  // opposite C
        if (!edge_accepts(e0, cx - bx, cy - by) || !edge_accepts(e1, ax - cx, ay - cy) ||
            !edge_accepts(e2, bx - ax, by - ay))
          continue;
        const double w0 = e0 / area2, w1 = e1 / area2, w2 = e2 / area2;
        const double z = w0 * za + w1 * zb + w2 * zc;
        if (z < out.depth.at(y, x) - 1e-12) {
          out.depth.at(y, x) = z;
          out.tri_id[static_cast<std::size_t>(y) * width + x] = t;
          out.bary.at(y, x, 0) = w0;
          out.bary.at(y, x, 1) = flipped ? w2 : w1;
          out.bary.at(y, x, 2) = flipped ? w1 : w2;
        }
      }
    }
  }
  return out;
}

inline OcclusionMask occlusion_mask(const RasterBuffers& buffers,
                                    const std::vector<std::array<int, 3>>& faces, int vertex_count) {
  OcclusionMask out;
  out.height = buffers.height;
  out.width = buffers.width;
  out.mask.assign(buffers.tri_id.size(), 0);
  out.visible_vertices.assign(static_cast<std::size_t>(vertex_count), 0);
  for (std::size_t p = 0; p < buffers.tri_id.size(); ++p) {
    const int t = buffers.tri_id[p];
    if (t < 0) continue;
    out.mask[p] = 1;
    for (int v : faces[static_cast<std::size_t>(t)])
      if (v >= 0 && v < vertex_count) out.visible_vertices[static_cast<std::size_t>(v)] = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

// Pixel -> (v0,v1,v2,w0,w1,w2) interpolation table consumed by the
// raster_blend graph op; background rows carry -1.
inline Array build_raster_table(const RasterBuffers& buffers,
                                const std::vector<std::array<int, 3>>& faces) {
  const int P = buffers.height * buffers.width;
  Array table({P, 6});
  for (int p = 0; p < P; ++p) {
    const int t = buffers.tri_id[static_cast<std::size_t>(p)];
    double* row = table.data.data() + static_cast<std::size_t>(p) * 6;
    if (t < 0) {
      row[0] = row[1] = row[2] = -1.0;
      continue;
    }
    const int y = p / buffers.width, x = p % buffers.width;
    for (int i = 0; i < 3; ++i) {
      row[i] = faces[static_cast<std::size_t>(t)][i];
      row[3 + i] = buffers.bary.at(y, x, i);
    }
  }
  return table;
}

// Covered pixels interpolate their triangle's vertex colors barycentrically;
// background pixels are zero.
inline Array render_colors(const RasterBuffers& buffers, const std::vector<std::array<int, 3>>& faces,
                           const Array& colors) {
  if (colors.rank() != 2) throw ShapeError("render_colors: colors must be [V,C]");
  const int C = colors.shape[1];
  Array img({buffers.height, buffers.width, C});
  for (int y = 0; y < buffers.height; ++y)
    for (int x = 0; x < buffers.width; ++x) {
      const int t = buffers.tri_at(y, x);
      if (t < 0) continue;
      const auto& f = faces[static_cast<std::size_t>(t)];
      for (int c = 0; c < C; ++c)
        img.at(y, x, c) = buffers.bary.at(y, x, 0) * colors.at(f[0], c) +
                          buffers.bary.at(y, x, 1) * colors.at(f[1], c) +
                          buffers.bary.at(y, x, 2) * colors.at(f[2], c);
    }
  return img;
}

// || (I_rend - I) .* M ||_2, the Euclidean norm of the masked residual.
inline double texture_loss(const Array& rendered, const Array& image, const Array& mask) {
  require_same_shape(rendered, image, "texture_loss");
  if (mask.rank() != 2 || mask.shape[0] != rendered.shape[0] || mask.shape[1] != rendered.shape[1])
    throw ShapeError("texture_loss: mask must be [H,W]");
  double acc = 0.0;
  const int C = rendered.shape[2];
  for (int y = 0; y < rendered.shape[0]; ++y)
    for (int x = 0; x < rendered.shape[1]; ++x) {
      const double m = mask.at(y, x);
      if (m == 0.0) continue;
      for (int c = 0; c < C; ++c) {
        const double d = (rendered.at(y, x, c) - image.at(y, x, c)) * m;
        acc += d * d;
      }
    }
  return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Graph builders
// ---------------------------------------------------------------------------

// Per-vertex feature gather: bilinear sample of the feature map at the
// projected vertex locations, concatenated with the broadcast global feature
// and the 3D vertex coordinates. Rows are vertices: [V, D+Cf+3].
inline int reverse_interpolate_nodes(ad::Graph& g, int verts2d, int feature_col, int feature_map,
                                     int verts3d) {
  const int V = g.node(verts2d).shape[0];
  const int sampled = g.bilinear_sample(feature_map, verts2d);
  const int broadcast = g.transpose(g.tile_cols(feature_col, V));
  return g.concat({broadcast, sampled, verts3d}, 1);
}

struct TextureHeadNodes {
  int colors;  // [V,3] in (0,1)
  AttentionBlockNodes attention;
};

// One self-attention block over vertex tokens, then a squashed perceptron.
inline TextureHeadNodes texture_head_nodes(ad::Graph& g, int vertex_features,
                                           const std::string& prefix, int d_self, int hidden) {
  const int tokens = g.transpose(vertex_features);
  const int rows = g.node(tokens).shape[0];
  TextureHeadNodes out;
  out.attention = self_attention_nodes(g, tokens, prefix + ".attn", d_self);
  out.colors = g.sigmoid(g.transpose(mlp_cols(g, out.attention.output, prefix + ".mlp", {rows, hidden, 3})));
  return out;
}

inline void texture_head_init(std::map<std::string, Array>& params, const std::string& prefix,
                              int token_rows, int d_self, int hidden, Rng& rng) {
  attention_init(params, prefix + ".attn", token_rows, d_self, rng);
  mlp_init(params, prefix + ".mlp", {token_rows, hidden, 3}, rng);
}

struct TextureLossNodes {
  int rendered;  // [H*W, 3]
  int loss;      // scalar
};

// colors: [V,3] node; table/image/mask are [H*W,6], [H*W,3], [H*W,3] leaves
// rebound per step (coverage is piecewise constant w.r.t. geometry).
inline TextureLossNodes texture_loss_nodes(ad::Graph& g, int colors, int table, int image,
                                           int mask3) {
  TextureLossNodes out;
  out.rendered = g.raster_blend(colors, table);
  out.loss = g.sqrt(g.sum(g.square(g.mul(g.sub(out.rendered, image), mask3))));
  return out;
}

// ---------------------------------------------------------------------------
// Value-level reverse interpolation
// ---------------------------------------------------------------------------

// depths ride along from the projected mesh for interface symmetry; sampling
// needs only the 2D locations.
inline Array reverse_interpolate(const Array& verts2d, const Array& depths, const Array& feature,
                                 const Array& feature_map, const Array& verts3d) {
  (void)depths;
  ad::Graph g;
  const int D = static_cast<int>(feature.numel());
  const int v2 = g.input("v2", verts2d.shape);
  const int f = g.input("f", {D, 1});
  const int fm = g.input("fm", feature_map.shape);
  const int v3 = g.input("v3", verts3d.shape);
  const int h = reverse_interpolate_nodes(g, v2, f, fm, v3);
  ad::Evaluator ev(g);
  ev.bind("v2", verts2d);
  Array fcol = feature;
  fcol.shape = {D, 1};
  ev.bind("f", fcol);
  ev.bind("fm", feature_map);
  ev.bind("v3", verts3d);
  ev.forward();
  return ev.value(h);
}

}  // namespace handmesh
