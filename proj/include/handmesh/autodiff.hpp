#pragma once

// Reverse-mode differentiation over dense double arrays. The operation set is
// closed and enumerated; graphs are built once and re-evaluated with fresh
// leaf bindings. Gradients accumulate by summation at fan-out; leaves are
// never mutated in place. All kernels are sequential so evaluation is bitwise
// deterministic for identical bindings and node ordering.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "handmesh/array.hpp"
#include "handmesh/errors.hpp"

namespace handmesh::ad {

enum class OpKind {
  kParam,
  kInput,
  kConst,
  kAdd,
  kSub,
  kMul,
  kScale,     // x * c
  kAddConst,  // x + c
  kSMul,      // scalar node * array node
  kMatMul,
  kTranspose,
  kReshape,
  kConcat,
  kSlice,
  kSum,
  kMean,
  kSquare,
  kSqrt,
  kExp,
  kLog,
  kTanh,
  kSigmoid,
  kSoftplus,
  kReciprocal,
  kAbs,
  kSoftmaxRows,
  kTileCols,
  kTileRows,
  kBilinearSample,
  kRodrigues,
  kIm2Col,
  kRasterBlend,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kParam: return "param";
    case OpKind::kInput: return "input";
    case OpKind::kConst: return "const";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddConst: return "add_const";
    case OpKind::kSMul: return "smul";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kReshape: return "reshape";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kReciprocal: return "reciprocal";
    case OpKind::kAbs: return "abs";
    case OpKind::kSoftmaxRows: return "softmax";
    case OpKind::kTileCols: return "tile_cols";
    case OpKind::kTileRows: return "tile_rows";
    case OpKind::kBilinearSample: return "bilinear_sample";
    case OpKind::kRodrigues: return "rodrigues";
    case OpKind::kIm2Col: return "im2col";
    case OpKind::kRasterBlend: return "raster_blend";
  }
  return "?";
}

struct Node {
  OpKind op;
  Shape shape;
  std::vector<int> inputs;
  std::string name;        // kParam / kInput
  Array value;             // kConst
  double scalar = 0.0;     // kScale / kAddConst
  int axis = 0;            // kConcat
  std::vector<int> begin;  // kSlice
  std::vector<int> end;
  int kernel_h = 0, kernel_w = 0, stride = 1, pad = 0;  // kIm2Col
};

class Graph {
 public:
  int param(const std::string& name, Shape shape) { return leaf(OpKind::kParam, name, std::move(shape)); }
  int input(const std::string& name, Shape shape) { return leaf(OpKind::kInput, name, std::move(shape)); }

  int constant(Array v) {
    Node n;
    n.op = OpKind::kConst;
    n.shape = v.shape;
    n.value = std::move(v);
    return push(std::move(n));
  }
  int constant(double v) { return constant(Array::scalar(v)); }

  int add(int a, int b) { return binary(OpKind::kAdd, a, b); }
  int sub(int a, int b) { return binary(OpKind::kSub, a, b); }
  int mul(int a, int b) { return binary(OpKind::kMul, a, b); }

  int scale(int a, double c) {
    Node n = unary(OpKind::kScale, a);
    n.scalar = c;
    return push(std::move(n));
  }
  int add_const(int a, double c) {
    Node n = unary(OpKind::kAddConst, a);
    n.scalar = c;
    return push(std::move(n));
  }
  int smul(int s, int a) {
    if (node(s).shape != Shape{1}) throw ShapeError("smul: scalar operand must have shape [1]");
    Node n;
    n.op = OpKind::kSMul;
    n.shape = node(a).shape;
    n.inputs = {s, a};
    return push(std::move(n));
  }

  int matmul(int a, int b) {
    const Shape& sa = node(a).shape;
    const Shape& sb = node(b).shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
      throw ShapeError("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
    Node n;
    n.op = OpKind::kMatMul;
    n.shape = {sa[0], sb[1]};
    n.inputs = {a, b};
    return push(std::move(n));
  }

  int transpose(int a) {
    const Shape& s = node(a).shape;
    if (s.size() != 2) throw ShapeError("transpose: expects rank-2 input");
    Node n;
    n.op = OpKind::kTranspose;
    n.shape = {s[1], s[0]};
    n.inputs = {a};
    return push(std::move(n));
  }

  int reshape(int a, Shape s) {
    if (shape_numel(s) != shape_numel(node(a).shape))
      throw ShapeError("reshape: element count mismatch " + shape_str(node(a).shape) + " -> " + shape_str(s));
    Node n;
    n.op = OpKind::kReshape;
    n.shape = std::move(s);
    n.inputs = {a};
    return push(std::move(n));
  }

  int concat(const std::vector<int>& xs, int axis) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    Shape s = node(xs[0]).shape;
    if (axis < 0 || axis >= static_cast<int>(s.size())) throw ShapeError("concat: bad axis");
    int total = 0;
    for (int x : xs) {
      const Shape& sx = node(x).shape;
      if (sx.size() != s.size()) throw ShapeError("concat: rank mismatch");
      for (std::size_t d = 0; d < s.size(); ++d)
        if (static_cast<int>(d) != axis && sx[d] != s[d]) throw ShapeError("concat: extent mismatch off-axis");
      total += sx[axis];
    }
    s[axis] = total;
    Node n;
    n.op = OpKind::kConcat;
    n.shape = std::move(s);
    n.inputs = xs;
    n.axis = axis;
    return push(std::move(n));
  }

  int slice(int a, std::vector<int> begin, std::vector<int> end) {
    const Shape& s = node(a).shape;
    if (begin.size() != s.size() || end.size() != s.size()) throw ShapeError("slice: rank mismatch");
    Shape out(s.size());
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (begin[d] < 0 || end[d] > s[d] || begin[d] >= end[d]) throw ShapeError("slice: bad range");
      out[d] = end[d] - begin[d];
    }
    Node n;
    n.op = OpKind::kSlice;
    n.shape = std::move(out);
    n.inputs = {a};
    n.begin = std::move(begin);
    n.end = std::move(end);
    return push(std::move(n));
  }

  // Row i of a rank-2 array as a [1,c] slice.
  int row(int a, int i) {
    const Shape& s = node(a).shape;
    if (s.size() != 2) throw ShapeError("row: expects rank-2 input");
    return slice(a, {i, 0}, {i + 1, s[1]});
  }

  int sum(int a) { return push(reduce(OpKind::kSum, a)); }
  int mean(int a) { return push(reduce(OpKind::kMean, a)); }

  int square(int a) { return push(unary(OpKind::kSquare, a)); }
  int sqrt(int a) { return push(unary(OpKind::kSqrt, a)); }
  int exp(int a) { return push(unary(OpKind::kExp, a)); }
  int log(int a) { return push(unary(OpKind::kLog, a)); }
  int tanh(int a) { return push(unary(OpKind::kTanh, a)); }
  int sigmoid(int a) { return push(unary(OpKind::kSigmoid, a)); }
  int softplus(int a) { return push(unary(OpKind::kSoftplus, a)); }
  int reciprocal(int a) { return push(unary(OpKind::kReciprocal, a)); }
  int abs(int a) { return push(unary(OpKind::kAbs, a)); }

  int softmax_rows(int a) {
    if (node(a).shape.size() != 2) throw ShapeError("softmax: expects rank-2 input");
    return push(unary(OpKind::kSoftmaxRows, a));
  }

  int tile_cols(int v, int ncols) {
    const Shape& s = node(v).shape;
    if (s.size() != 2 || s[1] != 1) throw ShapeError("tile_cols: expects [r,1] input");
    Node n;
    n.op = OpKind::kTileCols;
    n.shape = {s[0], ncols};
    n.inputs = {v};
    return push(std::move(n));
  }

  int tile_rows(int v, int nrows) {
    const Shape& s = node(v).shape;
    if (s.size() != 2 || s[0] != 1) throw ShapeError("tile_rows: expects [1,c] input");
    Node n;
    n.op = OpKind::kTileRows;
    n.shape = {nrows, s[1]};
    n.inputs = {v};
    return push(std::move(n));
  }

  // map: [H,W,C], points: [N,2] pixel coordinates with centers at (x+.5,y+.5).
  // Sampling is clamped at the image border.
  int bilinear_sample(int map, int points) {
    const Shape& sm = node(map).shape;
    const Shape& sp = node(points).shape;
    if (sm.size() != 3) throw ShapeError("bilinear_sample: map must be [H,W,C]");
    if (sp.size() != 2 || sp[1] != 2) throw ShapeError("bilinear_sample: points must be [N,2]");
    Node n;
    n.op = OpKind::kBilinearSample;
    n.shape = {sp[0], sm[2]};
    n.inputs = {map, points};
    return push(std::move(n));
  }

  int rodrigues(int r) {
    if (shape_numel(node(r).shape) != 3) throw ShapeError("rodrigues: expects a 3-vector");
    Node n;
    n.op = OpKind::kRodrigues;
    n.shape = {3, 3};
    n.inputs = {r};
    return push(std::move(n));
  }

  int im2col(int img, int kh, int kw, int stride, int pad) {
    const Shape& s = node(img).shape;
    if (s.size() != 3) throw ShapeError("im2col: image must be [H,W,C]");
    const int oh = (s[0] + 2 * pad - kh) / stride + 1;
    const int ow = (s[1] + 2 * pad - kw) / stride + 1;
    if (oh <= 0 || ow <= 0) throw ShapeError("im2col: kernel larger than padded image");
    Node n;
    n.op = OpKind::kIm2Col;
    n.shape = {oh * ow, kh * kw * s[2]};
    n.inputs = {img};
    n.kernel_h = kh;
    n.kernel_w = kw;
    n.stride = stride;
    n.pad = pad;
    return push(std::move(n));
  }

  // colors: [V,C]; table: [P,6] rows (v0,v1,v2,w0,w1,w2), v0 < 0 marking a
  // background pixel. Output [P,C]. Gradients flow into colors only; the
  // table is coverage geometry and is treated as piecewise constant.
  int raster_blend(int colors, int table) {
    const Shape& sc = node(colors).shape;
    const Shape& st = node(table).shape;
    if (sc.size() != 2) throw ShapeError("raster_blend: colors must be [V,C]");
    if (st.size() != 2 || st[1] != 6) throw ShapeError("raster_blend: table must be [P,6]");
    Node n;
    n.op = OpKind::kRasterBlend;
    n.shape = {st[0], sc[1]};
    n.inputs = {colors, table};
    return push(std::move(n));
  }

  void mark_output(const std::string& name, int id) { outputs_[name] = id; }
  const std::map<std::string, int>& outputs() const { return outputs_; }

  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  const std::map<std::string, int>& leaves() const { return leaves_; }
  int leaf_id(const std::string& name) const {
    auto it = leaves_.find(name);
    if (it == leaves_.end()) throw BindingError("unknown leaf '" + name + "'");
    return it->second;
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    for (const auto& [name, id] : leaves_)
      if (node(id).op == OpKind::kParam) out.push_back(name);
    return out;
  }

 private:
  int leaf(OpKind kind, const std::string& name, Shape shape) {
    if (leaves_.count(name)) throw BindingError("duplicate leaf name '" + name + "'");
    Node n;
    n.op = kind;
    n.shape = std::move(shape);
    n.name = name;
    const int id = push(std::move(n));
    leaves_[name] = id;
    return id;
  }

  Node unary(OpKind kind, int a) {
    Node n;
    n.op = kind;
    n.shape = node(a).shape;
    n.inputs = {a};
    return n;
  }

  Node reduce(OpKind kind, int a) {
    Node n;
    n.op = kind;
    n.shape = {1};
    n.inputs = {a};
    return n;
  }

  int binary(OpKind kind, int a, int b) {
    if (node(a).shape != node(b).shape)
      throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " + shape_str(node(a).shape) +
                       " vs " + shape_str(node(b).shape));
    Node n;
    n.op = kind;
    n.shape = node(a).shape;
    n.inputs = {a, b};
    return push(std::move(n));
  }

  int push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::map<std::string, int> leaves_;
  std::map<std::string, int> outputs_;
};

namespace detail {

inline void matmul_kernel(const Array& a, const Array& b, Array& out) {
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  std::fill(out.data.begin(), out.data.end(), 0.0);
  for (int i = 0; i < m; ++i) {
    const double* ai = a.data.data() + static_cast<std::size_t>(i) * k;
    double* oi = out.data.data() + static_cast<std::size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      const double* bk = b.data.data() + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) oi[j] += av * bk[j];
    }
  }
}

// out += a * b' computed as (m x k)(n x k)' without materializing b'.
inline void matmul_nt_acc(const Array& a, const Array& b, Array& out) {
  const int m = a.shape[0], k = a.shape[1], n = b.shape[0];
  for (int i = 0; i < m; ++i) {
    const double* ai = a.data.data() + static_cast<std::size_t>(i) * k;
    double* oi = out.data.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b.data.data() + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
      oi[j] += acc;
    }
  }
}

// out += a' * b computed as (k x m)'(k x n).
inline void matmul_tn_acc(const Array& a, const Array& b, Array& out) {
  const int k = a.shape[0], m = a.shape[1], n = b.shape[1];
  for (int kk = 0; kk < k; ++kk) {
    const double* ak = a.data.data() + static_cast<std::size_t>(kk) * m;
    const double* bk = b.data.data() + static_cast<std::size_t>(kk) * n;
    for (int i = 0; i < m; ++i) {
      const double av = ak[i];
      double* oi = out.data.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) oi[j] += av * bk[j];
    }
  }
}

struct Skew {
  double m[3][3];
};

inline Skew skew(double x, double y, double z) {
  return Skew{{{0, -z, y}, {z, 0, -x}, {-y, x, 0}}};
}

// Rodrigues with the analytic small-angle branch below ||r|| = 1e-8.
inline void rodrigues_forward(const double* r, double* R) {
  const double t2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
  const double t = std::sqrt(t2);
  double a, b;
  if (t < 1e-8) {
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    a = std::sin(t) / t;
    b = (1.0 - std::cos(t)) / t2;
  }
  const Skew K = skew(r[0], r[1], r[2]);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double k2 = r[i] * r[j] - (i == j ? t2 : 0.0);
      R[i * 3 + j] = (i == j ? 1.0 : 0.0) + a * K.m[i][j] + b * k2;
    }
}

inline void rodrigues_backward(const double* r, const double* G, double* gr) {
  const double t2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
  const double t = std::sqrt(t2);
  double a, b, da_over_t, db_over_t;
  if (t < 1e-8) {
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
    da_over_t = -1.0 / 3.0;   // limit of a'(t)/t
    db_over_t = -1.0 / 12.0;  // limit of b'(t)/t
  } else {
    a = std::sin(t) / t;
    b = (1.0 - std::cos(t)) / t2;
    const double da = (t * std::cos(t) - std::sin(t)) / t2;
    const double db = (t * std::sin(t) - 2.0 * (1.0 - std::cos(t))) / (t2 * t);
    da_over_t = da / t;
    db_over_t = db / t;
  }
  const Skew K = skew(r[0], r[1], r[2]);
  double gK = 0.0, gK2 = 0.0;  // <G, K> and <G, rr' - t2 I>
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      gK += G[i * 3 + j] * K.m[i][j];
      gK2 += G[i * 3 + j] * (r[i] * r[j] - (i == j ? t2 : 0.0));
    }
  for (int i = 0; i < 3; ++i) {
    // d/dr_i of (rr' - t2 I) is e_i r' + r e_i' - 2 r_i I.
    double term = da_over_t * r[i] * gK + db_over_t * r[i] * gK2;
    const Skew E = skew(i == 0, i == 1, i == 2);
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q) {
        double dk2 = (p == i ? r[q] : 0.0) + (q == i ? r[p] : 0.0) - (p == q ? 2.0 * r[i] : 0.0);
        term += G[p * 3 + q] * (a * E.m[p][q] + b * dk2);
      }
    gr[i] += term;
  }
}

}  // namespace detail

// Holds per-node value and gradient storage for one graph; rebindable and
// re-runnable without reallocation.
class Evaluator {
 public:
  explicit Evaluator(const Graph& g) : g_(&g) {
    const int n = g.size();
    vals_.resize(n);
    grads_.resize(n);
    bound_.assign(n, 0);
    for (int id = 0; id < n; ++id) {
      const Node& nd = g.node(id);
      vals_[id] = Array(nd.shape);
      if (nd.op == OpKind::kConst) {
        vals_[id] = nd.value;
        bound_[id] = 1;
      }
    }
  }

  const Graph& graph() const { return *g_; }

  void bind(const std::string& name, const Array& v) {
    const int id = g_->leaf_id(name);
    const Node& nd = g_->node(id);
    if (v.shape != nd.shape)
      throw ShapeError("binding '" + name + "': expected " + shape_str(nd.shape) + ", got " +
                       shape_str(v.shape));
    vals_[id] = v;
    bound_[id] = 1;
  }

  void bind_all(const std::map<std::string, Array>& bindings) {
    for (const auto& [name, v] : bindings) bind(name, v);
  }

  // Direct mutable access to a bound leaf, used by finite differencing.
  Array& leaf_value(const std::string& name) {
    const int id = g_->leaf_id(name);
    if (!bound_[id]) throw BindingError("leaf '" + name + "' is not bound");
    return vals_[id];
  }

  bool check_finite = false;

  void forward() {
    const int n = g_->size();
    for (int id = 0; id < n; ++id) {
      const Node& nd = g_->node(id);
      switch (nd.op) {
        case OpKind::kParam:
        case OpKind::kInput:
          if (!bound_[id]) throw BindingError("unbound leaf '" + nd.name + "'");
          break;
        case OpKind::kConst:
          break;
        default:
          eval_node(id, nd);
      }
      if (check_finite && !vals_[id].all_finite())
        throw NumericError("non-finite value at node " + std::to_string(id) + " (" + op_name(nd.op) +
                           (nd.name.empty() ? "" : " '" + nd.name + "'") + ")");
    }
  }

  const Array& value(int id) const { return vals_[id]; }

  void backward(int out_id) {
    const Node& out = g_->node(out_id);
    if (shape_numel(out.shape) != 1)
      throw ContractError("backward: output node must be scalar, got " + shape_str(out.shape));
    for (int id = 0; id < g_->size(); ++id) {
      grads_[id].shape = g_->node(id).shape;
      grads_[id].data.assign(vals_[id].data.size(), 0.0);
    }
    grads_[out_id].data[0] = 1.0;
    for (int id = out_id; id >= 0; --id) {
      const Node& nd = g_->node(id);
      if (nd.op == OpKind::kParam || nd.op == OpKind::kInput || nd.op == OpKind::kConst) continue;
      bool touched = false;
      for (double gv : grads_[id].data)
        if (gv != 0.0) {
          touched = true;
          break;
        }
      if (touched) backprop_node(id, nd);
    }
  }

  const Array& grad(int id) const { return grads_[id]; }
  Array param_grad(const std::string& name) const { return grads_[g_->leaf_id(name)]; }

 private:
  void eval_node(int id, const Node& nd) {
    Array& out = vals_[id];
    switch (nd.op) {
      case OpKind::kAdd: {
        const Array& a = vals_[nd.inputs[0]];
        const Array& b = vals_[nd.inputs[1]];
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
        break;
      }
      case OpKind::kSub: {
        const Array& a = vals_[nd.inputs[0]];
        const Array& b = vals_[nd.inputs[1]];
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] - b.data[i];
        break;
      }
      case OpKind::kMul: {
        const Array& a = vals_[nd.inputs[0]];
        const Array& b = vals_[nd.inputs[1]];
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
        break;
      }
      case OpKind::kScale: {
        const Array& a = vals_[nd.inputs[0]];
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] * nd.scalar;
        break;
      }
      case OpKind::kAddConst: {
        const Array& a = vals_[nd.inputs[0]];
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] + nd.scalar;
        break;
      }
      case OpKind::kSMul: {
        const double s = vals_[nd.inputs[0]].data[0];
        const Array& a = vals_[nd.inputs[1]];
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = s * a.data[i];
        break;
      }
      case OpKind::kMatMul:
        detail::matmul_kernel(vals_[nd.inputs[0]], vals_[nd.inputs[1]], out);
        break;
      case OpKind::kTranspose: {
        const Array& a = vals_[nd.inputs[0]];
        const int r = a.shape[0], c = a.shape[1];
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) out.data[static_cast<std::size_t>(j) * r + i] = a.at(i, j);
        break;
      }
      case OpKind::kReshape:
        out.data = vals_[nd.inputs[0]].data;
        break;
      case OpKind::kConcat: {
        concat_loop(nd, [&](double& dst, double src) { dst = src; }, out, true);
        break;
      }
      case OpKind::kSlice: {
        slice_loop(nd, [&](double& dst, double src) { dst = src; }, out, true);
        break;
      }
      case OpKind::kSum: {
        double s = 0.0;
        for (double v : vals_[nd.inputs[0]].data) s += v;
        out.data[0] = s;
        break;
      }
      case OpKind::kMean: {
        double s = 0.0;
        const Array& a = vals_[nd.inputs[0]];
        for (double v : a.data) s += v;
        out.data[0] = s / static_cast<double>(a.data.size());
        break;
      }
      case OpKind::kSquare: {
        const Array& a = vals_[nd.inputs[0]];
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] * a.data[i];
        break;
      }
      case OpKind::kSqrt: {
        const Array& a = vals_[nd.inputs[0]];
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::sqrt(a.data[i]);
        break;
      }
      case OpKind::kExp: {
        const Array& a = vals_[nd.inputs[0]];
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::exp(a.data[i]);
        break;
      }
      case OpKind::kLog: {
        const Array& a = vals_[nd.inputs[0]];
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::log(a.data[i]);
        break;
      }
      case OpKind::kTanh: {
        const Array& a = vals_[nd.inputs[0]];
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::tanh(a.data[i]);
        break;
      }
      case OpKind::kSigmoid: {
        const Array& a = vals_[nd.inputs[0]];
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = 1.0 / (1.0 + std::exp(-a.data[i]));
        break;
      }
      case OpKind::kSoftplus: {
        const Array& a = vals_[nd.inputs[0]];
        for (std::size_t i = 0; i < out.data.size(); ++i) {
          const double x = a.data[i];
          out.data[i] = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        }
        break;
      }
      case OpKind::kReciprocal: {
        const Array& a = vals_[nd.inputs[0]];
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = 1.0 / a.data[i];
        break;
      }
      case OpKind::kAbs: {
        const Array& a = vals_[nd.inputs[0]];
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::fabs(a.data[i]);
        break;
      }
      case OpKind::kSoftmaxRows: {
        const Array& a = vals_[nd.inputs[0]];
        const int r = a.shape[0], c = a.shape[1];
        for (int i = 0; i < r; ++i) {
          const double* ai = a.data.data() + static_cast<std::size_t>(i) * c;
          double* oi = out.data.data() + static_cast<std::size_t>(i) * c;
          double mx = ai[0];
          for (int j = 1; j < c; ++j) mx = std::max(mx, ai[j]);
          double s = 0.0;
          for (int j = 0; j < c; ++j) {
            oi[j] = std::exp(ai[j] - mx);
            s += oi[j];
          }
          const double inv = 1.0 / s;
          for (int j = 0; j < c; ++j) oi[j] *= inv;
        }
        break;
      }
      case OpKind::kTileCols: {
        const Array& v = vals_[nd.inputs[0]];
        const int r = nd.shape[0], c = nd.shape[1];
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) out.data[static_cast<std::size_t>(i) * c + j] = v.data[i];
        break;
      }
      case OpKind::kTileRows: {
        const Array& v = vals_[nd.inputs[0]];
        const int r = nd.shape[0], c = nd.shape[1];
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) out.data[static_cast<std::size_t>(i) * c + j] = v.data[j];
        break;
      }
      case OpKind::kBilinearSample: {
        const Array& m = vals_[nd.inputs[0]];
        const Array& p = vals_[nd.inputs[1]];
        const int H = m.shape[0], W = m.shape[1], C = m.shape[2], N = p.shape[0];
        for (int nI = 0; nI < N; ++nI) {
          double u = p.at(nI, 0) - 0.5;
          double v = p.at(nI, 1) - 0.5;
          u = std::min(std::max(u, 0.0), static_cast<double>(W - 1));
          v = std::min(std::max(v, 0.0), static_cast<double>(H - 1));
          const int x0 = std::min(static_cast<int>(u), W - 1);
          const int y0 = std::min(static_cast<int>(v), H - 1);
          const int x1 = std::min(x0 + 1, W - 1);
          const int y1 = std::min(y0 + 1, H - 1);
          const double fx = u - x0, fy = v - y0;
          for (int c = 0; c < C; ++c) {
            const double v00 = m.at(y0, x0, c), v01 = m.at(y0, x1, c);
            const double v10 = m.at(y1, x0, c), v11 = m.at(y1, x1, c);
            out.at(nI, c) = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11);
          }
        }
        break;
      }
      case OpKind::kRodrigues:
        detail::rodrigues_forward(vals_[nd.inputs[0]].data.data(), out.data.data());
        break;
      case OpKind::kIm2Col: {
        const Array& img = vals_[nd.inputs[0]];
        const int H = img.shape[0], W = img.shape[1], C = img.shape[2];
        const int oh = (H + 2 * nd.pad - nd.kernel_h) / nd.stride + 1;
        const int ow = (W + 2 * nd.pad - nd.kernel_w) / nd.stride + 1;
        std::size_t o = 0;
        for (int r = 0; r < oh; ++r)
          for (int cI = 0; cI < ow; ++cI)
            for (int ky = 0; ky < nd.kernel_h; ++ky)
              for (int kx = 0; kx < nd.kernel_w; ++kx) {
                const int y = r * nd.stride + ky - nd.pad;
                const int x = cI * nd.stride + kx - nd.pad;
                for (int c = 0; c < C; ++c)
                  out.data[o++] = (y >= 0 && y < H && x >= 0 && x < W) ? img.at(y, x, c) : 0.0;
              }
        break;
      }
      case OpKind::kRasterBlend: {
        const Array& col = vals_[nd.inputs[0]];
        const Array& tab = vals_[nd.inputs[1]];
        const int P = tab.shape[0], C = col.shape[1];
        for (int pI = 0; pI < P; ++pI) {
          const double* t = tab.data.data() + static_cast<std::size_t>(pI) * 6;
          double* o = out.data.data() + static_cast<std::size_t>(pI) * C;
          if (t[0] < 0.0) {
            for (int c = 0; c < C; ++c) o[c] = 0.0;
            continue;
          }
          const int v0 = static_cast<int>(t[0]), v1 = static_cast<int>(t[1]), v2 = static_cast<int>(t[2]);
          for (int c = 0; c < C; ++c)
            o[c] = t[3] * col.at(v0, c) + t[4] * col.at(v1, c) + t[5] * col.at(v2, c);
        }
        break;
      }
      default:
        throw ContractError("eval of non-computable node");
    }
  }

  void backprop_node(int id, const Node& nd) {
    const Array& g = grads_[id];
    switch (nd.op) {
      case OpKind::kAdd: {
        acc(nd.inputs[0], g);
        acc(nd.inputs[1], g);
        break;
      }
      case OpKind::kSub: {
        acc(nd.inputs[0], g);
        Array& gb = grads_[nd.inputs[1]];
        for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
        break;
      }
      case OpKind::kMul: {
        const Array& a = vals_[nd.inputs[0]];
        const Array& b = vals_[nd.inputs[1]];
        Array& ga = grads_[nd.inputs[0]];
        Array& gb = grads_[nd.inputs[1]];
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          ga.data[i] += g.data[i] * b.data[i];
          gb.data[i] += g.data[i] * a.data[i];
        }
        break;
      }
      case OpKind::kScale: {
        Array& ga = grads_[nd.inputs[0]];
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * nd.scalar;
        break;
      }
      case OpKind::kAddConst:
        acc(nd.inputs[0], g);
        break;
      case OpKind::kSMul: {
        const double s = vals_[nd.inputs[0]].data[0];
        const Array& a = vals_[nd.inputs[1]];
        Array& gs = grads_[nd.inputs[0]];
        Array& ga = grads_[nd.inputs[1]];
        double accum = 0.0;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          accum += g.data[i] * a.data[i];
          ga.data[i] += s * g.data[i];
        }
        gs.data[0] += accum;
        break;
      }
      case OpKind::kMatMul: {
        detail::matmul_nt_acc(g, vals_[nd.inputs[1]], grads_[nd.inputs[0]]);
        detail::matmul_tn_acc(vals_[nd.inputs[0]], g, grads_[nd.inputs[1]]);
        break;
      }
      case OpKind::kTranspose: {
        Array& ga = grads_[nd.inputs[0]];
        const int r = nd.shape[0], c = nd.shape[1];  // shape of the transposed output
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) ga.data[static_cast<std::size_t>(j) * r + i] += g.at(i, j);
        break;
      }
      case OpKind::kReshape: {
        Array& ga = grads_[nd.inputs[0]];
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        break;
      }
      case OpKind::kConcat:
        concat_loop(nd, [&](double& dst, double src) { dst += src; }, grads_[id], false);
        break;
      case OpKind::kSlice:
        slice_loop(nd, [&](double& dst, double src) { dst += src; }, grads_[id], false);
        break;
      case OpKind::kSum: {
        Array& ga = grads_[nd.inputs[0]];
        const double gv = g.data[0];
        for (double& x : ga.data) x += gv;
        break;
      }
      case OpKind::kMean: {
        Array& ga = grads_[nd.inputs[0]];
        const double gv = g.data[0] / static_cast<double>(ga.data.size());
        for (double& x : ga.data) x += gv;
        break;
      }
      case OpKind::kSquare: {
        const Array& a = vals_[nd.inputs[0]];
        Array& ga = grads_[nd.inputs[0]];
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += 2.0 * a.data[i] * g.data[i];
        break;
      }
      case OpKind::kSqrt: {
        // Subgradient 0 at the origin keeps norms like sqrt(sum(x^2)) stable
        // when the residual is exactly zero.
        const Array& y = vals_[id];
        Array& ga = grads_[nd.inputs[0]];
        for (std::size_t i = 0; i < g.data.size(); ++i)
          if (y.data[i] > 0.0) ga.data[i] += 0.5 / y.data[i] * g.data[i];
        break;
      }
      case OpKind::kExp: {
        const Array& y = vals_[id];
        Array& ga = grads_[nd.inputs[0]];
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += y.data[i] * g.data[i];
        break;
      }
      case OpKind::kLog: {
        const Array& a = vals_[nd.inputs[0]];
        Array& ga = grads_[nd.inputs[0]];
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] / a.data[i];
        break;
      }
      case OpKind::kTanh: {
        const Array& y = vals_[id];
        Array& ga = grads_[nd.inputs[0]];
        for (std::size_t i = 0; i < g.data.size(); ++i)
          ga.data[i] += (1.0 - y.data[i] * y.data[i]) * g.data[i];
        break;
      }
      case OpKind::kSigmoid: {
        const Array& y = vals_[id];
        Array& ga = grads_[nd.inputs[0]];
        for (std::size_t i = 0; i < g.data.size(); ++i)
          ga.data[i] += y.data[i] * (1.0 - y.data[i]) * g.data[i];
        break;
      }
      case OpKind::kSoftplus: {
        const Array& a = vals_[nd.inputs[0]];
        Array& ga = grads_[nd.inputs[0]];
        for (std::size_t i = 0; i < g.data.size(); ++i)
          ga.data[i] += g.data[i] / (1.0 + std::exp(-a.data[i]));
        break;
      }
      case OpKind::kReciprocal: {
        const Array& y = vals_[id];
        Array& ga = grads_[nd.inputs[0]];
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] -= y.data[i] * y.data[i] * g.data[i];
        break;
      }
      case OpKind::kAbs: {
        const Array& a = vals_[nd.inputs[0]];
        Array& ga = grads_[nd.inputs[0]];
        for (std::size_t i = 0; i < g.data.size(); ++i)
          ga.data[i] += (a.data[i] >= 0.0 ? 1.0 : -1.0) * g.data[i];
        break;
      }
      case OpKind::kSoftmaxRows: {
        const Array& y = vals_[id];
        Array& ga = grads_[nd.inputs[0]];
        const int r = y.shape[0], c = y.shape[1];
        for (int i = 0; i < r; ++i) {
          const double* yi = y.data.data() + static_cast<std::size_t>(i) * c;
          const double* gi = g.data.data() + static_cast<std::size_t>(i) * c;
          double dot = 0.0;
          for (int j = 0; j < c; ++j) dot += yi[j] * gi[j];
          double* gai = ga.data.data() + static_cast<std::size_t>(i) * c;
          for (int j = 0; j < c; ++j) gai[j] += yi[j] * (gi[j] - dot);
        }
        break;
      }
      case OpKind::kTileCols: {
        Array& ga = grads_[nd.inputs[0]];
        const int r = nd.shape[0], c = nd.shape[1];
        for (int i = 0; i < r; ++i) {
          double s = 0.0;
          for (int j = 0; j < c; ++j) s += g.data[static_cast<std::size_t>(i) * c + j];
          ga.data[i] += s;
        }
        break;
      }
      case OpKind::kTileRows: {
        Array& ga = grads_[nd.inputs[0]];
        const int r = nd.shape[0], c = nd.shape[1];
        for (int j = 0; j < c; ++j) {
          double s = 0.0;
          for (int i = 0; i < r; ++i) s += g.data[static_cast<std::size_t>(i) * c + j];
          ga.data[j] += s;
        }
        break;
      }
      case OpKind::kBilinearSample: {
        const Array& m = vals_[nd.inputs[0]];
        const Array& p = vals_[nd.inputs[1]];
        Array& gm = grads_[nd.inputs[0]];
        Array& gp = grads_[nd.inputs[1]];
        const int H = m.shape[0], W = m.shape[1], C = m.shape[2], N = p.shape[0];
        for (int nI = 0; nI < N; ++nI) {
          double u = p.at(nI, 0) - 0.5;
          double v = p.at(nI, 1) - 0.5;
          const bool cu = u <= 0.0 || u >= static_cast<double>(W - 1);
          const bool cv = v <= 0.0 || v >= static_cast<double>(H - 1);
          u = std::min(std::max(u, 0.0), static_cast<double>(W - 1));
          v = std::min(std::max(v, 0.0), static_cast<double>(H - 1));
          const int x0 = std::min(static_cast<int>(u), W - 1);
          const int y0 = std::min(static_cast<int>(v), H - 1);
          const int x1 = std::min(x0 + 1, W - 1);
          const int y1 = std::min(y0 + 1, H - 1);
          const double fx = u - x0, fy = v - y0;
          double du = 0.0, dv = 0.0;
          for (int c = 0; c < C; ++c) {
            const double gc = g.at(nI, c);
            const double v00 = m.at(y0, x0, c), v01 = m.at(y0, x1, c);
            const double v10 = m.at(y1, x0, c), v11 = m.at(y1, x1, c);
            gm.at(y0, x0, c) += (1.0 - fy) * (1.0 - fx) * gc;
            gm.at(y0, x1, c) += (1.0 - fy) * fx * gc;
            gm.at(y1, x0, c) += fy * (1.0 - fx) * gc;
            gm.at(y1, x1, c) += fy * fx * gc;
            du += gc * ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10));
            dv += gc * ((1.0 - fx) * (v10 - v00) + fx * (v11 - v01));
          }
          if (!cu) gp.at(nI, 0) += du;
          if (!cv) gp.at(nI, 1) += dv;
        }
        break;
      }
      case OpKind::kRodrigues:
        detail::rodrigues_backward(vals_[nd.inputs[0]].data.data(), g.data.data(),
                                   grads_[nd.inputs[0]].data.data());
        break;
      case OpKind::kIm2Col: {
        const Array& img = vals_[nd.inputs[0]];
        Array& gi = grads_[nd.inputs[0]];
        const int H = img.shape[0], W = img.shape[1], C = img.shape[2];
        const int oh = (H + 2 * nd.pad - nd.kernel_h) / nd.stride + 1;
        const int ow = (W + 2 * nd.pad - nd.kernel_w) / nd.stride + 1;
        std::size_t o = 0;
        for (int r = 0; r < oh; ++r)
          for (int cI = 0; cI < ow; ++cI)
            for (int ky = 0; ky < nd.kernel_h; ++ky)
              for (int kx = 0; kx < nd.kernel_w; ++kx) {
                const int y = r * nd.stride + ky - nd.pad;
                const int x = cI * nd.stride + kx - nd.pad;
                for (int c = 0; c < C; ++c, ++o)
                  if (y >= 0 && y < H && x >= 0 && x < W) gi.at(y, x, c) += g.data[o];
              }
        break;
      }
      case OpKind::kRasterBlend: {
        const Array& col = vals_[nd.inputs[0]];
        const Array& tab = vals_[nd.inputs[1]];
        Array& gc = grads_[nd.inputs[0]];
        const int P = tab.shape[0], C = col.shape[1];
        for (int pI = 0; pI < P; ++pI) {
          const double* t = tab.data.data() + static_cast<std::size_t>(pI) * 6;
          if (t[0] < 0.0) continue;
          const int v0 = static_cast<int>(t[0]), v1 = static_cast<int>(t[1]), v2 = static_cast<int>(t[2]);
          const double* gp = g.data.data() + static_cast<std::size_t>(pI) * C;
          for (int c = 0; c < C; ++c) {
            gc.at(v0, c) += t[3] * gp[c];
            gc.at(v1, c) += t[4] * gp[c];
            gc.at(v2, c) += t[5] * gp[c];
          }
        }
        break;
      }
      default:
        break;
    }
  }

  void acc(int id, const Array& g) {
    Array& dst = grads_[id];
    for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
  }

  // Shared index walk for concat forward (scatter inputs into out) and
  // backward (gather out-grad into input grads).
  template <typename F>
  void concat_loop(const Node& nd, F&& combine, Array& outer, bool forward_dir) {
    const int axis = nd.axis;
    const Shape& os = nd.shape;
    std::int64_t outer_n = 1, inner_n = 1;
    for (int d = 0; d < axis; ++d) outer_n *= os[d];
    for (std::size_t d = axis + 1; d < os.size(); ++d) inner_n *= os[d];
    std::int64_t offset = 0;
    for (int in : nd.inputs) {
      const Shape& is = g_->node(in).shape;
      const std::int64_t len = is[axis] * inner_n;
      const std::int64_t ostride = os[axis] * inner_n;
      Array& side = forward_dir ? vals_[in] : grads_[in];
      for (std::int64_t o = 0; o < outer_n; ++o)
        for (std::int64_t i = 0; i < len; ++i) {
          double& outv = outer.data[static_cast<std::size_t>(o * ostride + offset + i)];
          double& inv = side.data[static_cast<std::size_t>(o * len + i)];
          if (forward_dir)
            combine(outv, inv);
          else
            combine(inv, outv);
        }
      offset += len;
    }
  }

  template <typename F>
  void slice_loop(const Node& nd, F&& combine, Array& outer, bool forward_dir) {
    const Shape& is = g_->node(nd.inputs[0]).shape;
    const Shape& os = nd.shape;
    std::vector<std::int64_t> istride(is.size(), 1);
    for (int d = static_cast<int>(is.size()) - 2; d >= 0; --d) istride[d] = istride[d + 1] * is[d + 1];
    Array& side = forward_dir ? vals_[nd.inputs[0]] : grads_[nd.inputs[0]];
    std::vector<int> idx(os.size(), 0);
    const std::int64_t n = shape_numel(os);
    for (std::int64_t flat = 0; flat < n; ++flat) {
      std::int64_t src = 0;
      for (std::size_t d = 0; d < os.size(); ++d) src += (nd.begin[d] + idx[d]) * istride[d];
      double& outv = outer.data[static_cast<std::size_t>(flat)];
      double& inv = side.data[static_cast<std::size_t>(src)];
      if (forward_dir)
        combine(outv, inv);
      else
        combine(inv, outv);
      for (int d = static_cast<int>(os.size()) - 1; d >= 0; --d) {
        if (++idx[d] < os[d]) break;
        idx[d] = 0;
      }
    }
  }

  const Graph* g_;
  std::vector<Array> vals_;
  std::vector<Array> grads_;
  std::vector<char> bound_;
};

// Evaluates the graph and returns the value of every marked output.
inline std::map<std::string, Array> forward_eval(const Graph& g,
                                                 const std::map<std::string, Array>& bindings) {
  Evaluator ev(g);
  ev.bind_all(bindings);
  ev.forward();
  std::map<std::string, Array> out;
  for (const auto& [name, id] : g.outputs()) out[name] = ev.value(id);
  return out;
}

// Gradient of a scalar node with respect to every parameter leaf. Unused
// parameters report zero gradients of their own shape.
inline std::map<std::string, Array> reverse_grad(const Graph& g, int scalar_output,
                                                 const std::map<std::string, Array>& bindings) {
  Evaluator ev(g);
  ev.bind_all(bindings);
  ev.forward();
  ev.backward(scalar_output);
  std::map<std::string, Array> out;
  for (const std::string& name : g.param_names()) out[name] = ev.param_grad(name);
  return out;
}

// Central-difference audit of reverse-mode gradients over every entry of
// every parameter leaf. Returns the max of
// |analytic - numeric| / max(1, |analytic|, |numeric|).
inline double grad_check(const Graph& g, int scalar_output, const std::map<std::string, Array>& bindings,
                         double eps) {
  if (!(eps > 0.0 && eps <= 1e-3)) throw ContractError("grad_check: eps must lie in (0, 1e-3]");
  Evaluator ev(g);
  ev.check_finite = true;
  ev.bind_all(bindings);
  ev.forward();
  ev.backward(scalar_output);
  std::map<std::string, Array> analytic;
  for (const std::string& name : g.param_names()) analytic[name] = ev.param_grad(name);

  double worst = 0.0;
  for (const std::string& name : g.param_names()) {
    Array& leafv = ev.leaf_value(name);
    const Array& an = analytic[name];
    for (std::size_t i = 0; i < leafv.data.size(); ++i) {
      const double saved = leafv.data[i];
      leafv.data[i] = saved + eps;
      ev.forward();
      const double fp = ev.value(scalar_output).data[0];
      leafv.data[i] = saved - eps;
      ev.forward();
      const double fm = ev.value(scalar_output).data[0];
      leafv.data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = an.data[i];
      const double rel = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace handmesh::ad
