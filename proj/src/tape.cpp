#include "artic/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "artic/kernels.hpp"

namespace artic::diff {

namespace {

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
  }
}

// rows x cols view of an arbitrary tensor, last axis = cols
std::pair<int, int> rows_cols(const Tensor& t) {
  if (t.shape.empty()) throw std::invalid_argument("empty tensor");
  int cols = t.shape.back();
  int rows = static_cast<int>(t.size() / cols);
  return {rows, cols};
}

}  // namespace

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1, this};
}

void Tape::check_owned(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument("variable does not belong to this tape");
  }
}

Tape::Node& Tape::node(Var v) {
  check_owned(v);
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  check_owned(v);
  return nodes_[v.id];
}

Var Tape::leaf(Tensor t, std::string name) {
  Node n;
  n.op = Op::kLeaf;
  n.tracked = t.requires_grad;
  n.name = std::move(name);
  n.value = std::move(t);
  return push(std::move(n));
}

Var Tape::constant(Tensor t) {
  Node n;
  n.op = Op::kConst;
  n.tracked = false;
  t.requires_grad = false;
  n.value = std::move(t);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const std::vector<double>& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.tracked) throw std::invalid_argument("grad requested for an untracked variable");
  return n.grad;
}

bool Tape::tracked(Var v) const { return node(v).tracked; }

Var Tape::custom(const std::vector<Var>& parents, Tensor value, std::unique_ptr<CustomOp> op) {
  Node n;
  n.op = Op::kCustom;
  n.custom_op = std::move(op);
  for (Var p : parents) {
    check_owned(p);
    n.parents.push_back(p.id);
    n.tracked = n.tracked || nodes_[p.id].tracked;
  }
  n.value = std::move(value);
  return push(std::move(n));
}

void Tape::visit_nodes(
    const std::function<void(const std::string& op, const Tensor& value)>& fn) const {
  static const char* names[] = {"leaf",      "const",      "add",        "sub",       "mul",
                                "scale",     "add_rowvec", "matmul",     "transpose", "slice_rows",
                                "slice_cols", "concat_cols", "softmax",  "log_softmax",
                                "layer_norm", "gelu",      "exp",        "abs",       "sum",
                                "custom"};
  for (const Node& n : nodes_) fn(names[static_cast<int>(n.op)], n.value);
}

std::map<std::string, Tensor> Tape::backward(Var loss) {
  check_owned(loss);
  if (nodes_[loss.id].value.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_str(nodes_[loss.id].value.shape));
  }
  // zero every tracked grad buffer, then seed the loss
  for (Node& n : nodes_) {
    if (n.tracked) n.grad.assign(n.value.data.size(), 0.0);
  }
  if (!nodes_[loss.id].tracked) {
    return {};  // loss does not depend on any tracked leaf
  }
  nodes_[loss.id].grad[0] = 1.0;

  for (int id = loss.id; id >= 0; --id) {
    if (nodes_[id].tracked && nodes_[id].op != Op::kLeaf) backward_node(id);
  }

  std::map<std::string, Tensor> out;
  for (const Node& n : nodes_) {
    if (n.op == Op::kLeaf && n.tracked && !n.name.empty()) {
      Tensor g;
      g.shape = n.value.shape;
      g.data = n.grad;
      out.emplace(n.name, std::move(g));
    }
  }
  return out;
}

void Tape::backward_node(int id) {
  Node& n = nodes_[id];
  const std::vector<double>& g = n.grad;
  auto parent = [&](int i) -> Node& { return nodes_[n.parents[i]]; };
  auto parent_tracked = [&](int i) { return parent(i).tracked; };

  switch (n.op) {
    case Op::kLeaf:
    case Op::kConst:
      break;
    case Op::kAdd: {
      for (int p = 0; p < 2; ++p) {
        if (!parent_tracked(p)) continue;
        std::vector<double>& pg = parent(p).grad;
        for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      }
      break;
    }
    case Op::kSub: {
      if (parent_tracked(0)) {
        std::vector<double>& pg = parent(0).grad;
        for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      }
      if (parent_tracked(1)) {
        std::vector<double>& pg = parent(1).grad;
        for (size_t i = 0; i < g.size(); ++i) pg[i] -= g[i];
      }
      break;
    }
    case Op::kMul: {
      const std::vector<double>& a = parent(0).value.data;
      const std::vector<double>& b = parent(1).value.data;
      if (parent_tracked(0)) {
        std::vector<double>& pg = parent(0).grad;
        for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * b[i];
      }
      if (parent_tracked(1)) {
        std::vector<double>& pg = parent(1).grad;
        for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * a[i];
      }
      break;
    }
    case Op::kScale: {
      if (parent_tracked(0)) {
        std::vector<double>& pg = parent(0).grad;
        for (size_t i = 0; i < g.size(); ++i) pg[i] += n.aux_scalar * g[i];
      }
      break;
    }
    case Op::kAddRowVec: {
      auto [rows, cols] = rows_cols(n.value);
      if (parent_tracked(0)) {
        std::vector<double>& pg = parent(0).grad;
        for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      }
      if (parent_tracked(1)) {
        std::vector<double>& pg = parent(1).grad;
        for (int i = 0; i < rows; ++i) {
          for (int j = 0; j < cols; ++j) pg[j] += g[static_cast<size_t>(i) * cols + j];
        }
      }
      break;
    }
    case Op::kMatmul: {
      const Tensor& a = parent(0).value;
      const Tensor& b = parent(1).value;
      int m = a.shape[0], k = a.shape[1], nn = b.shape[1];
      if (parent_tracked(0)) {
        kernels::matmul_grad_a(g.data(), b.data.data(), parent(0).grad.data(), m, k, nn);
      }
      if (parent_tracked(1)) {
        kernels::matmul_grad_b(a.data.data(), g.data(), parent(1).grad.data(), m, k, nn);
      }
      break;
    }
    case Op::kTranspose: {
      if (parent_tracked(0)) {
        int rows = n.value.shape[0], cols = n.value.shape[1];  // output shape
        std::vector<double>& pg = parent(0).grad;
        for (int i = 0; i < rows; ++i) {
          for (int j = 0; j < cols; ++j) {
            pg[static_cast<size_t>(j) * rows + i] += g[static_cast<size_t>(i) * cols + j];
          }
        }
      }
      break;
    }
    case Op::kSliceRows: {
      if (parent_tracked(0)) {
        int begin = n.aux_ints[0];
        int cols = n.value.shape[1];
        std::vector<double>& pg = parent(0).grad;
        for (size_t i = 0; i < g.size(); ++i) {
          pg[static_cast<size_t>(begin) * cols + i] += g[i];
        }
      }
      break;
    }
    case Op::kSliceCols: {
      if (parent_tracked(0)) {
        int begin = n.aux_ints[0];
        auto [rows, cols] = rows_cols(n.value);
        int pcols = parent(0).value.shape.back();
        std::vector<double>& pg = parent(0).grad;
        for (int i = 0; i < rows; ++i) {
          for (int j = 0; j < cols; ++j) {
            pg[static_cast<size_t>(i) * pcols + begin + j] += g[static_cast<size_t>(i) * cols + j];
          }
        }
      }
      break;
    }
    case Op::kConcatCols: {
      auto [rows, cols] = rows_cols(n.value);
      int offset = 0;
      for (size_t p = 0; p < n.parents.size(); ++p) {
        int w = parent(static_cast<int>(p)).value.shape.back();
        if (parent_tracked(static_cast<int>(p))) {
          std::vector<double>& pg = parent(static_cast<int>(p)).grad;
          for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < w; ++j) {
              pg[static_cast<size_t>(i) * w + j] += g[static_cast<size_t>(i) * cols + offset + j];
            }
          }
        }
        offset += w;
      }
      break;
    }
    case Op::kSoftmax: {
      if (parent_tracked(0)) {
        auto [rows, cols] = rows_cols(n.value);
        const std::vector<double>& y = n.value.data;
        std::vector<double>& pg = parent(0).grad;
        for (int i = 0; i < rows; ++i) {
          size_t off = static_cast<size_t>(i) * cols;
          double s = 0.0;
          for (int j = 0; j < cols; ++j) s += g[off + j] * y[off + j];
          for (int j = 0; j < cols; ++j) pg[off + j] += y[off + j] * (g[off + j] - s);
        }
      }
      break;
    }
    case Op::kLogSoftmax: {
      if (parent_tracked(0)) {
        auto [rows, cols] = rows_cols(n.value);
        const std::vector<double>& y = n.value.data;
        std::vector<double>& pg = parent(0).grad;
        for (int i = 0; i < rows; ++i) {
          size_t off = static_cast<size_t>(i) * cols;
          double s = 0.0;
          for (int j = 0; j < cols; ++j) s += g[off + j];
          for (int j = 0; j < cols; ++j) pg[off + j] += g[off + j] - std::exp(y[off + j]) * s;
        }
      }
      break;
    }
    case Op::kLayerNorm: {
      auto [rows, cols] = rows_cols(n.value);
      const double* xhat = n.aux_data.data();                     // rows*cols
      const double* rstd = n.aux_data.data() + n.value.size();    // rows
      const std::vector<double>& gain = parent(1).value.data;
      for (int i = 0; i < rows; ++i) {
        size_t off = static_cast<size_t>(i) * cols;
        if (parent_tracked(0)) {
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < cols; ++j) {
            double dxh = g[off + j] * gain[j];
            m1 += dxh;
            m2 += dxh * xhat[off + j];
          }
          m1 /= cols;
          m2 /= cols;
          std::vector<double>& pg = parent(0).grad;
          for (int j = 0; j < cols; ++j) {
            double dxh = g[off + j] * gain[j];
            pg[off + j] += rstd[i] * (dxh - m1 - xhat[off + j] * m2);
          }
        }
        if (parent_tracked(1)) {
          std::vector<double>& pg = parent(1).grad;
          for (int j = 0; j < cols; ++j) pg[j] += g[off + j] * xhat[off + j];
        }
        if (parent_tracked(2)) {
          std::vector<double>& pg = parent(2).grad;
          for (int j = 0; j < cols; ++j) pg[j] += g[off + j];
        }
      }
      break;
    }
    case Op::kGelu: {
      if (parent_tracked(0)) {
        const std::vector<double>& x = parent(0).value.data;
        std::vector<double>& pg = parent(0).grad;
        const double s = std::sqrt(2.0 / M_PI);
        for (size_t i = 0; i < g.size(); ++i) {
          double xi = x[i];
          double u = s * (xi + 0.044715 * xi * xi * xi);
          double th = std::tanh(u);
          double sech2 = 1.0 - th * th;
          double du = s * (1.0 + 3.0 * 0.044715 * xi * xi);
          pg[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * xi * sech2 * du);
        }
      }
      break;
    }
    case Op::kExp: {
      if (parent_tracked(0)) {
        const std::vector<double>& y = n.value.data;
        std::vector<double>& pg = parent(0).grad;
        for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * y[i];
      }
      break;
    }
    case Op::kAbs: {
      if (parent_tracked(0)) {
        const std::vector<double>& x = parent(0).value.data;
        std::vector<double>& pg = parent(0).grad;
        for (size_t i = 0; i < g.size(); ++i) {
          double sgn = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
          pg[i] += g[i] * sgn;
        }
      }
      break;
    }
    case Op::kSum: {
      if (parent_tracked(0)) {
        std::vector<double>& pg = parent(0).grad;
        for (size_t i = 0; i < pg.size(); ++i) pg[i] += g[0];
      }
      break;
    }
    case Op::kCustom: {
      std::vector<const Tensor*> pv;
      std::vector<std::vector<double>*> pgs;
      for (size_t p = 0; p < n.parents.size(); ++p) {
        pv.push_back(&parent(static_cast<int>(p)).value);
        pgs.push_back(parent_tracked(static_cast<int>(p)) ? &parent(static_cast<int>(p)).grad
                                                          : nullptr);
      }
      n.custom_op->backward(n.value, g, pv, pgs);
      break;
    }
  }
}

// --- operations ----------------------------------------------------------

#define ARTIC_BINARY_PRELUDE(t, a, b)  \
  const Tensor& av = (t).value(a);     \
  const Tensor& bv = (t).value(b);

Var add(Tape& t, Var a, Var b) {
  ARTIC_BINARY_PRELUDE(t, a, b)
  check_same_shape(av, bv, "add");
  Tape::Node n;
  n.op = Tape::Op::kAdd;
  n.parents = {a.id, b.id};
  n.tracked = t.tracked(a) || t.tracked(b);
  n.value.shape = av.shape;
  n.value.data.resize(av.data.size());
  for (size_t i = 0; i < av.data.size(); ++i) n.value.data[i] = av.data[i] + bv.data[i];
  return t.push(std::move(n));
}

Var sub(Tape& t, Var a, Var b) {
  ARTIC_BINARY_PRELUDE(t, a, b)
  check_same_shape(av, bv, "sub");
  Tape::Node n;
  n.op = Tape::Op::kSub;
  n.parents = {a.id, b.id};
  n.tracked = t.tracked(a) || t.tracked(b);
  n.value.shape = av.shape;
  n.value.data.resize(av.data.size());
  for (size_t i = 0; i < av.data.size(); ++i) n.value.data[i] = av.data[i] - bv.data[i];
  return t.push(std::move(n));
}

Var mul(Tape& t, Var a, Var b) {
  ARTIC_BINARY_PRELUDE(t, a, b)
  check_same_shape(av, bv, "mul");
  Tape::Node n;
  n.op = Tape::Op::kMul;
  n.parents = {a.id, b.id};
  n.tracked = t.tracked(a) || t.tracked(b);
  n.value.shape = av.shape;
  n.value.data.resize(av.data.size());
  for (size_t i = 0; i < av.data.size(); ++i) n.value.data[i] = av.data[i] * bv.data[i];
  return t.push(std::move(n));
}

Var scale(Tape& t, Var x, double c) {
  const Tensor& xv = t.value(x);
  Tape::Node n;
  n.op = Tape::Op::kScale;
  n.parents = {x.id};
  n.tracked = t.tracked(x);
  n.aux_scalar = c;
  n.value.shape = xv.shape;
  n.value.data.resize(xv.data.size());
  for (size_t i = 0; i < xv.data.size(); ++i) n.value.data[i] = c * xv.data[i];
  return t.push(std::move(n));
}

Var add_rowvec(Tape& t, Var m, Var v) {
  const Tensor& mv = t.value(m);
  const Tensor& vv = t.value(v);
  auto [rows, cols] = rows_cols(mv);
  if (static_cast<int64_t>(cols) != vv.size()) {
    throw std::invalid_argument("add_rowvec: matrix has " + std::to_string(cols) +
                                " columns but vector has " + std::to_string(vv.size()) +
                                " entries");
  }
  Tape::Node n;
  n.op = Tape::Op::kAddRowVec;
  n.parents = {m.id, v.id};
  n.tracked = t.tracked(m) || t.tracked(v);
  n.value.shape = mv.shape;
  n.value.data.resize(mv.data.size());
  for (int i = 0; i < rows; ++i) {
    size_t off = static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) n.value.data[off + j] = mv.data[off + j] + vv.data[j];
  }
  return t.push(std::move(n));
}

Var matmul(Tape& t, Var a, Var b) {
  ARTIC_BINARY_PRELUDE(t, a, b)
  if (av.shape.size() != 2 || bv.shape.size() != 2 || av.shape[1] != bv.shape[0]) {
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(av.shape) + " and " +
                                shape_str(bv.shape));
  }
  int m = av.shape[0], k = av.shape[1], nn = bv.shape[1];
  Tape::Node n;
  n.op = Tape::Op::kMatmul;
  n.parents = {a.id, b.id};
  n.tracked = t.tracked(a) || t.tracked(b);
  n.value.shape = {m, nn};
  n.value.data.resize(static_cast<size_t>(m) * nn);
  kernels::matmul(av.data.data(), bv.data.data(), n.value.data.data(), m, k, nn);
  return t.push(std::move(n));
}

Var transpose(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  if (xv.shape.size() != 2) throw std::invalid_argument("transpose: need a 2-D tensor");
  int rows = xv.shape[0], cols = xv.shape[1];
  Tape::Node n;
  n.op = Tape::Op::kTranspose;
  n.parents = {x.id};
  n.tracked = t.tracked(x);
  n.value.shape = {cols, rows};
  n.value.data.resize(xv.data.size());
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      n.value.data[static_cast<size_t>(j) * rows + i] = xv.data[static_cast<size_t>(i) * cols + j];
    }
  }
  return t.push(std::move(n));
}

Var slice_rows(Tape& t, Var x, int begin, int count) {
  const Tensor& xv = t.value(x);
  if (xv.shape.size() != 2) throw std::invalid_argument("slice_rows: need a 2-D tensor");
  int rows = xv.shape[0], cols = xv.shape[1];
  if (begin < 0 || count < 1 || begin + count > rows) {
    throw std::invalid_argument("slice_rows: range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") out of " +
                                std::to_string(rows) + " rows");
  }
  Tape::Node n;
  n.op = Tape::Op::kSliceRows;
  n.parents = {x.id};
  n.tracked = t.tracked(x);
  n.aux_ints = {begin};
  n.value.shape = {count, cols};
  n.value.data.assign(xv.data.begin() + static_cast<size_t>(begin) * cols,
                      xv.data.begin() + static_cast<size_t>(begin + count) * cols);
  return t.push(std::move(n));
}

Var slice_cols(Tape& t, Var x, int begin, int count) {
  const Tensor& xv = t.value(x);
  auto [rows, cols] = rows_cols(xv);
  if (begin < 0 || count < 1 || begin + count > cols) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") out of " +
                                std::to_string(cols) + " columns");
  }
  Tape::Node n;
  n.op = Tape::Op::kSliceCols;
  n.parents = {x.id};
  n.tracked = t.tracked(x);
  n.aux_ints = {begin};
  n.value.shape = {rows, count};
  n.value.data.resize(static_cast<size_t>(rows) * count);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < count; ++j) {
      n.value.data[static_cast<size_t>(i) * count + j] =
          xv.data[static_cast<size_t>(i) * cols + begin + j];
    }
  }
  return t.push(std::move(n));
}

Var concat_cols(Tape& t, const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: no inputs");
  int rows = rows_cols(t.value(xs[0])).first;
  int total = 0;
  for (Var x : xs) {
    auto [r, c] = rows_cols(t.value(x));
    if (r != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    total += c;
  }
  Tape::Node n;
  n.op = Tape::Op::kConcatCols;
  n.value.shape = {rows, total};
  n.value.data.resize(static_cast<size_t>(rows) * total);
  int offset = 0;
  for (Var x : xs) {
    const Tensor& xv = t.value(x);
    auto [r, c] = rows_cols(xv);
    (void)r;
    n.parents.push_back(x.id);
    n.tracked = n.tracked || t.tracked(x);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < c; ++j) {
        n.value.data[static_cast<size_t>(i) * total + offset + j] =
            xv.data[static_cast<size_t>(i) * c + j];
      }
    }
    offset += c;
  }
  return t.push(std::move(n));
}

Var softmax_lastaxis(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  auto [rows, cols] = rows_cols(xv);
  Tape::Node n;
  n.op = Tape::Op::kSoftmax;
  n.parents = {x.id};
  n.tracked = t.tracked(x);
  n.value.shape = xv.shape;
  n.value.data.resize(xv.data.size());
  kernels::softmax_rows(xv.data.data(), n.value.data.data(), rows, cols);
  return t.push(std::move(n));
}

Var log_softmax_lastaxis(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  auto [rows, cols] = rows_cols(xv);
  Tape::Node n;
  n.op = Tape::Op::kLogSoftmax;
  n.parents = {x.id};
  n.tracked = t.tracked(x);
  n.value.shape = xv.shape;
  n.value.data.resize(xv.data.size());
  for (int i = 0; i < rows; ++i) {
    const double* xi = xv.data.data() + static_cast<size_t>(i) * cols;
    double* yi = n.value.data.data() + static_cast<size_t>(i) * cols;
    double maxv = xi[0];
    for (int j = 1; j < cols; ++j) maxv = std::max(maxv, xi[j]);
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) sum += std::exp(xi[j] - maxv);
    double lse = maxv + std::log(sum);
    for (int j = 0; j < cols; ++j) yi[j] = xi[j] - lse;
  }
  return t.push(std::move(n));
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = t.value(x);
  const Tensor& gv = t.value(gain);
  const Tensor& bv = t.value(bias);
  auto [rows, cols] = rows_cols(xv);
  if (cols < 2) throw std::invalid_argument("layer_norm: need at least 2 features per vector");
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
  if (gv.size() != cols || bv.size() != cols) {
    throw std::invalid_argument("layer_norm: gain/bias must have " + std::to_string(cols) +
                                " entries");
  }
  Tape::Node n;
  n.op = Tape::Op::kLayerNorm;
  n.parents = {x.id, gain.id, bias.id};
  n.tracked = t.tracked(x) || t.tracked(gain) || t.tracked(bias);
  n.value.shape = xv.shape;
  n.value.data.resize(xv.data.size());
  n.aux_data.resize(xv.data.size() + rows);  // xhat, then rstd per row
  double* xhat = n.aux_data.data();
  double* rstd = n.aux_data.data() + xv.data.size();
  for (int i = 0; i < rows; ++i) {
    size_t off = static_cast<size_t>(i) * cols;
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += xv.data[off + j];
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      double d = xv.data[off + j] - mean;
      var += d * d;
    }
    var /= cols;
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < cols; ++j) {
      xhat[off + j] = (xv.data[off + j] - mean) * rstd[i];
      n.value.data[off + j] = gv.data[j] * xhat[off + j] + bv.data[j];
    }
  }
  return t.push(std::move(n));
}

Var gelu(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tape::Node n;
  n.op = Tape::Op::kGelu;
  n.parents = {x.id};
  n.tracked = t.tracked(x);
  n.value.shape = xv.shape;
  n.value.data.resize(xv.data.size());
  const double s = std::sqrt(2.0 / M_PI);
  for (size_t i = 0; i < xv.data.size(); ++i) {
    double xi = xv.data[i];
    n.value.data[i] = 0.5 * xi * (1.0 + std::tanh(s * (xi + 0.044715 * xi * xi * xi)));
  }
  return t.push(std::move(n));
}

Var exp_elem(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tape::Node n;
  n.op = Tape::Op::kExp;
  n.parents = {x.id};
  n.tracked = t.tracked(x);
  n.value.shape = xv.shape;
  n.value.data.resize(xv.data.size());
  for (size_t i = 0; i < xv.data.size(); ++i) n.value.data[i] = std::exp(xv.data[i]);
  return t.push(std::move(n));
}

Var abs_elem(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tape::Node n;
  n.op = Tape::Op::kAbs;
  n.parents = {x.id};
  n.tracked = t.tracked(x);
  n.value.shape = xv.shape;
  n.value.data.resize(xv.data.size());
  for (size_t i = 0; i < xv.data.size(); ++i) n.value.data[i] = std::fabs(xv.data[i]);
  return t.push(std::move(n));
}

Var sum_all(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tape::Node n;
  n.op = Tape::Op::kSum;
  n.parents = {x.id};
  n.tracked = t.tracked(x);
  n.value.shape = {1};
  double s = 0.0;
  for (double v : xv.data) s += v;
  n.value.data = {s};
  return t.push(std::move(n));
}

double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h) {
  if (h <= 0.0) throw std::invalid_argument("grad_check: h must be positive");
  auto eval = [&](const std::vector<Tensor>& ins, bool want_grads,
                  std::vector<std::vector<double>>* grads) -> double {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(ins.size());
    for (const Tensor& in : ins) {
      Tensor t = in;
      t.requires_grad = want_grads;
      vars.push_back(tape.leaf(std::move(t)));
    }
    Var y = f(tape, vars);
    if (tape.value(y).size() != 1) {
      throw std::invalid_argument("grad_check: function must be scalar-valued");
    }
    if (want_grads) {
      tape.backward(y);
      grads->clear();
      for (Var v : vars) grads->push_back(tape.grad(v));
    }
    return tape.value(y).data[0];
  };

  std::vector<std::vector<double>> analytic;
  eval(inputs, true, &analytic);

  double max_err = 0.0;
  std::vector<Tensor> work = inputs;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (size_t j = 0; j < inputs[i].data.size(); ++j) {
      double orig = work[i].data[j];
      work[i].data[j] = orig + h;
      double fp = eval(work, false, nullptr);
      work[i].data[j] = orig - h;
      double fm = eval(work, false, nullptr);
      work[i].data[j] = orig;
      double central = (fp - fm) / (2.0 * h);
      double err = std::fabs(analytic[i][j] - central) / std::max(1.0, std::fabs(central));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace artic::diff
