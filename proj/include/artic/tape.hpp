#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "artic/tensor.hpp"

namespace artic::diff {

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid for the tape that
// created it.
struct Var {
  int id = -1;
  const Tape* tape = nullptr;
};

// Extension point for operations whose backward rule lives outside this file
// (the CTC loss registers itself through this). The object may keep whatever
// state it saved during its forward computation.
class CustomOp {
 public:
  virtual ~CustomOp() = default;
  virtual void backward(const Tensor& out_value, const std::vector<double>& out_grad,
                        const std::vector<const Tensor*>& parent_values,
                        const std::vector<std::vector<double>*>& parent_grads) = 0;
};

// Reverse-mode tape. Operations execute eagerly and record themselves; the
// recording order is the topological order, so backward is a single reverse
// sweep that visits each node exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor t, std::string name = {});
  Var constant(Tensor t);

  const Tensor& value(Var v) const;
  // valid after backward; zero-filled for tracked nodes the loss does not reach
  const std::vector<double>& grad(Var v) const;
  bool tracked(Var v) const;
  int size() const { return static_cast<int>(nodes_.size()); }

  // Backpropagates from a scalar loss and returns gradients of all named
  // leaves with requires_grad. Gradients accumulate (sum) over every path.
  std::map<std::string, Tensor> backward(Var loss);

  Var custom(const std::vector<Var>& parents, Tensor value, std::unique_ptr<CustomOp> op);

  // test hook: walk nodes in recording order
  void visit_nodes(const std::function<void(const std::string& op, const Tensor& value)>& fn) const;

 private:
  enum class Op {
    kLeaf,
    kConst,
    kAdd,
    kSub,
    kMul,
    kScale,
    kAddRowVec,
    kMatmul,
    kTranspose,
    kSliceRows,
    kSliceCols,
    kConcatCols,
    kSoftmax,
    kLogSoftmax,
    kLayerNorm,
    kGelu,
    kExp,
    kAbs,
    kSum,
    kCustom,
  };

  struct Node {
    Tensor value;
    std::vector<double> grad;
    Op op = Op::kLeaf;
    std::vector<int> parents;
    bool tracked = false;
    std::string name;
    double aux_scalar = 0.0;
    std::vector<int> aux_ints;
    std::vector<double> aux_data;
    std::unique_ptr<CustomOp> custom_op;
  };

  Var push(Node node);
  Node& node(Var v);
  const Node& node(Var v) const;
  void check_owned(Var v) const;
  void backward_node(int id);

  std::vector<Node> nodes_;

  friend Var add(Tape&, Var, Var);
  friend Var sub(Tape&, Var, Var);
  friend Var mul(Tape&, Var, Var);
  friend Var scale(Tape&, Var, double);
  friend Var add_rowvec(Tape&, Var, Var);
  friend Var matmul(Tape&, Var, Var);
  friend Var transpose(Tape&, Var);
  friend Var slice_rows(Tape&, Var, int, int);
  friend Var slice_cols(Tape&, Var, int, int);
  friend Var concat_cols(Tape&, const std::vector<Var>&);
  friend Var softmax_lastaxis(Tape&, Var);
  friend Var log_softmax_lastaxis(Tape&, Var);
  friend Var layer_norm(Tape&, Var, Var, Var, double);
  friend Var gelu(Tape&, Var);
  friend Var exp_elem(Tape&, Var);
  friend Var abs_elem(Tape&, Var);
  friend Var sum_all(Tape&, Var);
};

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, double c);
// matrix [R x C] plus vector [C], broadcast over rows (bias add)
Var add_rowvec(Tape& t, Var m, Var v);
Var matmul(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var x);
Var slice_rows(Tape& t, Var x, int begin, int count);
Var slice_cols(Tape& t, Var x, int begin, int count);
Var concat_cols(Tape& t, const std::vector<Var>& xs);
Var softmax_lastaxis(Tape& t, Var x);
Var log_softmax_lastaxis(Tape& t, Var x);
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);
Var gelu(Tape& t, Var x);
Var exp_elem(Tape& t, Var x);
Var abs_elem(Tape& t, Var x);
Var sum_all(Tape& t, Var x);

// Builds a scalar from fresh leaves over the given inputs; used by grad_check.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Max over all input coordinates of |analytic - central difference| divided
// by max(1, |central difference|).
double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-5);

}  // namespace artic::diff
