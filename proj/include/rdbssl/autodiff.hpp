#pragma once

#include "rdbssl/tensor.hpp"

#include <Eigen/SparseCore>

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rdbssl::ad {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using NeighborLists = std::vector<std::vector<int>>;

// Dynamic reverse-mode tape. Nodes are appended in evaluation order, so the
// tape is always topologically sorted; backward() walks it once in reverse.
class Tape {
 public:
  // Accumulates `gradient` into the gradient slot of input `input`.
  using BackwardFn = std::function<void(Tape& tape, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value, std::string label = "constant");
  // Leaf bound to a named parameter; the same (store, name) always maps to
  // one leaf so gradients from every use are summed.
  Var param(ParamStore& store, const std::string& name);

  // Records an op output. Throws NumericError naming `op` when the value is not finite.
  Var record(std::string op, Tensor value, std::vector<int> inputs, BackwardFn backward);

  // Reverse pass from a 1 x 1 loss. Parameter gradients are added to their
  // stores; every parameter in a touched store ends with a gradient slot.
  void backward(Var loss);

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  const std::string& op(int id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }
  bool requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }
  // Gradient of the last backward() w.r.t. node `id` (zeros if unreached).
  Tensor grad(int id) const;

  void accumulate(int id, const Tensor& g);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<int> inputs;
    BackwardFn backward;
    ParamStore* store = nullptr;
    std::string param_name;
  };

  std::vector<Node> nodes_;
  std::map<std::pair<const ParamStore*, std::string>, int> param_ids_;
};

// -- Elementwise and linear algebra --------------------------------------------

// a + b. `b` may have a's shape, be a 1 x cols row (broadcast over rows), or 1 x 1.
Var operator+(Var a, Var b);
// a - b with the same broadcasting rules as operator+.
Var operator-(Var a, Var b);
Var operator-(Var a);
Var operator*(double c, Var a);
// Elementwise product. `b` may have a's shape or be rows x 1 (broadcast over columns).
Var hadamard(Var a, Var b);
Var matmul(Var a, Var b);
// a * b^T; keeps weights in (out, in) layout.
Var matmul_nt(Var a, Var b);
// x W^T + b, with W of shape (out, in) and b of shape (1, out).
Var linear(Var x, Var weight, Var bias);
Var linear(Var x, Var weight);
// S * a for a constant sparse S.
Var spmm(std::shared_ptr<const SparseMatrix> s, Var a);

Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
// log(sigmoid(a)), evaluated without overflow.
Var log_sigmoid(Var a);
Var square(Var a);

// -- Reductions and indexing ----------------------------------------------------

Var sum(Var a);
Var mean(Var a);
// out(i, 0) = <a.row(i), b.row(i)>.
Var row_dot(Var a, Var b);
Var gather_rows(Var a, std::vector<int> rows);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
// Sums rows sharing a segment id into `segment_count` output rows.
Var segment_sum(Var a, std::vector<int> segment, int segment_count);
// Softmax of a column vector within each segment.
Var segment_softmax(Var scores, std::vector<int> segment, int segment_count);

// Per-node aggregates over neighbour rows of `a`; nodes with no neighbours get 0.
Var neighbor_mean(Var a, std::shared_ptr<const NeighborLists> neighbors);
Var neighbor_min(Var a, std::shared_ptr<const NeighborLists> neighbors);
Var neighbor_max(Var a, std::shared_ptr<const NeighborLists> neighbors);
// Population standard deviation sqrt(var + 1e-12); exactly 0 when all neighbour values are equal.
Var neighbor_std(Var a, std::shared_ptr<const NeighborLists> neighbors);

// Row-wise cross-entropy of class logits against integer labels; rows x 1.
Var softmax_cross_entropy(Var logits, std::vector<int> labels);
// Row-wise logistic loss of logits against {0,1} targets; rows x 1.
Var binary_cross_entropy_with_logits(Var logits, std::vector<double> targets);

}  // namespace rdbssl::ad
