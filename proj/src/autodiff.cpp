#include "rdbssl/autodiff.hpp"

#include "rdbssl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace rdbssl::ad {

namespace {

constexpr double kStdEpsilon = 1e-12;

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("operation on an empty Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument(std::string(op) + ": empty Var");
  if (a.tape() != b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
  return *a.tape();
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                   shape_string(b));
}

enum class Broadcast { same, row, scalar };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::same;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::scalar;
  shape_mismatch(op, a, b);
}

Tensor reduce_broadcast(const Tensor& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::same:
      return g;
    case Broadcast::row:
      return g.colwise().sum();
    case Broadcast::scalar:
      return Tensor::Constant(1, 1, g.sum());
  }
  return g;
}

Var add_impl(Var a, Var b, double sign, const char* op) {
  Tape& t = tape_of(a, b, op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind(op, av, bv);
  Tensor out;
  switch (kind) {
    case Broadcast::same:
      out = av + sign * bv;
      break;
    case Broadcast::row:
      out = av.rowwise() + sign * bv.row(0);
      break;
    case Broadcast::scalar:
      out = av.array() + sign * bv(0, 0);
      break;
  }
  const int ia = a.id(), ib = b.id();
  return t.record(op, std::move(out), {ia, ib}, [ia, ib, kind, sign](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, sign * reduce_broadcast(g, kind));
  });
}

template <typename Compare>
Var neighbor_extreme(Var a, std::shared_ptr<const NeighborLists> neighbors, const char* op,
                     Compare better) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const auto n = static_cast<Index>(neighbors->size());
  if (n != x.rows()) throw ShapeError(std::string(op) + ": neighbour lists do not match row count");
  Tensor out = Tensor::Zero(n, x.cols());
  std::vector<int> arg(static_cast<std::size_t>(n * x.cols()), -1);
  for (Index i = 0; i < n; ++i) {
    const auto& nb = (*neighbors)[static_cast<std::size_t>(i)];
    if (nb.empty()) continue;
    for (Index c = 0; c < x.cols(); ++c) {
      int best = nb.front();
      for (int j : nb) {
        if (better(x(j, c), x(best, c))) best = j;
      }
      out(i, c) = x(best, c);
      arg[static_cast<std::size_t>(i * x.cols() + c)] = best;
    }
  }
  const int ia = a.id();
  const Index cols = x.cols();
  const Index rows = x.rows();
  return t.record(op, std::move(out), {ia},
                  [ia, arg = std::move(arg), cols, rows](Tape& tp, const Tensor& g) {
                    Tensor ga = Tensor::Zero(rows, cols);
                    for (Index i = 0; i < g.rows(); ++i) {
                      for (Index c = 0; c < cols; ++c) {
                        const int j = arg[static_cast<std::size_t>(i * cols + c)];
                        if (j >= 0) ga(j, c) += g(i, c);
                      }
                    }
                    tp.accumulate(ia, ga);
                  });
}

}  // namespace

const Tensor& Var::value() const {
  if (!valid()) throw std::invalid_argument("value() of an empty Var");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Tensor& v = value();
  if (v.size() != 1) throw ShapeError("scalar(): value has shape " + shape_string(v));
  return v(0, 0);
}

Var Tape::constant(Tensor value, std::string label) {
  return record(std::move(label), std::move(value), {}, nullptr);
}

Var Tape::param(ParamStore& store, const std::string& name) {
  const auto key = std::make_pair(static_cast<const ParamStore*>(&store), name);
  if (auto it = param_ids_.find(key); it != param_ids_.end()) return Var(this, it->second);
  Node node;
  node.op = "param:" + name;
  node.value = store.value(name);
  node.requires_grad = true;
  node.store = &store;
  node.param_name = name;
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_ids_.emplace(key, id);
  return Var(this, id);
}

Var Tape::record(std::string op, Tensor value, std::vector<int> inputs, BackwardFn backward) {
  if (!value.allFinite()) {
    throw NumericError("non-finite value produced by op '" + op + "' (shape " +
                       shape_string(value) + ")");
  }
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [this](int i) { return nodes_[static_cast<std::size_t>(i)].requires_grad; });
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Tensor& g) {
  Node& node = nodes_.at(static_cast<std::size_t>(id));
  if (!node.requires_grad) return;
  if (g.rows() != node.value.rows() || g.cols() != node.value.cols()) {
    throw ShapeError("gradient for op '" + node.op + "' has shape " + shape_string(g) +
                     ", value has " + shape_string(node.value));
  }
  if (node.has_grad) {
    node.grad += g;
  } else {
    node.grad = g;
    node.has_grad = true;
  }
}

Tensor Tape::grad(int id) const {
  const Node& node = nodes_.at(static_cast<std::size_t>(id));
  if (node.has_grad) return node.grad;
  return Tensor::Zero(node.value.rows(), node.value.cols());
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw std::logic_error("backward: tape is empty");
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
  const Tensor& lv = loss.value();
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(lv));
  }
  for (Node& node : nodes_) {
    node.has_grad = false;
    node.grad.resize(0, 0);
  }
  accumulate(loss.id(), Tensor::Ones(1, 1));
  for (int i = loss.id(); i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (node.has_grad && node.backward) node.backward(*this, node.grad);
  }
  std::set<ParamStore*> stores;
  for (Node& node : nodes_) {
    if (node.store == nullptr) continue;
    stores.insert(node.store);
    if (node.has_grad) {
      node.store->accumulate_grad(node.param_name, node.grad);
    } else {
      node.store->accumulate_grad(node.param_name,
                                  Tensor::Zero(node.value.rows(), node.value.cols()));
    }
  }
  for (ParamStore* s : stores) s->ensure_grad_slots();
}

Var operator+(Var a, Var b) { return add_impl(a, b, 1.0, "add"); }
Var operator-(Var a, Var b) { return add_impl(a, b, -1.0, "sub"); }

Var operator-(Var a) { return -1.0 * a; }

Var operator*(double c, Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record("scale", c * a.value(), {ia},
                  [ia, c](Tape& tp, const Tensor& g) { tp.accumulate(ia, c * g); });
}

Var hadamard(Var a, Var b) {
  Tape& t = tape_of(a, b, "hadamard");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const int ia = a.id(), ib = b.id();
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    return t.record("hadamard", av.cwiseProduct(bv), {ia, ib},
                    [ia, ib, av, bv](Tape& tp, const Tensor& g) {
                      if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(bv));
                      if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(av));
                    });
  }
  if (bv.cols() == 1 && bv.rows() == av.rows()) {
    Tensor out = av.array().colwise() * bv.col(0).array();
    return t.record("hadamard_col", std::move(out), {ia, ib},
                    [ia, ib, av, bv](Tape& tp, const Tensor& g) {
                      if (tp.requires_grad(ia)) {
                        Tensor ga = g.array().colwise() * bv.col(0).array();
                        tp.accumulate(ia, ga);
                      }
                      if (tp.requires_grad(ib)) {
                        Tensor gb = g.cwiseProduct(av).rowwise().sum();
                        tp.accumulate(ib, gb);
                      }
                    });
  }
  shape_mismatch("hadamard", av, bv);
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) shape_mismatch("matmul", av, bv);
  const int ia = a.id(), ib = b.id();
  return t.record("matmul", av * bv, {ia, ib}, [ia, ib, av, bv](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * bv.transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, av.transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b, "matmul_nt");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) shape_mismatch("matmul_nt", av, bv);
  const int ia = a.id(), ib = b.id();
  return t.record("matmul_nt", av * bv.transpose(), {ia, ib},
                  [ia, ib, av, bv](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(ia)) tp.accumulate(ia, g * bv);
                    if (tp.requires_grad(ib)) tp.accumulate(ib, g.transpose() * av);
                  });
}

Var linear(Var x, Var weight, Var bias) { return matmul_nt(x, weight) + bias; }
Var linear(Var x, Var weight) { return matmul_nt(x, weight); }

Var spmm(std::shared_ptr<const SparseMatrix> s, Var a) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  if (s->cols() != av.rows()) {
    throw ShapeError("spmm: sparse operand is (" + std::to_string(s->rows()) + ", " +
                     std::to_string(s->cols()) + "), dense is " + shape_string(av));
  }
  Tensor out = (*s) * av;
  const int ia = a.id();
  return t.record("spmm", std::move(out), {ia}, [ia, s](Tape& tp, const Tensor& g) {
    Tensor ga = s->transpose() * g;
    tp.accumulate(ia, ga);
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const int ia = a.id();
  return t.record("relu", av.cwiseMax(0.0), {ia}, [ia, av](Tape& tp, const Tensor& g) {
    Tensor ga = (av.array() > 0.0).select(g, 0.0);
    tp.accumulate(ia, ga);
  });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  Tensor y = a.value().array().tanh();
  const int ia = a.id();
  return t.record("tanh", y, {ia}, [ia, y](Tape& tp, const Tensor& g) {
    Tensor ga = g.array() * (1.0 - y.array().square());
    tp.accumulate(ia, ga);
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  Tensor y = a.value().unaryExpr([](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  const int ia = a.id();
  return t.record("sigmoid", y, {ia}, [ia, y](Tape& tp, const Tensor& g) {
    Tensor ga = g.array() * y.array() * (1.0 - y.array());
    tp.accumulate(ia, ga);
  });
}

Var log_sigmoid(Var a) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  Tensor y = av.unaryExpr(
      [](double v) { return std::min(v, 0.0) - std::log1p(std::exp(-std::abs(v))); });
  // d/dv log sigmoid(v) = sigmoid(-v)
  Tensor dy = av.unaryExpr([](double v) {
    return v >= 0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v));
  });
  const int ia = a.id();
  return t.record("log_sigmoid", std::move(y), {ia}, [ia, dy](Tape& tp, const Tensor& g) {
    Tensor ga = g.cwiseProduct(dy);
    tp.accumulate(ia, ga);
  });
}

Var square(Var a) { return hadamard(a, a); }

Var sum(Var a) {
  Tape& t = tape_of(a);
  const Index r = a.rows(), c = a.cols();
  const int ia = a.id();
  return t.record("sum", Tensor::Constant(1, 1, a.value().sum()), {ia},
                  [ia, r, c](Tape& tp, const Tensor& g) {
                    tp.accumulate(ia, Tensor::Constant(r, c, g(0, 0)));
                  });
}

Var mean(Var a) {
  const Index n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty operand");
  return (1.0 / static_cast<double>(n)) * sum(a);
}

Var row_dot(Var a, Var b) {
  Tape& t = tape_of(a, b, "row_dot");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_mismatch("row_dot", av, bv);
  Tensor out = av.cwiseProduct(bv).rowwise().sum();
  const int ia = a.id(), ib = b.id();
  return t.record("row_dot", std::move(out), {ia, ib},
                  [ia, ib, av, bv](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(ia)) {
                      Tensor ga = bv.array().colwise() * g.col(0).array();
                      tp.accumulate(ia, ga);
                    }
                    if (tp.requires_grad(ib)) {
                      Tensor gb = av.array().colwise() * g.col(0).array();
                      tp.accumulate(ib, gb);
                    }
                  });
}

Var gather_rows(Var a, std::vector<int> rows) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  Tensor out(static_cast<Index>(rows.size()), av.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= av.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[k]) + " out of range for " +
                       shape_string(av));
    }
    out.row(static_cast<Index>(k)) = av.row(rows[k]);
  }
  const int ia = a.id();
  const Index r = av.rows(), c = av.cols();
  return t.record("gather_rows", std::move(out), {ia},
                  [ia, rows = std::move(rows), r, c](Tape& tp, const Tensor& g) {
                    Tensor ga = Tensor::Zero(r, c);
                    for (std::size_t k = 0; k < rows.size(); ++k) {
                      ga.row(rows[k]) += g.row(static_cast<Index>(k));
                    }
                    tp.accumulate(ia, ga);
                  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape& t = tape_of(parts.front());
  const Index rows = parts.front().rows();
  Index cols = 0;
  std::vector<int> ids;
  std::vector<Index> widths;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("concat_cols: operands on different tapes");
    if (p.rows() != rows) shape_mismatch("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Tensor out(rows, cols);
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  auto inputs = ids;
  return t.record("concat_cols", std::move(out), std::move(inputs),
                  [ids, widths](Tape& tp, const Tensor& g) {
                    Index off = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (tp.requires_grad(ids[k])) tp.accumulate(ids[k], g.middleCols(off, widths[k]));
                      off += widths[k];
                    }
                  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Tape& t = tape_of(parts.front());
  const Index cols = parts.front().cols();
  Index rows = 0;
  std::vector<int> ids;
  std::vector<Index> heights;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("concat_rows: operands on different tapes");
    if (p.cols() != cols) shape_mismatch("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
    ids.push_back(p.id());
    heights.push_back(p.rows());
  }
  Tensor out(rows, cols);
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  auto inputs = ids;
  return t.record("concat_rows", std::move(out), std::move(inputs),
                  [ids, heights](Tape& tp, const Tensor& g) {
                    Index off = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (tp.requires_grad(ids[k])) tp.accumulate(ids[k], g.middleRows(off, heights[k]));
                      off += heights[k];
                    }
                  });
}

Var segment_sum(Var a, std::vector<int> segment, int segment_count) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  if (static_cast<Index>(segment.size()) != av.rows()) {
    throw ShapeError("segment_sum: " + std::to_string(segment.size()) + " segment ids for " +
                     shape_string(av));
  }
  Tensor out = Tensor::Zero(segment_count, av.cols());
  for (std::size_t i = 0; i < segment.size(); ++i) out.row(segment[i]) += av.row(static_cast<Index>(i));
  const int ia = a.id();
  const Index cols = av.cols();
  return t.record("segment_sum", std::move(out), {ia},
                  [ia, segment = std::move(segment), cols](Tape& tp, const Tensor& g) {
                    Tensor ga(static_cast<Index>(segment.size()), cols);
                    for (std::size_t i = 0; i < segment.size(); ++i) {
                      ga.row(static_cast<Index>(i)) = g.row(segment[i]);
                    }
                    tp.accumulate(ia, ga);
                  });
}

Var segment_softmax(Var scores, std::vector<int> segment, int segment_count) {
  Tape& t = tape_of(scores);
  const Tensor& s = scores.value();
  if (s.cols() != 1 || static_cast<Index>(segment.size()) != s.rows()) {
    throw ShapeError("segment_softmax: expected a column of " + std::to_string(segment.size()) +
                     " scores, got " + shape_string(s));
  }
  std::vector<double> peak(static_cast<std::size_t>(segment_count),
                           -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < segment.size(); ++i) {
    peak[segment[i]] = std::max(peak[segment[i]], s(static_cast<Index>(i), 0));
  }
  std::vector<double> total(static_cast<std::size_t>(segment_count), 0.0);
  Tensor y(s.rows(), 1);
  for (std::size_t i = 0; i < segment.size(); ++i) {
    y(static_cast<Index>(i), 0) = std::exp(s(static_cast<Index>(i), 0) - peak[segment[i]]);
    total[segment[i]] += y(static_cast<Index>(i), 0);
  }
  for (std::size_t i = 0; i < segment.size(); ++i) y(static_cast<Index>(i), 0) /= total[segment[i]];
  const int is = scores.id();
  return t.record("segment_softmax", y, {is},
                  [is, y, segment = std::move(segment), segment_count](Tape& tp, const Tensor& g) {
                    std::vector<double> dot(static_cast<std::size_t>(segment_count), 0.0);
                    for (std::size_t i = 0; i < segment.size(); ++i) {
                      dot[segment[i]] += y(static_cast<Index>(i), 0) * g(static_cast<Index>(i), 0);
                    }
                    Tensor gs(y.rows(), 1);
                    for (std::size_t i = 0; i < segment.size(); ++i) {
                      const auto r = static_cast<Index>(i);
                      gs(r, 0) = y(r, 0) * (g(r, 0) - dot[segment[i]]);
                    }
                    tp.accumulate(is, gs);
                  });
}

Var neighbor_mean(Var a, std::shared_ptr<const NeighborLists> neighbors) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const auto n = static_cast<Index>(neighbors->size());
  if (n != x.rows()) throw ShapeError("neighbor_mean: neighbour lists do not match row count");
  Tensor out = Tensor::Zero(n, x.cols());
  for (Index i = 0; i < n; ++i) {
    const auto& nb = (*neighbors)[static_cast<std::size_t>(i)];
    if (nb.empty()) continue;
    for (int j : nb) out.row(i) += x.row(j);
    out.row(i) /= static_cast<double>(nb.size());
  }
  const int ia = a.id();
  const Index cols = x.cols();
  return t.record("neighbor_mean", std::move(out), {ia},
                  [ia, neighbors, cols](Tape& tp, const Tensor& g) {
                    Tensor ga = Tensor::Zero(g.rows(), cols);
                    for (Index i = 0; i < g.rows(); ++i) {
                      const auto& nb = (*neighbors)[static_cast<std::size_t>(i)];
                      if (nb.empty()) continue;
                      const double w = 1.0 / static_cast<double>(nb.size());
                      for (int j : nb) ga.row(j) += w * g.row(i);
                    }
                    tp.accumulate(ia, ga);
                  });
}

Var neighbor_min(Var a, std::shared_ptr<const NeighborLists> neighbors) {
  return neighbor_extreme(a, std::move(neighbors), "neighbor_min",
                          [](double candidate, double best) { return candidate < best; });
}

Var neighbor_max(Var a, std::shared_ptr<const NeighborLists> neighbors) {
  return neighbor_extreme(a, std::move(neighbors), "neighbor_max",
                          [](double candidate, double best) { return candidate > best; });
}

Var neighbor_std(Var a, std::shared_ptr<const NeighborLists> neighbors) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const auto n = static_cast<Index>(neighbors->size());
  if (n != x.rows()) throw ShapeError("neighbor_std: neighbour lists do not match row count");
  Tensor out = Tensor::Zero(n, x.cols());
  Tensor centre = Tensor::Zero(n, x.cols());
  for (Index i = 0; i < n; ++i) {
    const auto& nb = (*neighbors)[static_cast<std::size_t>(i)];
    if (nb.empty()) continue;
    const double k = static_cast<double>(nb.size());
    for (int j : nb) centre.row(i) += x.row(j);
    centre.row(i) /= k;
    Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(x.cols());
    Eigen::RowVectorXd lo = x.row(nb.front()), hi = lo;
    for (int j : nb) {
      var += (x.row(j) - centre.row(i)).array().square().matrix();
      lo = lo.cwiseMin(x.row(j));
      hi = hi.cwiseMax(x.row(j));
    }
    for (Index c = 0; c < x.cols(); ++c) {
      // Equal messages have std exactly 0 (and a zero gradient).
      out(i, c) = lo(c) == hi(c) ? 0.0 : std::sqrt(var(c) / k + kStdEpsilon);
    }
  }
  const int ia = a.id();
  return t.record("neighbor_std", out, {ia},
                  [ia, neighbors, x, centre, out](Tape& tp, const Tensor& g) {
                    // d std_i / d x_j = (x_j - mu_i) / (k * std_i); the mean's own
                    // dependence cancels because deviations sum to zero.
                    Tensor ga = Tensor::Zero(x.rows(), x.cols());
                    for (Index i = 0; i < g.rows(); ++i) {
                      const auto& nb = (*neighbors)[static_cast<std::size_t>(i)];
                      if (nb.empty()) continue;
                      const double k = static_cast<double>(nb.size());
                      Eigen::RowVectorXd coef = (out.row(i).array() > 0.0).select(g.row(i).array() / (k * out.row(i).array()), 0.0);
                      for (int j : nb) {
                        ga.row(j) += ((x.row(j) - centre.row(i)).array() * coef.array()).matrix();
                      }
                    }
                    tp.accumulate(ia, ga);
                  });
}

Var softmax_cross_entropy(Var logits, std::vector<int> labels) {
  Tape& t = tape_of(logits);
  const Tensor& z = logits.value();
  if (static_cast<Index>(labels.size()) != z.rows()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     shape_string(z));
  }
  Tensor prob(z.rows(), z.cols());
  Tensor out(z.rows(), 1);
  for (Index i = 0; i < z.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= z.cols()) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(y) + " outside " +
                       std::to_string(z.cols()) + " classes");
    }
    const double peak = z.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (z.row(i).array() - peak).exp();
    const double total = e.sum();
    prob.row(i) = e / total;
    out(i, 0) = peak + std::log(total) - z(i, y);
  }
  const int iz = logits.id();
  return t.record("softmax_cross_entropy", std::move(out), {iz},
                  [iz, prob, labels = std::move(labels)](Tape& tp, const Tensor& g) {
                    Tensor gz = prob;
                    for (Index i = 0; i < gz.rows(); ++i) {
                      gz(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
                      gz.row(i) *= g(i, 0);
                    }
                    tp.accumulate(iz, gz);
                  });
}

Var binary_cross_entropy_with_logits(Var logits, std::vector<double> targets) {
  const Tensor& z = logits.value();
  if (z.cols() != 1 || static_cast<Index>(targets.size()) != z.rows()) {
    throw ShapeError("binary_cross_entropy_with_logits: " + std::to_string(targets.size()) +
                     " targets for " + shape_string(z));
  }
  Tape& t = tape_of(logits);
  Tensor y = Eigen::Map<const Tensor>(targets.data(), z.rows(), 1);
  Var yv = t.constant(y, "bce_targets");
  Var ones = t.constant(Tensor::Ones(z.rows(), 1), "ones");
  // -[y log s(z) + (1 - y) log s(-z)]
  return -(hadamard(log_sigmoid(logits), yv) + hadamard(log_sigmoid(-logits), ones - yv));
}

}  // namespace rdbssl::ad
